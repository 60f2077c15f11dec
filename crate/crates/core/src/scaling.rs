//! Runtime scaling measurements for the temporal operators.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::EvalConfig;
use crate::error::{Error, Result};
use crate::formula::Formula;
use crate::parser::parse;
use crate::semantics::robustness_trace;
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchOp {
    Always,
    Eventually,
    Until,
}

impl BenchOp {
    pub fn formula(self) -> Formula {
        let text = match self {
            BenchOp::Always => "always (x0 > 0)",
            BenchOp::Eventually => "eventually (x0 > 0)",
            BenchOp::Until => "(x0 > -0.9) until (x0 > 0.9)",
        };
        parse(text, 1).expect("benchmark formulas parse")
    }
}

impl std::str::FromStr for BenchOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "always" => Ok(BenchOp::Always),
            "eventually" => Ok(BenchOp::Eventually),
            "until" => Ok(BenchOp::Until),
            _ => Err(Error::InvalidConfig(format!("unknown benchmark op `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub size: usize,
    /// Fastest of the repeats, in seconds.
    pub seconds: f64,
}

/// Uniform random scalar signal in [-1, 1].
pub fn random_signal(len: usize, seed: u64) -> Result<Signal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Signal::from_scalars(&xs)
}

/// Exact robustness-trace runtime of `op` for each signal length: the
/// fastest of up to `repeats` runs, stopping early once half a second has
/// been spent on one size.
pub fn time_op(op: BenchOp, sizes: &[usize], repeats: usize, seed: u64) -> Result<Vec<Timing>> {
    let f = op.formula();
    let cfg = EvalConfig::exact();
    sizes
        .iter()
        .map(|&size| {
            let s = random_signal(size, seed)?;
            let mut best = f64::INFINITY;
            let mut spent = 0.0;
            for _ in 0..repeats.max(1) {
                let start = Instant::now();
                std::hint::black_box(robustness_trace(&s, &f, &cfg)?);
                let secs = start.elapsed().as_secs_f64();
                best = best.min(secs);
                spent += secs;
                if spent > 0.5 {
                    break;
                }
            }
            Ok(Timing { size, seconds: best })
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidConfig("a log-log fit needs two or more positive points".into()));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("a log-log fit needs distinct sizes".into()));
    }
    Ok(sxy / sxx)
}

/// Writes `size,seconds` CSV.
pub fn write_csv(timings: &[Timing], writer: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["size", "seconds"])?;
    for t in timings {
        w.write_record([t.size.to_string(), t.seconds.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
