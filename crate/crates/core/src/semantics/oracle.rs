//! Direct-definition robustness, used to test the recurrent engine.
//!
//! Every temporal value is the literal max/min over its time window. Samples
//! past the end of a trace take the padding value, and an unbounded window
//! contains that value once.

use crate::config::{EvalConfig, Mode, Padding};
use crate::error::{Error, Result};
use crate::formula::{Formula, Mu, Predicate, Threshold};
use crate::params::ParamTable;
use crate::signal::Signal;

use super::engine;
use super::trace::RobustnessTrace;

/// Exact robustness trace by direct evaluation of the defining windows.
pub fn oracle_robustness(s: &Signal, f: &Formula) -> Result<RobustnessTrace> {
    oracle_robustness_with(s, f, &ParamTable::new(), Padding::LastValue)
}

pub fn oracle_robustness_with(
    s: &Signal,
    f: &Formula,
    params: &ParamTable,
    padding: Padding,
) -> Result<RobustnessTrace> {
    let cfg = EvalConfig { mode: Mode::Exact, padding, ..EvalConfig::default() };
    engine::check(f, s.dim(), s.dt(), &cfg)?;
    let ctx = Ctx { params, padding, dt: s.dt(), rho_max: cfg.rho_max };
    let rows = (0..s.batch_size())
        .map(|b| {
            let states: Vec<&[f64]> = (0..s.length(b)).map(|i| s.state(b, i)).collect();
            ctx.trace(f, &states)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RobustnessTrace::new(rows, f.clone(), s.t0(), s.dt()))
}

struct Ctx<'a> {
    params: &'a ParamTable,
    padding: Padding,
    dt: f64,
    rho_max: f64,
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::INFINITY, f64::min)
}

fn mu(m: &Mu, x: &[f64]) -> f64 {
    match m {
        Mu::Var(k) => x[*k],
        Mu::Affine { terms, offset } => {
            let mut acc = 0.0;
            for &(k, c) in terms {
                acc += c * x[k];
            }
            acc + offset
        }
        Mu::Norm { terms } => {
            let mut acc = 0.0;
            for &(k, c) in terms {
                acc += (x[k] - c) * (x[k] - c);
            }
            acc.sqrt()
        }
        Mu::AbsDev { index, center } => (x[*index] - center).abs(),
        Mu::BoxMargin { bounds } => min_of(bounds.iter().flat_map(|&(k, lo, hi)| [x[k] - lo, hi - x[k]])),
    }
}

impl Ctx<'_> {
    fn predicate(&self, p: &Predicate, states: &[&[f64]]) -> Result<Vec<f64>> {
        let c = match &p.threshold {
            Threshold::Const(c) => *c,
            Threshold::Param(name) => self.params.require(name)?,
        };
        Ok(states
            .iter()
            .map(|x| {
                let m = mu(&p.mu, x);
                if p.cmp.is_lower_bound() {
                    m - c
                } else {
                    c - m
                }
            })
            .collect())
    }

    fn padded<'b>(&self, x: &'b [f64]) -> impl Fn(usize) -> f64 + 'b {
        let pad = match self.padding {
            Padding::LastValue => x[x.len() - 1],
            Padding::Constant(r) => r,
        };
        move |i| x.get(i).copied().unwrap_or(pad)
    }

    /// Window indices `[t + a, t + b]`, or `[t + a, max(len, t + a)]` when
    /// unbounded so that the padding value appears exactly once.
    fn window(&self, f: &Formula, t: usize, len: usize) -> Result<(usize, usize)> {
        let counts = f.interval().expect("temporal node").counts(self.dt)?;
        let lo = t + counts.lower_steps();
        let hi = match counts.upper_steps() {
            Some(b) => t + b,
            None => len.max(lo),
        };
        Ok((lo, hi))
    }

    fn trace(&self, f: &Formula, states: &[&[f64]]) -> Result<Vec<f64>> {
        let len = states.len();
        if len == 0 {
            return Err(Error::EmptyInput("signal"));
        }
        let unary = |g: &Formula| self.trace(g, states);
        Ok(match f {
            Formula::True => vec![self.rho_max; len],
            Formula::Pred(p) => self.predicate(p, states)?,
            Formula::Not(g) => unary(g)?.into_iter().map(|v| -v).collect(),
            Formula::And(l, r) => unary(l)?.into_iter().zip(unary(r)?).map(|(p, q)| p.min(q)).collect(),
            Formula::Or(l, r) => unary(l)?.into_iter().zip(unary(r)?).map(|(p, q)| p.max(q)).collect(),
            Formula::Implies(l, r) => unary(l)?.into_iter().zip(unary(r)?).map(|(p, q)| (-p).max(q)).collect(),
            Formula::Eventually(_, g) | Formula::Always(_, g) => {
                let x = unary(g)?;
                let at = self.padded(&x);
                let mut out = Vec::with_capacity(len);
                for t in 0..len {
                    let (lo, hi) = self.window(f, t, len)?;
                    let vals = (lo..=hi).map(&at);
                    out.push(if matches!(f, Formula::Eventually(..)) { max_of(vals) } else { min_of(vals) });
                }
                out
            }
            Formula::Integral(_, w, g) => {
                let x = unary(g)?;
                let at = self.padded(&x);
                let w = w.resolve(self.dt);
                let mut out = Vec::with_capacity(len);
                for t in 0..len {
                    let (lo, hi) = self.window(f, t, len)?;
                    let mut acc = 0.0;
                    for j in lo..=hi {
                        acc += w * at(j);
                    }
                    out.push(acc);
                }
                out
            }
            Formula::Until(_, l, r) => {
                let (x, y) = (unary(l)?, unary(r)?);
                let (phi, psi) = (self.padded(&x), self.padded(&y));
                let mut out = Vec::with_capacity(len);
                for t in 0..len {
                    let (lo, hi) = self.window(f, t, len)?;
                    let best = max_of((lo..=hi).map(|tp| psi(tp).min(min_of((t..=tp).map(&phi)))));
                    out.push(best);
                }
                out
            }
        })
    }
}
