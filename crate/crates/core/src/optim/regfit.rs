use std::time::Instant;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::config::{EvalConfig, Mode};
use crate::error::{Error, Result};
use crate::formula::Formula;
use crate::semantics::{diff_robustness, robustness};
use crate::signal::Signal;

use super::descent::{gradient_descent, AnnealSchedule, GdOptions, Method};
use super::loss::MarginLoss;

/// Model families linear in their parameters, defined over a time span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Model {
    /// Legendre polynomials up to `degree` in time rescaled to [-1, 1].
    Polynomial { degree: usize },
    /// Piecewise-linear interpolation between `knots` evenly spaced values.
    PiecewiseLinear { knots: usize },
}

impl Model {
    pub fn num_params(&self) -> usize {
        match *self {
            Model::Polynomial { degree } => degree + 1,
            Model::PiecewiseLinear { knots } => knots,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Model::PiecewiseLinear { knots } = self {
            if *knots < 2 {
                return Err(Error::InvalidConfig("piecewise-linear model needs at least two knots".into()));
            }
        }
        Ok(())
    }

    /// Basis values at `t` for the span `[lo, hi]`.
    pub fn basis(&self, t: f64, lo: f64, hi: f64) -> Vec<f64> {
        let u = if hi > lo { 2.0 * (t - lo) / (hi - lo) - 1.0 } else { 0.0 };
        match *self {
            Model::Polynomial { degree } => {
                let mut p = vec![1.0; degree + 1];
                if degree >= 1 {
                    p[1] = u;
                }
                for k in 2..=degree {
                    let kf = k as f64;
                    p[k] = ((2.0 * kf - 1.0) * u * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
                }
                p
            }
            Model::PiecewiseLinear { knots } => {
                let pos = (u + 1.0) / 2.0 * (knots - 1) as f64;
                (0..knots).map(|i| (1.0 - (pos - i as f64).abs()).max(0.0)).collect()
            }
        }
    }

    pub fn design(&self, times: &[f64]) -> DMatrix<f64> {
        let (lo, hi) = (times[0], times[times.len() - 1]);
        let p = self.num_params();
        DMatrix::from_fn(times.len(), p, |i, j| self.basis(times[i], lo, hi)[j])
    }
}

/// Least-squares parameters `argmin ||A theta - y||`.
pub fn least_squares(a: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let svd = a.clone().svd(true, true);
    let theta = svd.solve(&DVector::from_column_slice(y), 1e-12).map_err(|e| Error::Optim(e.to_string()))?;
    Ok(theta.as_slice().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegfitOptions {
    /// Fixed step; `None` uses the inverse of a Lipschitz bound on the
    /// loss gradient.
    pub step: Option<f64>,
    pub iters: usize,
    /// Stop once no parameter moves more than this.
    pub tol: f64,
    pub margin: f64,
    pub method: Method,
    pub eval: EvalConfig,
    pub anneal: Option<AnnealSchedule>,
    /// Start from the least-squares solution instead of zero.
    pub warm_start: bool,
}

impl Default for RegfitOptions {
    fn default() -> Self {
        Self {
            step: None,
            iters: 20_000,
            tol: 1e-12,
            margin: 0.0,
            method: Method::Plain,
            eval: EvalConfig::logsumexp(1000.0),
            anneal: None,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegFit {
    pub model: Model,
    pub gamma: f64,
    pub params: Vec<f64>,
    /// Model output at the data times.
    pub output: Vec<f64>,
    pub mse: f64,
    /// Exact robustness of the formula on the model output.
    pub robustness: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
}

impl RegFit {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Output signal as `t,x0` CSV.
    pub fn write_csv(&self, t0: f64, dt: f64, writer: impl std::io::Write) -> Result<()> {
        let s = Signal::scalar(&self.output, t0, dt)?;
        s.write_csv(0, writer)
    }
}

/// Fits `model` to the scalar signal `data` by minimizing
/// `mse + gamma * relu(margin - rho(output, f))`.
pub fn regularized_fit(model: Model, data: &Signal, f: &Formula, gamma: f64, opts: &RegfitOptions) -> Result<RegFit> {
    let start = Instant::now();
    model.validate()?;
    if data.dim() != 1 || data.batch_size() != 1 {
        return Err(Error::InvalidSignal("regularized fit expects one scalar signal".into()));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidConfig(format!("gamma must be nonnegative, got {gamma}")));
    }
    opts.eval.validate()?;
    let y = data.component(0, 0);
    let n = y.len();
    let times: Vec<f64> = (0..n).map(|i| data.time(i)).collect();
    let a = model.design(&times);
    let step = match opts.step {
        Some(s) => s,
        None => {
            let mse_l = 2.0 * (a.transpose() * &a).symmetric_eigenvalues().max() / n as f64;
            let row_sq = a.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max);
            let w = opts.anneal.map_or(opts.eval.w, |s| s.w_max.max(s.w0));
            let penalty_l = if opts.eval.mode == Mode::Exact { 0.0 } else { gamma * w * row_sq };
            1.0 / (mse_l + penalty_l)
        }
    };
    let gd = GdOptions { step, iters: opts.iters, anneal: opts.anneal, method: opts.method, tol: Some(opts.tol) };
    let rows: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).iter().copied().collect()).collect();
    let loss = MarginLoss::new(opts.margin);
    let no_params = IndexMap::new();

    let objective = |tape: &mut Tape, theta: &[Var], w: Option<f64>| -> Result<Var> {
        let mut out = Vec::with_capacity(n);
        let mut sq = Vec::with_capacity(n);
        for (row, &target) in rows.iter().zip(&y) {
            let terms: Vec<Var> = row.iter().zip(theta).map(|(&c, &th)| tape.scale(th, c)).collect();
            let o = tape.sum(&terms);
            let r = tape.add_const(o, -target);
            sq.push(tape.mul(r, r));
            out.push(o);
        }
        let total = tape.sum(&sq);
        let mse = tape.scale(total, 1.0 / n as f64);
        if gamma == 0.0 {
            return Ok(mse);
        }
        let cfg = w.map_or(opts.eval, |w| opts.eval.with_w(w));
        let rho = diff_robustness(tape, &out, 1, data.dt(), f, &no_params, &cfg)?;
        let j = loss.apply(tape, &[rho]);
        let j = tape.scale(j, gamma);
        Ok(tape.add(mse, j))
    };
    let init = if opts.warm_start { least_squares(&a, &y)? } else { vec![0.0; model.num_params()] };
    let fit = gradient_descent(objective, &init, &gd)?;

    let output: Vec<f64> = (a * DVector::from_column_slice(&fit.params)).as_slice().to_vec();
    let mse = output.iter().zip(&y).map(|(o, t)| (o - t).powi(2)).sum::<f64>() / n as f64;
    let exact = EvalConfig { mode: Mode::Exact, ..opts.eval };
    let rho = robustness(&Signal::scalar(&output, data.t0(), data.dt())?, f, &exact)?[0];
    Ok(RegFit {
        model,
        gamma,
        params: fit.params,
        output,
        mse,
        robustness: rho,
        iterations: fit.iterations,
        converged: fit.converged,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Noisy samples of `0.5 + 0.3 max(0, |t - 2| - 1)^2` on `[0, 4]` at
/// spacing 0.1, with Gaussian noise of standard deviation `sigma`.
pub fn synthetic_data(sigma: f64, seed: u64) -> Result<Signal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let y: Vec<f64> = (0..=40)
        .map(|i| {
            let t = i as f64 * 0.1;
            0.5 + 0.3 * ((t - 2.0).abs() - 1.0).max(0.0).powi(2) + noise.sample(&mut rng)
        })
        .collect();
    Signal::scalar(&y, 0.0, 0.1)
}
