use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Multiplicative schedule for the soft max/min scale `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub w0: f64,
    pub growth: f64,
    pub w_max: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self { w0: 1.0, growth: 1.05, w_max: 50.0 }
    }
}

impl AnnealSchedule {
    pub fn constant(w: f64) -> Self {
        Self { w0: w, growth: 1.0, w_max: w }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w0 >= 0.0 && self.growth >= 1.0 && self.w_max >= self.w0) || !self.w_max.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "anneal schedule needs 0 <= w0 <= w_max and growth >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `w` used at iteration `k`.
    pub fn at(&self, k: usize) -> f64 {
        (self.w0 * self.growth.powi(k.min(i32::MAX as usize) as i32)).min(self.w_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Method {
    #[default]
    Plain,
    Momentum {
        beta: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Method {
    pub fn adam() -> Self {
        Method::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdOptions {
    pub step: f64,
    pub iters: usize,
    pub anneal: Option<AnnealSchedule>,
    pub method: Method,
    /// Stop once every parameter moves less than this in one iteration.
    pub tol: Option<f64>,
}

impl Default for GdOptions {
    fn default() -> Self {
        Self { step: 0.05, iters: 1000, anneal: None, method: Method::Plain, tol: None }
    }
}

impl GdOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidConfig(format!("step must be positive, got {}", self.step)));
        }
        if let Some(a) = &self.anneal {
            a.validate()?;
        }
        Ok(())
    }

    /// Soft scale for iteration `k`, if annealing.
    pub fn w_at(&self, k: usize) -> Option<f64> {
        self.anneal.map(|a| a.at(k))
    }
}

/// Per-parameter optimizer state.
#[derive(Debug, Clone)]
pub struct Updater {
    method: Method,
    step: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Updater {
    pub fn new(opts: &GdOptions, n: usize) -> Self {
        Self { method: opts.method, step: opts.step, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Applies one update in place and returns the largest absolute change.
    pub fn apply(&mut self, params: &mut [f64], grads: &[f64]) -> f64 {
        self.t = self.t.saturating_add(1);
        let mut largest: f64 = 0.0;
        for i in 0..params.len() {
            let g = grads[i];
            let delta = match self.method {
                Method::Plain => -self.step * g,
                Method::Momentum { beta } => {
                    self.m[i] = beta * self.m[i] + g;
                    -self.step * self.m[i]
                }
                Method::Adam { beta1, beta2, eps } => {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let mh = self.m[i] / (1.0 - beta1.powi(self.t));
                    let vh = self.v[i] / (1.0 - beta2.powi(self.t));
                    -self.step * mh / (vh.sqrt() + eps)
                }
            };
            params[i] += delta;
            largest = largest.max(delta.abs());
        }
        largest
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GdResult {
    /// Parameters with the lowest observed loss.
    pub params: Vec<f64>,
    pub best_loss: f64,
    /// Loss before each update.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `objective` by first-order steps from `init`.
///
/// The objective records its loss on a fresh tape each iteration; it gets
/// the parameter leaves and the annealed soft scale, if any.
pub fn gradient_descent<F>(mut objective: F, init: &[f64], opts: &GdOptions) -> Result<GdResult>
where
    F: FnMut(&mut Tape, &[Var], Option<f64>) -> Result<Var>,
{
    opts.validate()?;
    let mut params = init.to_vec();
    let mut best = (f64::INFINITY, params.clone());
    let mut history = Vec::with_capacity(opts.iters);
    let mut updater = Updater::new(opts, params.len());
    let mut converged = false;
    for k in 0..opts.iters {
        let mut tape = Tape::new();
        let leaves = tape.leaves(&params);
        let loss = objective(&mut tape, &leaves, opts.w_at(k))?;
        let value = tape.value(loss);
        if !value.is_finite() {
            return Err(Error::Diverged { iteration: k, loss: value });
        }
        history.push(value);
        if value < best.0 {
            best = (value, params.clone());
        }
        let grads = tape.backward(loss)?.wrt(&leaves);
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { iteration: k, loss: value });
        }
        let moved = updater.apply(&mut params, &grads);
        if opts.tol.is_some_and(|tol| moved < tol) {
            converged = true;
            break;
        }
    }
    Ok(GdResult { params: best.1, best_loss: best.0, iterations: history.len(), history, converged })
}
