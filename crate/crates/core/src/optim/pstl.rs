use std::time::Instant;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{LaneTape, LaneVar};
use crate::config::{EvalConfig, Mode};
use crate::error::{Error, Result};
use crate::formula::{Formula, Predicate, Threshold, Weight};
use crate::params::ParamTable;
use crate::semantics::{lane_trace, robustness_with};
use crate::signal::Signal;

use super::descent::{AnnealSchedule, GdOptions, Updater};
use super::loss::MarginLoss;

/// Direction in which robustness moves as a parameter grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Unknown,
}

impl Monotonicity {
    fn flip(self) -> Self {
        match self {
            Monotonicity::Increasing => Monotonicity::Decreasing,
            Monotonicity::Decreasing => Monotonicity::Increasing,
            Monotonicity::Unknown => Monotonicity::Unknown,
        }
    }
}

/// Infers the monotonicity of robustness in each named threshold from the
/// polarity of its predicate occurrences.
pub fn infer_monotonicity(f: &Formula) -> IndexMap<String, Monotonicity> {
    fn walk(f: &Formula, positive: bool, out: &mut IndexMap<String, Monotonicity>) {
        match f {
            Formula::True => {}
            Formula::Pred(Predicate { threshold: Threshold::Param(name), cmp, .. }) => {
                let mut m = if cmp.is_lower_bound() { Monotonicity::Decreasing } else { Monotonicity::Increasing };
                if !positive {
                    m = m.flip();
                }
                let entry = out.entry(name.clone()).or_insert(m);
                if *entry != m {
                    *entry = Monotonicity::Unknown;
                }
            }
            Formula::Pred(_) => {}
            Formula::Not(g) => walk(g, !positive, out),
            Formula::Implies(l, r) => {
                walk(l, !positive, out);
                walk(r, positive, out);
            }
            Formula::Integral(_, w, g) => {
                let sign = match w {
                    Weight::Const(c) => *c >= 0.0,
                    Weight::InvDt => true,
                };
                walk(g, positive == sign, out);
            }
            _ => {
                for c in f.children() {
                    walk(c, positive, out);
                }
            }
        }
    }
    let mut out = IndexMap::new();
    walk(f, true, &mut out);
    out
}

#[derive(Debug, Clone)]
pub struct PstlProblem {
    pub template: Formula,
    pub data: Signal,
    pub monotonicity: IndexMap<String, Monotonicity>,
}

impl PstlProblem {
    /// Problem with monotonicity flags inferred from the template.
    pub fn new(template: Formula, data: Signal) -> Result<Self> {
        let monotonicity = infer_monotonicity(&template);
        Self::with_flags(template, data, monotonicity)
    }

    pub fn with_flags(template: Formula, data: Signal, monotonicity: IndexMap<String, Monotonicity>) -> Result<Self> {
        let names = template.parameters();
        if names.is_empty() {
            return Err(Error::InvalidFormula("template has no learnable parameters".into()));
        }
        if let Some(extra) = monotonicity.keys().find(|k| !names.contains(k)) {
            return Err(Error::InvalidFormula(format!("parameter `{extra}` does not appear in the template")));
        }
        Ok(Self { template, data, monotonicity })
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.template.parameters()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PstlOptions {
    pub step: f64,
    pub max_iters: usize,
    /// A signal is converged once no parameter moves more than this.
    pub tol: f64,
    pub init: f64,
    pub eval: EvalConfig,
    pub anneal: Option<AnnealSchedule>,
    /// Most signals recorded on one lane tape.
    pub lanes: usize,
}

impl Default for PstlOptions {
    fn default() -> Self {
        Self {
            step: 5e-4,
            max_iters: 20_000,
            tol: 1e-6,
            init: 0.0,
            eval: EvalConfig::exact(),
            anneal: None,
            lanes: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PstlFit {
    pub names: Vec<String>,
    /// Fitted values per signal, in `names` order.
    pub params: Vec<Vec<f64>>,
    /// Exact robustness of the template at the fitted values.
    pub robustness: Vec<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    pub wall_time_s: f64,
}

impl PstlFit {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(self.params.iter().map(|p| p[i]).collect())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn table(names: &[String], values: &[f64]) -> ParamTable {
    let mut t = ParamTable::new();
    for (n, v) in names.iter().zip(values) {
        t.set(n.clone(), *v);
    }
    t
}

fn exact_robustness(p: &PstlProblem, b: usize, names: &[String], values: &[f64], cfg: &EvalConfig) -> Result<f64> {
    let s = p.data.select(&[b])?;
    let exact = EvalConfig { mode: Mode::Exact, ..*cfg };
    Ok(robustness_with(&s, &p.template, &table(names, values), &exact)?[0])
}

/// Fits the template parameters of every signal by gradient descent on
/// `sum_j relu(-rho(s_j, template))`.
///
/// Signals of equal length share one [`LaneTape`] per iteration. Signals
/// whose parameters stop moving are frozen and leave the batch, so each
/// result equals a single-signal fit.
pub fn fit_pstl(p: &PstlProblem, opts: &PstlOptions) -> Result<PstlFit> {
    let start = Instant::now();
    let gd = GdOptions { step: opts.step, iters: opts.max_iters, anneal: opts.anneal, ..GdOptions::default() };
    gd.validate()?;
    opts.eval.validate()?;
    let names = p.parameter_names();
    let n = p.data.batch_size();
    let k = names.len();
    let (dim, dt) = (p.data.dim(), p.data.dt());
    let loss = MarginLoss::new(0.0);

    let mut params = vec![vec![opts.init; k]; n];
    let mut updaters: Vec<Updater> = (0..n).map(|_| Updater::new(&gd, k)).collect();
    let mut iterations = vec![0usize; n];
    let mut converged = vec![false; n];
    let mut active: Vec<usize> = (0..n).collect();

    for it in 0..opts.max_iters {
        if active.is_empty() {
            break;
        }
        let cfg = match gd.w_at(it) {
            Some(w) => opts.eval.with_w(w),
            None => opts.eval,
        };
        // lane tapes over signals of equal length
        let mut groups: IndexMap<usize, Vec<usize>> = IndexMap::new();
        for &b in &active {
            groups.entry(p.data.length(b)).or_default().push(b);
        }
        let chunks = groups.iter().flat_map(|(&len, members)| members.chunks(opts.lanes.max(1)).map(move |c| (len, c)));
        let mut still = Vec::with_capacity(active.len());
        for (len, members) in chunks {
            let mut tape = LaneTape::new(members.len());
            let rows: Vec<&[f64]> = members.iter().map(|&b| p.data.element(b)).collect();
            let mut column = vec![0.0; members.len()];
            let states: Vec<LaneVar> = (0..len * dim)
                .map(|i| {
                    for (c, r) in column.iter_mut().zip(&rows) {
                        *c = r[i];
                    }
                    tape.leaf(&column)
                })
                .collect();
            let eps: Vec<LaneVar> = (0..k)
                .map(|j| {
                    let column: Vec<f64> = members.iter().map(|&b| params[b][j]).collect();
                    tape.leaf(&column)
                })
                .collect();
            let bound: IndexMap<String, LaneVar> = names.iter().cloned().zip(eps.iter().copied()).collect();
            let rho = lane_trace(&mut tape, &states, dim, dt, &p.template, &bound, &cfg)?[0];
            let rhos = tape.value(rho).to_vec();
            let value = loss.value(&rhos);
            if !value.is_finite() {
                return Err(Error::Diverged { iteration: it, loss: value });
            }
            // d relu(m - rho) / d rho
            let seeds: Vec<f64> = rhos.iter().map(|&r| if loss.m - r > 0.0 { -1.0 } else { 0.0 }).collect();
            let grads = tape.backward(rho, &seeds)?;
            let per_param: Vec<Vec<f64>> = eps.iter().map(|&e| grads.get(e)).collect();
            for (lane, &b) in members.iter().enumerate() {
                let g: Vec<f64> = per_param.iter().map(|col| col[lane]).collect();
                let moved = updaters[b].apply(&mut params[b], &g);
                iterations[b] += 1;
                if moved < opts.tol {
                    converged[b] = true;
                } else {
                    still.push(b);
                }
            }
        }
        still.sort_unstable();
        active = still;
    }

    let robustness =
        (0..n).map(|b| exact_robustness(p, b, &names, &params[b], &opts.eval)).collect::<Result<Vec<_>>>()?;
    Ok(PstlFit { names, params, robustness, iterations, converged, wall_time_s: start.elapsed().as_secs_f64() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BisectOptions {
    /// Stop once `|rho| <= tol`.
    pub tol: f64,
    pub init: f64,
    pub initial_step: f64,
    /// Maximum number of bracket doublings.
    pub max_growth: usize,
    pub max_iters: usize,
    pub eval: EvalConfig,
}

impl Default for BisectOptions {
    fn default() -> Self {
        Self { tol: 1e-6, init: 0.0, initial_step: 1.0, max_growth: 60, max_iters: 200, eval: EvalConfig::exact() }
    }
}

/// Fits a single-parameter monotone template one signal at a time by
/// bisection on the sign of the robustness.
pub fn fit_pstl_bisect(p: &PstlProblem, opts: &BisectOptions) -> Result<PstlFit> {
    let start = Instant::now();
    let names = p.parameter_names();
    let [name] = names.as_slice() else {
        return Err(Error::InvalidFormula(format!(
            "bisection fits one parameter at a time, template has {}",
            names.len()
        )));
    };
    let dir = p.monotonicity.get(name).copied().unwrap_or(Monotonicity::Unknown);
    if dir == Monotonicity::Unknown {
        return Err(Error::InvalidFormula(format!("parameter `{name}` is not flagged monotone")));
    }
    if !(opts.tol > 0.0) || !(opts.initial_step > 0.0) {
        return Err(Error::InvalidConfig("bisection needs positive tol and initial step".into()));
    }
    let n = p.data.batch_size();
    let mut fit = PstlFit {
        names: names.clone(),
        params: Vec::with_capacity(n),
        robustness: Vec::with_capacity(n),
        iterations: Vec::with_capacity(n),
        converged: Vec::with_capacity(n),
        wall_time_s: 0.0,
    };
    for b in 0..n {
        let s = p.data.select(&[b])?;
        let exact = EvalConfig { mode: Mode::Exact, ..opts.eval };
        // search along u = sign * value, where robustness increases
        let sign = if dir == Monotonicity::Increasing { 1.0 } else { -1.0 };
        let rho = |v: f64| -> Result<f64> {
            Ok(robustness_with(&s, &p.template, &ParamTable::new().with(name.clone(), v), &exact)?[0])
        };
        let (value, evals, ok) = bisect(|u| rho(sign * u), sign * opts.init, opts)?;
        let value = sign * value;
        fit.robustness.push(rho(value)?);
        fit.params.push(vec![value]);
        fit.iterations.push(evals);
        fit.converged.push(ok);
    }
    fit.wall_time_s = start.elapsed().as_secs_f64();
    Ok(fit)
}

/// Root of a nondecreasing `g` near `u0`. Returns the root, the number of
/// evaluations, and whether `|g| <= tol` was reached.
fn bisect(mut g: impl FnMut(f64) -> Result<f64>, u0: f64, opts: &BisectOptions) -> Result<(f64, usize, bool)> {
    let mut evals = 1;
    let g0 = g(u0)?;
    if g0.abs() <= opts.tol {
        return Ok((u0, evals, true));
    }
    let up = g0 < 0.0;
    let (mut lo, mut hi) = (u0, u0);
    let mut delta = opts.initial_step;
    let mut found = false;
    for _ in 0..opts.max_growth {
        let probe = if up { u0 + delta } else { u0 - delta };
        let v = g(probe)?;
        evals += 1;
        if v.abs() <= opts.tol {
            return Ok((probe, evals, true));
        }
        if (v > 0.0) == up {
            if up {
                hi = probe;
            } else {
                lo = probe;
            }
            found = true;
            break;
        }
        if up {
            lo = probe;
        } else {
            hi = probe;
        }
        delta *= 2.0;
    }
    if !found {
        return Err(Error::Optim(format!("bracket not found within {} doublings", opts.max_growth)));
    }
    for _ in 0..opts.max_iters {
        let mid = 0.5 * (lo + hi);
        let v = g(mid)?;
        evals += 1;
        if v.abs() <= opts.tol {
            return Ok((mid, evals, true));
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
    }
    Ok((0.5 * (lo + hi), evals, false))
}

/// Unit-step response of `w^2 / (s^2 + 2 zeta w s + w^2)` at `t`.
pub fn step_response(omega: f64, zeta: f64, t: f64) -> f64 {
    if (zeta - 1.0).abs() < 1e-9 {
        1.0 - (1.0 + omega * t) * (-omega * t).exp()
    } else if zeta < 1.0 {
        let wd = omega * (1.0 - zeta * zeta).sqrt();
        let phase = (zeta / (1.0 - zeta * zeta).sqrt()) * (wd * t).sin();
        1.0 - (-zeta * omega * t).exp() * ((wd * t).cos() + phase)
    } else {
        let r = (zeta * zeta - 1.0).sqrt();
        let (s1, s2) = (-omega * (zeta - r), -omega * (zeta + r));
        1.0 + (s2 * (s1 * t).exp() - s1 * (s2 * t).exp()) / (s1 - s2)
    }
}

/// `n` step responses of random second-order systems, `samples` points at
/// unit spacing, with `omega` in [0.5, 2] and `zeta` in [0.2, 1.5].
pub fn step_responses(n: usize, samples: usize, seed: u64) -> Result<Signal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let elements = (0..n)
        .map(|_| {
            let omega = rng.gen_range(0.5..=2.0);
            let zeta = rng.gen_range(0.2..=1.5);
            (0..samples).map(|i| vec![step_response(omega, zeta, i as f64)]).collect()
        })
        .collect();
    Signal::from_batch(elements, 0.0, 1.0)
}
