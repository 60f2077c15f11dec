//! Robustness semantics.
//!
//! Traces are computed bottom-up over the formula tree. Temporal operators
//! consume their subformula trace backwards in time through the recurrent
//! cells in [`temporal`]; `until` iterates over trigger times and is
//! quadratic in the trace length. The same engine runs on plain `f64` or on
//! an autodiff [`Tape`].

mod backend;
mod boolean;
mod engine;
mod oracle;
mod temporal;
mod trace;

use indexmap::IndexMap;
use rayon::prelude::*;

pub use backend::{Backend, Extremum, Plain, Smoothing};
pub use boolean::{satisfaction_trace, satisfies, satisfies_with};
pub use oracle::{oracle_robustness, oracle_robustness_with};
pub use temporal::{CellState, ShiftRegister};
pub use trace::RobustnessTrace;

pub use crate::smooth::{logsumexp_max, logsumexp_min, soft_max, soft_min};

use crate::autodiff::{LaneTape, LaneVar, Tape, Var};
use crate::config::{EvalConfig, Padding};
use crate::error::{Error, Result};
use crate::formula::{Formula, Weight};
use crate::interval::Interval;
use crate::params::ParamTable;
use crate::signal::Signal;
use engine::Element;

pub fn robustness_trace(s: &Signal, f: &Formula, cfg: &EvalConfig) -> Result<RobustnessTrace> {
    robustness_trace_with(s, f, &ParamTable::new(), cfg)
}

/// Robustness trace with learnable thresholds bound from `params`.
pub fn robustness_trace_with(
    s: &Signal,
    f: &Formula,
    params: &ParamTable,
    cfg: &EvalConfig,
) -> Result<RobustnessTrace> {
    engine::check(f, s.dim(), s.dt(), cfg)?;
    let bound = bind_params(f, params)?;
    let eval_row = |b: usize| {
        let el = Element { states: s.element(b), dim: s.dim(), dt: s.dt() };
        engine::eval(&mut Plain, f, &el, &bound, cfg)
    };
    let rows = if s.batch_size() > 1 {
        (0..s.batch_size()).into_par_iter().map(eval_row).collect::<Result<Vec<_>>>()?
    } else {
        vec![eval_row(0)?]
    };
    Ok(RobustnessTrace::new(rows, f.clone(), s.t0(), s.dt()))
}

/// `rho(s_{t_0}, f)` per batch element.
pub fn robustness(s: &Signal, f: &Formula, cfg: &EvalConfig) -> Result<Vec<f64>> {
    Ok(robustness_trace(s, f, cfg)?.heads())
}

pub fn robustness_with(s: &Signal, f: &Formula, params: &ParamTable, cfg: &EvalConfig) -> Result<Vec<f64>> {
    Ok(robustness_trace_with(s, f, params, cfg)?.heads())
}

/// Trace of `phi U_iv psi`.
pub fn until_trace(
    s: &Signal,
    phi: &Formula,
    psi: &Formula,
    iv: Interval,
    cfg: &EvalConfig,
) -> Result<RobustnessTrace> {
    robustness_trace(s, &Formula::until(iv, phi.clone(), psi.clone()), cfg)
}

/// Trace of the weighted window sum of `phi` over a bounded `iv`.
pub fn integral_trace(
    s: &Signal,
    phi: &Formula,
    iv: Interval,
    weight: Weight,
    cfg: &EvalConfig,
) -> Result<RobustnessTrace> {
    robustness_trace(s, &Formula::integral(iv, weight, phi.clone())?, cfg)
}

fn bind_params(f: &Formula, params: &ParamTable) -> Result<IndexMap<String, f64>> {
    f.parameters()
        .into_iter()
        .map(|name| {
            let v = params.require(&name)?;
            Ok((name, v))
        })
        .collect()
}

/// One step of a temporal cell: the hidden state it started from and the
/// output it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStep {
    pub hidden: CellState<f64>,
    pub output: f64,
}

/// Hidden and output states of the eventually/always cell over a
/// subformula trace, in processing order (last sample first).
pub fn temporal_cell_states(
    input: &[f64],
    iv: Interval,
    dt: f64,
    ext: Extremum,
    padding: Padding,
) -> Result<Vec<CellStep>> {
    if input.is_empty() {
        return Err(Error::EmptyInput("temporal cell"));
    }
    let counts = iv.counts(dt)?;
    let pad = match padding {
        Padding::LastValue => input[input.len() - 1],
        Padding::Constant(r) => r,
    };
    let mut steps = Vec::with_capacity(input.len());
    let mut obs = |hidden: CellState<f64>, output: f64| steps.push(CellStep { hidden, output });
    let red = temporal::Reducer { ext, smoothing: Smoothing::Exact };
    temporal::scan(&mut Plain, input, pad, counts, red, Some(&mut obs));
    Ok(steps)
}

/// Records batch element `b` of `s` as tape leaves, row-major `len × dim`.
pub fn signal_leaves(tape: &mut Tape, s: &Signal, b: usize) -> Vec<Var> {
    tape.leaves(s.element(b))
}

/// Robustness trace recorded on `tape`.
///
/// `states` holds `len × dim` values row-major; `params` binds every
/// learnable threshold of `f`.
pub fn diff_trace(
    tape: &mut Tape,
    states: &[Var],
    dim: usize,
    dt: f64,
    f: &Formula,
    params: &IndexMap<String, Var>,
    cfg: &EvalConfig,
) -> Result<Vec<Var>> {
    if dim == 0 || states.is_empty() || states.len() % dim != 0 {
        return Err(Error::InvalidSignal(format!(
            "{} values do not form whole states of dimension {dim}",
            states.len()
        )));
    }
    engine::check(f, dim, dt, cfg)?;
    let el = Element { states, dim, dt };
    engine::eval(tape, f, &el, params, cfg)
}

/// `rho(s_{t_0}, f)` recorded on `tape`.
pub fn diff_robustness(
    tape: &mut Tape,
    states: &[Var],
    dim: usize,
    dt: f64,
    f: &Formula,
    params: &IndexMap<String, Var>,
    cfg: &EvalConfig,
) -> Result<Var> {
    Ok(diff_trace(tape, states, dim, dt, f, params, cfg)?[0])
}

/// Robustness trace recorded on a [`LaneTape`], one batch element per lane.
///
/// Every lane must share the signal length; `states` holds `len × dim`
/// lane nodes row-major.
pub fn lane_trace(
    tape: &mut LaneTape,
    states: &[LaneVar],
    dim: usize,
    dt: f64,
    f: &Formula,
    params: &IndexMap<String, LaneVar>,
    cfg: &EvalConfig,
) -> Result<Vec<LaneVar>> {
    if dim == 0 || states.is_empty() || states.len() % dim != 0 {
        return Err(Error::InvalidSignal(format!(
            "{} values do not form whole states of dimension {dim}",
            states.len()
        )));
    }
    engine::check(f, dim, dt, cfg)?;
    let el = Element { states, dim, dt };
    engine::eval(tape, f, &el, params, cfg)
}
