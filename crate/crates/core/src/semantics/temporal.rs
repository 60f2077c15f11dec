//! Recurrent cells for the temporal operators.
//!
//! A subformula trace is fed into a cell backwards in time. Each step emits
//! one output and updates a fixed-size hidden state. Which hidden state is
//! carried depends on the interval `[a, b]`:
//!
//! | interval          | hidden state                         |
//! |-------------------|--------------------------------------|
//! | `[0, inf)`        | previous output                      |
//! | `[0, b]`          | last `b/dt` inputs                   |
//! | `[a, inf)`, a > 0 | previous output and last `a/dt` inputs |
//! | `[a, b]`, a > 0   | last `b/dt` inputs                   |
//!
//! Every buffer starts filled with the padding value.

use std::collections::VecDeque;

use super::backend::{Backend, Extremum, Smoothing};
use crate::interval::IntervalCounts;

/// Fixed-length register implementing `M_N x + B_N u`: drop the first
/// entry, shift the rest up one index and write `u` last.
#[derive(Debug, Clone)]
pub struct ShiftRegister<V> {
    buf: VecDeque<V>,
}

impl<V: Copy> ShiftRegister<V> {
    pub fn filled(len: usize, value: V) -> Self {
        Self { buf: std::iter::repeat(value).take(len).collect() }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn apply(&mut self, u: V) {
        if self.buf.is_empty() {
            return;
        }
        self.buf.pop_front();
        self.buf.push_back(u);
    }

    /// Entries in register order (oldest insertion first).
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &V> + ExactSizeIterator {
        self.buf.iter()
    }

    pub fn first(&self) -> Option<V> {
        self.buf.front().copied()
    }

    pub fn to_vec(&self) -> Vec<V> {
        self.buf.iter().copied().collect()
    }
}

/// Snapshot of a cell's hidden state, entries in register order.
#[derive(Debug, Clone, PartialEq)]
pub enum CellState<V> {
    /// `[0, inf)`: the previous output.
    Scalar(V),
    /// Bounded intervals: the last `b/dt` inputs.
    Window(Vec<V>),
    /// `[a, inf)`: previous output `c` and the last `a/dt` inputs `d`.
    Split { c: V, d: Vec<V> },
}

impl<V: Copy> CellState<V> {
    pub fn map<U>(&self, f: impl Fn(V) -> U) -> CellState<U> {
        match self {
            CellState::Scalar(v) => CellState::Scalar(f(*v)),
            CellState::Window(w) => CellState::Window(w.iter().map(|&v| f(v)).collect()),
            CellState::Split { c, d } => CellState::Split { c: f(*c), d: d.iter().map(|&v| f(v)).collect() },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Reducer {
    pub ext: Extremum,
    pub smoothing: Smoothing,
}

impl Reducer {
    #[inline]
    pub fn apply<B: Backend>(&self, b: &mut B, xs: &[B::Value]) -> B::Value {
        if xs.len() == 1 {
            xs[0]
        } else {
            b.reduce(self.ext, self.smoothing, xs)
        }
    }
}

enum Cell<V> {
    Unbounded { h: V },
    Window { h: ShiftRegister<V> },
    Delayed { c: V, d: ShiftRegister<V> },
    DelayedWindow { h: ShiftRegister<V>, m: usize },
}

impl<V: Copy> Cell<V> {
    fn new(counts: IntervalCounts, pad: V) -> Self {
        match (counts.lower_steps(), counts.n_b) {
            (0, None) => Cell::Unbounded { h: pad },
            (0, Some(n_b)) => Cell::Window { h: ShiftRegister::filled(n_b - 1, pad) },
            (_, None) => Cell::Delayed { c: pad, d: ShiftRegister::filled(counts.n_a - 1, pad) },
            (_, Some(n_b)) => Cell::DelayedWindow {
                h: ShiftRegister::filled(n_b - 1, pad),
                m: counts.m.expect("bounded interval has m"),
            },
        }
    }

    fn snapshot(&self) -> CellState<V> {
        match self {
            Cell::Unbounded { h } => CellState::Scalar(*h),
            Cell::Window { h } | Cell::DelayedWindow { h, .. } => CellState::Window(h.to_vec()),
            Cell::Delayed { c, d } => CellState::Split { c: *c, d: d.to_vec() },
        }
    }

    /// Consumes input `rho` (current time) and returns the output. Arguments
    /// are handed to the reducer in increasing time order.
    fn step<B: Backend<Value = V>>(&mut self, b: &mut B, red: Reducer, rho: V, buf: &mut Vec<V>) -> V {
        match self {
            Cell::Unbounded { h } => {
                let o = red.apply(b, &[rho, *h]);
                *h = o;
                o
            }
            Cell::Window { h } => {
                buf.clear();
                buf.push(rho);
                buf.extend(h.iter().rev().copied());
                let o = red.apply(b, buf);
                h.apply(rho);
                o
            }
            Cell::Delayed { c, d } => {
                let first = d.first().expect("a > 0 gives a nonempty register");
                let o = red.apply(b, &[first, *c]);
                *c = o;
                d.apply(rho);
                o
            }
            Cell::DelayedWindow { h, m } => {
                buf.clear();
                buf.extend(h.iter().take(*m).rev().copied());
                let o = red.apply(b, buf);
                h.apply(rho);
                o
            }
        }
    }
}

/// Eventually (`Max`) or always (`Min`) over `input`, returned in forward
/// time order. `observer` sees each hidden state together with the output
/// computed from it, in processing (reverse time) order.
pub(crate) fn scan<B: Backend>(
    b: &mut B,
    input: &[B::Value],
    pad: B::Value,
    counts: IntervalCounts,
    red: Reducer,
    mut observer: Option<&mut dyn FnMut(CellState<B::Value>, B::Value)>,
) -> Vec<B::Value> {
    let mut cell = Cell::new(counts, pad);
    let mut out = Vec::with_capacity(input.len());
    let mut buf = Vec::new();
    for &rho in input.iter().rev() {
        let before = observer.as_ref().map(|_| cell.snapshot());
        let o = cell.step(b, red, rho, &mut buf);
        if let (Some(obs), Some(state)) = (observer.as_mut(), before) {
            obs(state, o);
        }
        out.push(o);
    }
    out.reverse();
    out
}

/// `phi U_[a,b] psi` by iterating over the trigger time `t'` with a running
/// minimum of the `phi` trace from the evaluation time `t`. Quadratic in the
/// trace length.
#[allow(clippy::too_many_arguments)]
pub(crate) fn until<B: Backend>(
    b: &mut B,
    phi: &[B::Value],
    psi: &[B::Value],
    phi_pad: B::Value,
    psi_pad: B::Value,
    counts: IntervalCounts,
    smoothing: Smoothing,
) -> Vec<B::Value> {
    let min = Reducer { ext: Extremum::Min, smoothing };
    let max = Reducer { ext: Extremum::Max, smoothing };
    let len = phi.len();
    let last_index = len - 1;
    let a = counts.lower_steps();
    let mut out = Vec::with_capacity(len);
    let mut candidates = Vec::new();
    for t in 0..len {
        let end = match counts.upper_steps() {
            Some(bs) => t + bs,
            // every sample past the end equals the padding, so one suffices
            None => (last_index + 1).max(t + a),
        };
        candidates.clear();
        let mut running: Option<B::Value> = None;
        for tp in t..=end {
            let (p, q) = if tp <= last_index { (phi[tp], psi[tp]) } else { (phi_pad, psi_pad) };
            let r = match running {
                None => p,
                Some(prev) => min.apply(b, &[prev, p]),
            };
            running = Some(r);
            if tp >= t + a {
                candidates.push(min.apply(b, &[q, r]));
            }
        }
        out.push(max.apply(b, &candidates));
    }
    out
}

/// Weighted window sum over `[t + a, t + b]`, padded past the end.
pub(crate) fn integral<B: Backend>(
    b: &mut B,
    input: &[B::Value],
    pad: B::Value,
    counts: IntervalCounts,
    weight: f64,
) -> Vec<B::Value> {
    let a = counts.lower_steps();
    let bs = counts.upper_steps().expect("integral interval is bounded");
    let mut window = Vec::with_capacity(bs - a + 1);
    (0..input.len())
        .map(|t| {
            window.clear();
            window.extend((t + a..=t + bs).map(|j| input.get(j).copied().unwrap_or(pad)));
            b.weighted_sum(&window, weight)
        })
        .collect()
}
