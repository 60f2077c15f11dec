use std::sync::atomic::{AtomicU32, Ordering};

use thiserror::Error;

use crate::smooth;

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TapeError {
    #[error("{op}: expected {expected} input(s), got {got}")]
    ShapeMismatch { op: &'static str, expected: String, got: usize },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("division by zero")]
    DivisionByZero,
    #[error("{op}: argument {value} outside the domain")]
    Domain { op: &'static str, value: f64 },
    #[error("variable belongs to a different tape")]
    ForeignVar,
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Handle to a scalar node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    index: u32,
}

impl Var {
    /// Position on the tape (insertion order).
    pub fn index(self) -> usize {
        self.index as usize
    }
}

/// Recordable operations. Each is a scalar function of its inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op<'a> {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Sqrt,
    Relu,
    Abs,
    Scale(f64),
    AddConst(f64),
    /// Exact maximum; the subgradient goes to the first maximal input.
    MaxReduce,
    /// Exact minimum; the subgradient goes to the first minimal input.
    MinReduce,
    SoftMax(f64),
    SoftMin(f64),
    LogSumExpMax(f64),
    LogSumExpMin(f64),
    Sum,
    /// Inputs `[a_0..a_n, b_0..b_n]`, value `sum a_i b_i`.
    Dot,
    /// `sum coeffs_i x_i + offset`
    Linear {
        coeffs: &'a [f64],
        offset: f64,
    },
    /// `|| x - centers ||_2`
    Norm {
        centers: &'a [f64],
    },
}

impl Op<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sqrt => "sqrt",
            Op::Relu => "relu",
            Op::Abs => "abs",
            Op::Scale(_) => "scale",
            Op::AddConst(_) => "add_const",
            Op::MaxReduce => "max",
            Op::MinReduce => "min",
            Op::SoftMax(_) => "soft_max",
            Op::SoftMin(_) => "soft_min",
            Op::LogSumExpMax(_) => "logsumexp_max",
            Op::LogSumExpMin(_) => "logsumexp_min",
            Op::Sum => "sum",
            Op::Dot => "dot",
            Op::Linear { .. } => "linear",
            Op::Norm { .. } => "norm",
        }
    }
}

/// Append-only record of scalar operations for reverse-mode differentiation.
///
/// Local partial derivatives are computed when a node is recorded, so the
/// backward pass is a single reverse sweep of multiply-accumulates.
#[derive(Debug)]
pub struct Tape {
    id: u32,
    values: Vec<f64>,
    requires_grad: Vec<bool>,
    // node i owns parents[starts[i]..starts[i + 1]]
    starts: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
    kink_tol: Option<f64>,
    kinks: usize,
    scratch_values: Vec<f64>,
    scratch_partials: Vec<f64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::with_capacity(0)
    }

    pub fn with_capacity(nodes: usize) -> Self {
        let mut starts = Vec::with_capacity(nodes + 1);
        starts.push(0);
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            values: Vec::with_capacity(nodes),
            requires_grad: Vec::with_capacity(nodes),
            starts,
            parents: Vec::with_capacity(nodes * 2),
            partials: Vec::with_capacity(nodes * 2),
            kink_tol: None,
            kinks: 0,
            scratch_values: Vec::new(),
            scratch_partials: Vec::new(),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Enables counting of nondifferentiable points: max/min ties between
    /// distinct nodes within `tol`, and relu/abs/norm/sqrt arguments within
    /// `tol` of their kink.
    pub fn set_kink_tolerance(&mut self, tol: Option<f64>) {
        self.kink_tol = tol;
    }

    /// Number of kinks met since recording started.
    pub fn kinks(&self) -> usize {
        self.kinks
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(value, true, &[], &[])
    }

    pub fn leaves(&mut self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&v| self.leaf(v)).collect()
    }

    /// A constant that receives no gradient.
    pub fn constant(&mut self, value: f64) -> Var {
        self.push(value, false, &[], &[])
    }

    pub fn value(&self, v: Var) -> f64 {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        self.values[v.index as usize]
    }

    pub fn values(&self, vs: &[Var]) -> Vec<f64> {
        vs.iter().map(|&v| self.value(v)).collect()
    }

    fn push(&mut self, value: f64, grad: bool, parents: &[u32], partials: &[f64]) -> Var {
        let index = self.values.len() as u32;
        self.values.push(value);
        self.requires_grad.push(grad);
        self.parents.extend_from_slice(parents);
        self.partials.extend_from_slice(partials);
        self.starts.push(self.parents.len() as u32);
        Var { tape: self.id, index }
    }

    fn push_from_scratch(&mut self, value: f64, inputs: &[Var]) -> Var {
        let index = self.values.len() as u32;
        self.values.push(value);
        self.requires_grad.push(false);
        self.parents.extend(inputs.iter().map(|v| v.index));
        self.partials.extend_from_slice(&self.scratch_partials);
        self.starts.push(self.parents.len() as u32);
        Var { tape: self.id, index }
    }

    fn note_kink(&mut self, distance: f64) {
        if let Some(tol) = self.kink_tol {
            if distance.abs() <= tol {
                self.kinks += 1;
            }
        }
    }

    /// Records `op` applied to `inputs` and returns the result node.
    pub fn record(&mut self, op: Op<'_>, inputs: &[Var]) -> Result<Var, TapeError> {
        if inputs.iter().any(|v| v.tape != self.id) {
            return Err(TapeError::ForeignVar);
        }
        let arity = |n: usize| -> Result<(), TapeError> {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(TapeError::ShapeMismatch { op: op.name(), expected: n.to_string(), got: inputs.len() })
            }
        };
        let nonempty = || -> Result<(), TapeError> {
            if inputs.is_empty() {
                Err(TapeError::Empty(op.name()))
            } else {
                Ok(())
            }
        };
        let val = |i: usize| self.values[inputs[i].index as usize];
        let idx = |i: usize| inputs[i].index;

        let out = match op {
            Op::Add => {
                arity(2)?;
                self.push(val(0) + val(1), false, &[idx(0), idx(1)], &[1.0, 1.0])
            }
            Op::Sub => {
                arity(2)?;
                self.push(val(0) - val(1), false, &[idx(0), idx(1)], &[1.0, -1.0])
            }
            Op::Mul => {
                arity(2)?;
                let (a, b) = (val(0), val(1));
                self.push(a * b, false, &[idx(0), idx(1)], &[b, a])
            }
            Op::Div => {
                arity(2)?;
                let (a, b) = (val(0), val(1));
                if b == 0.0 {
                    return Err(TapeError::DivisionByZero);
                }
                self.push(a / b, false, &[idx(0), idx(1)], &[1.0 / b, -a / (b * b)])
            }
            Op::Neg => {
                arity(1)?;
                self.push(-val(0), false, &[idx(0)], &[-1.0])
            }
            Op::Exp => {
                arity(1)?;
                let e = val(0).exp();
                self.push(e, false, &[idx(0)], &[e])
            }
            Op::Log => {
                arity(1)?;
                let a = val(0);
                if !(a > 0.0) {
                    return Err(TapeError::Domain { op: "log", value: a });
                }
                self.push(a.ln(), false, &[idx(0)], &[1.0 / a])
            }
            Op::Sqrt => {
                arity(1)?;
                let a = val(0);
                if a < 0.0 {
                    return Err(TapeError::Domain { op: "sqrt", value: a });
                }
                let r = a.sqrt();
                self.note_kink(a);
                let d = if r > 0.0 { 0.5 / r } else { 0.0 };
                self.push(r, false, &[idx(0)], &[d])
            }
            Op::Relu => {
                arity(1)?;
                let a = val(0);
                self.note_kink(a);
                let d = if a > 0.0 { 1.0 } else { 0.0 };
                self.push(a.max(0.0), false, &[idx(0)], &[d])
            }
            Op::Abs => {
                arity(1)?;
                let a = val(0);
                self.note_kink(a);
                let d = if a > 0.0 {
                    1.0
                } else if a < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                self.push(a.abs(), false, &[idx(0)], &[d])
            }
            Op::Scale(c) => {
                arity(1)?;
                self.push(c * val(0), false, &[idx(0)], &[c])
            }
            Op::AddConst(c) => {
                arity(1)?;
                self.push(val(0) + c, false, &[idx(0)], &[1.0])
            }
            Op::MaxReduce | Op::MinReduce => {
                nonempty()?;
                let better = |cand: f64, best: f64| {
                    if matches!(op, Op::MaxReduce) {
                        cand > best
                    } else {
                        cand < best
                    }
                };
                let mut best = 0;
                for i in 1..inputs.len() {
                    if better(val(i), val(best)) {
                        best = i;
                    }
                }
                if let Some(tol) = self.kink_tol {
                    let bv = val(best);
                    let tie = (0..inputs.len()).any(|i| idx(i) != idx(best) && (val(i) - bv).abs() <= tol);
                    if tie {
                        self.kinks += 1;
                    }
                }
                self.push(val(best), false, &[idx(best)], &[1.0])
            }
            Op::SoftMax(w) | Op::SoftMin(w) | Op::LogSumExpMax(w) | Op::LogSumExpMin(w) => {
                nonempty()?;
                if !(w >= 0.0) {
                    return Err(TapeError::Domain { op: op.name(), value: w });
                }
                let mut xs = std::mem::take(&mut self.scratch_values);
                let mut ps = std::mem::take(&mut self.scratch_partials);
                xs.clear();
                xs.extend(inputs.iter().map(|v| self.values[v.index as usize]));
                let value = match op {
                    Op::SoftMax(w) => smooth::softmax_average(&xs, w, Some(&mut ps)),
                    Op::SoftMin(w) => smooth::softmax_average(&xs, -w, Some(&mut ps)),
                    Op::LogSumExpMax(w) | Op::LogSumExpMin(w) if w == 0.0 => {
                        self.scratch_values = xs;
                        self.scratch_partials = ps;
                        return Err(TapeError::Domain { op: op.name(), value: w });
                    }
                    Op::LogSumExpMax(w) => smooth::logsumexp(&xs, w, Some(&mut ps)),
                    Op::LogSumExpMin(w) => smooth::logsumexp(&xs, -w, Some(&mut ps)),
                    _ => unreachable!(),
                };
                self.scratch_partials = ps;
                let out = self.push_from_scratch(value, inputs);
                self.scratch_values = xs;
                out
            }
            Op::Sum => {
                nonempty()?;
                let s: f64 = inputs.iter().map(|v| self.values[v.index as usize]).sum();
                self.scratch_partials.clear();
                self.scratch_partials.resize(inputs.len(), 1.0);
                self.push_from_scratch(s, inputs)
            }
            Op::Dot => {
                if inputs.is_empty() || inputs.len() % 2 != 0 {
                    return Err(TapeError::ShapeMismatch {
                        op: "dot",
                        expected: "an even, nonzero count".into(),
                        got: inputs.len(),
                    });
                }
                let n = inputs.len() / 2;
                let mut s = 0.0;
                self.scratch_partials.clear();
                for i in 0..n {
                    s += val(i) * val(n + i);
                }
                for i in 0..n {
                    self.scratch_partials.push(val(n + i));
                }
                for i in 0..n {
                    self.scratch_partials.push(val(i));
                }
                self.push_from_scratch(s, inputs)
            }
            Op::Linear { coeffs, offset } => {
                nonempty()?;
                if coeffs.len() != inputs.len() {
                    return Err(TapeError::ShapeMismatch {
                        op: "linear",
                        expected: coeffs.len().to_string(),
                        got: inputs.len(),
                    });
                }
                let s = coeffs.iter().enumerate().fold(0.0, |acc, (i, &c)| acc + c * val(i)) + offset;
                self.scratch_partials.clear();
                self.scratch_partials.extend_from_slice(coeffs);
                self.push_from_scratch(s, inputs)
            }
            Op::Norm { centers } => {
                nonempty()?;
                if centers.len() != inputs.len() {
                    return Err(TapeError::ShapeMismatch {
                        op: "norm",
                        expected: centers.len().to_string(),
                        got: inputs.len(),
                    });
                }
                let sq: f64 = (0..inputs.len()).map(|i| (val(i) - centers[i]).powi(2)).sum();
                let r = sq.sqrt();
                self.scratch_partials.clear();
                for (i, c) in centers.iter().enumerate() {
                    let d = if r > 0.0 { (val(i) - c) / r } else { 0.0 };
                    self.scratch_partials.push(d);
                }
                self.note_kink(r);
                self.push_from_scratch(r, inputs)
            }
        };
        Ok(out)
    }

    fn expect_record(&mut self, op: Op<'_>, inputs: &[Var]) -> Var {
        match self.record(op, inputs) {
            Ok(v) => v,
            Err(e) => panic!("{e}"),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.expect_record(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.expect_record(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.expect_record(Op::Mul, &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.record(Op::Div, &[a, b])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.expect_record(Op::Neg, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.expect_record(Op::Exp, &[a])
    }

    pub fn ln(&mut self, a: Var) -> Result<Var, TapeError> {
        self.record(Op::Log, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.expect_record(Op::Relu, &[a])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.expect_record(Op::Abs, &[a])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.expect_record(Op::Scale(c), &[a])
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.expect_record(Op::AddConst(c), &[a])
    }

    /// Panics on empty input.
    pub fn sum(&mut self, xs: &[Var]) -> Var {
        self.expect_record(Op::Sum, xs)
    }

    /// Panics on empty input.
    pub fn max(&mut self, xs: &[Var]) -> Var {
        self.expect_record(Op::MaxReduce, xs)
    }

    /// Panics on empty input.
    pub fn min(&mut self, xs: &[Var]) -> Var {
        self.expect_record(Op::MinReduce, xs)
    }

    pub fn soft_max(&mut self, xs: &[Var], w: f64) -> Var {
        self.expect_record(Op::SoftMax(w), xs)
    }

    pub fn soft_min(&mut self, xs: &[Var], w: f64) -> Var {
        self.expect_record(Op::SoftMin(w), xs)
    }

    pub fn dot(&mut self, a: &[Var], b: &[Var]) -> Result<Var, TapeError> {
        if a.len() != b.len() {
            return Err(TapeError::ShapeMismatch { op: "dot", expected: a.len().to_string(), got: b.len() });
        }
        let joined: Vec<Var> = a.iter().chain(b).copied().collect();
        self.record(Op::Dot, &joined)
    }

    /// The shift action `M_N x + B_N u`: drops `x[0]`, moves every entry up
    /// one index and appends `u`. Pure re-indexing, so no node is recorded
    /// and the vector-Jacobian product is the inverse permutation.
    pub fn shift(&self, x: &[Var], u: Var) -> Vec<Var> {
        let mut out = Vec::with_capacity(x.len());
        if !x.is_empty() {
            out.extend_from_slice(&x[1..]);
            out.push(u);
        }
        out
    }

    /// Selects `xs[i]`; like [`Tape::shift`] this only re-indexes.
    pub fn select(&self, xs: &[Var], i: usize) -> Result<Var, TapeError> {
        xs.get(i).copied().ok_or(TapeError::IndexOutOfRange { index: i, len: xs.len() })
    }

    /// Gradient of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TapeError> {
        self.backward_seeded(&[(loss, 1.0)])
    }

    /// Gradient of `sum_k c_k * v_k` for seeds `(v_k, c_k)`.
    pub fn backward_seeded(&self, seeds: &[(Var, f64)]) -> Result<Gradients, TapeError> {
        if seeds.iter().any(|(v, _)| v.tape != self.id) {
            return Err(TapeError::ForeignVar);
        }
        let mut grads = vec![0.0; self.values.len()];
        let mut top = 0usize;
        for &(v, c) in seeds {
            grads[v.index as usize] += c;
            top = top.max(v.index as usize + 1);
        }
        for node in (0..top).rev() {
            let g = grads[node];
            if g == 0.0 {
                continue;
            }
            let (s, e) = (self.starts[node] as usize, self.starts[node + 1] as usize);
            for k in s..e {
                grads[self.parents[k] as usize] += g * self.partials[k];
            }
        }
        Ok(Gradients { tape: self.id, grads })
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires_grad[v.index as usize]
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u32,
    grads: Vec<f64>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> f64 {
        assert_eq!(v.tape, self.tape, "variable belongs to a different tape");
        self.grads[v.index as usize]
    }

    pub fn wrt(&self, vs: &[Var]) -> Vec<f64> {
        vs.iter().map(|&v| self.get(v)).collect()
    }
}
