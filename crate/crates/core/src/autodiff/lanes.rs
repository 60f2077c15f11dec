use crate::smooth;

use super::tape::{Op, TapeError};

/// Node of a [`LaneTape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LaneVar(u32);

impl LaneVar {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Tape over fixed-width vectors: one graph, evaluated independently in
/// every lane.
///
/// Each lane computes exactly what a scalar [`Tape`](super::Tape) would on
/// that lane's inputs, so a batch of independent problems with the same
/// structure shares one recording.
#[derive(Debug)]
pub struct LaneTape {
    lanes: usize,
    values: Vec<f64>,
    starts: Vec<u32>,
    parents: Vec<u32>,
    // lane-major per parent: partials[k * lanes + l]
    partials: Vec<f64>,
    xs: Vec<f64>,
    ps: Vec<f64>,
}

impl LaneTape {
    /// Panics if `lanes` is zero.
    pub fn new(lanes: usize) -> Self {
        assert!(lanes > 0, "a lane tape needs at least one lane");
        Self {
            lanes,
            values: Vec::new(),
            starts: vec![0],
            parents: Vec::new(),
            partials: Vec::new(),
            xs: Vec::new(),
            ps: Vec::new(),
        }
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn len(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Input node with one value per lane. Panics on a length mismatch.
    pub fn leaf(&mut self, values: &[f64]) -> LaneVar {
        assert_eq!(values.len(), self.lanes, "leaf needs one value per lane");
        self.values.extend_from_slice(values);
        self.starts.push(self.parents.len() as u32);
        LaneVar(self.len() as u32 - 1)
    }

    pub fn constant(&mut self, value: f64) -> LaneVar {
        self.values.extend(std::iter::repeat(value).take(self.lanes));
        self.starts.push(self.parents.len() as u32);
        LaneVar(self.len() as u32 - 1)
    }

    pub fn value(&self, v: LaneVar) -> &[f64] {
        let l = self.lanes;
        &self.values[v.index() * l..(v.index() + 1) * l]
    }

    pub fn record(&mut self, op: Op<'_>, inputs: &[LaneVar]) -> Result<LaneVar, TapeError> {
        if inputs.iter().any(|v| v.index() >= self.len()) {
            return Err(TapeError::ForeignVar);
        }
        let l = self.lanes;
        let n = inputs.len();
        let base = self.partials.len();
        if self.record_vectorized(op, inputs) {
            self.parents.extend(inputs.iter().map(|v| v.0));
            self.starts.push(self.parents.len() as u32);
            return Ok(LaneVar(self.len() as u32 - 1));
        }
        self.partials.resize(base + n * l, 0.0);
        let mut xs = std::mem::take(&mut self.xs);
        let mut ps = std::mem::take(&mut self.ps);
        for lane in 0..l {
            xs.clear();
            xs.extend(inputs.iter().map(|v| self.values[v.index() * l + lane]));
            let value = match kernel(op, &xs, &mut ps) {
                Ok(v) => v,
                Err(e) => {
                    self.partials.truncate(base);
                    self.values.truncate(self.len() * l);
                    self.xs = xs;
                    self.ps = ps;
                    return Err(e);
                }
            };
            self.values.push(value);
            for (k, &p) in ps.iter().enumerate() {
                self.partials[base + k * l + lane] = p;
            }
        }
        self.xs = xs;
        self.ps = ps;
        self.parents.extend(inputs.iter().map(|v| v.0));
        self.starts.push(self.parents.len() as u32);
        Ok(LaneVar(self.len() as u32 - 1))
    }

    /// Whole-lane loops for the common elementwise ops and exact
    /// reductions. Returns false when `op` needs the per-lane kernel.
    fn record_vectorized(&mut self, op: Op<'_>, inputs: &[LaneVar]) -> bool {
        let l = self.lanes;
        let row = |v: LaneVar| v.index() * l..(v.index() + 1) * l;
        let unary = |op: Op<'_>| {
            matches!(op, Op::Neg | Op::Relu | Op::Abs | Op::Scale(_) | Op::AddConst(_)) && inputs.len() == 1
        };
        let out = self.values.len();
        if unary(op) {
            let a = row(inputs[0]);
            self.values.extend_from_within(a.clone());
            let (vals, parts) = (&mut self.values, &mut self.partials);
            let start = parts.len();
            parts.resize(start + l, 1.0);
            let (y, d) = (&mut vals[out..], &mut parts[start..]);
            match op {
                Op::Neg => {
                    for i in 0..l {
                        y[i] = -y[i];
                        d[i] = -1.0;
                    }
                }
                Op::Relu => {
                    for i in 0..l {
                        d[i] = if y[i] > 0.0 { 1.0 } else { 0.0 };
                        y[i] = y[i].max(0.0);
                    }
                }
                Op::Abs => {
                    for i in 0..l {
                        let a = y[i];
                        d[i] = if a > 0.0 {
                            1.0
                        } else if a < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        y[i] = a.abs();
                    }
                }
                Op::Scale(c) => {
                    for i in 0..l {
                        y[i] *= c;
                        d[i] = c;
                    }
                }
                Op::AddConst(c) => {
                    for y in y.iter_mut() {
                        *y += c;
                    }
                }
                _ => unreachable!(),
            }
            return true;
        }
        match op {
            Op::Add | Op::Sub | Op::Mul if inputs.len() == 2 => {
                let (a, b) = (row(inputs[0]), row(inputs[1]));
                self.values.resize(out + l, 0.0);
                let start = self.partials.len();
                self.partials.resize(start + 2 * l, 1.0);
                let (head, y) = self.values.split_at_mut(out);
                let (xa, xb) = (&head[a], &head[b]);
                let (da, db) = self.partials[start..].split_at_mut(l);
                match op {
                    Op::Add => {
                        for i in 0..l {
                            y[i] = xa[i] + xb[i];
                        }
                    }
                    Op::Sub => {
                        for i in 0..l {
                            y[i] = xa[i] - xb[i];
                            db[i] = -1.0;
                        }
                    }
                    _ => {
                        for i in 0..l {
                            y[i] = xa[i] * xb[i];
                            da[i] = xb[i];
                            db[i] = xa[i];
                        }
                    }
                }
                true
            }
            Op::MaxReduce | Op::MinReduce if !inputs.is_empty() => {
                let max = matches!(op, Op::MaxReduce);
                let n = inputs.len();
                let start = self.partials.len();
                self.partials.resize(start + n * l, 0.0);
                self.values.extend_from_within(row(inputs[0]));
                let mut best = vec![0u32; l];
                let (head, y) = self.values.split_at_mut(out);
                for (k, &v) in inputs.iter().enumerate().skip(1) {
                    let x = &head[row(v)];
                    for i in 0..l {
                        let better = if max { x[i] > y[i] } else { x[i] < y[i] };
                        if better {
                            y[i] = x[i];
                            best[i] = k as u32;
                        }
                    }
                }
                for (i, &k) in best.iter().enumerate() {
                    self.partials[start + k as usize * l + i] = 1.0;
                }
                true
            }
            _ => false,
        }
    }

    /// Reverse sweep from `root` seeded with one adjoint per lane.
    pub fn backward(&self, root: LaneVar, seeds: &[f64]) -> Result<LaneGradients, TapeError> {
        let l = self.lanes;
        if root.index() >= self.len() {
            return Err(TapeError::ForeignVar);
        }
        if seeds.len() != l {
            return Err(TapeError::ShapeMismatch { op: "backward", expected: l.to_string(), got: seeds.len() });
        }
        let mut grads = vec![0.0; (root.index() + 1) * l];
        grads[root.index() * l..].copy_from_slice(seeds);
        for node in (0..=root.index()).rev() {
            let (s, e) = (self.starts[node] as usize, self.starts[node + 1] as usize);
            if s == e {
                continue;
            }
            let (below, above) = grads.split_at_mut(node * l);
            let g = &above[..l];
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            for k in s..e {
                let p = self.parents[k] as usize;
                let dst = &mut below[p * l..(p + 1) * l];
                let part = &self.partials[k * l..(k + 1) * l];
                for lane in 0..l {
                    dst[lane] += g[lane] * part[lane];
                }
            }
        }
        Ok(LaneGradients { lanes: l, grads })
    }
}

#[derive(Debug, Clone)]
pub struct LaneGradients {
    lanes: usize,
    grads: Vec<f64>,
}

impl LaneGradients {
    /// Per-lane adjoint of `v`; zeros for nodes after the root.
    pub fn get(&self, v: LaneVar) -> Vec<f64> {
        let l = self.lanes;
        self.grads.get(v.index() * l..(v.index() + 1) * l).map_or_else(|| vec![0.0; l], <[f64]>::to_vec)
    }
}

/// Value and local partials of `op` at `xs`, with the same arithmetic as
/// the scalar tape.
fn kernel(op: Op<'_>, xs: &[f64], ps: &mut Vec<f64>) -> Result<f64, TapeError> {
    let arity = |n: usize| {
        if xs.len() == n {
            Ok(())
        } else {
            Err(TapeError::ShapeMismatch { op: op.name(), expected: n.to_string(), got: xs.len() })
        }
    };
    if xs.is_empty() {
        return Err(TapeError::Empty(op.name()));
    }
    ps.clear();
    let value = match op {
        Op::Add => {
            arity(2)?;
            ps.extend([1.0, 1.0]);
            xs[0] + xs[1]
        }
        Op::Sub => {
            arity(2)?;
            ps.extend([1.0, -1.0]);
            xs[0] - xs[1]
        }
        Op::Mul => {
            arity(2)?;
            ps.extend([xs[1], xs[0]]);
            xs[0] * xs[1]
        }
        Op::Div => {
            arity(2)?;
            let (a, b) = (xs[0], xs[1]);
            if b == 0.0 {
                return Err(TapeError::DivisionByZero);
            }
            ps.extend([1.0 / b, -a / (b * b)]);
            a / b
        }
        Op::Neg => {
            arity(1)?;
            ps.push(-1.0);
            -xs[0]
        }
        Op::Exp => {
            arity(1)?;
            let e = xs[0].exp();
            ps.push(e);
            e
        }
        Op::Log => {
            arity(1)?;
            if !(xs[0] > 0.0) {
                return Err(TapeError::Domain { op: "log", value: xs[0] });
            }
            ps.push(1.0 / xs[0]);
            xs[0].ln()
        }
        Op::Sqrt => {
            arity(1)?;
            if xs[0] < 0.0 {
                return Err(TapeError::Domain { op: "sqrt", value: xs[0] });
            }
            let r = xs[0].sqrt();
            ps.push(if r > 0.0 { 0.5 / r } else { 0.0 });
            r
        }
        Op::Relu => {
            arity(1)?;
            ps.push(if xs[0] > 0.0 { 1.0 } else { 0.0 });
            xs[0].max(0.0)
        }
        Op::Abs => {
            arity(1)?;
            let a = xs[0];
            ps.push(if a > 0.0 {
                1.0
            } else if a < 0.0 {
                -1.0
            } else {
                0.0
            });
            a.abs()
        }
        Op::Scale(c) => {
            arity(1)?;
            ps.push(c);
            c * xs[0]
        }
        Op::AddConst(c) => {
            arity(1)?;
            ps.push(1.0);
            xs[0] + c
        }
        Op::MaxReduce | Op::MinReduce => {
            let max = matches!(op, Op::MaxReduce);
            let mut best = 0;
            for i in 1..xs.len() {
                if (max && xs[i] > xs[best]) || (!max && xs[i] < xs[best]) {
                    best = i;
                }
            }
            ps.resize(xs.len(), 0.0);
            ps[best] = 1.0;
            xs[best]
        }
        Op::SoftMax(w) | Op::SoftMin(w) | Op::LogSumExpMax(w) | Op::LogSumExpMin(w) => {
            let bad_lse = matches!(op, Op::LogSumExpMax(_) | Op::LogSumExpMin(_)) && w == 0.0;
            if !(w >= 0.0) || bad_lse {
                return Err(TapeError::Domain { op: op.name(), value: w });
            }
            match op {
                Op::SoftMax(w) => smooth::softmax_average(xs, w, Some(ps)),
                Op::SoftMin(w) => smooth::softmax_average(xs, -w, Some(ps)),
                Op::LogSumExpMax(w) => smooth::logsumexp(xs, w, Some(ps)),
                _ => smooth::logsumexp(xs, -w, Some(ps)),
            }
        }
        Op::Sum => {
            ps.resize(xs.len(), 1.0);
            xs.iter().sum()
        }
        Op::Dot => {
            if xs.len() % 2 != 0 {
                return Err(TapeError::ShapeMismatch {
                    op: "dot",
                    expected: "an even, nonzero count".into(),
                    got: xs.len(),
                });
            }
            let n = xs.len() / 2;
            let mut s = 0.0;
            for i in 0..n {
                s += xs[i] * xs[n + i];
            }
            ps.extend_from_slice(&xs[n..]);
            ps.extend_from_slice(&xs[..n]);
            s
        }
        Op::Linear { coeffs, offset } => {
            if coeffs.len() != xs.len() {
                return Err(TapeError::ShapeMismatch {
                    op: "linear",
                    expected: coeffs.len().to_string(),
                    got: xs.len(),
                });
            }
            ps.extend_from_slice(coeffs);
            coeffs.iter().enumerate().fold(0.0, |acc, (i, &c)| acc + c * xs[i]) + offset
        }
        Op::Norm { centers } => {
            if centers.len() != xs.len() {
                return Err(TapeError::ShapeMismatch {
                    op: "norm",
                    expected: centers.len().to_string(),
                    got: xs.len(),
                });
            }
            let sq: f64 = (0..xs.len()).map(|i| (xs[i] - centers[i]).powi(2)).sum();
            let r = sq.sqrt();
            ps.extend((0..xs.len()).map(|i| if r > 0.0 { (xs[i] - centers[i]) / r } else { 0.0 }));
            r
        }
    };
    Ok(value)
}
