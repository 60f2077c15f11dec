//! Numeric backends for the robustness engine.
//!
//! The engine is written once against [`Backend`]; [`Plain`] evaluates on
//! `f64` directly, [`Tape`] records every operation for differentiation and
//! [`LaneTape`] records one graph for a batch of elements.

use crate::autodiff::{LaneTape, LaneVar, Op, Tape, Var};
use crate::config::{EvalConfig, Mode};
use crate::smooth;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Max,
    Min,
}

/// How a max/min site is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    Exact,
    Softmax(f64),
    LogSumExp(f64),
}

impl From<&EvalConfig> for Smoothing {
    fn from(cfg: &EvalConfig) -> Self {
        match cfg.mode {
            Mode::Exact => Smoothing::Exact,
            Mode::SoftSoftmax => Smoothing::Softmax(cfg.w),
            Mode::SoftLogsumexp => Smoothing::LogSumExp(cfg.w),
        }
    }
}

pub trait Backend {
    type Value: Copy;

    fn constant(&mut self, x: f64) -> Self::Value;
    fn neg(&mut self, a: Self::Value) -> Self::Value;
    fn sub(&mut self, a: Self::Value, b: Self::Value) -> Self::Value;
    fn add_const(&mut self, a: Self::Value, c: f64) -> Self::Value;
    fn abs(&mut self, a: Self::Value) -> Self::Value;
    /// `sum c_i x_i + offset`, accumulated left to right from zero.
    fn linear(&mut self, xs: &[Self::Value], coeffs: &[f64], offset: f64) -> Self::Value;
    /// `|| x - centers ||_2`
    fn norm(&mut self, xs: &[Self::Value], centers: &[f64]) -> Self::Value;
    /// `sum weight * x_i`, accumulated left to right from zero.
    fn weighted_sum(&mut self, xs: &[Self::Value], weight: f64) -> Self::Value;
    /// Max or min of a nonempty slice. Exact ties resolve to the first entry.
    fn reduce(&mut self, ext: Extremum, smoothing: Smoothing, xs: &[Self::Value]) -> Self::Value;
}

/// Plain `f64` evaluation with no recording.
#[derive(Debug, Clone, Copy, Default)]
pub struct Plain;

impl Backend for Plain {
    type Value = f64;

    #[inline]
    fn constant(&mut self, x: f64) -> f64 {
        x
    }

    #[inline]
    fn neg(&mut self, a: f64) -> f64 {
        -a
    }

    #[inline]
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }

    #[inline]
    fn add_const(&mut self, a: f64, c: f64) -> f64 {
        a + c
    }

    #[inline]
    fn abs(&mut self, a: f64) -> f64 {
        a.abs()
    }

    fn linear(&mut self, xs: &[f64], coeffs: &[f64], offset: f64) -> f64 {
        xs.iter().zip(coeffs).fold(0.0, |acc, (x, c)| acc + c * x) + offset
    }

    fn norm(&mut self, xs: &[f64], centers: &[f64]) -> f64 {
        xs.iter().zip(centers).fold(0.0, |acc, (x, c)| acc + (x - c) * (x - c)).sqrt()
    }

    fn weighted_sum(&mut self, xs: &[f64], weight: f64) -> f64 {
        xs.iter().fold(0.0, |acc, x| acc + weight * x)
    }

    #[inline]
    fn reduce(&mut self, ext: Extremum, smoothing: Smoothing, xs: &[f64]) -> f64 {
        match (smoothing, ext) {
            (Smoothing::Exact, Extremum::Max) => {
                let mut best = xs[0];
                for &x in &xs[1..] {
                    if x > best {
                        best = x;
                    }
                }
                best
            }
            (Smoothing::Exact, Extremum::Min) => {
                let mut best = xs[0];
                for &x in &xs[1..] {
                    if x < best {
                        best = x;
                    }
                }
                best
            }
            (Smoothing::Softmax(w), Extremum::Max) => smooth::softmax_average(xs, w, None),
            (Smoothing::Softmax(w), Extremum::Min) => smooth::softmax_average(xs, -w, None),
            (Smoothing::LogSumExp(w), Extremum::Max) => smooth::logsumexp(xs, w, None),
            (Smoothing::LogSumExp(w), Extremum::Min) => smooth::logsumexp(xs, -w, None),
        }
    }
}

fn reduce_op(ext: Extremum, smoothing: Smoothing) -> Op<'static> {
    match (smoothing, ext) {
        (Smoothing::Exact, Extremum::Max) => Op::MaxReduce,
        (Smoothing::Exact, Extremum::Min) => Op::MinReduce,
        (Smoothing::Softmax(w), Extremum::Max) => Op::SoftMax(w),
        (Smoothing::Softmax(w), Extremum::Min) => Op::SoftMin(w),
        (Smoothing::LogSumExp(w), Extremum::Max) => Op::LogSumExpMax(w),
        (Smoothing::LogSumExp(w), Extremum::Min) => Op::LogSumExpMin(w),
    }
}

impl Backend for Tape {
    type Value = Var;

    fn constant(&mut self, x: f64) -> Var {
        Tape::constant(self, x)
    }

    fn neg(&mut self, a: Var) -> Var {
        Tape::neg(self, a)
    }

    fn sub(&mut self, a: Var, b: Var) -> Var {
        Tape::sub(self, a, b)
    }

    fn add_const(&mut self, a: Var, c: f64) -> Var {
        Tape::add_const(self, a, c)
    }

    fn abs(&mut self, a: Var) -> Var {
        Tape::abs(self, a)
    }

    fn linear(&mut self, xs: &[Var], coeffs: &[f64], offset: f64) -> Var {
        self.record(Op::Linear { coeffs, offset }, xs).expect("linear inputs match coefficients")
    }

    fn norm(&mut self, xs: &[Var], centers: &[f64]) -> Var {
        self.record(Op::Norm { centers }, xs).expect("norm inputs match centers")
    }

    fn weighted_sum(&mut self, xs: &[Var], weight: f64) -> Var {
        let coeffs = vec![weight; xs.len()];
        self.record(Op::Linear { coeffs: &coeffs, offset: 0.0 }, xs).expect("nonempty window")
    }

    fn reduce(&mut self, ext: Extremum, smoothing: Smoothing, xs: &[Var]) -> Var {
        self.record(reduce_op(ext, smoothing), xs).expect("validated reduction")
    }
}

impl Backend for LaneTape {
    type Value = LaneVar;

    fn constant(&mut self, x: f64) -> LaneVar {
        LaneTape::constant(self, x)
    }

    fn neg(&mut self, a: LaneVar) -> LaneVar {
        self.record(Op::Neg, &[a]).expect("own node")
    }

    fn sub(&mut self, a: LaneVar, b: LaneVar) -> LaneVar {
        self.record(Op::Sub, &[a, b]).expect("own nodes")
    }

    fn add_const(&mut self, a: LaneVar, c: f64) -> LaneVar {
        self.record(Op::AddConst(c), &[a]).expect("own node")
    }

    fn abs(&mut self, a: LaneVar) -> LaneVar {
        self.record(Op::Abs, &[a]).expect("own node")
    }

    fn linear(&mut self, xs: &[LaneVar], coeffs: &[f64], offset: f64) -> LaneVar {
        self.record(Op::Linear { coeffs, offset }, xs).expect("linear inputs match coefficients")
    }

    fn norm(&mut self, xs: &[LaneVar], centers: &[f64]) -> LaneVar {
        self.record(Op::Norm { centers }, xs).expect("norm inputs match centers")
    }

    fn weighted_sum(&mut self, xs: &[LaneVar], weight: f64) -> LaneVar {
        let coeffs = vec![weight; xs.len()];
        self.record(Op::Linear { coeffs: &coeffs, offset: 0.0 }, xs).expect("nonempty window")
    }

    fn reduce(&mut self, ext: Extremum, smoothing: Smoothing, xs: &[LaneVar]) -> LaneVar {
        self.record(reduce_op(ext, smoothing), xs).expect("validated reduction")
    }
}
