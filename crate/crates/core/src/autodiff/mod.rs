//! Tape-based reverse-mode automatic differentiation over scalar nodes.
//!
//! A [`Tape`] is single-writer while recording. Once recording stops it is
//! read-only, and [`Tape::backward`] may be called any number of times (and
//! from any thread) with different losses. [`LaneTape`] records one graph
//! for a batch of same-shaped problems.

mod gradcheck;
mod lanes;
mod tape;

pub use gradcheck::{grad_check, GradCheck};
pub use lanes::{LaneGradients, LaneTape, LaneVar};
pub use tape::{Gradients, Op, Tape, TapeError, Var};
