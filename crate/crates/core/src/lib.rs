//! Differentiable signal temporal logic.
//!
//! Robustness of STL formulas over sampled signals, computed with recurrent
//! cells that run on plain floats or on a reverse-mode autodiff tape, plus
//! gradient-based optimization on top.
//!
//! ```
//! use stlgrad::{parse, robustness, EvalConfig, Signal};
//!
//! let s = Signal::from_scalars(&[1.0, 1.0, 1.0, 2.0, 3.0, 1.0]).unwrap();
//! let f = parse("eventually[1,3] (x0 > 0)", 1).unwrap();
//! assert_eq!(robustness(&s, &f, &EvalConfig::exact()).unwrap(), vec![2.0]);
//! ```

pub mod autodiff;
pub mod config;
pub mod error;
pub mod formula;
pub mod interval;
pub mod optim;
pub mod params;
pub mod parser;
pub mod scaling;
pub mod semantics;
pub mod signal;
mod smooth;

pub use autodiff::{grad_check, GradCheck, Gradients, LaneTape, LaneVar, Tape, TapeError, Var};
pub use config::{EvalConfig, Mode, Padding, DEFAULT_RHO_MAX};
pub use error::{Error, Result};
pub use formula::{Comparison, Formula, Mu, NodeKind, Predicate, Threshold, Weight};
pub use interval::{interval_to_counts, Interval, IntervalCounts};
pub use params::ParamTable;
pub use parser::{parse, parse_with, to_dot, unparse, ParseError, ParserOptions, SourceSpan, SpanTree};
pub use semantics::{
    diff_robustness, diff_trace, integral_trace, lane_trace, oracle_robustness, robustness, robustness_trace,
    robustness_trace_with, robustness_with, satisfies, soft_max, soft_min, until_trace, RobustnessTrace,
};
pub use signal::Signal;
