use thiserror::Error;

use crate::autodiff::TapeError;
use crate::parser::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("subsignal index {index} out of range for signal of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid interval [{a}, {b}]: {reason}")]
    InvalidInterval { a: f64, b: f64, reason: String },

    #[error("interval bound {bound} is not a multiple of the sampling period {dt}")]
    IntervalNotAligned { bound: f64, dt: f64 },

    #[error("invalid formula: {0}")]
    InvalidFormula(String),

    #[error("formula references variable x{index} but the signal has dimension {dim}")]
    UnknownVariable { index: usize, dim: usize },

    #[error("parameter `{0}` has no value")]
    UnboundParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("optimization diverged at iteration {iteration}: loss = {loss}")]
    Diverged { iteration: usize, loss: f64 },

    #[error("{0}")]
    Optim(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Tape(#[from] TapeError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
