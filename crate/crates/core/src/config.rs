use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Robustness value of `true`.
pub const DEFAULT_RHO_MAX: f64 = 1e6;

/// How max/min sites are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Exact,
    /// Softmax-weighted average `sum x_i e^{w x_i} / sum e^{w x_j}`.
    SoftSoftmax,
    /// `(1/w) log sum e^{w x_i}`; requires `w > 0`.
    SoftLogsumexp,
}

/// Values assumed past the end of a subformula trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    #[default]
    LastValue,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub mode: Mode,
    pub w: f64,
    pub padding: Padding,
    pub rho_max: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { mode: Mode::Exact, w: 1.0, padding: Padding::LastValue, rho_max: DEFAULT_RHO_MAX }
    }
}

impl EvalConfig {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn soft(w: f64) -> Self {
        Self { mode: Mode::SoftSoftmax, w, ..Self::default() }
    }

    pub fn logsumexp(w: f64) -> Self {
        Self { mode: Mode::SoftLogsumexp, w, ..Self::default() }
    }

    pub fn with_w(mut self, w: f64) -> Self {
        self.w = w;
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_max > 0.0) || !self.rho_max.is_finite() {
            return Err(Error::InvalidConfig(format!("rho_max must be positive, got {}", self.rho_max)));
        }
        if self.mode != Mode::Exact {
            if !(self.w >= 0.0) || !self.w.is_finite() {
                return Err(Error::InvalidConfig(format!("w must be a nonnegative number, got {}", self.w)));
            }
            if self.mode == Mode::SoftLogsumexp && self.w == 0.0 {
                return Err(Error::InvalidConfig("logsumexp mode requires w > 0".into()));
            }
        }
        if let Padding::Constant(r) = self.padding {
            if !r.is_finite() {
                return Err(Error::InvalidConfig("constant padding must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}
