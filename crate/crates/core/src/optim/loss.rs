use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

/// `J_m(rho) = relu(m - rho)`, reduced over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginLoss {
    pub m: f64,
    #[serde(default)]
    pub reduction: Reduction,
}

impl MarginLoss {
    pub fn new(m: f64) -> Self {
        Self { m, reduction: Reduction::Sum }
    }

    pub fn mean(m: f64) -> Self {
        Self { m, reduction: Reduction::Mean }
    }

    pub fn value(&self, rhos: &[f64]) -> f64 {
        let total: f64 = rhos.iter().map(|r| (self.m - r).max(0.0)).sum();
        match self.reduction {
            Reduction::Sum => total,
            Reduction::Mean => total / rhos.len().max(1) as f64,
        }
    }

    /// Records the loss over `rhos` on `tape`. Panics on an empty batch.
    pub fn apply(&self, tape: &mut Tape, rhos: &[Var]) -> Var {
        let terms: Vec<Var> = rhos
            .iter()
            .map(|&r| {
                let neg = tape.neg(r);
                let shifted = tape.add_const(neg, self.m);
                tape.relu(shifted)
            })
            .collect();
        let total = tape.sum(&terms);
        match self.reduction {
            Reduction::Sum => total,
            Reduction::Mean => tape.scale(total, 1.0 / rhos.len() as f64),
        }
    }
}
