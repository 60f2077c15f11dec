use super::tape::{Tape, Var};
use crate::error::Result;

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Debug, Clone)]
pub enum GradCheck {
    Checked {
        /// Worst `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
        max_rel_error: f64,
        worst_index: usize,
        analytic: Vec<f64>,
        numeric: Vec<f64>,
    },
    /// The function sits on (or within a step of) a nondifferentiable point.
    SkippedAtKink { kinks: usize },
}

impl GradCheck {
    pub fn max_rel_error(&self) -> Option<f64> {
        match self {
            GradCheck::Checked { max_rel_error, .. } => Some(*max_rel_error),
            GradCheck::SkippedAtKink { .. } => None,
        }
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self, GradCheck::SkippedAtKink { .. })
    }
}

/// Multiple of the step `h` within which a max/min tie or relu/abs argument
/// counts as a kink.
const KINK_STEPS: f64 = 10.0;

/// Checks `f`'s reverse-mode gradient at `x0` with central differences of
/// step `h`.
pub fn grad_check<F>(f: F, x0: &[f64], h: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    tape.set_kink_tolerance(Some(KINK_STEPS * h));
    let xs = tape.leaves(x0);
    let y = f(&mut tape, &xs)?;
    if tape.kinks() > 0 {
        return Ok(GradCheck::SkippedAtKink { kinks: tape.kinks() });
    }
    let analytic = tape.backward(y)?.wrt(&xs);

    let eval = |x: &[f64]| -> Result<f64> {
        let mut t = Tape::new();
        let vs = t.leaves(x);
        let y = f(&mut t, &vs)?;
        Ok(t.value(y))
    };
    let mut numeric = Vec::with_capacity(x0.len());
    let mut x = x0.to_vec();
    for i in 0..x0.len() {
        x[i] = x0[i] + h;
        let up = eval(&x)?;
        x[i] = x0[i] - h;
        let down = eval(&x)?;
        x[i] = x0[i];
        numeric.push((up - down) / (2.0 * h));
    }

    let mut max_rel_error = 0.0;
    let mut worst_index = 0;
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = (a - n).abs() / 1f64.max(a.abs()).max(n.abs());
        if err > max_rel_error {
            max_rel_error = err;
            worst_index = i;
        }
    }
    Ok(GradCheck::Checked { max_rel_error, worst_index, analytic, numeric })
}
