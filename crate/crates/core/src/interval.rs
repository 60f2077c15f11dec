use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance (in units of `dt`) for interval bounds to count as
/// sample-aligned.
pub const ALIGN_TOL: f64 = 1e-9;

/// Time interval `[a, b]` with `0 <= a <= b`; `b` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    a: f64,
    b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidInterval { a, b, reason: reason.into() };
        if a.is_nan() || b.is_nan() {
            return Err(bad("bounds must be numbers"));
        }
        if !a.is_finite() {
            return Err(bad("lower bound must be finite"));
        }
        if a < 0.0 {
            return Err(bad("lower bound must be nonnegative"));
        }
        if a > b {
            return Err(bad("lower bound exceeds upper bound"));
        }
        Ok(Self { a, b })
    }

    /// The positive ray `[0, inf)`.
    pub const fn unbounded() -> Self {
        Self { a: 0.0, b: f64::INFINITY }
    }

    pub fn from(a: f64) -> Result<Self> {
        Self::new(a, f64::INFINITY)
    }

    pub fn lower(&self) -> f64 {
        self.a
    }

    pub fn upper(&self) -> f64 {
        self.b
    }

    pub fn is_bounded(&self) -> bool {
        self.b.is_finite()
    }

    pub fn is_unbounded_ray(&self) -> bool {
        self.a == 0.0 && !self.is_bounded()
    }

    /// Sample counts of this interval on a grid with period `dt`.
    pub fn counts(&self, dt: f64) -> Result<IntervalCounts> {
        interval_to_counts(self, dt)
    }
}

impl Default for Interval {
    fn default() -> Self {
        Self::unbounded()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_bounded() {
            write!(f, "[{},{}]", self.a, self.b)
        } else {
            write!(f, "[{},inf)", self.a)
        }
    }
}

/// Sample counts derived from an interval and a sampling period.
///
/// `n_b` samples lie in `[0, b]`, `n_a` in `[0, a]` and `m` in `[a, b]`.
/// Unbounded intervals have no `n_b` or `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntervalCounts {
    pub n_a: usize,
    pub n_b: Option<usize>,
    pub m: Option<usize>,
}

impl IntervalCounts {
    /// Index offset of the lower bound, `a / dt`.
    pub fn lower_steps(&self) -> usize {
        self.n_a - 1
    }

    /// Index offset of the upper bound, `b / dt`, if bounded.
    pub fn upper_steps(&self) -> Option<usize> {
        self.n_b.map(|n| n - 1)
    }
}

pub fn interval_to_counts(iv: &Interval, dt: f64) -> Result<IntervalCounts> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidConfig(format!("sampling period must be positive, got {dt}")));
    }
    if iv.a > iv.b {
        return Err(Error::InvalidInterval { a: iv.a, b: iv.b, reason: "lower bound exceeds upper bound".into() });
    }
    let steps = |bound: f64| -> Result<usize> {
        let k = (bound / dt).round();
        if (bound - k * dt).abs() > ALIGN_TOL * dt {
            return Err(Error::IntervalNotAligned { bound, dt });
        }
        Ok(k as usize)
    };
    let a_steps = steps(iv.a)?;
    let b_steps = if iv.is_bounded() { Some(steps(iv.b)?) } else { None };
    Ok(IntervalCounts { n_a: a_steps + 1, n_b: b_steps.map(|k| k + 1), m: b_steps.map(|k| k - a_steps + 1) })
}
