//! Smooth surrogates for max and min.
//!
//! All forward evaluations shift exponents by their maximum so that
//! `w * (max(x) - min(x))` up to ~700 stays finite.

use crate::error::{Error, Result};

/// Softmax-weighted average of `x` with sharpness `w >= 0`.
///
/// `w = 0` gives the mean; `w -> inf` recovers `max(x)`.
pub fn soft_max(x: &[f64], w: f64) -> Result<f64> {
    check(x, w, "soft_max")?;
    Ok(softmax_average(x, w, None))
}

/// Softmin-weighted average of `x`; `soft_max` with the sign of `w` flipped.
pub fn soft_min(x: &[f64], w: f64) -> Result<f64> {
    check(x, w, "soft_min")?;
    Ok(softmax_average(x, -w, None))
}

/// `(1/w) log sum exp(w x_i)`, an upper bound on `max(x)`.
pub fn logsumexp_max(x: &[f64], w: f64) -> Result<f64> {
    check(x, w, "logsumexp_max")?;
    if w == 0.0 {
        return Err(Error::InvalidConfig("logsumexp requires w > 0".into()));
    }
    Ok(logsumexp(x, w, None))
}

/// `-(1/w) log sum exp(-w x_i)`, a lower bound on `min(x)`.
pub fn logsumexp_min(x: &[f64], w: f64) -> Result<f64> {
    check(x, w, "logsumexp_min")?;
    if w == 0.0 {
        return Err(Error::InvalidConfig("logsumexp requires w > 0".into()));
    }
    Ok(logsumexp(x, -w, None))
}

fn check(x: &[f64], w: f64, what: &'static str) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    if !(w >= 0.0) {
        return Err(Error::InvalidConfig(format!("w must be nonnegative, got {w}")));
    }
    Ok(())
}

/// `sum x_i e^{s x_i} / sum e^{s x_j}` for signed scale `s`. When `partials`
/// is given it receives `d value / d x_i = p_i (1 + s (x_i - value))`.
pub(crate) fn softmax_average(x: &[f64], s: f64, partials: Option<&mut Vec<f64>>) -> f64 {
    let shift = x.iter().map(|&v| s * v).fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in x {
        let e = (s * v - shift).exp();
        num += v * e;
        den += e;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    // rounding in the weighted sum can land an ulp outside the range
    let value = (num / den).clamp(lo, hi);
    if let Some(out) = partials {
        out.clear();
        out.extend(x.iter().map(|&v| {
            let p = (s * v - shift).exp() / den;
            p * (1.0 + s * (v - value))
        }));
    }
    value
}

/// `(1/s) log sum e^{s x_i}` for signed nonzero scale `s`. Partials are the
/// softmax probabilities.
pub(crate) fn logsumexp(x: &[f64], s: f64, partials: Option<&mut Vec<f64>>) -> f64 {
    let shift = x.iter().map(|&v| s * v).fold(f64::NEG_INFINITY, f64::max);
    let den: f64 = x.iter().map(|&v| (s * v - shift).exp()).sum();
    let value = (shift + den.ln()) / s;
    if let Some(out) = partials {
        out.clear();
        out.extend(x.iter().map(|&v| (s * v - shift).exp() / den));
    }
    value
}
