use indexmap::IndexMap;

use super::backend::{Backend, Extremum, Smoothing};
use super::temporal::{self, Reducer};
use crate::config::{EvalConfig, Padding};
use crate::error::{Error, Result};
use crate::formula::{Formula, Mu, Predicate, Threshold};

/// One batch element: `len × dim` states, row-major.
pub(crate) struct Element<'a, V> {
    pub states: &'a [V],
    pub dim: usize,
    pub dt: f64,
}

impl<V: Copy> Element<'_, V> {
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    fn state(&self, i: usize) -> &[V] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }
}

/// Checks everything that can fail before evaluation starts.
pub(crate) fn check(f: &Formula, dim: usize, dt: f64, cfg: &EvalConfig) -> Result<()> {
    cfg.validate()?;
    f.validate()?;
    if let Some(k) = f.max_variable() {
        if k >= dim {
            return Err(Error::UnknownVariable { index: k, dim });
        }
    }
    check_intervals(f, dt)
}

fn check_intervals(f: &Formula, dt: f64) -> Result<()> {
    if let Some(iv) = f.interval() {
        iv.counts(dt)?;
    }
    f.children().into_iter().try_for_each(|c| check_intervals(c, dt))
}

pub(crate) fn mu_value<B: Backend>(b: &mut B, mu: &Mu, x: &[B::Value], smoothing: Smoothing) -> B::Value {
    match mu {
        Mu::Var(k) => x[*k],
        Mu::Affine { terms, offset } => {
            let xs: Vec<B::Value> = terms.iter().map(|t| x[t.0]).collect();
            let cs: Vec<f64> = terms.iter().map(|t| t.1).collect();
            b.linear(&xs, &cs, *offset)
        }
        Mu::Norm { terms } => {
            let xs: Vec<B::Value> = terms.iter().map(|t| x[t.0]).collect();
            let cs: Vec<f64> = terms.iter().map(|t| t.1).collect();
            b.norm(&xs, &cs)
        }
        Mu::AbsDev { index, center } => {
            let d = b.add_const(x[*index], -center);
            b.abs(d)
        }
        Mu::BoxMargin { bounds } => {
            let mut margins = Vec::with_capacity(2 * bounds.len());
            for &(k, lo, hi) in bounds {
                margins.push(b.add_const(x[k], -lo));
                let neg = b.neg(x[k]);
                margins.push(b.add_const(neg, hi));
            }
            Reducer { ext: Extremum::Min, smoothing }.apply(b, &margins)
        }
    }
}

fn threshold<B: Backend>(b: &mut B, t: &Threshold, params: &IndexMap<String, B::Value>) -> Result<B::Value> {
    match t {
        Threshold::Const(c) => Ok(b.constant(*c)),
        Threshold::Param(name) => params.get(name).copied().ok_or_else(|| Error::UnboundParameter(name.clone())),
    }
}

fn predicate<B: Backend>(
    b: &mut B,
    p: &Predicate,
    el: &Element<B::Value>,
    params: &IndexMap<String, B::Value>,
    smoothing: Smoothing,
) -> Result<Vec<B::Value>> {
    let c = threshold(b, &p.threshold, params)?;
    Ok((0..el.len())
        .map(|i| {
            let mu = mu_value(b, &p.mu, el.state(i), smoothing);
            if p.cmp.is_lower_bound() {
                b.sub(mu, c)
            } else {
                b.sub(c, mu)
            }
        })
        .collect())
}

fn pad<B: Backend>(b: &mut B, trace: &[B::Value], padding: Padding) -> B::Value {
    match padding {
        Padding::LastValue => *trace.last().expect("traces are nonempty"),
        Padding::Constant(r) => b.constant(r),
    }
}

/// Robustness trace of `f` over one element. Call [`check`] first.
pub(crate) fn eval<B: Backend>(
    b: &mut B,
    f: &Formula,
    el: &Element<B::Value>,
    params: &IndexMap<String, B::Value>,
    cfg: &EvalConfig,
) -> Result<Vec<B::Value>> {
    let smoothing = Smoothing::from(cfg);
    let max = Reducer { ext: Extremum::Max, smoothing };
    let min = Reducer { ext: Extremum::Min, smoothing };
    let binary = |b: &mut B, l: &Formula, r: &Formula| -> Result<(Vec<B::Value>, Vec<B::Value>)> {
        Ok((eval(b, l, el, params, cfg)?, eval(b, r, el, params, cfg)?))
    };
    Ok(match f {
        Formula::True => {
            let top = b.constant(cfg.rho_max);
            vec![top; el.len()]
        }
        Formula::Pred(p) => predicate(b, p, el, params, smoothing)?,
        Formula::Not(g) => {
            let x = eval(b, g, el, params, cfg)?;
            x.into_iter().map(|v| b.neg(v)).collect()
        }
        Formula::And(l, r) => {
            let (x, y) = binary(b, l, r)?;
            x.into_iter().zip(y).map(|(p, q)| min.apply(b, &[p, q])).collect()
        }
        Formula::Or(l, r) => {
            let (x, y) = binary(b, l, r)?;
            x.into_iter().zip(y).map(|(p, q)| max.apply(b, &[p, q])).collect()
        }
        Formula::Implies(l, r) => {
            let (x, y) = binary(b, l, r)?;
            x.into_iter()
                .zip(y)
                .map(|(p, q)| {
                    let np = b.neg(p);
                    max.apply(b, &[np, q])
                })
                .collect()
        }
        Formula::Eventually(iv, g) | Formula::Always(iv, g) => {
            let x = eval(b, g, el, params, cfg)?;
            let p = pad(b, &x, cfg.padding);
            let red = if matches!(f, Formula::Eventually(..)) { max } else { min };
            temporal::scan(b, &x, p, iv.counts(el.dt)?, red, None)
        }
        Formula::Integral(iv, w, g) => {
            let x = eval(b, g, el, params, cfg)?;
            let p = pad(b, &x, cfg.padding);
            temporal::integral(b, &x, p, iv.counts(el.dt)?, w.resolve(el.dt))
        }
        Formula::Until(iv, l, r) => {
            let (x, y) = binary(b, l, r)?;
            let (px, py) = (pad(b, &x, cfg.padding), pad(b, &y, cfg.padding));
            temporal::until(b, &x, &y, px, py, iv.counts(el.dt)?, smoothing)
        }
    })
}
