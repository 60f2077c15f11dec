use crate::config::{EvalConfig, Padding};
use crate::error::Result;
use crate::formula::{Formula, Predicate, Threshold};
use crate::params::ParamTable;
use crate::signal::Signal;

use super::engine;

/// Boolean satisfaction `s_{t_0} |= f` per batch element.
pub fn satisfies(s: &Signal, f: &Formula) -> Result<Vec<bool>> {
    satisfies_with(s, f, &ParamTable::new(), Padding::LastValue)
}

pub fn satisfies_with(s: &Signal, f: &Formula, params: &ParamTable, padding: Padding) -> Result<Vec<bool>> {
    Ok(satisfaction_trace(s, f, params, padding)?.into_iter().map(|r| r[0]).collect())
}

/// `s_t |= f` for every sample of every batch element.
///
/// Past the end of a trace the last value is repeated; a constant padding
/// `r` stands for the truth value `r > 0`. Integral nodes are satisfied when
/// their exact robustness is positive.
pub fn satisfaction_trace(s: &Signal, f: &Formula, params: &ParamTable, padding: Padding) -> Result<Vec<Vec<bool>>> {
    let cfg = EvalConfig { padding, ..EvalConfig::exact() };
    engine::check(f, s.dim(), s.dt(), &cfg)?;
    let ctx = Ctx { params, padding, dt: s.dt(), cfg };
    (0..s.batch_size())
        .map(|b| {
            let states: Vec<&[f64]> = (0..s.length(b)).map(|i| s.state(b, i)).collect();
            ctx.trace(f, &states, s.element(b), s.dim())
        })
        .collect()
}

struct Ctx<'a> {
    params: &'a ParamTable,
    padding: Padding,
    dt: f64,
    cfg: EvalConfig,
}

impl Ctx<'_> {
    fn predicate(&self, p: &Predicate, states: &[&[f64]]) -> Result<Vec<bool>> {
        let c = match &p.threshold {
            Threshold::Const(c) => *c,
            Threshold::Param(name) => self.params.require(name)?,
        };
        let smoothing = super::Smoothing::Exact;
        Ok(states
            .iter()
            .map(|x| {
                let m = engine::mu_value(&mut super::Plain, &p.mu, x, smoothing);
                p.cmp.holds(m, c)
            })
            .collect())
    }

    fn padded<'b>(&self, x: &'b [bool]) -> impl Fn(usize) -> bool + 'b {
        let pad = match self.padding {
            Padding::LastValue => x[x.len() - 1],
            Padding::Constant(r) => r > 0.0,
        };
        move |i| x.get(i).copied().unwrap_or(pad)
    }

    fn window(&self, f: &Formula, t: usize, len: usize) -> Result<(usize, usize)> {
        let counts = f.interval().expect("temporal node").counts(self.dt)?;
        let lo = t + counts.lower_steps();
        let hi = match counts.upper_steps() {
            Some(b) => t + b,
            None => len.max(lo),
        };
        Ok((lo, hi))
    }

    fn trace(&self, f: &Formula, states: &[&[f64]], flat: &[f64], dim: usize) -> Result<Vec<bool>> {
        let len = states.len();
        let sub = |g: &Formula| self.trace(g, states, flat, dim);
        Ok(match f {
            Formula::True => vec![true; len],
            Formula::Pred(p) => self.predicate(p, states)?,
            Formula::Not(g) => sub(g)?.into_iter().map(|v| !v).collect(),
            Formula::And(l, r) => sub(l)?.into_iter().zip(sub(r)?).map(|(p, q)| p && q).collect(),
            Formula::Or(l, r) => sub(l)?.into_iter().zip(sub(r)?).map(|(p, q)| p || q).collect(),
            Formula::Implies(l, r) => sub(l)?.into_iter().zip(sub(r)?).map(|(p, q)| !p || q).collect(),
            Formula::Eventually(_, g) | Formula::Always(_, g) => {
                let x = sub(g)?;
                let at = self.padded(&x);
                let any = matches!(f, Formula::Eventually(..));
                (0..len)
                    .map(|t| {
                        let (lo, hi) = self.window(f, t, len)?;
                        Ok(if any { (lo..=hi).any(&at) } else { (lo..=hi).all(&at) })
                    })
                    .collect::<Result<_>>()?
            }
            Formula::Until(_, l, r) => {
                let (x, y) = (sub(l)?, sub(r)?);
                let (phi, psi) = (self.padded(&x), self.padded(&y));
                (0..len)
                    .map(|t| {
                        let (lo, hi) = self.window(f, t, len)?;
                        Ok((lo..=hi).any(|tp| psi(tp) && (t..=tp).all(&phi)))
                    })
                    .collect::<Result<_>>()?
            }
            Formula::Integral(..) => {
                let bound = self.params.iter().map(|(k, v)| (k.to_string(), v)).collect();
                let el = engine::Element { states: flat, dim, dt: self.dt };
                engine::eval(&mut super::Plain, f, &el, &bound, &self.cfg)?.into_iter().map(|r| r > 0.0).collect()
            }
        })
    }
}
