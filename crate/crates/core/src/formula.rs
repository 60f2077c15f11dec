//! Formula AST.
//!
//! Formulas are immutable trees. Derived connectives (`or`, `->`) and
//! temporal operators (`eventually`, `always`) are kept as first-class nodes
//! rather than desugared, so that each node maps onto one stage of the
//! robustness computation.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparison {
    Gt,
    Ge,
    Lt,
    Le,
}

impl Comparison {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
            Comparison::Lt => "<",
            Comparison::Le => "<=",
        }
    }

    /// `true` for `>`/`>=`, whose robustness is `mu - c`.
    pub fn is_lower_bound(self) -> bool {
        matches!(self, Comparison::Gt | Comparison::Ge)
    }

    /// Boolean semantics of `lhs <op> rhs`.
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparison::Gt => lhs > rhs,
            Comparison::Ge => lhs >= rhs,
            Comparison::Lt => lhs < rhs,
            Comparison::Le => lhs <= rhs,
        }
    }
}

/// Right-hand side of a predicate: a literal or a named learnable parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    Const(f64),
    Param(String),
}

/// Built-in differentiable state functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Mu {
    /// `x_k`
    Var(usize),
    /// `sum_j c_j * x_{k_j} + offset`
    Affine { terms: Vec<(usize, f64)>, offset: f64 },
    /// `|| (x_{k_j} - c_j)_j ||_2`
    Norm { terms: Vec<(usize, f64)> },
    /// `|x_k - center|`
    AbsDev { index: usize, center: f64 },
    /// Signed margin to an axis-aligned box, positive inside:
    /// `min_j min(x_{k_j} - lo_j, hi_j - x_{k_j})`.
    BoxMargin { bounds: Vec<(usize, f64, f64)> },
}

impl Mu {
    /// Largest variable index referenced.
    pub fn max_index(&self) -> usize {
        match self {
            Mu::Var(k) | Mu::AbsDev { index: k, .. } => *k,
            Mu::Affine { terms, .. } | Mu::Norm { terms } => terms.iter().map(|t| t.0).max().unwrap_or(0),
            Mu::BoxMargin { bounds } => bounds.iter().map(|t| t.0).max().unwrap_or(0),
        }
    }

    /// Distinct variable indices, ascending.
    pub fn variables(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = match self {
            Mu::Var(k) | Mu::AbsDev { index: k, .. } => [*k].into(),
            Mu::Affine { terms, .. } | Mu::Norm { terms } => terms.iter().map(|t| t.0).collect(),
            Mu::BoxMargin { bounds } => bounds.iter().map(|t| t.0).collect(),
        };
        set.into_iter().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        match self {
            Mu::Var(_) => Ok(()),
            Mu::Affine { terms, offset } => {
                if terms.is_empty() {
                    return Err(Error::InvalidFormula("affine predicate needs a variable".into()));
                }
                if !finite(*offset) || terms.iter().any(|t| !finite(t.1)) {
                    return Err(Error::InvalidFormula("non-finite affine coefficient".into()));
                }
                Ok(())
            }
            Mu::Norm { terms } => {
                if terms.is_empty() {
                    return Err(Error::InvalidFormula("norm needs at least one component".into()));
                }
                if terms.iter().any(|t| !finite(t.1)) {
                    return Err(Error::InvalidFormula("non-finite norm center".into()));
                }
                Ok(())
            }
            Mu::AbsDev { center, .. } => {
                if finite(*center) {
                    Ok(())
                } else {
                    Err(Error::InvalidFormula("non-finite abs center".into()))
                }
            }
            Mu::BoxMargin { bounds } => {
                if bounds.is_empty() {
                    return Err(Error::InvalidFormula("box needs at least one axis".into()));
                }
                for &(k, lo, hi) in bounds {
                    if !finite(lo) || !finite(hi) || lo > hi {
                        return Err(Error::InvalidFormula(format!(
                            "box bounds for x{k} must satisfy lo <= hi, got [{lo}, {hi}]"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub mu: Mu,
    pub cmp: Comparison,
    pub threshold: Threshold,
}

impl Predicate {
    pub fn new(mu: Mu, cmp: Comparison, threshold: Threshold) -> Self {
        Self { mu, cmp, threshold }
    }

    /// `x_k <op> c`
    pub fn var(index: usize, cmp: Comparison, c: f64) -> Self {
        Self::new(Mu::Var(index), cmp, Threshold::Const(c))
    }
}

/// Weight function of the integral operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Weight {
    Const(f64),
    /// `1 / dt` of the evaluated signal.
    InvDt,
}

impl Weight {
    pub fn resolve(self, dt: f64) -> f64 {
        match self {
            Weight::Const(w) => w,
            Weight::InvDt => 1.0 / dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    True,
    Pred(Predicate),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Always(Interval, Box<Formula>),
    Integral(Interval, Weight, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

/// Node kind without children, used for generic construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    True,
    Pred,
    Not,
    And,
    Or,
    Implies,
    Eventually,
    Always,
    Integral,
    Until,
}

impl NodeKind {
    pub fn arity(self) -> usize {
        match self {
            NodeKind::True | NodeKind::Pred => 0,
            NodeKind::Not | NodeKind::Eventually | NodeKind::Always | NodeKind::Integral => 1,
            NodeKind::And | NodeKind::Or | NodeKind::Implies | NodeKind::Until => 2,
        }
    }
}

impl Formula {
    pub fn pred(p: Predicate) -> Self {
        Formula::Pred(p)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(l: Formula, r: Formula) -> Self {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Self {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Formula, r: Formula) -> Self {
        Formula::Implies(Box::new(l), Box::new(r))
    }

    pub fn eventually(iv: Interval, f: Formula) -> Self {
        Formula::Eventually(iv, Box::new(f))
    }

    pub fn always(iv: Interval, f: Formula) -> Self {
        Formula::Always(iv, Box::new(f))
    }

    pub fn until(iv: Interval, l: Formula, r: Formula) -> Self {
        Formula::Until(iv, Box::new(l), Box::new(r))
    }

    /// Integral node; the interval must be bounded.
    pub fn integral(iv: Interval, weight: Weight, f: Formula) -> Result<Self> {
        if !iv.is_bounded() {
            return Err(Error::InvalidFormula("integral requires a bounded interval".into()));
        }
        if let Weight::Const(w) = weight {
            if !w.is_finite() {
                return Err(Error::InvalidFormula("integral weight must be finite".into()));
            }
        }
        Ok(Formula::Integral(iv, weight, Box::new(f)))
    }

    /// Generic constructor that checks arity and operand requirements.
    pub fn from_parts(
        kind: NodeKind,
        interval: Option<Interval>,
        predicate: Option<Predicate>,
        weight: Option<Weight>,
        children: Vec<Formula>,
    ) -> Result<Self> {
        if children.len() != kind.arity() {
            return Err(Error::InvalidFormula(format!(
                "{kind:?} takes {} operand(s), got {}",
                kind.arity(),
                children.len()
            )));
        }
        let iv = interval.unwrap_or_default();
        let mut it = children.into_iter();
        let mut next = || it.next().expect("arity checked");
        Ok(match kind {
            NodeKind::True => Formula::True,
            NodeKind::Pred => {
                let p = predicate.ok_or_else(|| Error::InvalidFormula("predicate node without predicate".into()))?;
                p.mu.validate()?;
                Formula::Pred(p)
            }
            NodeKind::Not => Formula::not(next()),
            NodeKind::And => Formula::and(next(), next()),
            NodeKind::Or => Formula::or(next(), next()),
            NodeKind::Implies => Formula::implies(next(), next()),
            NodeKind::Eventually => Formula::eventually(iv, next()),
            NodeKind::Always => Formula::always(iv, next()),
            NodeKind::Integral => Formula::integral(iv, weight.unwrap_or(Weight::Const(1.0)), next())?,
            NodeKind::Until => Formula::until(iv, next(), next()),
        })
    }

    pub fn kind(&self) -> NodeKind {
        match self {
            Formula::True => NodeKind::True,
            Formula::Pred(_) => NodeKind::Pred,
            Formula::Not(_) => NodeKind::Not,
            Formula::And(..) => NodeKind::And,
            Formula::Or(..) => NodeKind::Or,
            Formula::Implies(..) => NodeKind::Implies,
            Formula::Eventually(..) => NodeKind::Eventually,
            Formula::Always(..) => NodeKind::Always,
            Formula::Integral(..) => NodeKind::Integral,
            Formula::Until(..) => NodeKind::Until,
        }
    }

    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::True | Formula::Pred(_) => vec![],
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Always(_, f) | Formula::Integral(_, _, f) => {
                vec![f]
            }
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) | Formula::Until(_, l, r) => {
                vec![l, r]
            }
        }
    }

    pub fn interval(&self) -> Option<Interval> {
        match self {
            Formula::Eventually(iv, _)
            | Formula::Always(iv, _)
            | Formula::Integral(iv, _, _)
            | Formula::Until(iv, _, _) => Some(*iv),
            _ => None,
        }
    }

    /// Checks invariants that enum construction alone cannot enforce.
    pub fn validate(&self) -> Result<()> {
        match self {
            Formula::Pred(p) => p.mu.validate()?,
            Formula::Integral(iv, w, _) => {
                if !iv.is_bounded() {
                    return Err(Error::InvalidFormula("integral requires a bounded interval".into()));
                }
                if let Weight::Const(w) = w {
                    if !w.is_finite() {
                        return Err(Error::InvalidFormula("integral weight must be finite".into()));
                    }
                }
            }
            _ => {}
        }
        self.children().into_iter().try_for_each(Formula::validate)
    }

    pub fn size(&self) -> usize {
        1 + self.children().into_iter().map(Formula::size).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().into_iter().map(Formula::depth).max().unwrap_or(0)
    }

    /// Largest state index used by any predicate, if any.
    pub fn max_variable(&self) -> Option<usize> {
        match self {
            Formula::Pred(p) => Some(p.mu.max_index()),
            _ => self.children().into_iter().filter_map(Formula::max_variable).max(),
        }
    }

    /// Names of learnable parameters in first-occurrence order.
    pub fn parameters(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut Vec<String>) {
        if let Formula::Pred(Predicate { threshold: Threshold::Param(name), .. }) = self {
            if !out.contains(name) {
                out.push(name.clone());
            }
        }
        for c in self.children() {
            c.collect_params(out);
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parser::unparse(self))
    }
}
