use std::fmt::Write;

use crate::formula::{Formula, Mu, Predicate, Threshold, Weight};
use crate::interval::Interval;

/// Shortest text that parses back to exactly `v`.
pub(crate) fn num(v: f64) -> String {
    let plain = format!("{v}");
    if plain.len() > 16 {
        format!("{v:e}")
    } else {
        plain
    }
}

fn interval(iv: &Interval) -> String {
    if iv.is_unbounded_ray() {
        String::new()
    } else if iv.is_bounded() {
        format!("[{},{}]", num(iv.lower()), num(iv.upper()))
    } else {
        format!("[{},inf)", num(iv.lower()))
    }
}

/// `+ c` / `- c` keeping the sign of zero.
fn signed(out: &mut String, c: f64) {
    if c.is_sign_negative() {
        write!(out, " - {}", num(-c)).unwrap();
    } else {
        write!(out, " + {}", num(c)).unwrap();
    }
}

pub(crate) fn mu(m: &Mu) -> String {
    let mut out = String::new();
    match m {
        Mu::Var(k) => write!(out, "x{k}").unwrap(),
        Mu::Affine { terms, offset } => {
            for (i, &(k, c)) in terms.iter().enumerate() {
                if i == 0 {
                    write!(out, "{}*x{k}", num(c)).unwrap();
                } else {
                    signed(&mut out, c);
                    write!(out, "*x{k}").unwrap();
                }
            }
            if *offset != 0.0 {
                signed(&mut out, *offset);
            }
        }
        Mu::Norm { terms } => {
            let parts: Vec<String> = terms.iter().map(|&(k, c)| format!("x{k} - {}", num(c))).collect();
            write!(out, "norm({})", parts.join(", ")).unwrap();
        }
        Mu::AbsDev { index, center } => write!(out, "abs(x{index} - {})", num(*center)).unwrap(),
        Mu::BoxMargin { bounds } => {
            let parts: Vec<String> =
                bounds.iter().map(|&(k, lo, hi)| format!("x{k} in [{},{}]", num(lo), num(hi))).collect();
            write!(out, "box({})", parts.join(", ")).unwrap();
        }
    }
    out
}

pub(crate) fn predicate(p: &Predicate) -> String {
    let rhs = match &p.threshold {
        Threshold::Const(c) => num(*c),
        Threshold::Param(name) => name.clone(),
    };
    format!("{} {} {}", mu(&p.mu), p.cmp.symbol(), rhs)
}

/// Canonical, fully parenthesized text of `f`.
pub fn unparse(f: &Formula) -> String {
    match f {
        Formula::True => "true".into(),
        Formula::Pred(p) => predicate(p),
        Formula::Not(g) => format!("not ({})", unparse(g)),
        Formula::And(l, r) => format!("({}) and ({})", unparse(l), unparse(r)),
        Formula::Or(l, r) => format!("({}) or ({})", unparse(l), unparse(r)),
        Formula::Implies(l, r) => format!("({}) -> ({})", unparse(l), unparse(r)),
        Formula::Eventually(iv, g) => format!("eventually{} ({})", interval(iv), unparse(g)),
        Formula::Always(iv, g) => format!("always{} ({})", interval(iv), unparse(g)),
        Formula::Integral(iv, w, g) => {
            let w = match w {
                Weight::Const(c) => num(*c),
                Weight::InvDt => "1/dt".into(),
            };
            format!("integral[{},{};{}] ({})", num(iv.lower()), num(iv.upper()), w, unparse(g))
        }
        Formula::Until(iv, l, r) => format!("({}) until{} ({})", unparse(l), interval(iv), unparse(r)),
    }
}
