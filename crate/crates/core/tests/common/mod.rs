#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlgrad::{Comparison, Formula, Interval, Mu, Predicate, Signal, Threshold, Weight};

pub const PARAM_NAMES: [&str; 3] = ["eps", "delta", "theta_1"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Values on a quarter grid so that exact ties are common.
pub fn coarse(rng: &mut impl Rng) -> f64 {
    rng.gen_range(-8..=8) as f64 * 0.25
}

pub fn random_signal(rng: &mut impl Rng, max_len: usize, max_batch: usize, dim: usize, dt: f64) -> Signal {
    let batch = rng.gen_range(1..=max_batch);
    let elements = (0..batch)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            (0..len).map(|_| (0..dim).map(|_| coarse(rng)).collect()).collect()
        })
        .collect();
    Signal::from_batch(elements, 0.0, dt).unwrap()
}

pub fn random_interval(rng: &mut impl Rng, dt: f64, bounded: bool) -> Interval {
    let a = rng.gen_range(0..4) as f64 * dt;
    if !bounded && rng.gen_bool(0.35) {
        Interval::from(a).unwrap()
    } else {
        Interval::new(a, a + rng.gen_range(0..5) as f64 * dt).unwrap()
    }
}

pub fn random_mu(rng: &mut impl Rng, dim: usize) -> Mu {
    let var = |rng: &mut dyn rand::RngCore| rng.gen_range(0..dim);
    match rng.gen_range(0..6) {
        0 | 1 => Mu::Var(var(rng)),
        2 => {
            let n = rng.gen_range(1..=dim.min(3));
            Mu::Affine { terms: (0..n).map(|_| (var(rng), coarse(rng))).collect(), offset: coarse(rng) }
        }
        3 => Mu::Norm { terms: (0..rng.gen_range(1..=2)).map(|_| (var(rng), coarse(rng))).collect() },
        4 => Mu::AbsDev { index: var(rng), center: coarse(rng) },
        _ => Mu::BoxMargin {
            bounds: (0..rng.gen_range(1..=2))
                .map(|_| {
                    let lo = coarse(rng);
                    (var(rng), lo, lo + rng.gen_range(0..8) as f64 * 0.25)
                })
                .collect(),
        },
    }
}

pub fn random_predicate(rng: &mut impl Rng, dim: usize, params: bool) -> Predicate {
    let cmp = *[Comparison::Gt, Comparison::Ge, Comparison::Lt, Comparison::Le].choose(rng).unwrap();
    let threshold = if params && rng.gen_bool(0.3) {
        Threshold::Param(PARAM_NAMES.choose(rng).unwrap().to_string())
    } else {
        Threshold::Const(coarse(rng))
    };
    Predicate::new(random_mu(rng, dim), cmp, threshold)
}

/// Random formula of depth at most `depth` using every operator.
pub fn random_formula(rng: &mut impl Rng, depth: usize, dim: usize, dt: f64, params: bool) -> Formula {
    if depth <= 1 || rng.gen_bool(0.2) {
        return if rng.gen_bool(0.05) { Formula::True } else { Formula::pred(random_predicate(rng, dim, params)) };
    }
    let sub = |rng: &mut ChaCha8Rng| random_formula(rng, depth - 1, dim, dt, params);
    let mut r = ChaCha8Rng::seed_from_u64(rng.gen());
    match rng.gen_range(0..9) {
        0 => Formula::not(sub(&mut r)),
        1 => Formula::and(sub(&mut r), sub(&mut r)),
        2 => Formula::or(sub(&mut r), sub(&mut r)),
        3 => Formula::implies(sub(&mut r), sub(&mut r)),
        4 => Formula::eventually(random_interval(rng, dt, false), sub(&mut r)),
        5 => Formula::always(random_interval(rng, dt, false), sub(&mut r)),
        6 => Formula::until(random_interval(rng, dt, false), sub(&mut r), sub(&mut r)),
        7 => {
            let w = if rng.gen_bool(0.5) { Weight::InvDt } else { Weight::Const(coarse(rng)) };
            Formula::integral(random_interval(rng, dt, true), w, sub(&mut r)).unwrap()
        }
        _ => Formula::eventually(random_interval(rng, dt, false), sub(&mut r)),
    }
}

/// Seeded random formula of depth at most `depth` with a matching signal.
pub fn formula_and_signal(seed: u64, depth: usize, max_len: usize, max_batch: usize) -> (Formula, Signal) {
    let mut rng = rng(seed);
    let dim = rng.gen_range(1..=3);
    let dt = *[1.0, 0.5, 0.1].choose(&mut rng).unwrap();
    let f = random_formula(&mut rng, depth, dim, dt, false);
    let s = random_signal(&mut rng, max_len, max_batch, dim, dt);
    (f, s)
}
