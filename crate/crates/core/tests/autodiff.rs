mod common;

use indexmap::IndexMap;
use proptest::prelude::*;
use rand::Rng;
use stlgrad::{
    diff_robustness, diff_trace, grad_check, lane_trace, parse, Comparison, EvalConfig, Formula, GradCheck, Interval,
    LaneTape, LaneVar, Predicate, Tape, Var,
};

const REFERENCE_SIGNAL: [f64; 6] = [1.0, 1.0, 1.0, 2.0, 3.0, 1.0];

fn pos() -> Formula {
    Formula::pred(Predicate::var(0, Comparison::Gt, 0.0))
}

fn reference_formulas() -> Vec<Formula> {
    let iv = |a, b| Interval::new(a, b).unwrap();
    vec![
        Formula::eventually(Interval::unbounded(), pos()),
        Formula::eventually(iv(0.0, 2.0), pos()),
        Formula::eventually(Interval::from(2.0).unwrap(), pos()),
        Formula::eventually(iv(1.0, 3.0), pos()),
    ]
}

fn rho_fn(f: Formula, cfg: EvalConfig) -> impl Fn(&mut Tape, &[Var]) -> stlgrad::Result<Var> {
    move |t, xs| diff_robustness(t, xs, 1, 1.0, &f, &IndexMap::new(), &cfg)
}

fn check(f: Formula, cfg: EvalConfig, x: &[f64]) -> GradCheck {
    grad_check(rho_fn(f, cfg), x, 1e-5).unwrap()
}

#[test]
fn record_examples() {
    let mut t = Tape::new();
    let (a, b) = (t.leaf(2.0), t.leaf(3.0));
    let s = t.add(a, b);
    assert_eq!(t.value(s), 5.0);
    assert_eq!(t.backward(s).unwrap().wrt(&[a, b]), vec![1.0, 1.0]);

    let (n, p) = (t.leaf(-0.2), t.leaf(0.2));
    let (rn, rp) = (t.relu(n), t.relu(p));
    assert_eq!((t.value(rn), t.value(rp)), (0.0, 0.2));
    assert_eq!(t.backward(rn).unwrap().get(n), 0.0);
    assert_eq!(t.backward(rp).unwrap().get(p), 1.0);

    let xs = t.leaves(&[1.0, 3.0, 3.0]);
    let m = t.max(&xs);
    assert_eq!(t.value(m), 3.0);
    assert_eq!(t.backward(m).unwrap().wrt(&xs), vec![0.0, 1.0, 0.0]);

    let zero = t.leaf(0.0);
    assert!(t.div(a, zero).is_err());
}

#[test]
fn backward_examples() {
    let mut t = Tape::new();
    let xs = t.leaves(&[1.0, 2.0, 3.0]);
    let m = t.soft_max(&xs, 0.0);
    for g in t.backward(m).unwrap().wrt(&xs) {
        assert!((g - 1.0 / 3.0).abs() < 1e-15);
    }

    let mut t = Tape::new();
    let xs = t.leaves(&REFERENCE_SIGNAL);
    let f = Formula::always(Interval::unbounded(), pos());
    let rho = diff_robustness(&mut t, &xs, 1, 1.0, &f, &IndexMap::new(), &EvalConfig::exact()).unwrap();
    assert_eq!(t.value(rho), 1.0);
    assert_eq!(t.backward(rho).unwrap().wrt(&xs), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

    let f = Formula::eventually(Interval::new(1.0, 3.0).unwrap(), pos());
    let r = check(f, EvalConfig::soft(5.0), &REFERENCE_SIGNAL);
    assert!(r.max_rel_error().unwrap() < 1e-4, "{r:?}");
}

#[test]
fn reference_formulas_soft_gradients() {
    for f in reference_formulas() {
        for cfg in [EvalConfig::soft(3.0), EvalConfig::logsumexp(3.0)] {
            let r = check(f.clone(), cfg, &REFERENCE_SIGNAL);
            assert!(r.max_rel_error().unwrap() < 1e-4, "{f}: {r:?}");
        }
    }
}

#[test]
fn exact_mode_tie_is_skipped() {
    let f = Formula::always(Interval::unbounded(), pos());
    assert!(check(f, EvalConfig::exact(), &REFERENCE_SIGNAL).is_skipped());
    let f = Formula::eventually(Interval::unbounded(), pos());
    let r = check(f, EvalConfig::exact(), &REFERENCE_SIGNAL);
    assert!(r.max_rel_error().unwrap() < 1e-6, "{r:?}");
}

#[test]
fn learnable_parameter_gradient() {
    let f = parse("always (x0 < eps)", 1).unwrap();
    let mut t = Tape::new();
    let xs = t.leaves(&[0.5, 2.0, 1.0]);
    let eps = t.leaf(0.0);
    let params: IndexMap<String, Var> = [("eps".to_string(), eps)].into_iter().collect();
    let rho = diff_robustness(&mut t, &xs, 1, 1.0, &f, &params, &EvalConfig::exact()).unwrap();
    assert_eq!(t.value(rho), -2.0);
    let g = t.backward(rho).unwrap();
    assert_eq!(g.get(eps), 1.0);
    assert_eq!(g.wrt(&xs), vec![0.0, -1.0, 0.0]);
}

#[test]
fn multidimensional_predicates() {
    let f = parse("eventually[0,2] (norm(x0 - 0.1, x1 - -0.3) > 0.4 and 2*x0 - x1 < 1)", 2).unwrap();
    let x = [0.3, 0.2, -0.5, 0.9, 0.05, -0.7, 1.3, 0.4];
    for cfg in [EvalConfig::soft(4.0), EvalConfig::logsumexp(4.0)] {
        let g = grad_check(|t, xs| diff_robustness(t, xs, 2, 1.0, &f, &IndexMap::new(), &cfg), &x, 1e-5).unwrap();
        assert!(g.max_rel_error().unwrap() < 1e-4, "{g:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn negation_flips_gradient(seed in any::<u64>(), w in 0.1f64..8.0) {
        let (f, s) = common::formula_and_signal(seed, 3, 20, 1);
        for cfg in [EvalConfig::exact(), EvalConfig::soft(w), EvalConfig::logsumexp(w)] {
            let mut t = Tape::new();
            let xs = t.leaves(s.element(0));
            let p = diff_robustness(&mut t, &xs, s.dim(), s.dt(), &f, &IndexMap::new(), &cfg).unwrap();
            let n = diff_robustness(&mut t, &xs, s.dim(), s.dt(), &Formula::not(f.clone()), &IndexMap::new(), &cfg).unwrap();
            let (gp, gn) = (t.backward(p).unwrap().wrt(&xs), t.backward(n).unwrap().wrt(&xs));
            prop_assert!(gp.iter().zip(&gn).all(|(a, b)| *a == -*b));
        }
    }

    #[test]
    fn backward_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = common::rng(seed);
        let (f, s) = common::formula_and_signal(seed, 3, 20, 1);
        let g = common::random_formula(&mut rng, 3, s.dim(), s.dt(), false);
        let cfg = EvalConfig::soft(2.0);
        let mut t = Tape::new();
        let xs = t.leaves(s.element(0));
        let l1 = diff_robustness(&mut t, &xs, s.dim(), s.dt(), &f, &IndexMap::new(), &cfg).unwrap();
        let l2 = diff_robustness(&mut t, &xs, s.dim(), s.dt(), &g, &IndexMap::new(), &cfg).unwrap();
        let (s1, s2) = (t.scale(l1, a), t.scale(l2, b));
        let combo = t.add(s1, s2);
        let (g1, g2, gc) = (
            t.backward(l1).unwrap().wrt(&xs),
            t.backward(l2).unwrap().wrt(&xs),
            t.backward(combo).unwrap().wrt(&xs),
        );
        for i in 0..xs.len() {
            let want = a * g1[i] + b * g2[i];
            prop_assert!((gc[i] - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn soft_max_weights_sum_to_one(xs in prop::collection::vec(-5.0f64..5.0, 1..12), w in 0.0f64..50.0) {
        let mut t = Tape::new();
        let vs = t.leaves(&xs);
        let m = t.soft_max(&vs, w);
        let total: f64 = t.backward(m).unwrap().wrt(&vs).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exact_mode_matches_finite_differences_off_ties(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (f, _) = common::formula_and_signal(seed, 3, 20, 1);
        let dim = f.max_variable().map_or(1, |k| k + 1);
        let len = rng.gen_range(1..15);
        let x: Vec<f64> = (0..len * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let dt = 1.0;
        let f = rescale(&f, dt);
        // rho_max swamps the finite-difference quotient in roundoff
        prop_assume!(!f.to_string().contains("true"));
        let r = grad_check(|t, xs| diff_robustness(t, xs, dim, dt, &f, &IndexMap::new(), &EvalConfig::exact()), &x, 1e-6)
            .unwrap();
        if let Some(err) = r.max_rel_error() {
            prop_assert!(err < 1e-6, "{}: {:?}", f, r);
        }
    }
}

fn lanes_agree(seed: u64, cfg: EvalConfig) -> Result<(), TestCaseError> {
    let mut rng = common::rng(seed);
    let dim = rng.gen_range(1..=2);
    let dt = 0.5;
    let f = common::random_formula(&mut rng, 3, dim, dt, true);
    let lanes = rng.gen_range(1..6);
    let len = rng.gen_range(1..12);
    let data: Vec<Vec<f64>> = (0..lanes).map(|_| (0..len * dim).map(|_| common::coarse(&mut rng)).collect()).collect();
    let names = f.parameters();
    let pvals: Vec<Vec<f64>> = (0..lanes).map(|_| names.iter().map(|_| common::coarse(&mut rng)).collect()).collect();

    let mut lt = LaneTape::new(lanes);
    let states: Vec<LaneVar> =
        (0..len * dim).map(|i| lt.leaf(&data.iter().map(|d| d[i]).collect::<Vec<_>>())).collect();
    let lp: Vec<LaneVar> = (0..names.len()).map(|j| lt.leaf(&pvals.iter().map(|p| p[j]).collect::<Vec<_>>())).collect();
    let bound: IndexMap<String, LaneVar> = names.iter().cloned().zip(lp.iter().copied()).collect();
    let trace = lane_trace(&mut lt, &states, dim, dt, &f, &bound, &cfg).unwrap();
    let g = lt.backward(trace[0], &vec![1.0; lanes]).unwrap();

    for lane in 0..lanes {
        let mut t = Tape::new();
        let xs = t.leaves(&data[lane]);
        let ps = t.leaves(&pvals[lane]);
        let bound: IndexMap<String, Var> = names.iter().cloned().zip(ps.iter().copied()).collect();
        let want = diff_trace(&mut t, &xs, dim, dt, &f, &bound, &cfg).unwrap();
        for (a, b) in trace.iter().zip(&want) {
            prop_assert_eq!(lt.value(*a)[lane], t.value(*b));
        }
        let sg = t.backward(want[0]).unwrap();
        for (i, x) in xs.iter().enumerate() {
            let (a, b) = (g.get(states[i])[lane], sg.get(*x));
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{}: {} vs {}", f, a, b);
        }
        for (j, p) in ps.iter().enumerate() {
            let (a, b) = (g.get(lp[j])[lane], sg.get(*p));
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{}: {} vs {}", f, a, b);
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lane_tape_matches_scalar_tape(seed in any::<u64>(), w in 0.5f64..6.0) {
        for cfg in [EvalConfig::exact(), EvalConfig::soft(w), EvalConfig::logsumexp(w)] {
            lanes_agree(seed, cfg)?;
        }
    }
}

/// Rebuilds `f` with interval bounds rounded to multiples of `dt`.
fn rescale(f: &Formula, dt: f64) -> Formula {
    let fix = |iv: Interval| {
        let a = (iv.lower() / dt).round() * dt;
        if iv.is_bounded() {
            Interval::new(a, (iv.upper() / dt).round() * dt).unwrap()
        } else {
            Interval::from(a).unwrap()
        }
    };
    let kids: Vec<Formula> = f.children().into_iter().map(|c| rescale(c, dt)).collect();
    match f {
        Formula::True | Formula::Pred(_) => f.clone(),
        Formula::Integral(iv, w, _) => Formula::integral(fix(*iv), *w, kids[0].clone()).unwrap(),
        _ => Formula::from_parts(f.kind(), f.interval().map(fix), None, None, kids).unwrap(),
    }
}
