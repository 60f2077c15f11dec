mod common;

use petgraph::algo::{is_cyclic_directed, is_isomorphic_matching};
use petgraph::graph::DiGraph;
use proptest::prelude::*;
use stlgrad::parser::{to_graph, NodeClass};
use stlgrad::{
    parse, parse_with, to_dot, unparse, Comparison, Formula, Interval, Mu, ParserOptions, Predicate, Threshold, Weight,
};

fn p(k: usize, cmp: Comparison, c: f64) -> Formula {
    Formula::pred(Predicate::var(k, cmp, c))
}

#[test]
fn nested_temporal_example() {
    let f = parse("eventually[0,5] (always (x0 > 0.4 and x0 < 0.6))", 1).unwrap();
    let expected = Formula::eventually(
        Interval::new(0.0, 5.0).unwrap(),
        Formula::always(Interval::unbounded(), Formula::and(p(0, Comparison::Gt, 0.4), p(0, Comparison::Lt, 0.6))),
    );
    assert_eq!(f, expected);
}

#[test]
fn learnable_abs_example() {
    let f = parse("always[50,100] abs(x0 - 1) < eps1", 1).unwrap();
    let expected = Formula::always(
        Interval::new(50.0, 100.0).unwrap(),
        Formula::pred(Predicate::new(
            Mu::AbsDev { index: 0, center: 1.0 },
            Comparison::Lt,
            Threshold::Param("eps1".into()),
        )),
    );
    assert_eq!(f, expected);
    assert_eq!(f.parameters(), vec!["eps1".to_string()]);
}

#[test]
fn truncated_predicate_error() {
    let e = parse("x0 >", 1).unwrap_err();
    assert_eq!(e.span.start, 4);
    assert_eq!(e.column(), 5);
    assert!(e.expected.iter().any(|x| x == "numeric literal"));
    assert!(e.expected.iter().any(|x| x == "parameter name"));
}

#[test]
fn precedence() {
    let a = || p(0, Comparison::Gt, 0.0);
    let b = || p(1, Comparison::Gt, 0.0);
    let c = || p(2, Comparison::Gt, 0.0);
    assert_eq!(parse("x0 > 0 or x1 > 0 and x2 > 0", 3).unwrap(), Formula::or(a(), Formula::and(b(), c())));
    assert_eq!(parse("not x0 > 0 and x1 > 0", 3).unwrap(), Formula::and(Formula::not(a()), b()));
    assert_eq!(parse("x0 > 0 -> x1 > 0 or x2 > 0", 3).unwrap(), Formula::implies(a(), Formula::or(b(), c())));
    assert_eq!(
        parse("x0 > 0 and x1 > 0 until[1,2] x2 > 0", 3).unwrap(),
        Formula::until(Interval::new(1.0, 2.0).unwrap(), Formula::and(a(), b()), c())
    );
    assert_eq!(
        parse("always x0 > 0 and x1 > 0", 3).unwrap(),
        Formula::and(Formula::always(Interval::unbounded(), a()), b())
    );
}

#[test]
fn unicode_aliases() {
    let ascii = parse("eventually[0,inf) always (x0 >= 1 and not x1 <= 2)", 2).unwrap();
    let uni = parse("◊[0,∞) □ (x0 ≥ 1 ∧ ¬ x1 ≤ 2)", 2).unwrap();
    assert_eq!(ascii, uni);
    assert_eq!(parse("⊤ → ⊥", 1).unwrap(), Formula::implies(Formula::True, Formula::not(Formula::True)));
}

#[test]
fn predicate_forms() {
    let f = parse("2*x0 - x1 + 0.5 > 1", 2).unwrap();
    let Formula::Pred(pr) = f else { panic!() };
    assert_eq!(pr.mu, Mu::Affine { terms: vec![(0, 2.0), (1, -1.0)], offset: 0.5 });

    let f = parse("norm(x0 - 0, x1 - -0.5) > 0.4", 2).unwrap();
    let Formula::Pred(pr) = f else { panic!() };
    assert_eq!(pr.mu, Mu::Norm { terms: vec![(0, 0.0), (1, -0.5)] });

    let f = parse("box(x0 in [-1,-0.7], x1 in [-0.2,0.5]) < 0", 2).unwrap();
    let Formula::Pred(pr) = f else { panic!() };
    assert_eq!(pr.mu, Mu::BoxMargin { bounds: vec![(0, -1.0, -0.7), (1, -0.2, 0.5)] });

    let f = parse("integral[0,0.5;1/dt] (x0 > 0)", 1).unwrap();
    assert_eq!(
        f,
        Formula::integral(Interval::new(0.0, 0.5).unwrap(), Weight::InvDt, p(0, Comparison::Gt, 0.0)).unwrap()
    );
}

#[test]
fn aliases_and_spans() {
    let opts = ParserOptions::new(2).alias("speed", 1);
    let (f, spans) = parse_with("always[0,1] speed < 3", &opts).unwrap();
    assert_eq!(f, Formula::always(Interval::new(0.0, 1.0).unwrap(), p(1, Comparison::Lt, 3.0)));
    assert_eq!((spans.span.start, spans.span.end), (0, 21));
    assert_eq!((spans.children[0].span.start, spans.children[0].span.end), (12, 21));
}

#[test]
fn rejected_inputs() {
    for (text, dim) in [
        ("", 1),
        ("x0 > 1 and", 1),
        ("x1 > 0", 1),
        ("always[0,T] x0 > 0", 1),
        ("always[2,1] x0 > 0", 1),
        ("integral[0,inf] x0 > 0", 1),
        ("integral[0,1;2/dt] x0 > 0", 1),
        ("(x0 > 0", 1),
        ("x0 > 0)", 1),
        ("foo(x0) > 0", 1),
        ("3 > 2", 1),
        ("x0 > 1 $", 1),
        ("eventually[0,1 x0 > 0", 1),
    ] {
        let e = parse(text, dim).expect_err(text);
        assert!(e.span.end <= text.len() && e.span.start <= e.span.end, "{text}: {e:?}");
        assert!(!e.message.is_empty());
    }
    let e = parse("always[0,T] x0 > 0", 1).unwrap_err();
    assert!(e.message.contains("time-interval parameters not supported"));
}

#[test]
fn unparse_canonical_forms() {
    let a = p(0, Comparison::Gt, 0.0);
    assert_eq!(unparse(&Formula::not(Formula::not(a.clone()))), "not (not (x0 > 0))");
    let u = Formula::until(Interval::new(1.0, 2.0).unwrap(), a.clone(), a.clone());
    assert_eq!(unparse(&u), "(x0 > 0) until[1,2] (x0 > 0)");
    for text in ["eventually[0,5] (always (x0 > 0.4 and x0 < 0.6))", "always[50,100] abs(x0 - 1) < eps1"] {
        let f = parse(text, 1).unwrap();
        assert_eq!(parse(&unparse(&f), 1).unwrap(), f);
    }
}

fn petgraph_of(f: &Formula) -> DiGraph<NodeClass, ()> {
    let g = to_graph(f);
    let mut out = DiGraph::new();
    let ids: Vec<_> = g.nodes.iter().map(|n| out.add_node(n.class)).collect();
    for (s, t) in g.edges {
        out.add_edge(ids[s], ids[t], ());
    }
    out
}

#[test]
fn dot_smallest_formula() {
    let f = p(0, Comparison::Gt, 0.5);
    let g = to_graph(&f);
    assert_eq!(g.nodes.len(), 3);
    assert_eq!(g.edges.len(), 2);
    let dot = to_dot(&f);
    assert!(dot.starts_with("digraph"));
    for class in ["input", "parameter", "operator"] {
        assert_eq!(dot.matches(&format!("class=\"{class}\"")).count(), 1);
    }
}

#[test]
fn dot_of_nested_temporal_formula() {
    // eventually always (x0 > c1 and x1 < c2)
    let f = parse("eventually (always (x0 > 0.5 and x1 < 2))", 2).unwrap();
    let mut want = DiGraph::new();
    let x0 = want.add_node(NodeClass::Input);
    let x1 = want.add_node(NodeClass::Input);
    let c1 = want.add_node(NodeClass::Parameter);
    let c2 = want.add_node(NodeClass::Parameter);
    let p1 = want.add_node(NodeClass::Operator);
    let p2 = want.add_node(NodeClass::Operator);
    let and = want.add_node(NodeClass::Operator);
    let alw = want.add_node(NodeClass::Operator);
    let ev = want.add_node(NodeClass::Operator);
    for (s, t) in [(x0, p1), (c1, p1), (x1, p2), (c2, p2), (p1, and), (p2, and), (and, alw), (alw, ev)] {
        want.add_edge(s, t, ());
    }
    let got = petgraph_of(&f);
    assert!(is_isomorphic_matching(&got, &want, |a, b| a == b, |_, _| true));
}

#[test]
fn dot_shares_inputs_and_named_parameters() {
    let f = parse("(x0 > eps) and (x0 < eps)", 1).unwrap();
    let g = to_graph(&f);
    let count = |c| g.nodes.iter().filter(|n| n.class == c).count();
    assert_eq!(count(NodeClass::Input), 1);
    assert_eq!(count(NodeClass::Parameter), 1);
    assert_eq!(count(NodeClass::Operator), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn parse_unparse_roundtrip(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let dt = 0.1;
        let f = common::random_formula(&mut rng, 5, 3, dt, true);
        let text = unparse(&f);
        let back = parse(&text, 3).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(back, f);
    }

    #[test]
    fn roundtrip_extreme_literals(c in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let f = Formula::pred(Predicate::new(
            Mu::Affine { terms: vec![(0, c), (1, -c)], offset: c },
            Comparison::Le,
            Threshold::Const(c),
        ));
        prop_assert_eq!(parse(&unparse(&f), 2).unwrap(), f);
    }

    #[test]
    fn graph_is_acyclic_with_one_sink(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let f = common::random_formula(&mut rng, 5, 3, 1.0, true);
        let g = petgraph_of(&f);
        prop_assert!(!is_cyclic_directed(&g));
        let sinks = g.node_indices().filter(|&n| g.neighbors(n).next().is_none()).count();
        prop_assert_eq!(sinks, 1);
    }

    #[test]
    fn error_spans_within_input(text in "[a-z0-9 ()<>=\\[\\],.;*+/-]{0,40}") {
        if let Err(e) = parse(&text, 2) {
            prop_assert!(e.span.start <= e.span.end && e.span.end <= text.len());
        }
    }
}
