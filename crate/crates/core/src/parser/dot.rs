use std::collections::HashMap;
use std::fmt::Write;

use crate::formula::{Formula, Threshold, Weight};

use super::unparse::{mu, num};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeClass {
    Input,
    Parameter,
    Operator,
}

impl NodeClass {
    pub fn name(self) -> &'static str {
        match self {
            NodeClass::Input => "input",
            NodeClass::Parameter => "parameter",
            NodeClass::Operator => "operator",
        }
    }

    fn color(self) -> &'static str {
        match self {
            NodeClass::Input => "lightblue",
            NodeClass::Parameter => "palegreen",
            NodeClass::Operator => "orange",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub label: String,
    pub class: NodeClass,
}

/// Computation graph of a formula with edges pointing from the signal
/// inputs toward the root operator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComputationGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<(usize, usize)>,
    pub root: usize,
}

#[derive(Default)]
struct Builder {
    g: ComputationGraph,
    inputs: HashMap<usize, usize>,
    params: HashMap<String, usize>,
}

impl Builder {
    fn add(&mut self, label: String, class: NodeClass) -> usize {
        self.g.nodes.push(GraphNode { label, class });
        self.g.nodes.len() - 1
    }

    fn input(&mut self, k: usize) -> usize {
        if let Some(&id) = self.inputs.get(&k) {
            return id;
        }
        let id = self.add(format!("x{k}"), NodeClass::Input);
        self.inputs.insert(k, id);
        id
    }

    fn param(&mut self, t: &Threshold) -> usize {
        match t {
            Threshold::Const(c) => self.add(num(*c), NodeClass::Parameter),
            Threshold::Param(name) => {
                if let Some(&id) = self.params.get(name) {
                    return id;
                }
                let id = self.add(name.clone(), NodeClass::Parameter);
                self.params.insert(name.clone(), id);
                id
            }
        }
    }

    fn visit(&mut self, f: &Formula) -> usize {
        let iv =
            |f: &Formula| f.interval().filter(|i| !i.is_unbounded_ray()).map(|i| i.to_string()).unwrap_or_default();
        let label = match f {
            Formula::True => "true".to_string(),
            Formula::Pred(p) => format!("{} {}", mu(&p.mu), p.cmp.symbol()),
            Formula::Not(_) => "not".into(),
            Formula::And(..) => "and".into(),
            Formula::Or(..) => "or".into(),
            Formula::Implies(..) => "->".into(),
            Formula::Eventually(..) => format!("eventually{}", iv(f)),
            Formula::Always(..) => format!("always{}", iv(f)),
            Formula::Until(..) => format!("until{}", iv(f)),
            Formula::Integral(i, w, _) => match w {
                Weight::Const(c) => format!("integral[{},{};{}]", num(i.lower()), num(i.upper()), num(*c)),
                Weight::InvDt => format!("integral[{},{};1/dt]", num(i.lower()), num(i.upper())),
            },
        };
        let mut sources = Vec::new();
        if let Formula::Pred(p) = f {
            for k in p.mu.variables() {
                sources.push(self.input(k));
            }
            sources.push(self.param(&p.threshold));
        }
        for c in f.children() {
            sources.push(self.visit(c));
        }
        let id = self.add(label, NodeClass::Operator);
        self.g.edges.extend(sources.into_iter().map(|s| (s, id)));
        id
    }
}

pub fn to_graph(f: &Formula) -> ComputationGraph {
    let mut b = Builder::default();
    b.g.root = b.visit(f);
    b.g
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering of [`to_graph`].
pub fn to_dot(f: &Formula) -> String {
    let g = to_graph(f);
    let mut out = String::from("digraph stl {\n    rankdir=BT;\n    node [style=filled];\n");
    for (i, n) in g.nodes.iter().enumerate() {
        let shape = if n.class == NodeClass::Operator { "box" } else { "ellipse" };
        writeln!(
            out,
            "    n{i} [label=\"{}\", class=\"{}\", shape={shape}, fillcolor={}];",
            escape(&n.label),
            n.class.name(),
            n.class.color()
        )
        .unwrap();
    }
    for (s, t) in &g.edges {
        writeln!(out, "    n{s} -> n{t};").unwrap();
    }
    out.push_str("}\n");
    out
}
