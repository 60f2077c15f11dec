//! Text syntax for formulas.
//!
//! ```text
//! formula   := implies ("until" interval? formula)?
//! implies   := or ("->" implies)?
//! or        := and ("or" and)*
//! and       := unary ("and" unary)*
//! unary     := "not" unary
//!            | ("always" | "eventually") interval? unary
//!            | "integral" "[" num "," num (";" weight)? "]" unary
//!            | "(" formula ")" | "true" | "false" | predicate
//! interval  := "[" num "," (num | "inf") ("]" | ")")
//! weight    := num | "1/dt"
//! predicate := mu ("<" | "<=" | ">" | ">=") (num | param)
//! mu        := linear | "abs(" var "-" num ")"
//!            | "norm(" var "-" num ("," var "-" num)* ")"
//!            | "box(" var "in" "[" num "," num "]" ("," ...)* ")"
//! linear    := term (("+" | "-") term)*
//! term      := "-"? (num "*" var | var "*" num | var | num)
//! ```
//!
//! Variables are `x0 .. x{n-1}` or configured aliases. Any other identifier
//! on the right of a comparison names a learnable parameter. Unicode
//! symbols (`¬ ∧ ∨ → ◊ □ ⊤ ⊥ ∞ ≥ ≤`) are accepted as aliases.

mod dot;
mod grammar;
mod lexer;
mod unparse;

use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use crate::formula::Formula;

pub use dot::{to_dot, to_graph, ComputationGraph, GraphNode, NodeClass};
pub(crate) use unparse::num;
pub use unparse::unparse;

/// Byte range `start..end` in the parsed text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn join(self, other: SourceSpan) -> Self {
        Self::new(self.start.min(other.start), self.end.max(other.end))
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at column {column}{}", expected_suffix(.expected))]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
    pub expected: Vec<String>,
    column: usize,
}

fn expected_suffix(expected: &[String]) -> String {
    if expected.is_empty() {
        String::new()
    } else {
        format!(" (expected {})", expected.join(" or "))
    }
}

impl ParseError {
    pub fn new(span: SourceSpan, message: impl Into<String>, expected: Vec<&str>) -> Self {
        Self {
            span,
            message: message.into(),
            expected: expected.into_iter().map(String::from).collect(),
            column: span.start + 1,
        }
    }

    /// One-based column of the error start.
    pub fn column(&self) -> usize {
        self.column
    }
}

/// Source spans of a parsed formula, one node per AST node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanTree {
    pub span: SourceSpan,
    pub children: Vec<SpanTree>,
}

/// Variable naming for the parser.
#[derive(Debug, Clone, Default)]
pub struct ParserOptions {
    pub dim: usize,
    pub aliases: IndexMap<String, usize>,
}

impl ParserOptions {
    pub fn new(dim: usize) -> Self {
        Self { dim, aliases: IndexMap::new() }
    }

    pub fn alias(mut self, name: impl Into<String>, index: usize) -> Self {
        self.aliases.insert(name.into(), index);
        self
    }
}

/// Parses `text` for signals of dimension `dim`.
pub fn parse(text: &str, dim: usize) -> Result<Formula, ParseError> {
    parse_with(text, &ParserOptions::new(dim)).map(|(f, _)| f)
}

/// Parses with custom variable aliases and also returns the span tree.
pub fn parse_with(text: &str, opts: &ParserOptions) -> Result<(Formula, SpanTree), ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::new(SourceSpan::new(0, text.len()), "empty formula", vec!["formula"]));
    }
    for (name, &k) in &opts.aliases {
        if k >= opts.dim {
            return Err(ParseError::new(
                SourceSpan::default(),
                format!("alias `{name}` refers to x{k} but the signal has dimension {}", opts.dim),
                vec![],
            ));
        }
    }
    let tokens = lexer::tokenize(text)?;
    grammar::Parser::new(tokens, opts).parse_document()
}
