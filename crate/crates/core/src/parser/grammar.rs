use super::lexer::{Tok, Token};
use super::{ParseError, ParserOptions, SourceSpan, SpanTree};
use crate::formula::{Formula, Mu, Predicate, Threshold, Weight};
use crate::interval::Interval;

type PResult<T> = Result<T, ParseError>;
type Node = (Formula, SpanTree);

pub(crate) struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    opts: &'a ParserOptions,
}

fn node(f: Formula, span: SourceSpan, children: Vec<SpanTree>) -> Node {
    (f, SpanTree { span, children })
}

const NUM: &str = "numeric literal";
const ATOM: [&str; 6] = ["`(`", "`not`", "`always`", "`eventually`", "`true`", "variable"];

impl<'a> Parser<'a> {
    pub fn new(tokens: Vec<Token>, opts: &'a ParserOptions) -> Self {
        Self { tokens, pos: 0, opts }
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn span(&self) -> SourceSpan {
        self.tokens[self.pos].span
    }

    fn prev_span(&self) -> SourceSpan {
        self.tokens[self.pos.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, expected: Vec<&str>) -> ParseError {
        let t = &self.tokens[self.pos];
        ParseError::new(t.span, format!("unexpected {}", t.tok.describe()), expected)
    }

    fn expect(&mut self, tok: Tok) -> PResult<SourceSpan> {
        if self.peek() == &tok {
            Ok(self.bump().span)
        } else {
            let want = match &tok {
                Tok::RParen => "`)`",
                Tok::LParen => "`(`",
                Tok::LBracket => "`[`",
                Tok::RBracket => "`]`",
                Tok::Comma => "`,`",
                Tok::Minus => "`-`",
                Tok::In => "`in`",
                _ => "token",
            };
            Err(self.unexpected(vec![want]))
        }
    }

    pub fn parse_document(mut self) -> PResult<Node> {
        let out = self.formula()?;
        if self.peek() != &Tok::Eof {
            return Err(self.unexpected(vec!["end of input", "`and`", "`or`", "`->`", "`until`"]));
        }
        Ok(out)
    }

    fn formula(&mut self) -> PResult<Node> {
        let (l, ls) = self.implies()?;
        if self.peek() == &Tok::Until {
            self.bump();
            let iv = self.opt_interval()?;
            let (r, rs) = self.formula()?;
            let span = ls.span.join(rs.span);
            return Ok(node(Formula::until(iv, l, r), span, vec![ls, rs]));
        }
        Ok((l, ls))
    }

    fn implies(&mut self) -> PResult<Node> {
        let (l, ls) = self.or()?;
        if self.eat(&Tok::Arrow) {
            let (r, rs) = self.implies()?;
            let span = ls.span.join(rs.span);
            return Ok(node(Formula::implies(l, r), span, vec![ls, rs]));
        }
        Ok((l, ls))
    }

    fn or(&mut self) -> PResult<Node> {
        let (mut l, mut ls) = self.and()?;
        while self.eat(&Tok::Or) {
            let (r, rs) = self.and()?;
            let span = ls.span.join(rs.span);
            (l, ls) = node(Formula::or(l, r), span, vec![ls, rs]);
        }
        Ok((l, ls))
    }

    fn and(&mut self) -> PResult<Node> {
        let (mut l, mut ls) = self.unary()?;
        while self.eat(&Tok::And) {
            let (r, rs) = self.unary()?;
            let span = ls.span.join(rs.span);
            (l, ls) = node(Formula::and(l, r), span, vec![ls, rs]);
        }
        Ok((l, ls))
    }

    fn unary(&mut self) -> PResult<Node> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Not => {
                self.bump();
                let (g, gs) = self.unary()?;
                let span = start.join(gs.span);
                Ok(node(Formula::not(g), span, vec![gs]))
            }
            Tok::Always | Tok::Eventually => {
                let always = self.bump().tok == Tok::Always;
                let iv = self.opt_interval()?;
                let (g, gs) = self.unary()?;
                let span = start.join(gs.span);
                let f = if always { Formula::always(iv, g) } else { Formula::eventually(iv, g) };
                Ok(node(f, span, vec![gs]))
            }
            Tok::Integral => {
                self.bump();
                let (iv, w) = self.integral_params()?;
                let (g, gs) = self.unary()?;
                let span = start.join(gs.span);
                let f = Formula::integral(iv, w, g).expect("bounds checked while parsing");
                Ok(node(f, span, vec![gs]))
            }
            Tok::LParen => {
                self.bump();
                let (f, mut fs) = self.formula()?;
                let end = self.expect(Tok::RParen)?;
                fs.span = start.join(end);
                Ok((f, fs))
            }
            Tok::True => {
                self.bump();
                Ok(node(Formula::True, start, vec![]))
            }
            Tok::False => {
                self.bump();
                let leaf = SpanTree { span: start, children: vec![] };
                Ok(node(Formula::not(Formula::True), start, vec![leaf]))
            }
            Tok::Ident(_) | Tok::Number(_) | Tok::Minus => self.predicate(),
            _ => Err(self.unexpected(ATOM.to_vec())),
        }
    }

    fn number(&mut self) -> PResult<f64> {
        let neg = self.eat(&Tok::Minus);
        match self.peek().clone() {
            Tok::Number(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.unexpected(vec![NUM])),
        }
    }

    /// Optional `[a,b]`, `[a,inf)`; defaults to `[0, inf)`.
    fn opt_interval(&mut self) -> PResult<Interval> {
        if self.peek() != &Tok::LBracket {
            return Ok(Interval::unbounded());
        }
        let start = self.bump().span;
        let a = self.bound(false)?;
        self.expect(Tok::Comma)?;
        let b = self.bound(true)?;
        let end = match self.peek() {
            Tok::RBracket | Tok::RParen => self.bump().span,
            _ => return Err(self.unexpected(vec!["`]`", "`)`"])),
        };
        Interval::new(a, b).map_err(|e| ParseError::new(start.join(end), e.to_string(), vec![]))
    }

    fn bound(&mut self, upper: bool) -> PResult<f64> {
        match self.peek().clone() {
            Tok::Inf if upper => {
                self.bump();
                Ok(f64::INFINITY)
            }
            Tok::Ident(name) => Err(ParseError::new(
                self.span(),
                format!("time-interval parameters not supported (`{name}`)"),
                vec![NUM],
            )),
            Tok::Number(_) | Tok::Minus => self.number(),
            _ => Err(self.unexpected(if upper { vec![NUM, "`inf`"] } else { vec![NUM] })),
        }
    }

    fn integral_params(&mut self) -> PResult<(Interval, Weight)> {
        let start = self.expect(Tok::LBracket)?;
        let a = self.bound(false)?;
        self.expect(Tok::Comma)?;
        let b = self.bound(false)?;
        let weight = if self.eat(&Tok::Semicolon) {
            let wspan = self.span();
            let w = self.number()?;
            if self.eat(&Tok::Slash) {
                match self.peek().clone() {
                    Tok::Ident(d) if d == "dt" && w == 1.0 => {
                        self.bump();
                        Weight::InvDt
                    }
                    _ => {
                        return Err(ParseError::new(
                            wspan.join(self.span()),
                            "the only supported weight function is `1/dt`",
                            vec!["`dt`"],
                        ))
                    }
                }
            } else {
                Weight::Const(w)
            }
        } else {
            Weight::Const(1.0)
        };
        let end = self.expect(Tok::RBracket)?;
        let iv = Interval::new(a, b).map_err(|e| ParseError::new(start.join(end), e.to_string(), vec![]))?;
        Ok((iv, weight))
    }

    fn variable(&mut self) -> PResult<usize> {
        let span = self.span();
        let Tok::Ident(name) = self.peek().clone() else {
            return Err(self.unexpected(vec!["variable"]));
        };
        let k = self
            .lookup(&name)
            .ok_or_else(|| ParseError::new(span, format!("unknown variable `{name}`"), vec!["variable"]))?;
        if k >= self.opts.dim {
            return Err(ParseError::new(
                span,
                format!("variable `{name}` out of range for signal dimension {}", self.opts.dim),
                vec![],
            ));
        }
        self.bump();
        Ok(k)
    }

    fn lookup(&self, name: &str) -> Option<usize> {
        if let Some(&k) = self.opts.aliases.get(name) {
            return Some(k);
        }
        let digits = name.strip_prefix('x')?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if digits.len() > 1 && digits.starts_with('0') {
            return None;
        }
        digits.parse().ok()
    }

    fn is_variable(&self, name: &str) -> bool {
        self.lookup(name).is_some()
    }

    fn predicate(&mut self) -> PResult<Node> {
        let start = self.span();
        let mu = self.mu()?;
        let cmp = match self.peek() {
            Tok::Cmp(c) => *c,
            _ => return Err(self.unexpected(vec!["`<`", "`<=`", "`>`", "`>=`"])),
        };
        self.bump();
        let threshold = match self.peek().clone() {
            Tok::Ident(name) if !self.is_variable(&name) => {
                self.bump();
                Threshold::Param(name)
            }
            Tok::Number(_) | Tok::Minus => Threshold::Const(self.number()?),
            _ => return Err(self.unexpected(vec![NUM, "parameter name"])),
        };
        let span = start.join(self.prev_span());
        let p = Predicate::new(mu, cmp, threshold);
        p.mu.validate().map_err(|e| ParseError::new(span, e.to_string(), vec![]))?;
        Ok(node(Formula::Pred(p), span, vec![]))
    }

    fn mu(&mut self) -> PResult<Mu> {
        if let Tok::Ident(name) = self.peek().clone() {
            let is_call = self.tokens.get(self.pos + 1).map(|t| &t.tok) == Some(&Tok::LParen);
            if is_call && !self.is_variable(&name) {
                return match name.as_str() {
                    "abs" => self.abs(),
                    "norm" => self.norm(),
                    "box" => self.box_margin(),
                    _ => Err(ParseError::new(
                        self.span(),
                        format!("unknown function `{name}`"),
                        vec!["`abs`", "`norm`", "`box`"],
                    )),
                };
            }
        }
        self.linear()
    }

    fn abs(&mut self) -> PResult<Mu> {
        self.bump();
        self.expect(Tok::LParen)?;
        let (index, center) = self.deviation()?;
        self.expect(Tok::RParen)?;
        Ok(Mu::AbsDev { index, center })
    }

    /// `var - num`
    fn deviation(&mut self) -> PResult<(usize, f64)> {
        let k = self.variable()?;
        self.expect(Tok::Minus)?;
        Ok((k, self.number()?))
    }

    fn norm(&mut self) -> PResult<Mu> {
        self.bump();
        self.expect(Tok::LParen)?;
        let mut terms = vec![self.deviation()?];
        while self.eat(&Tok::Comma) {
            terms.push(self.deviation()?);
        }
        self.expect(Tok::RParen)?;
        Ok(Mu::Norm { terms })
    }

    fn box_margin(&mut self) -> PResult<Mu> {
        self.bump();
        self.expect(Tok::LParen)?;
        let mut bounds = Vec::new();
        loop {
            let k = self.variable()?;
            self.expect(Tok::In)?;
            self.expect(Tok::LBracket)?;
            let lo = self.number()?;
            self.expect(Tok::Comma)?;
            let hi = self.number()?;
            self.expect(Tok::RBracket)?;
            bounds.push((k, lo, hi));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        Ok(Mu::BoxMargin { bounds })
    }

    /// A bare variable gives `Mu::Var`; anything else is affine.
    fn linear(&mut self) -> PResult<Mu> {
        let mut terms = Vec::new();
        let mut offset = 0.0;
        let mut plain = true;
        let mut first = true;
        loop {
            let mut sign = 1.0;
            if first {
                if self.eat(&Tok::Minus) {
                    sign = -1.0;
                    plain = false;
                }
            } else if self.eat(&Tok::Minus) {
                sign = -1.0;
            } else if !self.eat(&Tok::Plus) {
                break;
            }
            if !first {
                plain = false;
            }
            first = false;
            match self.peek().clone() {
                Tok::Number(v) => {
                    self.bump();
                    plain = false;
                    if self.eat(&Tok::Star) {
                        terms.push((self.variable()?, sign * v));
                    } else {
                        offset += sign * v;
                    }
                }
                Tok::Ident(_) => {
                    let k = self.variable()?;
                    if self.eat(&Tok::Star) {
                        plain = false;
                        let c = self.number()?;
                        terms.push((k, sign * c));
                    } else {
                        terms.push((k, sign));
                    }
                }
                _ => return Err(self.unexpected(vec!["variable", NUM])),
            }
        }
        match (plain, terms.as_slice()) {
            (true, [(k, _)]) => Ok(Mu::Var(*k)),
            (_, []) => {
                Err(ParseError::new(self.prev_span(), "predicate does not reference a variable", vec!["variable"]))
            }
            _ => Ok(Mu::Affine { terms, offset }),
        }
    }
}
