use super::{ParseError, SourceSpan};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semicolon,
    Cmp(crate::formula::Comparison),
    Arrow,
    Plus,
    Minus,
    Star,
    Slash,
    Not,
    And,
    Or,
    Always,
    Eventually,
    Until,
    Integral,
    True,
    False,
    Inf,
    In,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(v) => format!("number `{v}`"),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        use crate::formula::Comparison::*;
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semicolon => ";",
            Tok::Cmp(Gt) => ">",
            Tok::Cmp(Ge) => ">=",
            Tok::Cmp(Lt) => "<",
            Tok::Cmp(Le) => "<=",
            Tok::Arrow => "->",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Not => "not",
            Tok::And => "and",
            Tok::Or => "or",
            Tok::Always => "always",
            Tok::Eventually => "eventually",
            Tok::Until => "until",
            Tok::Integral => "integral",
            Tok::True => "true",
            Tok::False => "false",
            Tok::Inf => "inf",
            Tok::In => "in",
            Tok::Ident(_) | Tok::Number(_) | Tok::Eof => "",
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "not" => Tok::Not,
        "and" => Tok::And,
        "or" => Tok::Or,
        "always" => Tok::Always,
        "eventually" => Tok::Eventually,
        "until" => Tok::Until,
        "integral" => Tok::Integral,
        "true" => Tok::True,
        "false" => Tok::False,
        "inf" => Tok::Inf,
        "in" => Tok::In,
        _ => return None,
    })
}

fn symbol(c: char) -> Option<Tok> {
    use crate::formula::Comparison::*;
    Some(match c {
        '(' => Tok::LParen,
        ')' => Tok::RParen,
        '[' => Tok::LBracket,
        ']' => Tok::RBracket,
        ',' => Tok::Comma,
        ';' => Tok::Semicolon,
        '+' => Tok::Plus,
        '*' => Tok::Star,
        '/' => Tok::Slash,
        '¬' => Tok::Not,
        '∧' => Tok::And,
        '∨' => Tok::Or,
        '→' | '⇒' => Tok::Arrow,
        '◊' | '◇' | '♢' => Tok::Eventually,
        '□' | '◻' | '☐' => Tok::Always,
        '⊤' => Tok::True,
        '⊥' => Tok::False,
        '∞' => Tok::Inf,
        '≥' => Tok::Cmp(Ge),
        '≤' => Tok::Cmp(Le),
        '∈' => Tok::In,
        _ => return None,
    })
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    use crate::formula::Comparison::*;
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let tok = if c.is_ascii_digit() || (c == '.' && text[start + 1..].starts_with(|d: char| d.is_ascii_digit())) {
            let mut end = start;
            let mut seen_exp = false;
            while let Some(&(i, d)) = chars.peek() {
                let sign_after_exp = (d == '+' || d == '-') && matches!(text[..i].chars().last(), Some('e' | 'E'));
                if d.is_ascii_digit() || d == '.' || (!seen_exp && (d == 'e' || d == 'E')) || sign_after_exp {
                    seen_exp |= d == 'e' || d == 'E';
                    end = i + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let lit = &text[start..end];
            let v = lit.parse::<f64>().map_err(|_| {
                ParseError::new(SourceSpan::new(start, end), format!("malformed number `{lit}`"), vec!["number"])
            })?;
            out.push(Token { tok: Tok::Number(v), span: SourceSpan::new(start, end) });
            continue;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut end = start;
            while let Some(&(i, d)) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '_' {
                    end = i + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let word = &text[start..end];
            let tok = keyword(word).unwrap_or_else(|| Tok::Ident(word.to_string()));
            out.push(Token { tok, span: SourceSpan::new(start, end) });
            continue;
        } else {
            chars.next();
            let next = chars.peek().map(|&(_, d)| d);
            let two = |t: Tok, chars: &mut std::iter::Peekable<std::str::CharIndices>| {
                chars.next();
                (t, 2)
            };
            let (tok, width) = match (c, next) {
                ('>', Some('=')) => two(Tok::Cmp(Ge), &mut chars),
                ('<', Some('=')) => two(Tok::Cmp(Le), &mut chars),
                ('-', Some('>')) => two(Tok::Arrow, &mut chars),
                ('>', _) => (Tok::Cmp(Gt), 1),
                ('<', _) => (Tok::Cmp(Lt), 1),
                ('-', _) => (Tok::Minus, 1),
                (c, _) => match symbol(c) {
                    Some(t) => (t, c.len_utf8()),
                    None => {
                        return Err(ParseError::new(
                            SourceSpan::new(start, start + c.len_utf8()),
                            format!("unexpected character `{c}`"),
                            vec![],
                        ))
                    }
                },
            };
            Token { tok, span: SourceSpan::new(start, start + width) }
        };
        out.push(tok);
    }
    out.push(Token { tok: Tok::Eof, span: SourceSpan::new(text.len(), text.len()) });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn numbers_and_operators() {
        use crate::formula::Comparison::*;
        assert_eq!(
            toks("x0>=1.5e-3->y<-2"),
            vec![
                Tok::Ident("x0".into()),
                Tok::Cmp(Ge),
                Tok::Number(1.5e-3),
                Tok::Arrow,
                Tok::Ident("y".into()),
                Tok::Cmp(Lt),
                Tok::Minus,
                Tok::Number(2.0),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn unicode_aliases() {
        assert_eq!(
            toks("◊□¬⊤ ∧ ∨ → ∞")[..8],
            [Tok::Eventually, Tok::Always, Tok::Not, Tok::True, Tok::And, Tok::Or, Tok::Arrow, Tok::Inf]
        );
    }

    #[test]
    fn spans_are_byte_offsets() {
        let t = tokenize("◊ x0").unwrap();
        assert_eq!(t[1].span, SourceSpan::new(4, 6));
        assert_eq!(t[2].span, SourceSpan::new(6, 6));
    }

    #[test]
    fn rejects_stray_characters() {
        let e = tokenize("x0 > 1 # 2").unwrap_err();
        assert_eq!(e.span, SourceSpan::new(7, 8));
    }
}
