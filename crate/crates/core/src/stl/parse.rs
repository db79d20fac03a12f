//! Text syntax for formulas.
//!
//! ```text
//! formula := term ("and" term)*
//! term    := unary ("U" interval unary)?
//! unary   := ("G" | "F") interval unary
//!          | "not" identifier
//!          | "true"
//!          | identifier
//!          | "(" formula ")"
//! interval := "[" number "," number "]"
//! ```
//!
//! The parenthesised and nested forms are a superset of the compact task
//! grammar `G[a,b] p and F[a,b] not q and p U[a,b] q`; they exist so that
//! every AST the printer emits can be read back.

use std::fmt;

use thiserror::Error;

use super::ast::{Formula, IntervalError, TimeInterval};

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("malformed interval: {0}")]
    Interval(#[from] IntervalError),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number(v) => write!(f, "number {v}"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::End => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

const KEYWORDS: [&str; 6] = ["G", "F", "U", "and", "not", "true"];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);

    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, column);
        let simple = match c {
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            chars.next();
            column += 1;
            out.push(Spanned {
                tok,
                line: tline,
                column: tcol,
            });
            continue;
        }
        if c == '\n' {
            chars.next();
            line += 1;
            column = 1;
            continue;
        }
        if c.is_whitespace() {
            chars.next();
            column += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    s.push(c);
                    chars.next();
                    column += 1;
                } else {
                    break;
                }
            }
            out.push(Spanned {
                tok: Tok::Ident(s),
                line: tline,
                column: tcol,
            });
            continue;
        }
        if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' {
            let mut s = String::new();
            let mut prev = ' ';
            while let Some(&c) = chars.peek() {
                let sign_ok = (c == '-' || c == '+') && (s.is_empty() || prev == 'e' || prev == 'E');
                if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || sign_ok {
                    s.push(c);
                    prev = c;
                    chars.next();
                    column += 1;
                } else {
                    break;
                }
            }
            let value: f64 = s.parse().map_err(|_| ParseError {
                line: tline,
                column: tcol,
                kind: ParseErrorKind::Syntax(format!("invalid number `{s}`")),
            })?;
            out.push(Spanned {
                tok: Tok::Number(value),
                line: tline,
                column: tcol,
            });
            continue;
        }
        return Err(ParseError {
            line: tline,
            column: tcol,
            kind: ParseErrorKind::Syntax(format!("unexpected character `{c}`")),
        });
    }
    out.push(Spanned {
        tok: Tok::End,
        line,
        column,
    });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    known: Option<&'a dyn Fn(&str) -> bool>,
}

impl Parser<'_> {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, at: &Spanned, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: at.line,
            column: at.column,
            kind,
        }
    }

    fn expect(&mut self, want: Tok) -> Result<Spanned, ParseError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(self.error_at(&t, ParseErrorKind::Syntax(format!("expected {want}, found {}", t.tok))))
        }
    }

    fn peek_ident(&self, word: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == word)
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let mut terms = vec![self.term()?];
        while self.peek_ident("and") {
            self.next();
            terms.push(self.term()?);
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Formula::And(terms)
        })
    }

    fn term(&mut self) -> Result<Formula, ParseError> {
        let left = self.unary()?;
        if self.peek_ident("U") {
            self.next();
            let interval = self.interval()?;
            let right = self.unary()?;
            return Ok(Formula::until(interval, left, right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) if s == "G" || s == "F" => {
                let interval = self.interval()?;
                let child = self.unary()?;
                Ok(if s == "G" {
                    Formula::always(interval, child)
                } else {
                    Formula::eventually(interval, child)
                })
            }
            Tok::Ident(s) if s == "not" => {
                let name_tok = self.next();
                match &name_tok.tok {
                    Tok::Ident(name) if !is_keyword(name) => {
                        self.check_known(&name_tok, name)?;
                        Ok(Formula::not_predicate(name.clone()))
                    }
                    other => Err(self.error_at(
                        &name_tok,
                        ParseErrorKind::Syntax(format!("`not` applies to predicate names only, found {other}")),
                    )),
                }
            }
            Tok::Ident(s) if s == "true" => Ok(Formula::True),
            Tok::Ident(s) if !is_keyword(s) => {
                self.check_known(&t, s)?;
                Ok(Formula::predicate(s.clone()))
            }
            Tok::LParen => {
                let inner = self.formula()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            other => Err(self.error_at(&t, ParseErrorKind::Syntax(format!("expected a formula, found {other}")))),
        }
    }

    fn check_known(&self, at: &Spanned, name: &str) -> Result<(), ParseError> {
        match self.known {
            Some(known) if !known(name) => Err(self.error_at(at, ParseErrorKind::UnknownPredicate(name.to_string()))),
            _ => Ok(()),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Number(v) => Ok(*v),
            other => Err(self.error_at(&t, ParseErrorKind::Syntax(format!("expected a number, found {other}")))),
        }
    }

    fn interval(&mut self) -> Result<TimeInterval, ParseError> {
        let open = self.expect(Tok::LBracket)?;
        let a = self.number()?;
        self.expect(Tok::Comma)?;
        let b = self.number()?;
        self.expect(Tok::RBracket)?;
        TimeInterval::new(a, b).map_err(|e| self.error_at(&open, e.into()))
    }
}

fn parse_with(text: &str, known: Option<&dyn Fn(&str) -> bool>) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, known };
    let f = p.formula()?;
    let rest = p.next();
    if rest.tok != Tok::End {
        return Err(p.error_at(
            &rest,
            ParseErrorKind::Syntax(format!("unexpected trailing {}", rest.tok)),
        ));
    }
    Ok(f)
}

/// Parses formula text without checking predicate names.
pub fn parse(text: &str) -> Result<Formula, ParseError> {
    parse_with(text, None)
}

/// Parses formula text, rejecting predicate names for which `known`
/// returns false.
pub fn parse_formula(text: &str, known: impl Fn(&str) -> bool) -> Result<Formula, ParseError> {
    parse_with(text, Some(&known))
}
