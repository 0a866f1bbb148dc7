//! Parser for polynomial strings such as `3*x1^2 - x1 x2 + 7`.
//!
//! Variables are `x1, x2, ...` (1-based). Multiplication may be written with
//! `*` or by juxtaposition. Coefficients are integers.

use std::collections::BTreeMap;

use super::IntegerForm;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token {
    Plus,
    Minus,
    Star,
    Caret,
    Number(i64),
    Var(usize),
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' => {
                out.push(Token::Plus);
                i += 1;
            }
            b'-' => {
                out.push(Token::Minus);
                i += 1;
            }
            b'*' => {
                out.push(Token::Star);
                i += 1;
            }
            b'^' => {
                out.push(Token::Caret);
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let v: i64 = text[start..i]
                    .parse()
                    .map_err(|_| Error::Malformed(format!("number too large: {}", &text[start..i])))?;
                out.push(Token::Number(v));
            }
            b'x' | b'X' => {
                i += 1;
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let idx: usize = text[start..i]
                    .parse()
                    .map_err(|_| Error::Malformed(format!("variable without index at byte {start}")))?;
                if idx == 0 {
                    return Err(Error::Malformed("variables are numbered from x1".into()));
                }
                out.push(Token::Var(idx - 1));
            }
            other => {
                return Err(Error::Malformed(format!(
                    "unexpected character {:?} at byte {i}",
                    other as char
                )))
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type Monomial = (BTreeMap<usize, u32>, i64);

impl Parser {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.peek();
        self.pos += 1;
        t
    }

    fn polynomial(&mut self) -> Result<Vec<Monomial>> {
        let mut terms = Vec::new();
        let mut sign = 1i64;
        match self.peek() {
            Some(Token::Minus) => {
                sign = -1;
                self.pos += 1;
            }
            Some(Token::Plus) => self.pos += 1,
            _ => {}
        }
        loop {
            let (mono, c) = self.term()?;
            let c = c.checked_mul(sign).ok_or(Error::Overflow("parsing a coefficient"))?;
            terms.push((mono, c));
            match self.next() {
                None => break,
                Some(Token::Plus) => sign = 1,
                Some(Token::Minus) => sign = -1,
                Some(t) => return Err(Error::Malformed(format!("unexpected token {t:?}"))),
            }
            // a unary minus may follow, as in `x1 + -3*x2`
            if self.peek() == Some(Token::Minus) {
                sign = -sign;
                self.pos += 1;
            }
        }
        Ok(terms)
    }

    fn term(&mut self) -> Result<Monomial> {
        let mut mono: BTreeMap<usize, u32> = BTreeMap::new();
        let mut coeff = 1i64;
        let mut factors = 0;
        loop {
            match self.peek() {
                Some(Token::Number(v)) => {
                    self.pos += 1;
                    let v = self.power_of(v)?;
                    coeff = coeff.checked_mul(v).ok_or(Error::Overflow("parsing a coefficient"))?;
                }
                Some(Token::Var(idx)) => {
                    self.pos += 1;
                    let p = self.exponent()?;
                    *mono.entry(idx).or_insert(0) += p;
                }
                _ => break,
            }
            factors += 1;
            if self.peek() == Some(Token::Star) {
                self.pos += 1;
                if !matches!(self.peek(), Some(Token::Number(_)) | Some(Token::Var(_))) {
                    return Err(Error::Malformed("dangling '*'".into()));
                }
            }
        }
        if factors == 0 {
            return Err(Error::Malformed(format!(
                "expected a term at token {}",
                self.pos
            )));
        }
        Ok((mono, coeff))
    }

    fn exponent(&mut self) -> Result<u32> {
        if self.peek() == Some(Token::Caret) {
            self.pos += 1;
            match self.next() {
                Some(Token::Number(p)) if p >= 0 && p <= u32::MAX as i64 => Ok(p as u32),
                _ => Err(Error::Malformed("expected a nonnegative exponent after '^'".into())),
            }
        } else {
            Ok(1)
        }
    }

    fn power_of(&mut self, base: i64) -> Result<i64> {
        let p = self.exponent()?;
        base.checked_pow(p).ok_or(Error::Overflow("parsing a coefficient"))
    }
}

/// Parses `text` into an integer form.
///
/// `vars` defaults to the largest variable index; `degree` defaults to the
/// largest total degree present.
pub fn parse_expression(text: &str, vars: Option<usize>, degree: Option<u32>) -> Result<IntegerForm> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(Error::Malformed("empty expression".into()));
    }
    let mut parser = Parser { tokens, pos: 0 };
    let monomials = parser.polynomial()?;
    let max_var = monomials
        .iter()
        .flat_map(|(m, _)| m.keys().copied())
        .max()
        .map(|v| v + 1)
        .unwrap_or(1);
    let n = vars.unwrap_or(max_var);
    if max_var > n {
        return Err(Error::InconsistentVariables {
            index: 0,
            expected: n,
            found: max_var,
        });
    }
    let max_deg = monomials
        .iter()
        .filter(|(_, c)| *c != 0)
        .map(|(m, _)| m.values().sum::<u32>())
        .max()
        .unwrap_or(0);
    let d = degree.unwrap_or(max_deg);
    let terms = monomials.into_iter().map(|(m, c)| {
        let mut e = vec![0u32; n];
        for (v, p) in m {
            e[v] += p;
        }
        (e, c)
    });
    IntegerForm::new(n, d, terms)
}
