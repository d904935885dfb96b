//! Text form of closed forms.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | VAR | ('fib' | 'lucas') '(' expr ')' | '(' expr ')'
//! ```
//!
//! Division needs a constant divisor. `x^e` needs either a constant
//! natural `e`, or a constant base with `e` affine in one or more variables
//! with integer coefficients.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use super::{Affine, ClosedForm, Special};
use crate::energy::parse_decimal;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("column {col}: {msg}")]
pub struct ClosedFormParseError {
    pub col: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Ident(String),
    Op(char),
    End,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

fn lex(s: &str) -> Result<Vec<(Tok, usize)>, ClosedFormParseError> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let v = parse_decimal(&text).ok_or_else(|| ClosedFormParseError {
                col,
                msg: format!("bad number `{text}`"),
            })?;
            out.push((Tok::Num(v), col));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Op(c), col));
            i += 1;
        } else {
            return Err(ClosedFormParseError {
                col,
                msg: format!("unexpected `{c}`"),
            });
        }
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn col(&self) -> usize {
        self.toks[self.pos].1
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ClosedFormParseError> {
        Err(ClosedFormParseError {
            col: self.col(),
            msg: msg.into(),
        })
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Op(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn lift<T>(&self, r: Result<T, super::ClosedFormError>) -> Result<T, ClosedFormParseError> {
        r.map_err(|e| ClosedFormParseError {
            col: self.col(),
            msg: e.to_string(),
        })
    }

    fn expr(&mut self) -> Result<ClosedForm, ClosedFormParseError> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                acc = acc.add(&self.term()?);
            } else if self.eat('-') {
                acc = acc.sub(&self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<ClosedForm, ClosedFormParseError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                let rhs = self.unary()?;
                acc = self.lift(acc.mul(&rhs))?;
            } else if self.eat('/') {
                let rhs = self.unary()?;
                match rhs.as_constant() {
                    Some(c) if !c.is_zero() => acc = acc.scale(&c.recip()),
                    Some(_) => return self.err("division by zero"),
                    None => return self.err("divisor must be a constant"),
                }
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<ClosedForm, ClosedFormParseError> {
        if self.eat('-') {
            return Ok(self.unary()?.scale(&super::rat(-1)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ClosedForm, ClosedFormParseError> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let exp = self.unary()?;
        if let Some(e) = exp.as_constant() {
            return match e.to_integer().to_u32() {
                Some(k) if e.is_integer() => self.lift(base.pow(k)),
                _ => self.err("exponent must be a natural number or depend on a variable"),
            };
        }
        let Some(b) = base.as_constant() else {
            return self.err("variable exponent needs a constant base");
        };
        if b.is_zero() {
            return self.err("zero base with a variable exponent");
        }
        let Some(a) = affine(&exp) else {
            return self.err("exponent must be affine");
        };
        let f = ClosedForm::special("_e", Special::Pow(b));
        self.lift(f.substitute(&BTreeMap::from([("_e".to_string(), a)])))
    }

    fn atom(&mut self) -> Result<ClosedForm, ClosedFormParseError> {
        let (tok, _) = self.toks[self.pos].clone();
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(ClosedForm::constant(v)),
            Tok::Ident(name) if (name == "fib" || name == "lucas") && *self.peek() == Tok::Op('(') => {
                self.pos += 1;
                let arg = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected `)`");
                }
                let Some(a) = affine(&arg) else {
                    return self.err(format!("argument of {name} must be affine"));
                };
                let s = if name == "fib" { Special::Fib } else { Special::Lucas };
                let f = ClosedForm::special("_e", s);
                self.lift(f.substitute(&BTreeMap::from([("_e".to_string(), a)])))
            }
            Tok::Ident(name) => Ok(ClosedForm::var(&name)),
            Tok::Op('(') => {
                let e = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected `)`");
                }
                Ok(e)
            }
            Tok::End => {
                self.pos -= 1;
                self.err("unexpected end of input")
            }
            Tok::Op(c) => {
                self.pos -= 1;
                self.err(format!("unexpected `{c}`"))
            }
        }
    }
}

/// The form as an affine expression, if it is one.
fn affine(f: &ClosedForm) -> Option<Affine> {
    let mut a = Affine::default();
    for (k, c) in f.terms() {
        if !k.special.is_empty() || k.degree() > 1 {
            return None;
        }
        match k.mono.keys().next() {
            None => a.constant = c.clone(),
            Some(v) => {
                a.coeffs.insert(v.clone(), c.clone());
            }
        }
    }
    Some(a)
}

/// Parses a closed form such as `32.5*fib(N) + 25.6*lucas(N) - 35.65`.
pub fn parse_closed_form(text: &str) -> Result<ClosedForm, ClosedFormParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    if *p.peek() == Tok::End {
        return p.err("empty expression");
    }
    let f = p.expr()?;
    if *p.peek() != Tok::End {
        return p.err("trailing input");
    }
    Ok(f)
}
