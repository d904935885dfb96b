//! Closed-form cost functions and the recurrence solver.
//!
//! A [`ClosedForm`] is a finite sum of terms `c * Π v^k * Π s(v)` where `c`
//! is an exact rational and each `s(v)` is one of `b^v`, `fib(v)` or
//! `lucas(v)`. At most one such factor is attached to a variable. The map
//! representation keeps every form canonical: no zero coefficients, at most
//! one term per key.

mod parse;
mod solve;

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::energy::format_rational;

pub use parse::{parse_closed_form, ClosedFormParseError};
pub use solve::{classify, solve_recurrence, verify_solution, RecArg, RecCall, Recurrence, RecurrenceClass, Unsolved, VerifyError};

/// An integer as a rational.
pub fn rat(v: i64) -> BigRational {
    BigRational::from_integer(v.into())
}

/// `b^k` for any integer `k`; `b` must be nonzero when `k < 0`.
pub(crate) fn pow_int(b: &BigRational, k: i64) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..k.unsigned_abs() {
        acc *= b;
    }
    if k < 0 {
        acc.recip()
    } else {
        acc
    }
}

/// `(fib(n), lucas(n))` for any integer `n`, extended backwards by the
/// recurrence: fib(0) = 0, lucas(0) = 2.
pub fn fib_lucas(n: i64) -> (BigInt, BigInt) {
    let (mut f, mut l) = (BigInt::zero(), BigInt::from(2));
    let mut f1 = BigInt::one();
    let mut l1 = BigInt::one();
    if n >= 0 {
        for _ in 0..n {
            let (nf, nl) = (&f + &f1, &l + &l1);
            f = std::mem::replace(&mut f1, nf);
            l = std::mem::replace(&mut l1, nl);
        }
        (f, l)
    } else {
        // walk back: x(k-1) = x(k+1) - x(k)
        for _ in 0..n.unsigned_abs() {
            let (pf, pl) = (&f1 - &f, &l1 - &l);
            f1 = std::mem::replace(&mut f, pf);
            l1 = std::mem::replace(&mut l, pl);
        }
        (f, l)
    }
}

/// Non-polynomial factor applied to one variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Special {
    /// `b^v`; `b` is never 0 or 1.
    Pow(BigRational),
    Fib,
    Lucas,
}

/// Monomial and special factors of a term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TermKey {
    pub mono: BTreeMap<String, u32>,
    pub special: BTreeMap<String, Special>,
}

impl TermKey {
    pub fn degree(&self) -> u32 {
        self.mono.values().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.mono.is_empty() && self.special.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClosedFormError {
    #[error("unbound variable {0}")]
    Unbound(String),
    #[error("{0} must be an integer here")]
    NonInteger(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ClosedForm {
    terms: BTreeMap<TermKey, BigRational>,
}

/// Affine expression `constant + Σ c_v * v`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Affine {
    pub coeffs: BTreeMap<String, BigRational>,
    pub constant: BigRational,
}

impl Affine {
    pub fn constant(c: BigRational) -> Self {
        Affine {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(v: &str) -> Self {
        Affine {
            coeffs: BTreeMap::from([(v.to_string(), rat(1))]),
            constant: BigRational::zero(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add(&self, o: &Affine) -> Affine {
        let mut r = self.clone();
        for (v, c) in &o.coeffs {
            let e = r.coeffs.entry(v.clone()).or_insert_with(BigRational::zero);
            *e += c;
            if e.is_zero() {
                r.coeffs.remove(v);
            }
        }
        r.constant += &o.constant;
        r
    }

    pub fn scale(&self, k: &BigRational) -> Affine {
        if k.is_zero() {
            return Affine::default();
        }
        Affine {
            coeffs: self.coeffs.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
            constant: &self.constant * k,
        }
    }

    pub fn sub(&self, o: &Affine) -> Affine {
        self.add(&o.scale(&rat(-1)))
    }

    /// Substitutes affine expressions for variables.
    pub fn substitute(&self, map: &BTreeMap<String, Affine>) -> Affine {
        let mut r = Affine::constant(self.constant.clone());
        for (v, c) in &self.coeffs {
            let t = map.get(v).cloned().unwrap_or_else(|| Affine::var(v));
            r = r.add(&t.scale(c));
        }
        r
    }

    pub fn to_closed_form(&self) -> ClosedForm {
        let mut r = ClosedForm::constant(self.constant.clone());
        for (v, c) in &self.coeffs {
            r = r.add(&ClosedForm::var(v).scale(c));
        }
        r
    }

    pub fn eval(&self, sizes: &BTreeMap<String, BigRational>) -> Option<BigRational> {
        let mut acc = self.constant.clone();
        for (v, c) in &self.coeffs {
            acc += c * sizes.get(v)?;
        }
        Some(acc)
    }
}

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_closed_form())
    }
}

fn is_integer(v: &BigRational) -> bool {
    v.is_integer()
}

fn to_i64(v: &BigRational, what: &str) -> Result<i64, ClosedFormError> {
    if !is_integer(v) {
        return Err(ClosedFormError::NonInteger(what.to_string()));
    }
    v.to_integer().to_i64().ok_or_else(|| ClosedFormError::Unsupported(format!("{what} is too large")))
}

impl ClosedForm {
    pub fn zero() -> Self {
        ClosedForm::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut f = ClosedForm::zero();
        f.add_term(TermKey::default(), c);
        f
    }

    pub fn var(v: &str) -> Self {
        let mut key = TermKey::default();
        key.mono.insert(v.to_string(), 1);
        let mut f = ClosedForm::zero();
        f.add_term(key, rat(1));
        f
    }

    /// `s(v)` with coefficient 1. `Pow(1)` is the constant 1.
    pub fn special(v: &str, s: Special) -> Self {
        let mut key = TermKey::default();
        match &s {
            Special::Pow(b) if b.is_one() => {}
            Special::Pow(b) if b.is_zero() => {
                // 0^v is not representable; callers never build it
                panic!("0^{v}")
            }
            _ => {
                key.special.insert(v.to_string(), s);
            }
        }
        let mut f = ClosedForm::zero();
        f.add_term(key, rat(1));
        f
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TermKey, &BigRational)> {
        self.terms.iter()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (TermKey, BigRational)>) -> Self {
        let mut f = ClosedForm::zero();
        for (k, c) in terms {
            f.add_term(k, c);
        }
        f
    }

    fn add_term(&mut self, mut key: TermKey, c: BigRational) {
        if c.is_zero() {
            return;
        }
        key.mono.retain(|_, e| *e > 0);
        key.special.retain(|_, s| !matches!(s, Special::Pow(b) if b.is_one()));
        let e = self.terms.entry(key.clone()).or_insert_with(BigRational::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => self.terms.get(&TermKey::default()).cloned(),
            _ => None,
        }
    }

    /// Variables the form depends on.
    pub fn vars(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .terms
            .keys()
            .flat_map(|k| k.mono.keys().chain(k.special.keys()).cloned())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn depends_on(&self, v: &str) -> bool {
        self.terms.keys().any(|k| k.mono.contains_key(v) || k.special.contains_key(v))
    }

    pub fn add(&self, o: &ClosedForm) -> ClosedForm {
        let mut r = self.clone();
        for (k, c) in &o.terms {
            r.add_term(k.clone(), c.clone());
        }
        r
    }

    pub fn sub(&self, o: &ClosedForm) -> ClosedForm {
        self.add(&o.scale(&rat(-1)))
    }

    pub fn scale(&self, k: &BigRational) -> ClosedForm {
        if k.is_zero() {
            return ClosedForm::zero();
        }
        ClosedForm {
            terms: self.terms.iter().map(|(t, c)| (t.clone(), c * k)).collect(),
        }
    }

    pub fn mul(&self, o: &ClosedForm) -> Result<ClosedForm, ClosedFormError> {
        let mut r = ClosedForm::zero();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &o.terms {
                let mut key = ka.clone();
                for (v, e) in &kb.mono {
                    *key.mono.entry(v.clone()).or_insert(0) += e;
                }
                for (v, s) in &kb.special {
                    match (key.special.get(v), s) {
                        (None, _) => {
                            key.special.insert(v.clone(), s.clone());
                        }
                        (Some(Special::Pow(a)), Special::Pow(b)) => {
                            let ab = a * b;
                            if ab.is_one() {
                                key.special.remove(v);
                            } else {
                                key.special.insert(v.clone(), Special::Pow(ab));
                            }
                        }
                        (Some(a), b) => {
                            return Err(ClosedFormError::Unsupported(format!(
                                "product of {} and {} on {v}",
                                special_text(a, v),
                                special_text(b, v)
                            )))
                        }
                    }
                }
                r.add_term(key, ca * cb);
            }
        }
        Ok(r)
    }

    pub fn pow(&self, k: u32) -> Result<ClosedForm, ClosedFormError> {
        let mut acc = ClosedForm::constant(rat(1));
        for _ in 0..k {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }

    /// Exact value under `sizes`. Variables under `b^v`, `fib` and `lucas`
    /// must be bound to integers.
    pub fn evaluate(&self, sizes: &BTreeMap<String, BigRational>) -> Result<BigRational, ClosedFormError> {
        let mut total = BigRational::zero();
        for (k, c) in &self.terms {
            let mut t = c.clone();
            for (v, e) in &k.mono {
                let x = sizes.get(v).ok_or_else(|| ClosedFormError::Unbound(v.clone()))?;
                t *= pow_int(x, i64::from(*e));
            }
            for (v, s) in &k.special {
                let x = sizes.get(v).ok_or_else(|| ClosedFormError::Unbound(v.clone()))?;
                let n = to_i64(x, v)?;
                t *= match s {
                    Special::Pow(b) => pow_int(b, n),
                    Special::Fib => BigRational::from_integer(fib_lucas(n).0),
                    Special::Lucas => BigRational::from_integer(fib_lucas(n).1),
                };
            }
            total += t;
        }
        Ok(total)
    }

    /// Replaces variables by affine expressions. Special factors need
    /// integer shifts, and `fib`/`lucas` a unit coefficient.
    pub fn substitute(&self, map: &BTreeMap<String, Affine>) -> Result<ClosedForm, ClosedFormError> {
        let mut r = ClosedForm::zero();
        for (k, c) in &self.terms {
            let mut t = ClosedForm::constant(c.clone());
            for (v, e) in &k.mono {
                let a = map.get(v).map(Affine::to_closed_form).unwrap_or_else(|| ClosedForm::var(v));
                t = t.mul(&a.pow(*e)?)?;
            }
            for (v, s) in &k.special {
                let f = match map.get(v) {
                    None => ClosedForm::special(v, s.clone()),
                    Some(a) => special_at(s, a, v)?,
                };
                t = t.mul(&f)?;
            }
            r = r.add(&t);
        }
        Ok(r)
    }

    /// Substitutes constants for variables.
    pub fn at(&self, bindings: &[(&str, BigRational)]) -> Result<ClosedForm, ClosedFormError> {
        let map = bindings.iter().map(|(v, x)| (v.to_string(), Affine::constant(x.clone()))).collect();
        self.substitute(&map)
    }

    /// Identity for a parsed or constructed form; kept for symmetry with the
    /// text form, whose printing is always canonical.
    pub fn canonicalize(&self) -> ClosedForm {
        ClosedForm::from_terms(self.terms.iter().map(|(k, c)| (k.clone(), c.clone())))
    }

    /// Decimal rendering with `fib`/`lucas` expanded into powers of the
    /// golden ratio and its conjugate, coefficients to 2 decimals.
    pub fn power_form(&self) -> String {
        let sqrt5 = 5f64.sqrt();
        let phi = (1.0 + sqrt5) / 2.0;
        let psi = (1.0 - sqrt5) / 2.0;
        let mut parts: Vec<(f64, String)> = Vec::new();
        let mut merged: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
        for (k, c) in &self.terms {
            let c = c.to_f64().unwrap_or(f64::NAN);
            let fl: Vec<(&String, &Special)> = k.special.iter().filter(|(_, s)| !matches!(s, Special::Pow(_))).collect();
            if fl.len() != 1 {
                let mut rest = ClosedForm::zero();
                rest.add_term(k.clone(), rat(1));
                parts.push((c, rest.to_string()));
                continue;
            }
            let (v, s) = fl[0];
            let mut key = k.clone();
            key.special.remove(v);
            let mut rest = ClosedForm::zero();
            rest.add_term(key, rat(1));
            let e = merged.entry((v.clone(), rest.to_string())).or_insert((0.0, 0.0));
            match s {
                Special::Fib => {
                    e.0 += c / sqrt5;
                    e.1 -= c / sqrt5;
                }
                _ => {
                    e.0 += c;
                    e.1 += c;
                }
            }
        }
        let mut out = String::new();
        for ((v, rest), (a, b)) in merged {
            let tail = if rest == "1" { String::new() } else { format!("*{rest}") };
            out.push_str(&format!("{}{:.2}*{:.2}^{v}{tail}", if out.is_empty() { "" } else { " + " }, a, phi));
            out.push_str(&format!(" + {b:.2}*({psi:.2})^{v}{tail}"));
        }
        for (c, rest) in parts {
            let body = if rest == "1" { format!("{c:.2}") } else { format!("{c:.2}*{rest}") };
            if out.is_empty() {
                out = body;
            } else {
                out.push_str(" + ");
                out.push_str(&body);
            }
        }
        if out.is_empty() {
            "0".into()
        } else {
            out.replace("+ -", "- ")
        }
    }
}

/// `s(a)` for an affine argument `a`.
fn special_at(s: &Special, a: &Affine, v: &str) -> Result<ClosedForm, ClosedFormError> {
    let k = to_i64(&a.constant, &format!("shift of {}", special_text(s, v)))?;
    match s {
        Special::Pow(b) => {
            let mut r = ClosedForm::constant(pow_int(b, k));
            for (w, c) in &a.coeffs {
                let c = to_i64(c, &format!("coefficient of {w} in an exponent"))?;
                let bc = pow_int(b, c);
                r = r.mul(&ClosedForm::special(w, Special::Pow(bc)))?;
            }
            Ok(r)
        }
        Special::Fib | Special::Lucas => {
            let (fk, lk) = fib_lucas(k);
            let (fk, lk) = (BigRational::from_integer(fk), BigRational::from_integer(lk));
            if a.coeffs.is_empty() {
                return Ok(ClosedForm::constant(if *s == Special::Fib { fk } else { lk }));
            }
            let (w, c) = match a.coeffs.iter().collect::<Vec<_>>()[..] {
                [(w, c)] => (w, c),
                _ => return Err(ClosedFormError::Unsupported(format!("{} of a sum of variables", special_text(s, v)))),
            };
            if !c.is_one() {
                return Err(ClosedFormError::Unsupported(format!("{} of a scaled variable", special_text(s, v))));
            }
            let fw = ClosedForm::special(w, Special::Fib);
            let lw = ClosedForm::special(w, Special::Lucas);
            let half = BigRational::new(1.into(), 2.into());
            Ok(match s {
                // fib(w+k) = (fib(w) lucas(k) + lucas(w) fib(k)) / 2
                Special::Fib => fw.scale(&(&lk * &half)).add(&lw.scale(&(&fk * &half))),
                // lucas(w+k) = (5 fib(w) fib(k) + lucas(w) lucas(k)) / 2
                _ => fw.scale(&(&fk * rat(5) * &half)).add(&lw.scale(&(&lk * &half))),
            })
        }
    }
}

fn special_text(s: &Special, v: &str) -> String {
    match s {
        Special::Pow(b) => format!("{}^{v}", base_text(b)),
        Special::Fib => format!("fib({v})"),
        Special::Lucas => format!("lucas({v})"),
    }
}

fn coeff_text(c: &BigRational) -> String {
    let s = format_rational(c);
    if s.contains('/') {
        format!("({s})")
    } else {
        s
    }
}

fn base_text(b: &BigRational) -> String {
    let s = format_rational(b);
    if s.contains('/') || b.is_negative() {
        format!("({s})")
    } else {
        s
    }
}

/// Print order: terms with special factors first, then by total degree
/// (highest first), then by variable name with later names first.
fn display_order(a: &TermKey, b: &TermKey) -> std::cmp::Ordering {
    let rev_vars = |k: &TermKey| -> Vec<std::cmp::Reverse<(String, u32)>> {
        k.mono.iter().rev().map(|(v, e)| std::cmp::Reverse((v.clone(), *e))).collect()
    };
    let rev_special = |k: &TermKey| -> Vec<(std::cmp::Reverse<String>, Special)> {
        k.special.iter().rev().map(|(v, s)| (std::cmp::Reverse(v.clone()), s.clone())).collect()
    };
    b.special
        .len()
        .cmp(&a.special.len())
        .then_with(|| rev_special(a).cmp(&rev_special(b)))
        .then_with(|| b.degree().cmp(&a.degree()))
        .then_with(|| rev_vars(a).cmp(&rev_vars(b)))
}

impl fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let mut keys: Vec<&TermKey> = self.terms.keys().collect();
        keys.sort_by(|a, b| display_order(a, b));
        for (i, k) in keys.into_iter().enumerate() {
            let c = &self.terms[k];
            let neg = c.is_negative();
            if i == 0 {
                if neg {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            let mag = c.abs();
            let mut factors: Vec<String> = Vec::new();
            for (v, e) in k.mono.iter().rev() {
                factors.push(if *e == 1 { v.clone() } else { format!("{v}^{e}") });
            }
            for (v, s) in k.special.iter().rev() {
                factors.push(special_text(s, v));
            }
            if factors.is_empty() {
                f.write_str(&coeff_text(&mag))?;
            } else if mag.is_one() {
                f.write_str(&factors.join("*"))?;
            } else {
                write!(f, "{}*{}", coeff_text(&mag), factors.join("*"))?;
            }
        }
        Ok(())
    }
}

/// Splits `f` by its dependence on `v`: for each base `b` (1 for purely
/// polynomial terms) the coefficients of `b^v * v^j`, as forms free of `v`.
pub(crate) fn split_by_base(f: &ClosedForm, v: &str) -> Result<BTreeMap<BigRational, Vec<ClosedForm>>, ClosedFormError> {
    let mut out: BTreeMap<BigRational, Vec<ClosedForm>> = BTreeMap::new();
    for (k, c) in &f.terms {
        let mut key = k.clone();
        let j = key.mono.remove(v).unwrap_or(0) as usize;
        let base = match key.special.remove(v) {
            None => rat(1),
            Some(Special::Pow(b)) => b,
            Some(s) => return Err(ClosedFormError::Unsupported(format!("{} in an inhomogeneous term", special_text(&s, v)))),
        };
        let slot = out.entry(base).or_default();
        if slot.len() <= j {
            slot.resize(j + 1, ClosedForm::zero());
        }
        slot[j].add_term(key, c.clone());
    }
    Ok(out)
}

/// Integer `floor(sqrt(n))` when `n` is a perfect square.
pub(crate) fn exact_sqrt(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.sqrt();
    (&r * &r == *n).then_some(r)
}
