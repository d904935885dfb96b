//! Linear recurrences with constant coefficients.
//!
//! `f(n) = Σ a_s f(n - s) + q(n)` for `n >= start`, with `f(0..start)`
//! given. The homogeneous part is solved through the characteristic
//! polynomial (rational roots, or the `x^2 - x - 1` pair expressed with
//! `fib` and `lucas`); the particular part by undetermined coefficients
//! `n^m b^n P(n)` for every `b^n n^j` group of `q`. Coefficients may
//! depend on other variables, which are carried symbolically.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use super::{exact_sqrt, pow_int, rat, split_by_base, ClosedForm, ClosedFormError, Special};

/// Argument of a recursive call relative to the ranking variable `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecArg {
    /// `n - k`
    Shift(u32),
    /// Anything else, kept as text for reporting (e.g. `N/2`).
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecCall {
    pub coeff: BigRational,
    pub arg: RecArg,
}

/// `name(var) = Σ calls + rhs` for `var >= start`; `base[k]` is the value
/// at `var = k` for every `k < start`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recurrence {
    pub name: String,
    pub var: String,
    pub calls: Vec<RecCall>,
    pub rhs: ClosedForm,
    pub start: u32,
    pub base: BTreeMap<u32, ClosedForm>,
}

fn plus(out: &mut String, s: &str) {
    if out.is_empty() {
        out.push_str(s);
    } else if let Some(rest) = s.strip_prefix('-') {
        out.push_str(" - ");
        out.push_str(rest);
    } else {
        out.push_str(" + ");
        out.push_str(s);
    }
}

impl fmt::Display for Recurrence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.base {
            writeln!(f, "{}({k}) = {v}", self.name)?;
        }
        let mut body = String::new();
        for c in &self.calls {
            let arg = match &c.arg {
                RecArg::Shift(0) => self.var.clone(),
                RecArg::Shift(k) => format!("{}-{k}", self.var),
                RecArg::Other(s) => s.clone(),
            };
            let call = format!("{}({arg})", self.name);
            if c.coeff.is_one() {
                plus(&mut body, &call);
            } else {
                plus(&mut body, &format!("{}*{call}", ClosedForm::constant(c.coeff.clone())));
            }
        }
        if !self.rhs.is_zero() || body.is_empty() {
            plus(&mut body, &self.rhs.to_string());
        }
        write!(f, "{}({}) = {body}    for {} >= {}", self.name, self.var, self.var, self.start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecurrenceClass {
    /// No recursive call.
    Constant,
    /// Linear with constant coefficients, of the given order (1 or 2).
    Linear { order: u32 },
    Unsupported(String),
}

impl fmt::Display for RecurrenceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecurrenceClass::Constant => f.write_str("constant"),
            RecurrenceClass::Linear { order } => write!(f, "linear, order {order}"),
            RecurrenceClass::Unsupported(why) => write!(f, "unsupported ({why})"),
        }
    }
}

/// Summed coefficient per shift, zero entries dropped.
fn shifts(r: &Recurrence) -> Result<BTreeMap<u32, BigRational>, String> {
    let mut a: BTreeMap<u32, BigRational> = BTreeMap::new();
    for c in &r.calls {
        match &c.arg {
            RecArg::Shift(0) => return Err(format!("{}({}) calls itself with the same argument", r.name, r.var)),
            RecArg::Shift(k) => *a.entry(*k).or_insert_with(BigRational::zero) += &c.coeff,
            RecArg::Other(s) => return Err(format!("call {}({s}) is not a constant step", r.name)),
        }
    }
    a.retain(|_, c| !c.is_zero());
    Ok(a)
}

pub fn classify(r: &Recurrence) -> RecurrenceClass {
    let a = match shifts(r) {
        Ok(a) => a,
        Err(why) => return RecurrenceClass::Unsupported(why),
    };
    if let Err(e) = split_by_base(&r.rhs, &r.var) {
        return RecurrenceClass::Unsupported(e.to_string());
    }
    match a.keys().next_back() {
        None => RecurrenceClass::Constant,
        Some(&d) if d <= 2 => RecurrenceClass::Linear { order: d },
        Some(&d) => RecurrenceClass::Unsupported(format!("order {d}")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("{name}({n}) is {got}, expected {want}")]
    BaseCase { name: String, n: u32, want: String, got: String },
    #[error("recurrence fails at {var} = {n}")]
    Recurrence { var: String, n: u32 },
    #[error("recurrence is not checkable: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Arithmetic(#[from] ClosedFormError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Unsolved {
    #[error("unsupported recurrence: {0}")]
    Unsupported(String),
    #[error("characteristic polynomial {0} has irrational roots")]
    IrrationalRoots(String),
    #[error("missing base case {name}({n})")]
    MissingBase { name: String, n: u32 },
    #[error("base case {name}({n}) does not follow the closed form")]
    Piecewise { name: String, n: u32 },
    #[error(transparent)]
    Arithmetic(#[from] ClosedFormError),
    #[error("candidate rejected: {0}")]
    Verify(#[from] VerifyError),
}

/// Highest index checked past the base cases.
const VERIFY_UPTO: u32 = 30;

/// Checks `cf` against the base cases symbolically and against the
/// recursive equation for every `n` from `start` up to 30 (or 30 steps past
/// `start`), exactly in all other variables.
pub fn verify_solution(cf: &ClosedForm, r: &Recurrence) -> Result<(), VerifyError> {
    let a = shifts(r).map_err(VerifyError::Unsupported)?;
    let at = |n: i64| cf.at(&[(&r.var, rat(n))]);
    for n in 0..r.start {
        let want = r.base.get(&n).ok_or_else(|| VerifyError::Unsupported(format!("no base case for {}({n})", r.name)))?;
        let got = at(i64::from(n))?;
        if &got != want {
            return Err(VerifyError::BaseCase {
                name: r.name.clone(),
                n,
                want: want.to_string(),
                got: got.to_string(),
            });
        }
    }
    let last = if r.start >= VERIFY_UPTO { r.start + VERIFY_UPTO } else { VERIFY_UPTO };
    for n in r.start..=last {
        let mut rhs = r.rhs.at(&[(&r.var, rat(i64::from(n)))])?;
        for (s, c) in &a {
            rhs = rhs.add(&at(i64::from(n) - i64::from(*s))?.scale(c));
        }
        if at(i64::from(n))? != rhs {
            return Err(VerifyError::Recurrence { var: r.var.clone(), n });
        }
    }
    Ok(())
}

/// Coefficients (lowest degree first) of `(n - s)^e`.
fn shifted_power(s: &BigRational, e: u32) -> Vec<BigRational> {
    let mut poly = vec![rat(1)];
    for _ in 0..e {
        // multiply by (n - s)
        let mut next = vec![BigRational::zero(); poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * s;
        }
        poly = next;
    }
    poly
}

/// Solves `m x = rhs` by Gauss-Jordan elimination.
fn solve_linear(mut m: Vec<Vec<BigRational>>, mut rhs: Vec<ClosedForm>) -> Option<Vec<ClosedForm>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let inv = m[col][col].recip();
        for x in m[col].iter_mut() {
            *x *= &inv;
        }
        rhs[col] = rhs[col].scale(&inv);
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in 0..n {
                    let d = &m[col][c] * &f;
                    m[r][c] -= d;
                }
                rhs[r] = rhs[r].sub(&rhs[col].scale(&f));
            }
        }
    }
    Some(rhs)
}

fn char_poly_text(a: &BTreeMap<u32, BigRational>, d: u32) -> String {
    let mut f = ClosedForm::special("x", Special::Pow(rat(1))).scale(&rat(0));
    let x = ClosedForm::var("x");
    f = f.add(&x.pow(d).expect("polynomial"));
    for (s, c) in a {
        f = f.sub(&x.pow(d - s).expect("polynomial").scale(c));
    }
    f.to_string()
}

/// Homogeneous basis functions of `var` and the multiplicity of each
/// rational root.
fn homogeneous(a: &BTreeMap<u32, BigRational>, var: &str) -> Result<(Vec<ClosedForm>, BTreeMap<BigRational, u32>), Unsolved> {
    let d = *a.keys().next_back().expect("order >= 1");
    let c = |s: u32| a.get(&s).cloned().unwrap_or_else(BigRational::zero);
    let pow = |b: &BigRational| ClosedForm::special(var, Special::Pow(b.clone()));
    if d == 1 {
        let r = c(1);
        return Ok((vec![pow(&r)], BTreeMap::from([(r, 1)])));
    }
    let (a1, a2) = (c(1), c(2));
    if a1.is_one() && a2.is_one() {
        return Ok((
            vec![ClosedForm::special(var, Special::Fib), ClosedForm::special(var, Special::Lucas)],
            BTreeMap::new(),
        ));
    }
    let disc = &a1 * &a1 + &a2 * rat(4);
    let root = || -> Option<BigRational> {
        if disc.is_negative() {
            return None;
        }
        Some(BigRational::new(exact_sqrt(disc.numer())?, exact_sqrt(disc.denom())?))
    };
    let Some(s) = root() else {
        return Err(Unsolved::IrrationalRoots(char_poly_text(a, d)));
    };
    let half = BigRational::new(1.into(), 2.into());
    let r1 = (&a1 + &s) * &half;
    let r2 = (&a1 - &s) * &half;
    if s.is_zero() {
        let b = pow(&r1);
        let nb = ClosedForm::var(var).mul(&b)?;
        Ok((vec![b, nb], BTreeMap::from([(r1, 2)])))
    } else {
        Ok((vec![pow(&r1), pow(&r2)], BTreeMap::from([(r1, 1), (r2, 1)])))
    }
}

/// Particular solution by undetermined coefficients.
fn particular(r: &Recurrence, a: &BTreeMap<u32, BigRational>, mult: &BTreeMap<BigRational, u32>) -> Result<ClosedForm, Unsolved> {
    let groups = split_by_base(&r.rhs, &r.var).map_err(|e| Unsolved::Unsupported(e.to_string()))?;
    let mut out = ClosedForm::zero();
    for (b, q) in groups {
        let m = mult.get(&b).copied().unwrap_or(0);
        let k = q.len() - 1;
        // column j: L[n^(m+j) b^n] / b^n, as coefficients by degree
        let cols: Vec<Vec<BigRational>> = (0..=k)
            .map(|j| {
                let e = m + j as u32;
                let mut poly = vec![BigRational::zero(); e as usize + 1];
                poly[e as usize] = rat(1);
                for (s, c) in a {
                    let w = c * pow_int(&b, -i64::from(*s));
                    for (i, x) in shifted_power(&rat(i64::from(*s)), e).into_iter().enumerate() {
                        poly[i] -= &w * x;
                    }
                }
                poly
            })
            .collect();
        let coef = |deg: usize, j: usize| cols[j].get(deg).cloned().unwrap_or_else(BigRational::zero);
        let mut c = vec![ClosedForm::zero(); k + 1];
        for deg in (0..=k).rev() {
            let mut acc = q[deg].clone();
            for (j, cj) in c.iter().enumerate().skip(deg + 1) {
                acc = acc.sub(&cj.scale(&coef(deg, j)));
            }
            let diag = coef(deg, deg);
            if diag.is_zero() {
                return Err(Unsolved::Unsupported("degenerate particular solution".into()));
            }
            c[deg] = acc.scale(&diag.recip());
        }
        let bn = ClosedForm::special(&r.var, Special::Pow(b.clone()));
        for (j, cj) in c.into_iter().enumerate() {
            let nj = ClosedForm::var(&r.var).pow(m + j as u32)?;
            out = out.add(&cj.mul(&nj)?.mul(&bn)?);
        }
    }
    Ok(out)
}

/// Closed form of `r`, returned only after [`verify_solution`] accepts it.
pub fn solve_recurrence(r: &Recurrence) -> Result<ClosedForm, Unsolved> {
    let order = match classify(r) {
        RecurrenceClass::Unsupported(why) => return Err(Unsolved::Unsupported(why)),
        RecurrenceClass::Constant => 0,
        RecurrenceClass::Linear { order } => order,
    };
    for n in 0..r.start {
        if !r.base.contains_key(&n) {
            return Err(Unsolved::MissingBase { name: r.name.clone(), n });
        }
    }
    if r.start < order {
        return Err(Unsolved::MissingBase {
            name: r.name.clone(),
            n: r.start,
        });
    }
    let a = shifts(r).map_err(Unsolved::Unsupported)?;
    let cf = if order == 0 {
        r.rhs.clone()
    } else {
        let (basis, mult) = homogeneous(&a, &r.var)?;
        let p = particular(r, &a, &mult)?;
        let fit: Vec<u32> = (r.start - order..r.start).collect();
        let mut m = Vec::new();
        let mut rhs = Vec::new();
        for &t in &fit {
            let row: Result<Vec<BigRational>, ClosedFormError> = basis
                .iter()
                .map(|b| b.evaluate(&BTreeMap::from([(r.var.clone(), rat(i64::from(t)))])))
                .collect();
            m.push(row?);
            rhs.push(r.base[&t].sub(&p.at(&[(&r.var, rat(i64::from(t)))])?));
        }
        let coeffs = solve_linear(m, rhs).ok_or_else(|| Unsolved::Unsupported("singular initial-value system".into()))?;
        let mut cf = p;
        for (c, b) in coeffs.iter().zip(&basis) {
            cf = cf.add(&c.mul(b)?);
        }
        cf
    };
    for n in 0..r.start {
        if cf.at(&[(&r.var, rat(i64::from(n)))])? != r.base[&n] {
            return Err(Unsolved::Piecewise { name: r.name.clone(), n });
        }
    }
    verify_solution(&cf, r)?;
    Ok(cf)
}
