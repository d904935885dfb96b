//! Instruction- and block-level energy costs.
//!
//! Model files are line oriented; `#` starts a comment:
//!
//! ```text
//! instr add 2.5                   # cost of one `add`, in nJ
//! block traverse:loopbody 12      # cost of a whole block; overrides instr costs
//! pred nth/3 avg 1215439 size 2 elem($1) elem($1)
//! ```
//!
//! A `pred` line is a trust assertion for an abstract predicate: a built-in
//! such as `nth/3` or a declared external function. Its cost replaces the
//! instruction costs of the literal, and each `size <k> <lo> <hi>` clause
//! bounds the size of argument `k` (0-based) by expressions over the sizes of
//! the other arguments: `$j` is the size of argument `j`, `elem($j)` the size
//! of the elements of list argument `j`, `inf` is unbounded, and terms may be
//! combined as in `2*$0+1`.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::hcir::{Builtin, Literal, PredKind, Program, RegularType};
use crate::ir::Opcode;

/// Parses a non-negative decimal (`12`, `27.03`, `.5`) or fraction (`1/3`).
pub fn parse_decimal(s: &str) -> Option<BigRational> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = if let Some((p, q)) = body.split_once('/') {
        let p: BigInt = p.parse().ok()?;
        let q: BigInt = q.parse().ok()?;
        if q.is_zero() {
            return None;
        }
        BigRational::new(p, q)
    } else {
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() && frac.is_empty() {
            return None;
        }
        if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return None;
        }
        let digits: BigInt = format!("{int}{frac}").parse().ok()?;
        BigRational::new(digits, num_traits::pow(BigInt::from(10), frac.len()))
    };
    Some(if neg { -v } else { v })
}

/// Renders a rational as a terminating decimal when it is one, else `p/q`.
pub fn format_rational(v: &BigRational) -> String {
    if v.is_integer() {
        return v.to_integer().to_string();
    }
    let mut d = v.denom().clone();
    let mut k = 0usize;
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let (mut twos, mut fives) = (0usize, 0usize);
    while (&d % &two).is_zero() {
        d /= &two;
        twos += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        fives += 1;
    }
    if d != BigInt::from(1) {
        return format!("{}/{}", v.numer(), v.denom());
    }
    k = k.max(twos).max(fives);
    let scaled = (v * BigRational::from_integer(num_traits::pow(BigInt::from(10), k))).to_integer();
    let neg = scaled.is_negative();
    let digits = scaled.abs().to_string();
    let digits = format!("{digits:0>width$}", width = k + 1);
    let (i, f) = digits.split_at(digits.len() - k);
    format!("{}{i}.{f}", if neg { "-" } else { "" })
}

/// One operand of a size expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SizeAtom {
    /// Size of argument `k`.
    Arg(usize),
    /// Size of the elements of list argument `k`.
    Elem(usize),
}

/// Linear size expression, or unbounded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SizeExpr {
    Inf,
    Linear {
        constant: BigRational,
        terms: Vec<(BigRational, SizeAtom)>,
    },
}

impl SizeExpr {
    pub fn parse(s: &str) -> Option<SizeExpr> {
        if s == "inf" {
            return Some(SizeExpr::Inf);
        }
        let mut constant = BigRational::zero();
        let mut terms = Vec::new();
        // split on + and - while keeping signs
        let mut parts = Vec::new();
        let mut cur = String::new();
        for (i, c) in s.char_indices() {
            if (c == '+' || c == '-') && i > 0 {
                parts.push(std::mem::take(&mut cur));
            }
            cur.push(c);
        }
        parts.push(cur);
        for p in parts {
            let (sign, p) = match p.strip_prefix('-') {
                Some(r) => (-BigRational::from_integer(1.into()), r),
                None => (BigRational::from_integer(1.into()), p.strip_prefix('+').unwrap_or(&p)),
            };
            let (coef, atom) = match p.split_once('*') {
                Some((c, a)) => (parse_decimal(c)?, a),
                None => (BigRational::from_integer(1.into()), p),
            };
            let atom = if let Some(k) = atom.strip_prefix('$') {
                Some(SizeAtom::Arg(k.parse().ok()?))
            } else if let Some(k) = atom.strip_prefix("elem($").and_then(|r| r.strip_suffix(')')) {
                Some(SizeAtom::Elem(k.parse().ok()?))
            } else {
                None
            };
            match atom {
                Some(a) => terms.push((sign * coef, a)),
                None if !p.contains('*') => constant += sign * parse_decimal(p)?,
                None => return None,
            }
        }
        Some(SizeExpr::Linear { constant, terms })
    }

    fn max_arg(&self) -> Option<usize> {
        match self {
            SizeExpr::Inf => None,
            SizeExpr::Linear { terms, .. } => terms
                .iter()
                .map(|(_, a)| match a {
                    SizeAtom::Arg(k) | SizeAtom::Elem(k) => *k,
                })
                .max(),
        }
    }

    /// Evaluates against concrete argument sizes; `None` marks an unknown size.
    pub fn eval(&self, sizes: &[SizeBounds]) -> Option<Extended> {
        match self {
            SizeExpr::Inf => Some(Extended::Inf),
            SizeExpr::Linear { constant, terms } => {
                let mut acc = constant.clone();
                for (c, a) in terms {
                    let k = match a {
                        SizeAtom::Arg(k) => *k,
                        SizeAtom::Elem(_) => return None,
                    };
                    let b = sizes.get(k)?;
                    if b.lower != b.upper {
                        return None;
                    }
                    match &b.lower {
                        Extended::Finite(v) => acc += c * v,
                        Extended::Inf => return Some(Extended::Inf),
                    }
                }
                Some(Extended::Finite(acc))
            }
        }
    }
}

impl fmt::Display for SizeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeExpr::Inf => f.write_str("inf"),
            SizeExpr::Linear { constant, terms } => {
                let mut first = true;
                for (c, a) in terms {
                    let atom = match a {
                        SizeAtom::Arg(k) => format!("${k}"),
                        SizeAtom::Elem(k) => format!("elem(${k})"),
                    };
                    let neg = c.is_negative();
                    if !first || neg {
                        f.write_str(if neg { "-" } else { "+" })?;
                    }
                    let mag = c.abs();
                    if mag == BigRational::from_integer(1.into()) {
                        f.write_str(&atom)?;
                    } else {
                        write!(f, "{}*{atom}", format_rational(&mag))?;
                    }
                    first = false;
                }
                if first {
                    write!(f, "{}", format_rational(constant))
                } else if !constant.is_zero() {
                    let s = if constant.is_negative() { "-" } else { "+" };
                    write!(f, "{s}{}", format_rational(&constant.abs()))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Rational extended with +∞.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Extended {
    Finite(BigRational),
    Inf,
}

/// Lower and upper bound on a size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeBounds {
    pub lower: Extended,
    pub upper: Extended,
}

impl SizeBounds {
    pub fn new(lower: Extended, upper: Extended) -> Option<Self> {
        (lower <= upper).then_some(SizeBounds { lower, upper })
    }

    pub fn exact(v: BigRational) -> Self {
        SizeBounds {
            lower: Extended::Finite(v.clone()),
            upper: Extended::Finite(v),
        }
    }

    pub fn contains(&self, v: &BigRational) -> bool {
        let v = Extended::Finite(v.clone());
        self.lower <= v && v <= self.upper
    }
}

/// `size` clause of an assertion: bounds on the size of argument `arg`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeRelation {
    pub arg: usize,
    pub lower: SizeExpr,
    pub upper: SizeExpr,
}

impl SizeRelation {
    /// Bounds for concrete input sizes, or `None` when they are unknown.
    pub fn bounds(&self, sizes: &[SizeBounds]) -> Option<SizeBounds> {
        SizeBounds::new(self.lower.eval(sizes)?, self.upper.eval(sizes)?)
    }
}

/// Trusted facts about an abstract predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustAssertion {
    pub name: String,
    pub arity: usize,
    /// Argument types on call and on success; empty when not known.
    pub pre: Vec<Option<RegularType>>,
    pub post: Vec<RegularType>,
    pub sizes: Vec<SizeRelation>,
    /// Average energy per call, nJ.
    pub energy: BigRational,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyModel {
    pub instr: BTreeMap<Opcode, BigRational>,
    pub blocks: BTreeMap<(String, String), BigRational>,
    pub assertions: Vec<TrustAssertion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ModelError {
    pub line: usize,
    pub kind: ModelErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelErrorKind {
    #[error("malformed line: {0}")]
    Malformed(String),
    #[error("duplicate entry for {0}")]
    Duplicate(String),
    #[error("negative cost {0}")]
    Negative(String),
    #[error("unknown opcode `{0}`")]
    UnknownOpcode(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// Parses a model file.
pub fn load_cost_model(text: &str) -> Result<EnergyModel, ModelError> {
    let mut m = EnergyModel::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |kind| ModelError { line, kind };
        let content = raw.split('#').next().unwrap_or("");
        let words: Vec<&str> = content.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        let cost = |s: &str| -> Result<BigRational, ModelError> {
            let v = parse_decimal(s).ok_or_else(|| err(ModelErrorKind::Malformed(format!("bad cost `{s}`"))))?;
            if v.is_negative() {
                return Err(err(ModelErrorKind::Negative(s.to_string())));
            }
            Ok(v)
        };
        match words[0] {
            "instr" => {
                let [_, op, c] = words[..] else {
                    return Err(err(ModelErrorKind::Malformed("expected `instr <opcode> <nJ>`".into())));
                };
                let op = Opcode::from_name(op).ok_or_else(|| err(ModelErrorKind::UnknownOpcode(op.to_string())))?;
                let c = cost(c)?;
                if m.instr.insert(op, c).is_some() {
                    return Err(err(ModelErrorKind::Duplicate(format!("instr {op}"))));
                }
            }
            "block" => {
                let [_, key, c] = words[..] else {
                    return Err(err(ModelErrorKind::Malformed("expected `block <function>:<label> <nJ>`".into())));
                };
                let Some((func, label)) = key.split_once(':').filter(|(a, b)| !a.is_empty() && !b.is_empty()) else {
                    return Err(err(ModelErrorKind::Malformed(format!("bad block key `{key}`"))));
                };
                let c = cost(c)?;
                if m.blocks.insert((func.to_string(), label.to_string()), c).is_some() {
                    return Err(err(ModelErrorKind::Duplicate(format!("block {key}"))));
                }
            }
            "pred" => {
                if words.len() < 4 {
                    return Err(err(ModelErrorKind::Malformed("expected `pred <name>/<arity> avg <nJ>`".into())));
                }
                let Some((name, arity)) = words[1].rsplit_once('/') else {
                    return Err(err(ModelErrorKind::Malformed(format!("bad predicate `{}`", words[1]))));
                };
                let arity: usize = arity
                    .parse()
                    .map_err(|_| err(ModelErrorKind::Malformed(format!("bad arity in `{}`", words[1]))))?;
                match words[2] {
                    "avg" => {}
                    "lower" | "upper" => {
                        return Err(err(ModelErrorKind::Unsupported(format!("`{}` energy aggregation", words[2]))))
                    }
                    other => return Err(err(ModelErrorKind::Malformed(format!("unknown aggregation `{other}`")))),
                }
                let energy = cost(words[3])?;
                let mut sizes = Vec::new();
                let mut rest = &words[4..];
                while !rest.is_empty() {
                    let ["size", k, lo, hi, tail @ ..] = rest else {
                        return Err(err(ModelErrorKind::Malformed("expected `size <arg> <lo> <hi>`".into())));
                    };
                    let arg: usize = k.parse().map_err(|_| err(ModelErrorKind::Malformed(format!("bad argument index `{k}`"))))?;
                    let parse = |s: &str| {
                        SizeExpr::parse(s).ok_or_else(|| err(ModelErrorKind::Malformed(format!("bad size expression `{s}`"))))
                    };
                    let (lower, upper) = (parse(lo)?, parse(hi)?);
                    let out_of_range = |e: &SizeExpr| e.max_arg().is_some_and(|j| j >= arity);
                    if arg >= arity || out_of_range(&lower) || out_of_range(&upper) {
                        return Err(err(ModelErrorKind::Malformed(format!("argument index out of range for {name}/{arity}"))));
                    }
                    sizes.push(SizeRelation { arg, lower, upper });
                    rest = tail;
                }
                if m.assertions.iter().any(|a| a.name == name && a.arity == arity) {
                    return Err(err(ModelErrorKind::Duplicate(format!("pred {name}/{arity}"))));
                }
                m.assertions.push(TrustAssertion {
                    name: name.to_string(),
                    arity,
                    pre: Vec::new(),
                    post: Vec::new(),
                    sizes,
                    energy,
                });
            }
            other => return Err(err(ModelErrorKind::Malformed(format!("unknown directive `{other}`")))),
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("no cost for `{opcode}` in block {block} and no block override")]
    MissingCost { opcode: Opcode, block: String },
    #[error("trust assertion for unknown predicate {0}")]
    UnknownPredicate(String),
}

/// Cost of one literal when its clause has no block override.
pub fn literal_cost(m: &EnergyModel, lit: &Literal, block: &str) -> Result<BigRational, CostError> {
    if let Literal::Builtin { op, args, .. } = lit {
        if let Some(a) = m.assertions.iter().find(|a| a.name == op.name() && a.arity == args.len()) {
            return Ok(a.energy.clone());
        }
    }
    opcode_sum(m, lit.charge(), block)
}

fn opcode_sum(m: &EnergyModel, ops: &[Opcode], block: &str) -> Result<BigRational, CostError> {
    let mut total = BigRational::zero();
    for op in ops {
        match m.instr.get(op) {
            Some(c) => total += c,
            None => {
                return Err(CostError::MissingCost {
                    opcode: *op,
                    block: block.to_string(),
                })
            }
        }
    }
    Ok(total)
}

/// Local cost of every clause, indexed like `p.clauses`. Calls contribute
/// only their own charges; callee costs are added by the analysis.
pub fn aggregate_block_costs(m: &EnergyModel, p: &Program) -> Result<Vec<BigRational>, CostError> {
    p.clauses
        .iter()
        .map(|c| {
            let Some(origin) = &c.origin else {
                return Ok(BigRational::zero());
            };
            if let Some(v) = m.blocks.get(&(origin.function.clone(), origin.label.clone())) {
                return Ok(v.clone());
            }
            let block = origin.to_string();
            let mut total = opcode_sum(m, &c.residual, &block)?;
            for lit in &c.body {
                total += literal_cost(m, lit, &block)?;
            }
            Ok(total)
        })
        .collect()
}

/// Default argument types of built-in abstract predicates.
fn builtin_types(b: Builtin) -> (Vec<Option<RegularType>>, Vec<RegularType>) {
    use RegularType::*;
    let any_list = || List(Box::new(Num));
    match b {
        Builtin::Nth => (vec![Some(Num), Some(any_list()), None], vec![Num, any_list(), Num]),
        Builtin::SetNth => (
            vec![Some(Num), Some(any_list()), Some(Num), None],
            vec![Num, any_list(), Num, any_list()],
        ),
        _ => {
            let n = b.arity();
            let mut pre = vec![Some(Num); n - 1];
            pre.push(None);
            (pre, vec![Num; n])
        }
    }
}

/// Attaches the model's trust assertions to `p`, filling in argument types.
pub fn emit_trust_assertions(m: &EnergyModel, p: &mut Program) -> Result<(), CostError> {
    let mut out = Vec::new();
    for a in &m.assertions {
        let mut a = a.clone();
        if let Some(b) = Builtin::from_name(&a.name, a.arity) {
            (a.pre, a.post) = builtin_types(b);
        } else if let Some(sig) = p
            .signature(&a.name)
            .filter(|s| s.kind == PredKind::Abstract && s.arity() == a.arity)
        {
            a.pre = sig
                .modes
                .iter()
                .zip(&sig.types)
                .map(|(m, t)| (*m == crate::hcir::Mode::In).then(|| t.clone()))
                .collect();
            a.post = sig.types.clone();
        } else {
            return Err(CostError::UnknownPredicate(format!("{}/{}", a.name, a.arity)));
        }
        out.push(a);
    }
    p.assertions = out;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> BigRational {
        parse_decimal(s).unwrap()
    }

    #[test]
    fn decimals() {
        assert_eq!(r("27.03"), BigRational::new(2703.into(), 100.into()));
        assert_eq!(r(".5"), BigRational::new(1.into(), 2.into()));
        assert_eq!(r("1/3"), BigRational::new(1.into(), 3.into()));
        assert!(parse_decimal("1.2.3").is_none());
        assert!(parse_decimal("abc").is_none());
        assert_eq!(format_rational(&r("27.03")), "27.03");
        assert_eq!(format_rational(&r("-0.05")), "-0.05");
        assert_eq!(format_rational(&r("1/3")), "1/3");
        assert_eq!(format_rational(&r("1215439")), "1215439");
        assert_eq!(format_rational(&r("0.125")), "0.125");
    }

    #[test]
    fn nth_assertion() {
        let m = load_cost_model("pred nth/3 avg 1215439 size 2 elem($1) elem($1)\n").unwrap();
        let a = &m.assertions[0];
        assert_eq!((a.name.as_str(), a.arity), ("nth", 3));
        assert_eq!(a.energy, r("1215439"));
        assert_eq!(a.sizes[0].lower, SizeExpr::Linear {
            constant: BigRational::zero(),
            terms: vec![(r("1"), SizeAtom::Elem(1))]
        });
        assert_eq!(a.sizes[0].lower.to_string(), "elem($1)");
    }

    #[test]
    fn empty_and_comments() {
        assert_eq!(load_cost_model("").unwrap(), EnergyModel::default());
        let m = load_cost_model("# unit model\ninstr add 1 # trailing\n\nblock f:entry 2.5\n").unwrap();
        assert_eq!(m.instr[&Opcode::Add], r("1"));
        assert_eq!(m.blocks[&("f".to_string(), "entry".to_string())], r("2.5"));
    }

    #[test]
    fn errors_name_the_line() {
        let e = load_cost_model("instr add 1\ninstr add 2\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(matches!(e.kind, ModelErrorKind::Duplicate(_)));
        let e = load_cost_model("instr add -1\n").unwrap_err();
        assert!(matches!(e.kind, ModelErrorKind::Negative(_)));
        let e = load_cost_model("\ninstr fadd 1\n").unwrap_err();
        assert_eq!((e.line, e.kind), (2, ModelErrorKind::UnknownOpcode("fadd".into())));
        let e = load_cost_model("pred nth/3 upper 5\n").unwrap_err();
        assert!(matches!(e.kind, ModelErrorKind::Unsupported(_)));
        let e = load_cost_model("block nolabel 5\n").unwrap_err();
        assert!(matches!(e.kind, ModelErrorKind::Malformed(_)));
        let e = load_cost_model("pred f/1 avg 5 size 3 $0 $0\n").unwrap_err();
        assert!(matches!(e.kind, ModelErrorKind::Malformed(_)));
    }

    #[test]
    fn size_expressions() {
        for s in ["$0", "2*$0+1", "elem($1)", "inf", "3", "$0-$1", "-$2+0.5"] {
            let e = SizeExpr::parse(s).unwrap();
            assert_eq!(SizeExpr::parse(&e.to_string()).unwrap(), e, "{s}");
        }
        let e = SizeExpr::parse("2*$0+1").unwrap();
        let v = e.eval(&[SizeBounds::exact(r("4"))]).unwrap();
        assert_eq!(v, Extended::Finite(r("9")));
        assert!(SizeExpr::parse("$x").is_none());
    }
}
