//! Cost analysis of HC IR programs: call graph, argument sizes, guarded
//! cost equations and their reduction to single-variable recurrences.
//!
//! Sizes are affine expressions over the sizes of a predicate's head
//! arguments: the value of a `num`, the length of a list. Anything that is
//! not affine (a loaded element, a product of two variables) is unknown.
//!
//! Within a recursive SCC, a few predicates are chosen as headers (targets
//! of back edges, plus entry points); all others are inlined, so each
//! header gets a list of guarded equations whose calls go only to headers.
//! Headers are then solved innermost first; see [`system`].

mod explore;
mod system;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use thiserror::Error;

use crate::hcir::{compare_pred_from_name, Builtin, Literal, PredKind, Program, Term};
use crate::ir::{parse_type, CmpPred, IrType};
use crate::recsolve::{Affine, ClosedForm, ClosedFormError};

pub use explore::head_params;
pub use system::{analyze, detect_ranking_argument, extract_recurrences, Analysis, FunctionCost, HeaderReport, Measure, Ranking, RecurrenceSystem};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("call to {0}, which has no clauses and no trust assertion")]
    UnknownPredicate(String),
    #[error("{pred} is called with {got} arguments but has arity {expected}")]
    Arity { pred: String, expected: usize, got: usize },
    #[error("clause costs cover {got} clauses, program has {expected}")]
    Costs { expected: usize, got: usize },
}

/// Size of a value; `None` when unknown.
pub type Size = Option<Affine>;

fn show_size(s: &Size) -> String {
    match s {
        Some(a) => a.to_string(),
        None => "?".into(),
    }
}

/// Condition on sizes under which an equation applies.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Cond {
    Cmp { op: CmpPred, lhs: Affine, rhs: Affine },
    /// A branch on a value whose size is unknown (data-dependent).
    Unknown(String),
}

fn op_text(op: CmpPred) -> &'static str {
    match op {
        CmpPred::Eq => "=",
        CmpPred::Ne => "!=",
        CmpPred::Slt => "<",
        CmpPred::Sle => "<=",
        CmpPred::Sgt => ">",
        CmpPred::Sge => ">=",
    }
}

impl Cond {
    pub fn negate(&self) -> Cond {
        match self {
            Cond::Cmp { op, lhs, rhs } => Cond::Cmp {
                op: op.negate(),
                lhs: lhs.clone(),
                rhs: rhs.clone(),
            },
            Cond::Unknown(v) => Cond::Unknown(format!("not {v}")),
        }
    }

    pub fn substitute(&self, map: &BTreeMap<String, Affine>) -> Cond {
        match self {
            Cond::Cmp { op, lhs, rhs } => Cond::Cmp {
                op: *op,
                lhs: lhs.substitute(map),
                rhs: rhs.substitute(map),
            },
            u => u.clone(),
        }
    }

    /// Truth value when both sides are constants.
    pub fn decide(&self) -> Option<bool> {
        match self {
            Cond::Cmp { op, lhs, rhs } if lhs.is_constant() && rhs.is_constant() => Some(op.holds(&lhs.constant, &rhs.constant)),
            _ => None,
        }
    }

    pub fn eval(&self, sizes: &BTreeMap<String, BigRational>) -> Option<bool> {
        match self {
            Cond::Cmp { op, lhs, rhs } => Some(op.holds(lhs.eval(sizes)?, rhs.eval(sizes)?)),
            Cond::Unknown(_) => None,
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        match self {
            Cond::Cmp { lhs, rhs, .. } => lhs.coeffs.keys().chain(rhs.coeffs.keys()).cloned().collect(),
            Cond::Unknown(_) => BTreeSet::new(),
        }
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cond::Cmp { op, lhs, rhs } => write!(f, "{lhs} {} {rhs}", op_text(*op)),
            Cond::Unknown(v) => write!(f, "unknown({v})"),
        }
    }
}

/// A call to a predicate whose cost is not yet known.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Call {
    pub pred: String,
    pub args: Vec<Size>,
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(show_size).collect();
        write!(f, "{}({})", self.pred, args.join(", "))
    }
}

/// `fixed + Σ coeff * cost(call)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CostExpr {
    pub fixed: ClosedForm,
    pub calls: Vec<(ClosedForm, Call)>,
}

impl CostExpr {
    pub fn constant(c: BigRational) -> Self {
        CostExpr {
            fixed: ClosedForm::constant(c),
            calls: Vec::new(),
        }
    }

    pub fn add_call(&mut self, coeff: ClosedForm, call: Call) {
        if let Some(e) = self.calls.iter_mut().find(|(_, c)| *c == call) {
            e.0 = e.0.add(&coeff);
        } else {
            self.calls.push((coeff, call));
        }
        self.calls.retain(|(c, _)| !c.is_zero());
    }

    pub fn add(&self, o: &CostExpr) -> CostExpr {
        let mut r = self.clone();
        r.fixed = r.fixed.add(&o.fixed);
        for (c, call) in &o.calls {
            r.add_call(c.clone(), call.clone());
        }
        r
    }

    pub fn scale(&self, k: &ClosedForm) -> Result<CostExpr, ClosedFormError> {
        let mut r = CostExpr {
            fixed: self.fixed.mul(k)?,
            calls: Vec::new(),
        };
        for (c, call) in &self.calls {
            r.add_call(c.mul(k)?, call.clone());
        }
        Ok(r)
    }

    pub fn substitute(&self, map: &BTreeMap<String, Affine>) -> Result<CostExpr, ClosedFormError> {
        let mut r = CostExpr {
            fixed: self.fixed.substitute(map)?,
            calls: Vec::new(),
        };
        for (c, call) in &self.calls {
            let args = call.args.iter().map(|a| a.as_ref().map(|a| a.substitute(map))).collect();
            r.add_call(
                c.substitute(map)?,
                Call {
                    pred: call.pred.clone(),
                    args,
                },
            );
        }
        Ok(r)
    }

    /// Variables of the fixed part, the coefficients and the known call
    /// arguments.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.fixed.vars().into_iter().collect();
        for (c, call) in &self.calls {
            out.extend(c.vars());
            for a in call.args.iter().flatten() {
                out.extend(a.coeffs.keys().cloned());
            }
        }
        out
    }
}

impl fmt::Display for CostExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        if !self.fixed.is_zero() || self.calls.is_empty() {
            out = self.fixed.to_string();
        }
        for (c, call) in &self.calls {
            let term = match c.as_constant() {
                Some(k) if k.is_one() => call.to_string(),
                Some(_) => format!("{c}*{call}"),
                None => format!("({c})*{call}"),
            };
            if out.is_empty() {
                out = term;
            } else if let Some(t) = term.strip_prefix('-') {
                out = format!("{out} - {t}");
            } else {
                out = format!("{out} + {term}");
            }
        }
        f.write_str(&out)
    }
}

/// One guarded equation: the cost is `cost` whenever all `conds` hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub conds: Vec<Cond>,
    pub cost: CostExpr,
}

impl Piece {
    /// False when some condition is decidably false.
    fn feasible(&self) -> bool {
        self.conds.iter().all(|c| c.decide() != Some(false))
    }
}

impl fmt::Display for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.cost)?;
        if !self.conds.is_empty() {
            let c: Vec<String> = self.conds.iter().map(ToString::to_string).collect();
            write!(f, "    if {}", c.join(", "))?;
        }
        Ok(())
    }
}

/// Predicates as nodes, call literals as edges, with the SCCs in
/// reverse topological order (callees first).
#[derive(Debug, Clone)]
pub struct CallGraph {
    pub graph: DiGraph<String, ()>,
    pub index: HashMap<String, NodeIndex>,
    pub sccs: Vec<Vec<String>>,
}

impl CallGraph {
    pub fn calls(&self, from: &str, to: &str) -> bool {
        match (self.index.get(from), self.index.get(to)) {
            (Some(a), Some(b)) => self.graph.contains_edge(*a, *b),
            _ => false,
        }
    }

    /// Whether `pred` lies on a cycle.
    pub fn is_recursive(&self, pred: &str) -> bool {
        self.sccs.iter().any(|s| s.len() > 1 && s.iter().any(|p| p == pred)) || self.calls(pred, pred)
    }

    pub fn scc_of(&self, pred: &str) -> Option<&[String]> {
        self.sccs.iter().find(|s| s.iter().any(|p| p == pred)).map(Vec::as_slice)
    }
}

/// Whether calls to `pred` are resolved without clauses: a declared
/// function with a trust assertion.
fn is_abstract(p: &Program, pred: &str, arity: usize) -> bool {
    p.signature(pred).is_some_and(|s| s.kind == PredKind::Abstract) && p.assertion(pred, arity).is_some()
}

pub fn build_call_graph(p: &Program) -> Result<CallGraph, AnalysisError> {
    let mut graph = DiGraph::new();
    let mut index = HashMap::new();
    let mut node = |g: &mut DiGraph<String, ()>, n: &str| *index.entry(n.to_string()).or_insert_with(|| g.add_node(n.to_string()));
    for s in &p.signatures {
        if s.kind != PredKind::Abstract {
            node(&mut graph, &s.name);
        }
    }
    for c in &p.clauses {
        node(&mut graph, &c.head);
    }
    let defined: BTreeSet<&str> = p.clauses.iter().map(|c| c.head.as_str()).collect();
    for c in &p.clauses {
        let from = node(&mut graph, &c.head);
        for lit in &c.body {
            let Literal::Call { pred, args, .. } = lit else { continue };
            if defined.contains(pred.as_str()) {
                let to = node(&mut graph, pred);
                graph.update_edge(from, to, ());
            } else if !is_abstract(p, pred, args.len()) {
                return Err(AnalysisError::UnknownPredicate(format!("{pred}/{}", args.len())));
            }
        }
    }
    let sccs = tarjan_scc(&graph)
        .into_iter()
        .map(|s| {
            let mut names: Vec<String> = s.into_iter().map(|n| graph[n].clone()).collect();
            names.sort();
            names
        })
        .collect();
    Ok(CallGraph { graph, index, sccs })
}

/// Symbolic value of a clause variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Sym {
    Size(Affine),
    Bool(Cond),
    Top,
}

impl Sym {
    pub(crate) fn size(&self) -> Size {
        match self {
            Sym::Size(a) => Some(a.clone()),
            _ => None,
        }
    }
}

pub(crate) fn term_sym(env: &HashMap<String, Sym>, t: &Term) -> Sym {
    match t {
        Term::Var(v) => env.get(v).cloned().unwrap_or(Sym::Top),
        Term::Int(i) => Sym::Size(Affine::constant(BigRational::from_integer((*i).into()))),
        Term::Atom(_) => Sym::Top,
    }
}

/// Size of the result of a built-in literal.
pub(crate) fn builtin_sym(op: Builtin, args: &[Sym], terms: &[Term]) -> Sym {
    let size = |k: usize| args.get(k).and_then(Sym::size);
    match op {
        Builtin::Add | Builtin::Sub => match (size(0), size(1)) {
            (Some(a), Some(b)) => Sym::Size(if op == Builtin::Add { a.add(&b) } else { a.sub(&b) }),
            _ => Sym::Top,
        },
        Builtin::Mul => match (size(0), size(1)) {
            (Some(a), Some(b)) if b.is_constant() => Sym::Size(a.scale(&b.constant)),
            (Some(a), Some(b)) if a.is_constant() => Sym::Size(b.scale(&a.constant)),
            _ => Sym::Top,
        },
        // widths do not change values in the unbounded reading
        Builtin::Zext | Builtin::Trunc | Builtin::Mov => size(0).map_or(Sym::Top, Sym::Size),
        Builtin::Nth | Builtin::Field => Sym::Top,
        // functional update keeps the length
        Builtin::SetNth | Builtin::SetField => size(1).map_or(Sym::Top, Sym::Size),
        Builtin::MkValue => match terms.first() {
            Some(Term::Atom(t)) => match parse_type(t) {
                Ok(IrType::Array { len, .. }) => {
                    Sym::Size(Affine::constant(BigRational::from_integer(len.unwrap_or(0).into())))
                }
                _ => Sym::Top,
            },
            _ => Sym::Top,
        },
    }
}

/// Result of a call to a comparison predicate.
pub(crate) fn compare_sym(op: CmpPred, a: &Sym, b: &Sym, var: &str) -> Sym {
    match (a.size(), b.size()) {
        (Some(lhs), Some(rhs)) => Sym::Bool(Cond::Cmp { op, lhs, rhs }),
        _ => Sym::Bool(Cond::Unknown(var.to_string())),
    }
}

/// Sizes of the arguments of one call literal, over the sizes of the
/// calling clause's head arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSizes {
    pub clause: usize,
    pub literal: usize,
    pub caller: String,
    pub callee: String,
    pub args: Vec<Size>,
}

impl fmt::Display for CallSizes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(show_size).collect();
        write!(f, "{} -> {}({})", self.caller, self.callee, args.join(", "))
    }
}

/// Forward propagation of sizes through every clause. Outputs of calls are
/// unknown.
pub fn infer_size_relations(p: &Program) -> Vec<CallSizes> {
    let mut out = Vec::new();
    for (ci, c) in p.clauses.iter().enumerate() {
        let mut env: HashMap<String, Sym> = HashMap::new();
        for t in &c.args {
            if let Term::Var(v) = t {
                env.insert(v.clone(), Sym::Size(Affine::var(v)));
            }
        }
        for (li, lit) in c.body.iter().enumerate() {
            match lit {
                Literal::Builtin { op, args, .. } => {
                    let (res, ins) = args.split_last().expect("builtin has a result");
                    let syms: Vec<Sym> = ins.iter().map(|t| term_sym(&env, t)).collect();
                    if let Term::Var(v) = res {
                        env.insert(v.clone(), builtin_sym(*op, &syms, ins));
                    }
                }
                Literal::Call { pred, args, .. } => {
                    let syms: Vec<Sym> = args.iter().map(|t| term_sym(&env, t)).collect();
                    out.push(CallSizes {
                        clause: ci,
                        literal: li,
                        caller: c.head.clone(),
                        callee: pred.clone(),
                        args: syms.iter().map(Sym::size).collect(),
                    });
                    if let (Some(op), [_, _, Term::Var(r)]) = (compare_pred_from_name(pred), args.as_slice()) {
                        env.insert(r.clone(), compare_sym(op, &syms[0], &syms[1], r));
                        continue;
                    }
                    for t in args {
                        if let Term::Var(v) = t {
                            env.entry(v.clone()).or_insert(Sym::Top);
                        }
                    }
                }
                Literal::Guard { .. } | Literal::Test { .. } => {}
            }
        }
    }
    out
}

/// Per-clause costs that charge 1 for every clause with an origin block.
pub fn unit_costs(p: &Program) -> Vec<BigRational> {
    p.clauses
        .iter()
        .map(|c| if c.origin.is_some() { BigRational::one() } else { BigRational::zero() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hcir::translate_module;
    use crate::ir::parse_module;

    fn traverse_program() -> Program {
        translate_module(&parse_module(include_str!("../../tests/corpus/traverse.sir")).unwrap()).unwrap()
    }

    #[test]
    fn traverse_call_graph() {
        let g = build_call_graph(&traverse_program()).unwrap();
        assert_eq!(g.scc_of("looptest").unwrap(), ["loopbody_loopend", "looptest"]);
        assert!(!g.is_recursive("alloca"));
        assert!(g.is_recursive("looptest"));
        // callees first
        let pos = |n: &str| g.sccs.iter().position(|s| s.iter().any(|p| p == n)).unwrap();
        assert!(pos("looptest") < pos("alloca"));
        assert!(pos("icmp_ne") < pos("looptest"));
    }

    #[test]
    fn traverse_size_relations() {
        let rel = infer_size_relations(&traverse_program());
        let rec = rel.iter().find(|r| r.caller == "loopbody_loopend" && r.callee == "looptest").unwrap();
        assert_eq!(rec.to_string(), "loopbody_loopend -> looptest(I - 1, Arr)");
        let entry = rel.iter().find(|r| r.caller == "alloca").unwrap();
        assert_eq!(entry.to_string(), "alloca -> looptest(N, Arr)");
    }

    #[test]
    fn unknown_predicate() {
        let mut p = traverse_program();
        p.clauses.retain(|c| c.head != "icmp_ne");
        p.signatures.retain(|s| s.name != "icmp_ne");
        assert_eq!(build_call_graph(&p).unwrap_err(), AnalysisError::UnknownPredicate("icmp_ne/3".into()));
    }

    #[test]
    fn cost_expr_display() {
        let mut e = CostExpr::constant(BigRational::from_integer(2.into()));
        e.add_call(
            ClosedForm::constant(BigRational::one()),
            Call {
                pred: "f".into(),
                args: vec![Some(Affine::var("N").sub(&Affine::constant(BigRational::one()))), None],
            },
        );
        assert_eq!(e.to_string(), "2 + f(N - 1, ?)");
    }
}
