//! Symbolic execution of clauses over sizes, producing guarded cost paths.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_rational::BigRational;

use super::{builtin_sym, compare_sym, is_abstract, term_sym, AnalysisError, Call, Cond, CostExpr, Piece, Size, Sym};
use crate::hcir::{compare_pred_from_name, Literal, Mode, Program, Term};
use crate::ir::CmpPred;
use crate::recsolve::{rat, Affine, ClosedForm};

/// Why an analysis step gave up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Fail {
    Hard(AnalysisError),
    /// No useful cost function; the reason is reported.
    NotAvailable(String),
}

impl From<AnalysisError> for Fail {
    fn from(e: AnalysisError) -> Self {
        Fail::Hard(e)
    }
}

pub(crate) fn na<T>(msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail::NotAvailable(msg.into()))
}

/// Cost of a predicate as guarded pieces over the sizes of its head
/// arguments (`params`). Pieces never contain calls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Summary {
    pub params: Vec<String>,
    pub pieces: Vec<Piece>,
}

impl Summary {
    /// Pieces at a call site with argument sizes `args`.
    pub fn instantiate(&self, pred: &str, args: &[Size]) -> Result<Vec<Piece>, Fail> {
        let map = bind_params(pred, &self.params, args, &self.pieces)?;
        let mut out = Vec::new();
        for piece in &self.pieces {
            let p = Piece {
                conds: piece.conds.iter().map(|c| c.substitute(&map)).collect(),
                cost: piece.cost.substitute(&map).map_err(|e| Fail::NotAvailable(e.to_string()))?,
            };
            if p.feasible() {
                out.push(p);
            }
        }
        Ok(out)
    }
}

/// Map from `params` to `args`, failing when a parameter some piece depends
/// on has an unknown size.
pub(crate) fn bind_params(pred: &str, params: &[String], args: &[Size], pieces: &[Piece]) -> Result<BTreeMap<String, Affine>, Fail> {
    let mut used = BTreeSet::new();
    for p in pieces {
        used.extend(p.cost.vars());
        for c in &p.conds {
            used.extend(c.vars());
        }
    }
    let mut map = BTreeMap::new();
    for (k, (v, a)) in params.iter().zip(args).enumerate() {
        match a {
            Some(a) => {
                map.insert(v.clone(), a.clone());
            }
            None if used.contains(v) => {
                return na(format!("the size of argument {} of {pred} ({v}) is unknown at a call site", k + 1));
            }
            None => {}
        }
    }
    Ok(map)
}

/// Names for the head arguments of `pred`: the variables of its first
/// clause, `_k` for non-variable positions.
pub fn head_params(p: &Program, pred: &str) -> Vec<String> {
    let Some(c) = p.clauses.iter().find(|c| c.head == pred) else {
        return p
            .signature(pred)
            .map(|s| (0..s.arity()).map(|k| format!("_{k}")).collect())
            .unwrap_or_default();
    };
    let mut seen = BTreeSet::new();
    c.args
        .iter()
        .enumerate()
        .map(|(k, t)| match t {
            Term::Var(v) if seen.insert(v.clone()) => v.clone(),
            _ => format!("_{k}"),
        })
        .collect()
}

pub(crate) struct Path {
    pub conds: Vec<Cond>,
    pub cost: CostExpr,
    pub outputs: Vec<Sym>,
}

#[derive(Clone)]
struct State {
    env: HashMap<String, Sym>,
    conds: Vec<Cond>,
    cost: CostExpr,
}

pub(crate) struct Explorer<'a> {
    pub p: &'a Program,
    pub clauses: &'a HashMap<String, Vec<usize>>,
    pub costs: &'a [BigRational],
    pub summaries: &'a HashMap<String, Result<Summary, String>>,
    /// Headers of the SCC being analysed: calls stay symbolic.
    pub opaque: &'a BTreeSet<String>,
    /// Other members of that SCC: calls are inlined.
    pub inline: &'a BTreeSet<String>,
}

fn push_cond(mut st: State, c: Cond, out: &mut Vec<State>) {
    if c.decide() == Some(false) {
        return;
    }
    if c.decide().is_none() && !st.conds.contains(&c) {
        st.conds.push(c);
    }
    out.push(st);
}

impl Explorer<'_> {
    /// All paths through `pred` called with argument values `args`.
    pub fn paths(&self, pred: &str, args: &[Sym]) -> Result<Vec<Path>, Fail> {
        let mut out = Vec::new();
        for &ci in self.clauses.get(pred).map(Vec::as_slice).unwrap_or(&[]) {
            let c = &self.p.clauses[ci];
            if c.args.len() != args.len() {
                return Err(AnalysisError::Arity {
                    pred: pred.to_string(),
                    expected: c.args.len(),
                    got: args.len(),
                }
                .into());
            }
            let mut start = State {
                env: HashMap::new(),
                conds: Vec::new(),
                cost: CostExpr::constant(self.costs[ci].clone()),
            };
            let mut feasible = true;
            let outs: Vec<bool> = match self.p.signature(pred) {
                Some(s) => s.modes.iter().map(|m| *m == Mode::Out).collect(),
                None => vec![false; args.len()],
            };
            for ((t, a), out) in c.args.iter().zip(args).zip(outs) {
                match t {
                    // a constant result binds an output, it does not select
                    Term::Int(_) if out => {}
                    Term::Var(v) => {
                        start.env.entry(v.clone()).or_insert_with(|| a.clone());
                    }
                    Term::Int(k) => {
                        let c = match a {
                            Sym::Size(s) => Cond::Cmp {
                                op: CmpPred::Eq,
                                lhs: s.clone(),
                                rhs: Affine::constant(BigRational::from_integer((*k).into())),
                            },
                            _ => Cond::Unknown(format!("{pred} argument")),
                        };
                        let mut v = Vec::new();
                        push_cond(start.clone(), c, &mut v);
                        match v.pop() {
                            Some(s) => start = s,
                            None => feasible = false,
                        }
                    }
                    Term::Atom(_) => {}
                }
            }
            if !feasible {
                continue;
            }
            let mut states = vec![start];
            for lit in &c.body {
                let mut next = Vec::new();
                for st in states {
                    self.literal(st, lit, &mut next)?;
                }
                states = next;
            }
            for st in states {
                out.push(Path {
                    outputs: c.args.iter().map(|t| term_sym(&st.env, t)).collect(),
                    conds: st.conds,
                    cost: st.cost,
                });
            }
        }
        Ok(out)
    }

    fn literal(&self, mut st: State, lit: &Literal, out: &mut Vec<State>) -> Result<(), Fail> {
        match lit {
            Literal::Guard { var, value } => {
                let c = match st.env.get(var) {
                    Some(Sym::Bool(c)) if *value != 0 => c.clone(),
                    Some(Sym::Bool(c)) => c.negate(),
                    Some(Sym::Size(a)) => Cond::Cmp {
                        op: CmpPred::Eq,
                        lhs: a.clone(),
                        rhs: Affine::constant(BigRational::from_integer((*value).into())),
                    },
                    _ => Cond::Unknown(var.clone()),
                };
                push_cond(st, c, out);
            }
            Literal::Test { op, lhs, rhs } => {
                let c = match (term_sym(&st.env, lhs).size(), term_sym(&st.env, rhs).size()) {
                    (Some(lhs), Some(rhs)) => Cond::Cmp { op: *op, lhs, rhs },
                    _ => Cond::Unknown(format!("{lhs} vs {rhs}")),
                };
                push_cond(st, c, out);
            }
            Literal::Builtin { op, args, .. } => {
                let (res, ins) = args.split_last().expect("builtin has a result");
                let syms: Vec<Sym> = ins.iter().map(|t| term_sym(&st.env, t)).collect();
                if let Term::Var(v) = res {
                    st.env.insert(v.clone(), builtin_sym(*op, &syms, ins));
                }
                out.push(st);
            }
            Literal::Call { pred, args, .. } => self.call(st, pred, args, out)?,
        }
        Ok(())
    }

    fn call(&self, mut st: State, pred: &str, args: &[Term], out: &mut Vec<State>) -> Result<(), Fail> {
        let syms: Vec<Sym> = args.iter().map(|t| term_sym(&st.env, t)).collect();
        let bind_unbound = |st: &mut State| {
            for t in args {
                if let Term::Var(v) = t {
                    st.env.entry(v.clone()).or_insert(Sym::Top);
                }
            }
        };
        if let (Some(op), [_, _, Term::Var(r)], true) = (compare_pred_from_name(pred), args, self.clauses.contains_key(pred)) {
            let s = compare_sym(op, &syms[0], &syms[1], r);
            st.env.insert(r.clone(), s);
            out.push(st);
            return Ok(());
        }
        let sizes: Vec<Size> = syms.iter().map(Sym::size).collect();
        if self.opaque.contains(pred) {
            st.cost.add_call(
                ClosedForm::constant(rat(1)),
                Call {
                    pred: pred.to_string(),
                    args: sizes,
                },
            );
            bind_unbound(&mut st);
            out.push(st);
            return Ok(());
        }
        if self.inline.contains(pred) {
            for path in self.paths(pred, &syms)? {
                let mut s = st.clone();
                for c in path.conds {
                    if !s.conds.contains(&c) {
                        s.conds.push(c);
                    }
                }
                s.cost = s.cost.add(&path.cost);
                for (t, v) in args.iter().zip(path.outputs) {
                    if let Term::Var(x) = t {
                        s.env.entry(x.clone()).or_insert(v);
                    }
                }
                out.push(s);
            }
            return Ok(());
        }
        if let Some(summary) = self.summaries.get(pred) {
            let summary = summary.as_ref().map_err(|why| Fail::NotAvailable(format!("{pred} has no cost function: {why}")))?;
            bind_unbound(&mut st);
            for piece in summary.instantiate(pred, &sizes)? {
                let mut s = st.clone();
                for c in piece.conds {
                    if !s.conds.contains(&c) {
                        s.conds.push(c);
                    }
                }
                s.cost = s.cost.add(&piece.cost);
                out.push(s);
            }
            return Ok(());
        }
        if is_abstract(self.p, pred, args.len()) {
            let a = self.p.assertion(pred, args.len()).expect("abstract predicates have an assertion");
            st.cost.fixed = st.cost.fixed.add(&ClosedForm::constant(a.energy.clone()));
            bind_unbound(&mut st);
            out.push(st);
            return Ok(());
        }
        Err(AnalysisError::UnknownPredicate(format!("{pred}/{}", args.len())).into())
    }

    /// Guarded equations of `pred` over its head argument sizes.
    pub fn equations(&self, pred: &str, params: &[String]) -> Result<Vec<Piece>, Fail> {
        let args: Vec<Sym> = params.iter().map(|v| Sym::Size(Affine::var(v))).collect();
        Ok(self
            .paths(pred, &args)?
            .into_iter()
            .map(|p| Piece {
                conds: p.conds,
                cost: p.cost,
            })
            .collect())
    }
}
