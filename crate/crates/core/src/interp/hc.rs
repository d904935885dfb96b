//! HC IR interpreter. Clauses are tried in order; a clause is selected once
//! its leading guards and tests hold, and failure after that point is an
//! error (translated programs are deterministic).

use std::borrow::Cow;
use std::collections::HashMap;
use std::sync::Arc;

use super::{arith, external_stub, index, index_mut, on_big_stack, trunc, zext, CostMap, CostedRun, InterpError, RunOptions, Value};
use crate::hcir::{Builtin, Clause, Literal, Mode, PredKind, PredSig, Program, Term};
use crate::ir::parse_type;

/// What a call needs to know about its predicate, looked up once per run.
struct PredInfo<'a> {
    sig: Option<&'a PredSig>,
    /// Clauses with their index in the program.
    clauses: Vec<(usize, &'a Clause)>,
    external: bool,
}

struct Machine<'a> {
    preds: HashMap<&'a str, Arc<PredInfo<'a>>>,
    c: &'a CostMap,
    opts: RunOptions,
    run: CostedRun,
    // commits per clause; costed at the end
    counts: Vec<u64>,
}

/// Variable bindings of one clause; clauses are small, so a vector beats
/// hashing.
#[derive(Default)]
struct Env<'a>(Vec<(&'a str, Value)>);

impl<'a> Env<'a> {
    fn new() -> Self {
        Env(Vec::with_capacity(16))
    }

    fn get(&self, var: &str) -> Option<&Value> {
        self.0.iter().find(|(k, _)| *k == var).map(|(_, v)| v)
    }

    fn contains_key(&self, var: &str) -> bool {
        self.get(var).is_some()
    }

    /// Only called for unbound variables.
    fn insert(&mut self, var: &'a str, v: Value) {
        self.0.push((var, v));
    }
}

fn lookup(env: &Env<'_>, t: &Term, pred: &str) -> Result<Value, InterpError> {
    match t {
        Term::Int(i) => Ok(Value::Int(*i)),
        Term::Atom(a) => Ok(Value::Atom(a.clone())),
        Term::Var(v) => env.get(v.as_str()).cloned().ok_or_else(|| InterpError::Unbound {
            var: v.clone(),
            pred: pred.to_string(),
        }),
    }
}

/// Like [`lookup`], without copying bound values.
fn borrow<'e>(env: &'e Env<'_>, t: &Term, pred: &str) -> Result<Cow<'e, Value>, InterpError> {
    match t {
        Term::Var(v) => env.get(v.as_str()).map(Cow::Borrowed).ok_or_else(|| InterpError::Unbound {
            var: v.clone(),
            pred: pred.to_string(),
        }),
        _ => lookup(env, t, pred).map(Cow::Owned),
    }
}

fn as_int(v: &Value) -> Result<i128, InterpError> {
    v.int().ok_or_else(|| InterpError::Type(format!("expected an integer, got {v}")))
}

/// Binds `t` to `v`, or checks that they agree.
fn unify<'a>(env: &mut Env<'a>, t: &'a Term, v: Value) -> bool {
    match t {
        Term::Int(i) => v == Value::Int(*i),
        Term::Atom(a) => v == Value::Atom(a.clone()),
        Term::Var(x) => match env.get(x.as_str()) {
            Some(old) => *old == v,
            None => {
                env.insert(x, v);
                true
            }
        },
    }
}

impl<'a> Machine<'a> {
    fn step(&mut self) -> Result<(), InterpError> {
        self.run.steps += 1;
        if self.run.steps > self.opts.step_limit {
            return Err(InterpError::StepLimit(self.opts.step_limit));
        }
        Ok(())
    }

    fn builtin(&self, op: Builtin, args: &[Cow<'_, Value>]) -> Result<Value, InterpError> {
        let int = |k: usize| as_int(&args[k]);
        Ok(match op {
            Builtin::Add | Builtin::Sub | Builtin::Mul => arith(op.name(), int(0)?, int(1)?)?,
            Builtin::Zext => zext(int(0)?, u32::try_from(int(1)?).map_err(|_| InterpError::Type("bad width".into()))?)?,
            Builtin::Trunc => trunc(int(0)?, u32::try_from(int(1)?).map_err(|_| InterpError::Type("bad width".into()))?)?,
            Builtin::Mov => args[0].clone().into_owned(),
            Builtin::Nth | Builtin::Field => index(&args[1], int(0)?)?.clone(),
            Builtin::SetNth | Builtin::SetField => {
                let mut v = args[1].clone().into_owned();
                *index_mut(&mut v, int(0)?)? = args[2].clone().into_owned();
                v
            }
            Builtin::MkValue => {
                let Value::Atom(t) = &*args[0] else {
                    return Err(InterpError::Type("mk_value expects a quoted type".into()));
                };
                let t = parse_type(t).map_err(|e| InterpError::Type(e.to_string()))?;
                Value::zero_of(&t)
            }
        })
    }

    /// Solves `pred(args)`; `None` marks an output. Returns the outputs.
    fn solve(&mut self, pred: &'a str, args: Vec<Option<Value>>) -> Result<Vec<Value>, InterpError> {
        let info = self.preds.get(pred).cloned().ok_or_else(|| InterpError::Unknown(pred.to_string()))?;
        if let Some(s) = info.sig {
            if s.arity() != args.len() {
                return Err(InterpError::Arity {
                    name: pred.to_string(),
                    expected: s.arity(),
                    got: args.len(),
                });
            }
        }
        if info.clauses.is_empty() {
            if info.external {
                self.run.call_external(pred, self.c);
                let known: Vec<Value> = args.iter().flatten().cloned().collect();
                let r = external_stub(&known);
                return Ok(args.iter().filter(|a| a.is_none()).map(|_| r.clone()).collect());
            }
            return Err(InterpError::Unknown(pred.to_string()));
        }
        'clauses: for &(ci, cl) in &info.clauses {
            self.step()?;
            if cl.args.len() != args.len() {
                continue;
            }
            let mut env = Env::new();
            for (t, a) in cl.args.iter().zip(&args) {
                if let Some(v) = a {
                    if !unify(&mut env, t, v.clone()) {
                        continue 'clauses;
                    }
                }
            }
            let mut committed = false;
            for lit in &cl.body {
                self.step()?;
                let ok = match lit {
                    Literal::Guard { var, value } => {
                        lookup(&env, &Term::Var(var.clone()), pred)? == Value::Int(*value)
                    }
                    Literal::Test { op, lhs, rhs } => {
                        let (a, b) = (as_int(&lookup(&env, lhs, pred)?)?, as_int(&lookup(&env, rhs, pred)?)?);
                        op.holds(a, b)
                    }
                    _ => {
                        if !committed {
                            committed = true;
                            self.commit(ci, cl);
                        }
                        self.literal(&mut env, lit, pred)?;
                        true
                    }
                };
                if !ok {
                    if committed {
                        return Err(InterpError::NoClause(pred.to_string()));
                    }
                    continue 'clauses;
                }
            }
            if !committed {
                self.commit(ci, cl);
            }
            return cl.args.iter().zip(&args).filter(|(_, a)| a.is_none()).map(|(t, _)| lookup(&env, t, pred)).collect();
        }
        Err(InterpError::NoClause(pred.to_string()))
    }

    fn commit(&mut self, ci: usize, cl: &Clause) {
        if let Some(o) = &cl.origin {
            self.counts[ci] += 1;
            if self.opts.trace {
                self.run.trace.push(o.clone());
            }
        }
    }

    fn literal(&mut self, env: &mut Env<'a>, lit: &'a Literal, pred: &str) -> Result<(), InterpError> {
        match lit {
            Literal::Builtin { op, args, .. } => {
                let (res, ins) = args.split_last().expect("builtin has a result");
                let v = {
                    let vals = ins.iter().map(|t| borrow(env, t, pred)).collect::<Result<Vec<_>, _>>()?;
                    self.builtin(*op, &vals)?
                };
                if !unify(env, res, v) {
                    return Err(InterpError::NoClause(pred.to_string()));
                }
            }
            Literal::Call { pred: callee, args, .. } => {
                let info = self.preds.get(callee.as_str()).cloned();
                let modes = info.as_ref().and_then(|i| i.sig).map(|s| &s.modes);
                let vals: Vec<Option<Value>> = args
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        let out = modes.as_ref().is_some_and(|m| m.get(k) == Some(&Mode::Out));
                        match t {
                            Term::Var(v) if out && !env.contains_key(v.as_str()) => None,
                            Term::Var(v) => env.get(v.as_str()).cloned(),
                            _ => lookup(env, t, pred).ok(),
                        }
                    })
                    .collect();
                let outs: Vec<&Term> = args.iter().zip(&vals).filter(|(_, v)| v.is_none()).map(|(t, _)| t).collect();
                let res = self.solve(callee, vals)?;
                for (t, v) in outs.into_iter().zip(res) {
                    if !unify(env, t, v) {
                        return Err(InterpError::NoClause(pred.to_string()));
                    }
                }
            }
            Literal::Guard { .. } | Literal::Test { .. } => unreachable!("handled by solve"),
        }
        Ok(())
    }
}

/// Runs predicate `pred` on its input arguments, in order. `results` holds
/// the output arguments.
pub fn run_hcir(p: &Program, pred: &str, args: &[Value], c: &CostMap, opts: RunOptions) -> Result<CostedRun, InterpError> {
    let sig = p.signature(pred).ok_or_else(|| InterpError::Unknown(pred.to_string()))?;
    let inputs: Vec<usize> = sig.inputs().collect();
    if inputs.len() != args.len() {
        return Err(InterpError::Arity {
            name: pred.to_string(),
            expected: inputs.len(),
            got: args.len(),
        });
    }
    let mut full = vec![None; sig.arity()];
    for (k, a) in inputs.iter().zip(args) {
        full[*k] = Some(a.clone());
    }
    let mut clauses: HashMap<&str, Vec<(usize, &Clause)>> = HashMap::new();
    for (ci, cl) in p.clauses.iter().enumerate() {
        clauses.entry(cl.head.as_str()).or_default().push((ci, cl));
    }
    let names = p.signatures.iter().map(|s| s.name.as_str()).chain(p.assertions.iter().map(|a| a.name.as_str()));
    let mut preds = HashMap::new();
    for n in names.chain(p.clauses.iter().map(|c| c.head.as_str())) {
        preds.entry(n).or_insert_with(|| {
            let sig = p.signature(n);
            Arc::new(PredInfo {
                sig,
                clauses: clauses.remove(n).unwrap_or_default(),
                external: sig.is_some_and(|s| s.kind == PredKind::Abstract) || p.assertions.iter().any(|a| a.name == n),
            })
        });
    }
    let name = sig.name.as_str();
    on_big_stack(move || {
        let mut mach = Machine {
            preds,
            c,
            opts,
            run: CostedRun::default(),
            counts: vec![0; p.clauses.len()],
        };
        let all = mach.solve(name, full);
        for (cl, &n) in p.clauses.iter().zip(&mach.counts) {
            if let (Some(o), true) = (&cl.origin, n > 0) {
                mach.run.add_visits(o.clone(), n, c);
            }
        }
        mach.run.results = all?;
        Ok(mach.run)
    })
}
