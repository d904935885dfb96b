//! IR functions to Horn clauses.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use super::params::{infer_block_params_with, occurrence_order, ordered_params, written_pointer_params};
use super::phi::{eliminate_phi, PhiError};
use super::{
    compare_pred_name, translate_type, var_name, BlockRef, Builtin, Clause, Literal, Mode, PredKind, PredSig, Program,
    RegularType, Term,
};
use crate::ir::{
    predecessors, validate_ssa, BinOp, Block, CastOp, CmpPred, Function, InstKind, Instruction, IrType, Loc, Module, Opcode, Operand,
    Terminator,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranslateError {
    #[error("@{function}: {violations}")]
    Invalid { function: String, violations: String },
    #[error("@{function}: {source}")]
    Phi {
        function: String,
        #[source]
        source: PhiError,
    },
    #[error("@{function}:{line}: {msg}")]
    Unsupported { function: String, line: usize, msg: String },
}

/// Literals for one instruction read in isolation: registers map to
/// variables by name, a `getelementptr` is read as the element it
/// addresses, and memory is not versioned.
pub fn translate_instruction(i: &Instruction) -> Result<Vec<Literal>, TranslateError> {
    let t = |o: &Operand| match o {
        Operand::Reg(r) => Term::Var(var_name(r)),
        Operand::Const(c) => Term::Int(*c),
    };
    let res = || Term::Var(var_name(i.result.as_deref().unwrap_or("_")));
    let unsupported = |msg: &str| TranslateError::Unsupported {
        function: String::new(),
        line: i.loc.line,
        msg: msg.to_string(),
    };
    let charge = vec![i.opcode()];
    let lit = match &i.kind {
        InstKind::Binary { op, lhs, rhs } => Literal::Builtin {
            op: binop(*op),
            args: vec![t(lhs), t(rhs), res()],
            charge,
        },
        InstKind::Icmp { pred, lhs, rhs, .. } => Literal::Call {
            pred: compare_pred_name(*pred),
            args: vec![t(lhs), t(rhs), res()],
            charge,
        },
        InstKind::Cast { op, value, from } => cast(*op, t(value), from, &i.ty, res(), charge).map_err(|m| unsupported(&m))?,
        InstKind::Alloca { allocated } => Literal::Builtin {
            op: Builtin::MkValue,
            args: vec![Term::Atom(allocated.expanded()), res()],
            charge,
        },
        InstKind::Load { ptr } => Literal::Builtin {
            op: Builtin::Mov,
            args: vec![t(ptr), res()],
            charge,
        },
        InstKind::Gep { base, ptr, indices } => {
            let lits = access_read(base, t(ptr), &indices[1..], &t, res(), charge, &mut |n| Term::Var(format!("{}_{n}", var_name(i.result.as_deref().unwrap_or("T")))))
                .map_err(|m| unsupported(&m))?;
            return Ok(lits);
        }
        InstKind::Call { callee, args } => {
            let mut a: Vec<Term> = args.iter().map(|(_, o)| t(o)).collect();
            if i.result.is_some() {
                a.push(res());
            }
            Literal::Call {
                pred: callee.clone(),
                args: a,
                charge,
            }
        }
        InstKind::Store { .. } => return Err(unsupported("store needs the memory state of its function")),
        InstKind::Phi { .. } => return Err(unsupported("phi nodes are removed before translation")),
    };
    Ok(vec![lit])
}

fn binop(op: BinOp) -> Builtin {
    match op {
        BinOp::Add => Builtin::Add,
        BinOp::Sub => Builtin::Sub,
        BinOp::Mul => Builtin::Mul,
    }
}

fn cast(op: CastOp, value: Term, from: &IrType, to: &IrType, res: Term, charge: Vec<Opcode>) -> Result<Literal, String> {
    let (IrType::Int(fw), IrType::Int(tw)) = (from, to) else {
        return Err("cast between non-integer types".into());
    };
    let (b, w) = match op {
        CastOp::Zext => (Builtin::Zext, *fw),
        CastOp::Trunc => (Builtin::Trunc, *tw),
    };
    Ok(Literal::Builtin {
        op: b,
        args: vec![value, Term::Int(w.into()), res],
        charge,
    })
}

/// Access path literals reading the element of `root` (of type `base`) at
/// `path` into `dst`. `charge` goes on the first literal.
fn access_read(
    base: &IrType,
    root: Term,
    path: &[Operand],
    index: &dyn Fn(&Operand) -> Term,
    dst: Term,
    charge: Vec<Opcode>,
    fresh: &mut dyn FnMut(usize) -> Term,
) -> Result<Vec<Literal>, String> {
    let mut out = Vec::new();
    let mut cur = root;
    let mut ty = base.clone();
    let mut charge = Some(charge);
    for (k, idx) in path.iter().enumerate() {
        let next = if k + 1 == path.len() { dst.clone() } else { fresh(k + 1) };
        let (op, idx_term, elem) = step(&ty, idx, index(idx))?;
        out.push(Literal::Builtin {
            op,
            args: vec![idx_term, cur, next.clone()],
            charge: charge.take().unwrap_or_default(),
        });
        cur = next;
        ty = elem;
    }
    Ok(out)
}

/// One access step into a value of type `ty`: the read built-in, the index
/// term and the element type.
fn step(ty: &IrType, idx: &Operand, idx_term: Term) -> Result<(Builtin, Term, IrType), String> {
    match ty {
        IrType::Array { elem, .. } => Ok((Builtin::Nth, idx_term, (**elem).clone())),
        IrType::Struct { fields, .. } => match idx {
            Operand::Const(c) if *c >= 0 && (*c as usize) < fields.len() => Ok((Builtin::Field, idx_term, fields[*c as usize].clone())),
            _ => Err("structure index must be a constant field number".into()),
        },
        _ => Err("index into a non-aggregate".into()),
    }
}

/// Output slots every clause of a function carries after its inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
enum OutSlot {
    Ptr(String),
    Ret,
}

struct ModuleCtx<'m> {
    module: &'m Module,
    written: BTreeMap<String, BTreeSet<String>>,
    /// (function, label) -> standalone predicate name
    block_preds: HashMap<(String, String), String>,
    entries: BTreeMap<String, String>,
    label_count: HashMap<String, usize>,
    used_preds: BTreeSet<String>,
    compares: BTreeSet<CmpPred>,
    program: Program,
}

fn atom_name(s: &str) -> String {
    let s: String = s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    if s.starts_with(|c: char| c.is_ascii_lowercase()) {
        s
    } else {
        format!("b_{s}")
    }
}

fn unique(base: String, used: &mut BTreeSet<String>) -> String {
    let mut name = base.clone();
    let mut k = 2;
    while used.contains(&name) {
        name = format!("{base}_{k}");
        k += 1;
    }
    used.insert(name.clone());
    name
}

struct Pending {
    name: String,
    cond: Term,
    then_label: String,
    else_label: String,
    union: Vec<String>,
}

struct FnCtx<'a, 'm> {
    m: &'a mut ModuleCtx<'m>,
    f: Function,
    standalone: BTreeSet<String>,
    pos: HashMap<String, usize>,
    vars: HashMap<String, String>,
    used_vars: BTreeSet<String>,
    types: HashMap<String, IrType>,
    roots: BTreeSet<String>,
    geps: HashMap<String, (String, IrType, Vec<Operand>)>,
    outs: Vec<(OutSlot, String)>,
    heads: HashMap<String, Vec<String>>,
}

/// Per-clause translation state.
struct ClauseState {
    cur: HashMap<String, String>,
    local: BTreeSet<String>,
    lits: Vec<Literal>,
    pending: Vec<Pending>,
}

impl FnCtx<'_, '_> {
    fn err(&self, loc: Loc, msg: impl Into<String>) -> TranslateError {
        TranslateError::Unsupported {
            function: self.f.name.clone(),
            line: loc.line,
            msg: msg.into(),
        }
    }

    fn var(&self, reg: &str) -> String {
        self.vars.get(reg).cloned().unwrap_or_else(|| var_name(reg))
    }

    fn fresh(&self, st: &mut ClauseState, base: &str) -> String {
        let mut k = 1;
        loop {
            let name = format!("{base}_{k}");
            if !self.used_vars.contains(&name) && !st.local.contains(&name) {
                st.local.insert(name.clone());
                return name;
            }
            k += 1;
        }
    }

    /// Current term for a register: the latest version for memory roots.
    fn term(&self, st: &ClauseState, o: &Operand) -> Term {
        match o {
            Operand::Reg(r) => Term::Var(st.cur.get(r).cloned().unwrap_or_else(|| self.var(r))),
            Operand::Const(c) => Term::Int(*c),
        }
    }

    fn head_params(&self, label: &str) -> Vec<String> {
        self.heads[label].clone()
    }

    fn out_vars(&self) -> Vec<Term> {
        self.outs.iter().map(|(_, v)| Term::Var(v.clone())).collect()
    }

    /// Body of block `label`; returns the head terms for the output slots.
    fn body(&mut self, label: &str, st: &mut ClauseState) -> Result<(Vec<Term>, Vec<Opcode>), TranslateError> {
        let b: Block = self.f.block(label).expect("label").clone();
        let mut residual = vec![Opcode::Phi; b.params.len()];
        for i in &b.instructions {
            self.instruction(i, st)?;
        }
        let term = b.terminator.as_ref().ok_or_else(|| self.err(b.loc, "block without terminator"))?;
        let outs = match term {
            Terminator::Br(t) => {
                let pred = self.m.block_preds[&(self.f.name.clone(), t.label.clone())].clone();
                let target = self.f.block(&t.label).expect("target").clone();
                let mut args = Vec::new();
                for h in self.head_params(&t.label) {
                    args.push(match target.params.iter().position(|(n, _)| *n == h) {
                        Some(k) => self.term(st, &t.args[k].1),
                        None => self.term(st, &Operand::Reg(h)),
                    });
                }
                args.extend(self.out_vars());
                st.lits.push(Literal::Call {
                    pred,
                    args,
                    charge: vec![Opcode::Br],
                });
                self.out_vars()
            }
            Terminator::CondBr { cond, then_to, else_to } => {
                let name = self.branch_name(&then_to.label, &else_to.label);
                let mut union: Vec<String> = self.head_params(&then_to.label);
                for h in self.head_params(&else_to.label) {
                    if !union.contains(&h) {
                        union.push(h);
                    }
                }
                union.sort_by_key(|r| (self.pos.get(r).copied().unwrap_or(usize::MAX), r.clone()));
                let then_b = self.f.block(&then_to.label).expect("target").clone();
                let else_b = self.f.block(&else_to.label).expect("target").clone();
                let cond_term = self.term(st, cond);
                let mut args = vec![cond_term];
                for h in &union {
                    let arg = if let Some(k) = then_b.params.iter().position(|(n, _)| n == h) {
                        self.term(st, &then_to.args[k].1)
                    } else if let Some(k) = else_b.params.iter().position(|(n, _)| n == h) {
                        self.term(st, &else_to.args[k].1)
                    } else {
                        self.term(st, &Operand::Reg(h.clone()))
                    };
                    args.push(arg);
                }
                args.extend(self.out_vars());
                st.lits.push(Literal::Call {
                    pred: name.clone(),
                    args,
                    charge: vec![Opcode::BrCond],
                });
                let cond_var = match cond {
                    Operand::Reg(r) => Term::Var(self.var(r)),
                    Operand::Const(_) => Term::Var("Cond".into()),
                };
                st.pending.push(Pending {
                    name,
                    cond: cond_var,
                    then_label: then_to.label.clone(),
                    else_label: else_to.label.clone(),
                    union,
                });
                self.out_vars()
            }
            Terminator::Ret(v) => {
                residual.push(Opcode::Ret);
                let mut outs = Vec::new();
                for (slot, _) in self.outs.clone() {
                    outs.push(match slot {
                        OutSlot::Ptr(p) => self.term(st, &Operand::Reg(p)),
                        OutSlot::Ret => match v {
                            Some((_, o)) => self.term(st, o),
                            None => Term::Atom("void".into()),
                        },
                    });
                }
                outs
            }
        };
        Ok((outs, residual))
    }

    fn branch_name(&mut self, then_l: &str, else_l: &str) -> String {
        let collides = |l: &str| self.m.label_count.get(l).copied().unwrap_or(0) > 1;
        let base = if collides(then_l) || collides(else_l) {
            atom_name(&format!("{}_{then_l}_{else_l}", self.f.name))
        } else {
            atom_name(&format!("{then_l}_{else_l}"))
        };
        unique(base, &mut self.m.used_preds)
    }

    fn instruction(&mut self, i: &Instruction, st: &mut ClauseState) -> Result<(), TranslateError> {
        let res = Term::Var(self.var(i.result.as_deref().unwrap_or("_")));
        let res = || res.clone();
        match &i.kind {
            InstKind::Phi { .. } => return Err(self.err(i.loc, "phi node survived elimination")),
            InstKind::Binary { op, lhs, rhs } => st.lits.push(Literal::Builtin {
                op: binop(*op),
                args: vec![self.term(st, lhs), self.term(st, rhs), res()],
                charge: vec![i.opcode()],
            }),
            InstKind::Icmp { pred, lhs, rhs, .. } => {
                self.m.compares.insert(*pred);
                st.lits.push(Literal::Call {
                    pred: compare_pred_name(*pred),
                    args: vec![self.term(st, lhs), self.term(st, rhs), res()],
                    charge: vec![Opcode::Icmp],
                });
            }
            InstKind::Cast { op, value, from } => {
                let l = cast(*op, self.term(st, value), from, &i.ty, res(), vec![i.opcode()]).map_err(|m| self.err(i.loc, m))?;
                st.lits.push(l);
            }
            InstKind::Alloca { allocated } => {
                if allocated.has_unsized_array() {
                    return Err(self.err(i.loc, "alloca of an arbitrary-length array"));
                }
                let r = i.result.clone().expect("alloca result");
                st.cur.insert(r.clone(), self.var(&r));
                st.lits.push(Literal::Builtin {
                    op: Builtin::MkValue,
                    args: vec![Term::Atom(allocated.expanded()), res()],
                    charge: vec![Opcode::Alloca],
                });
            }
            InstKind::Gep { base, ptr, indices } => {
                let Operand::Reg(p) = ptr else {
                    return Err(self.err(i.loc, "getelementptr on a constant"));
                };
                if !self.roots.contains(p) {
                    return Err(self.err(i.loc, format!("getelementptr base %{p} is not an alloca or pointer parameter")));
                }
                let r = i.result.clone().expect("gep result");
                self.geps.insert(r, (p.clone(), base.clone(), indices[1..].to_vec()));
            }
            InstKind::Load { ptr } => {
                let Operand::Reg(p) = ptr else {
                    return Err(self.err(i.loc, "load from a constant address"));
                };
                if i.ty.is_pointer() {
                    return Err(self.err(i.loc, "load of a pointer"));
                }
                if let Some((root, base, path)) = self.geps.get(p).cloned() {
                    let src = Term::Var(st.cur[&root].clone());
                    let mut names = Vec::new();
                    for _ in 1..path.len() {
                        names.push(self.fresh(st, "T"));
                    }
                    let mut it = names.into_iter();
                    let lits = access_read(&base, src, &path, &|o| self.term(st, o), res(), vec![Opcode::GetElementPtr, Opcode::Load], &mut |_| {
                        Term::Var(it.next().expect("fresh name"))
                    })
                    .map_err(|m| self.err(i.loc, m))?;
                    st.lits.extend(lits);
                } else if self.roots.contains(p) {
                    st.lits.push(Literal::Builtin {
                        op: Builtin::Mov,
                        args: vec![Term::Var(st.cur[p].clone()), res()],
                        charge: vec![Opcode::Load],
                    });
                } else {
                    return Err(self.err(i.loc, format!("load through %{p}, which is not an alloca, pointer parameter or element address")));
                }
            }
            InstKind::Store { value, ptr } => {
                let Operand::Reg(p) = ptr else {
                    return Err(self.err(i.loc, "store to a constant address"));
                };
                if i.ty.is_pointer() {
                    return Err(self.err(i.loc, "store of a pointer"));
                }
                let v = self.term(st, value);
                if let Some((root, base, path)) = self.geps.get(p).cloned() {
                    let old = st.cur[&root].clone();
                    let new = self.fresh(st, &self.var(&root));
                    let lits = self.access_write(st, &base, &old, &path, v, &new, i.loc)?;
                    st.lits.extend(lits);
                    st.cur.insert(root, new);
                } else if self.roots.contains(p) {
                    let new = self.fresh(st, &self.var(p));
                    st.lits.push(Literal::Builtin {
                        op: Builtin::Mov,
                        args: vec![v, Term::Var(new.clone())],
                        charge: vec![Opcode::Store],
                    });
                    st.cur.insert(p.clone(), new);
                } else {
                    return Err(self.err(i.loc, format!("store through %{p}, which is not an alloca, pointer parameter or element address")));
                }
            }
            InstKind::Call { callee, args } => self.call(i, callee, args, st)?,
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn access_write(
        &self,
        st: &mut ClauseState,
        base: &IrType,
        old: &str,
        path: &[Operand],
        value: Term,
        new: &str,
        loc: Loc,
    ) -> Result<Vec<Literal>, TranslateError> {
        // read the containers along the path, then rebuild them inside out
        let mut containers = vec![(Term::Var(old.to_string()), base.clone())];
        let mut reads = Vec::new();
        let mut steps = Vec::new();
        for (k, idx) in path.iter().enumerate() {
            let (cur, ty) = containers[k].clone();
            let (rop, idx_term, elem) = step(&ty, idx, self.term(st, idx)).map_err(|m| self.err(loc, m))?;
            steps.push((rop, idx_term.clone()));
            if k + 1 < path.len() {
                let t = Term::Var(self.fresh(st, "T"));
                reads.push(Literal::Builtin {
                    op: rop,
                    args: vec![idx_term, cur, t.clone()],
                    charge: vec![],
                });
                containers.push((t, elem));
            }
        }
        let mut writes = Vec::new();
        let mut inner = value;
        for k in (0..path.len()).rev() {
            let (rop, idx_term) = steps[k].clone();
            let wop = if rop == Builtin::Nth { Builtin::SetNth } else { Builtin::SetField };
            let dst = if k == 0 { Term::Var(new.to_string()) } else { Term::Var(self.fresh(st, "T")) };
            writes.push(Literal::Builtin {
                op: wop,
                args: vec![idx_term, containers[k].0.clone(), inner, dst.clone()],
                charge: vec![],
            });
            inner = dst;
        }
        let mut all: Vec<Literal> = reads.into_iter().chain(writes).collect();
        if let Some(Literal::Builtin { charge, .. }) = all.first_mut() {
            *charge = vec![Opcode::GetElementPtr, Opcode::Store];
        }
        Ok(all)
    }

    fn call(&mut self, i: &Instruction, callee: &str, args: &[(IrType, Operand)], st: &mut ClauseState) -> Result<(), TranslateError> {
        let mut terms = Vec::new();
        let mut passed: Vec<Option<String>> = Vec::new();
        let mut seen = BTreeSet::new();
        for (ty, a) in args {
            if ty.is_pointer() {
                let Operand::Reg(r) = a else {
                    return Err(self.err(i.loc, "constant passed as a pointer"));
                };
                if !self.roots.contains(r) {
                    return Err(self.err(i.loc, format!("%{r} passed to @{callee} is not an alloca or pointer parameter")));
                }
                if !seen.insert(r.clone()) {
                    return Err(self.err(i.loc, format!("%{r} passed twice to @{callee}")));
                }
                passed.push(Some(r.clone()));
            } else {
                passed.push(None);
            }
            terms.push(self.term(st, a));
        }
        let pred = if let Some(g) = self.m.module.function(callee) {
            let written = self.m.written[callee].clone();
            for (k, p) in g.params.iter().enumerate() {
                if written.contains(&p.name) {
                    let root = passed[k].clone().expect("written parameter is a pointer");
                    let new = self.fresh(st, &self.var(&root));
                    terms.push(Term::Var(new.clone()));
                    st.cur.insert(root, new);
                }
            }
            self.m.entries[callee].clone()
        } else {
            callee.to_string()
        };
        if let Some(r) = &i.result {
            terms.push(Term::Var(self.var(r)));
        } else if self.m.module.function(callee).is_some_and(|g| g.ret != IrType::Void) {
            terms.push(Term::Var(self.fresh(st, "Ignored")));
        }
        st.lits.push(Literal::Call {
            pred,
            args: terms,
            charge: vec![Opcode::Call],
        });
        Ok(())
    }

    fn new_state(&self, label: &str) -> ClauseState {
        let mut cur = HashMap::new();
        for h in self.head_params(label) {
            if self.roots.contains(&h) {
                cur.insert(h.clone(), self.var(&h));
            }
        }
        ClauseState {
            cur,
            local: BTreeSet::new(),
            lits: Vec::new(),
            pending: Vec::new(),
        }
    }

    fn origin(&self, label: &str) -> Option<BlockRef> {
        Some(BlockRef {
            function: self.f.name.clone(),
            label: label.to_string(),
        })
    }

    fn reg_type(&self, r: &str) -> RegularType {
        self.types.get(r).map(translate_type).unwrap_or(RegularType::Num)
    }

    fn out_types(&self) -> Vec<RegularType> {
        self.outs
            .iter()
            .map(|(s, _)| match s {
                OutSlot::Ptr(p) => self.reg_type(p),
                OutSlot::Ret => translate_type(&self.f.ret),
            })
            .collect()
    }

    fn add_sig(&mut self, name: &str, inputs: &[String], kind: PredKind, cond: bool) {
        let mut modes = Vec::new();
        let mut types = Vec::new();
        if cond {
            modes.push(Mode::In);
            types.push(RegularType::Num);
        }
        for r in inputs {
            modes.push(Mode::In);
            types.push(self.reg_type(r));
        }
        for t in self.out_types() {
            modes.push(Mode::Out);
            types.push(t);
        }
        self.m.program.signatures.push(PredSig {
            name: name.to_string(),
            modes,
            types,
            kind,
            function: Some(self.f.name.clone()),
        });
    }

    /// Emits the compare predicates first used so far, then the branch
    /// predicates created by a clause.
    fn flush(&mut self, pending: Vec<Pending>) -> Result<(), TranslateError> {
        emit_compares(self.m);
        for p in pending {
            self.add_sig(&p.name, &p.union, PredKind::Branch, true);
            let mut later = Vec::new();
            for (label, value) in [(&p.then_label, 1), (&p.else_label, 0)] {
                let mut st = self.new_state(label);
                let Term::Var(cv) = &p.cond else { unreachable!() };
                st.lits.push(Literal::Guard {
                    var: cv.clone(),
                    value,
                });
                let mut args = vec![p.cond.clone()];
                args.extend(p.union.iter().map(|r| Term::Var(self.var(r))));
                if self.standalone.contains(label) {
                    // the target has its own predicate: just call it
                    let mut call: Vec<Term> = self.head_params(label).iter().map(|r| Term::Var(self.var(r))).collect();
                    call.extend(self.out_vars());
                    st.lits.push(Literal::Call {
                        pred: self.m.block_preds[&(self.f.name.clone(), label.clone())].clone(),
                        args: call,
                        charge: vec![],
                    });
                    args.extend(self.out_vars());
                    self.m.program.clauses.push(Clause {
                        head: p.name.clone(),
                        args,
                        body: st.lits,
                        residual: vec![],
                        origin: None,
                    });
                    continue;
                }
                let (outs, residual) = self.body(label, &mut st)?;
                args.extend(outs);
                self.m.program.clauses.push(Clause {
                    head: p.name.clone(),
                    args,
                    body: st.lits,
                    residual,
                    origin: self.origin(label),
                });
                later.extend(st.pending);
            }
            self.flush(later)?;
        }
        Ok(())
    }
}

fn emit_compares(m: &mut ModuleCtx) {
    for pred in m.compares.clone() {
        let name = compare_pred_name(pred);
        if m.program.signature(&name).is_some() {
            continue;
        }
        m.program.signatures.push(PredSig {
            name: name.clone(),
            modes: vec![Mode::In, Mode::In, Mode::Out],
            types: vec![RegularType::Num; 3],
            kind: PredKind::Compare,
            function: None,
        });
        for (value, op) in [(1, pred), (0, pred.negate())] {
            m.program.clauses.push(Clause {
                head: name.clone(),
                args: vec![Term::Var("X".into()), Term::Var("Y".into()), Term::Int(value)],
                body: vec![Literal::Test {
                    op,
                    lhs: Term::Var("X".into()),
                    rhs: Term::Var("Y".into()),
                }],
                residual: vec![],
                origin: None,
            });
        }
    }
}

fn translate_fn(m: &mut ModuleCtx, f: &Function) -> Result<(), TranslateError> {
    let violations = validate_ssa(f);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(TranslateError::Invalid {
            function: f.name.clone(),
            violations: text.join("; "),
        });
    }
    let fe = eliminate_phi(f).map_err(|source| TranslateError::Phi {
        function: f.name.clone(),
        source,
    })?;
    let written = m.written[&f.name].clone();
    let sets = infer_block_params_with(&fe, &written, None);
    let pos: HashMap<String, usize> = occurrence_order(&fe).into_iter().map(|(k, v)| (k.to_string(), v)).collect();

    let mut types = HashMap::new();
    let mut roots = BTreeSet::new();
    for p in &fe.params {
        types.insert(p.name.clone(), p.ty.clone());
        if p.ty.is_pointer() {
            roots.insert(p.name.clone());
        }
    }
    for b in &fe.blocks {
        for (n, t) in &b.params {
            if t.is_pointer() {
                return Err(TranslateError::Unsupported {
                    function: f.name.clone(),
                    line: b.loc.line,
                    msg: format!("phi of pointers (%{n})"),
                });
            }
            types.insert(n.clone(), t.clone());
        }
        for i in &b.instructions {
            if let Some(r) = &i.result {
                types.insert(r.clone(), i.ty.clone());
                if matches!(i.kind, InstKind::Alloca { .. }) {
                    roots.insert(r.clone());
                }
            }
        }
    }

    // element addresses must feed exactly one load or store in their block
    let mut uses: HashMap<String, Vec<(usize, bool)>> = HashMap::new();
    for (bi, b) in fe.blocks.iter().enumerate() {
        for i in &b.instructions {
            let addr = match &i.kind {
                InstKind::Load { ptr: Operand::Reg(p) } | InstKind::Store { ptr: Operand::Reg(p), .. } => Some(p.as_str()),
                _ => None,
            };
            for o in i.operands() {
                if let Operand::Reg(r) = o {
                    let as_addr = addr == Some(r.as_str()) && !matches!(&i.kind, InstKind::Store { value: Operand::Reg(v), .. } if v == r);
                    uses.entry(r.clone()).or_default().push((bi, as_addr));
                }
            }
        }
        if let Some(t) = &b.terminator {
            for r in t.refs() {
                uses.entry(r).or_default().push((bi, false));
            }
        }
    }
    for (bi, b) in fe.blocks.iter().enumerate() {
        for i in &b.instructions {
            if let (InstKind::Gep { .. }, Some(r)) = (&i.kind, &i.result) {
                let u = uses.get(r).map(Vec::as_slice).unwrap_or(&[]);
                if u.len() != 1 || u[0] != (bi, true) {
                    return Err(TranslateError::Unsupported {
                        function: f.name.clone(),
                        line: i.loc.line,
                        msg: format!("element address %{r} must be used by exactly one load or store in its block"),
                    });
                }
            }
        }
    }

    let mut vars = HashMap::new();
    let mut used_vars = BTreeSet::new();
    let mut regs: Vec<&String> = fe.params.iter().map(|p| &p.name).collect();
    let mut by_pos: Vec<(&String, &usize)> = pos.iter().collect();
    by_pos.sort_by_key(|(_, p)| **p);
    regs.extend(by_pos.into_iter().map(|(r, _)| r));
    for r in regs {
        if vars.contains_key(r) {
            continue;
        }
        let base = var_name(r);
        let mut name = base.clone();
        let mut k = 1;
        while used_vars.contains(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        used_vars.insert(name.clone());
        vars.insert(r.clone(), name);
    }
    let mut outs = Vec::new();
    for p in &fe.params {
        if written.contains(&p.name) {
            outs.push((OutSlot::Ptr(p.name.clone()), format!("{}_out", vars[&p.name])));
        }
    }
    if fe.ret != IrType::Void {
        outs.push((OutSlot::Ret, "Ret".to_string()));
    }
    for (_, v) in outs.iter_mut() {
        let base = v.clone();
        let mut k = 1;
        while used_vars.contains(v.as_str()) {
            *v = format!("{base}_{k}");
            k += 1;
        }
        used_vars.insert(v.clone());
    }
    let heads: HashMap<String, Vec<String>> =
        fe.blocks.iter().map(|b| (b.label.clone(), ordered_params(&fe, &sets, &b.label))).collect();

    // entry, targets of unconditional branches and join points get a
    // predicate of their own; other blocks are inlined into branch clauses
    let preds = predecessors(&fe);
    let standalone: BTreeSet<String> = std::iter::once(fe.blocks[0].label.clone())
        .chain(fe.blocks.iter().filter_map(|b| match &b.terminator {
            Some(Terminator::Br(t)) => Some(t.label.clone()),
            _ => None,
        }))
        .chain(fe.blocks.iter().filter(|b| preds[&b.label].len() > 1).map(|b| b.label.clone()))
        .collect();

    let mut ctx = FnCtx {
        m,
        f: fe.clone(),
        standalone: standalone.clone(),
        pos,
        vars,
        used_vars,
        types,
        roots,
        geps: HashMap::new(),
        outs,
        heads,
    };
    for b in &fe.blocks {
        if !standalone.contains(&b.label) {
            continue;
        }
        let name = ctx.m.block_preds[&(fe.name.clone(), b.label.clone())].clone();
        let head = ctx.head_params(&b.label);
        ctx.add_sig(&name, &head, PredKind::Block, false);
        let mut st = ctx.new_state(&b.label);
        let (outs, residual) = ctx.body(&b.label, &mut st)?;
        let mut args: Vec<Term> = head.iter().map(|r| Term::Var(ctx.var(r))).collect();
        args.extend(outs);
        ctx.m.program.clauses.push(Clause {
            head: name,
            args,
            body: st.lits,
            residual,
            origin: ctx.origin(&b.label),
        });
        ctx.flush(st.pending)?;
    }
    Ok(())
}

/// Translates every function of `m`. Predicates are named after block
/// labels; labels used by several functions are prefixed with the function
/// name.
pub fn translate_module(m: &Module) -> Result<Program, TranslateError> {
    let mut label_count: HashMap<String, usize> = HashMap::new();
    for f in &m.functions {
        for b in &f.blocks {
            *label_count.entry(b.label.clone()).or_default() += 1;
        }
    }
    let mut used: BTreeSet<String> = Builtin::ALL.iter().map(|b| b.name().to_string()).collect();
    used.extend(CmpPred::ALL.iter().map(|p| compare_pred_name(*p)));
    used.extend(m.declarations.iter().map(|d| d.name.clone()));
    let mut block_preds = HashMap::new();
    let mut entries = BTreeMap::new();
    for f in &m.functions {
        for b in &f.blocks {
            let base = if label_count[&b.label] > 1 || used.contains(&atom_name(&b.label)) {
                atom_name(&format!("{}_{}", f.name, b.label))
            } else {
                atom_name(&b.label)
            };
            let name = unique(base, &mut used);
            block_preds.insert((f.name.clone(), b.label.clone()), name.clone());
            if f.blocks[0].label == b.label {
                entries.insert(f.name.clone(), name);
            }
        }
    }
    let mut ctx = ModuleCtx {
        module: m,
        written: written_pointer_params(m),
        block_preds,
        entries: entries.clone(),
        label_count,
        used_preds: used,
        compares: BTreeSet::new(),
        program: Program::default(),
    };
    for d in &m.declarations {
        let mut modes = vec![Mode::In; d.params.len()];
        let mut types: Vec<RegularType> = d.params.iter().map(translate_type).collect();
        if d.ret != IrType::Void {
            modes.push(Mode::Out);
            types.push(translate_type(&d.ret));
        }
        ctx.program.signatures.push(PredSig {
            name: d.name.clone(),
            modes,
            types,
            kind: PredKind::Abstract,
            function: None,
        });
    }
    for f in &m.functions {
        translate_fn(&mut ctx, f)?;
    }
    ctx.program.entries = entries;
    Ok(ctx.program)
}

/// Clauses of one function translated in the context of its module.
pub fn translate_function(m: &Module, name: &str) -> Result<Vec<Clause>, TranslateError> {
    let p = translate_module(m)?;
    let sig_fn: BTreeMap<&str, Option<&str>> = p.signatures.iter().map(|s| (s.name.as_str(), s.function.as_deref())).collect();
    let mut used_compares = BTreeSet::new();
    let mut out = Vec::new();
    for c in &p.clauses {
        if sig_fn.get(c.head.as_str()).copied().flatten() == Some(name) {
            for l in &c.body {
                if let Literal::Call { pred, .. } = l {
                    if super::compare_pred_from_name(pred).is_some() {
                        used_compares.insert(pred.clone());
                    }
                }
            }
            out.push(c.clone());
        }
    }
    // compare predicates follow the function's own clauses
    out.extend(p.clauses.iter().filter(|c| used_compares.contains(&c.head)).cloned());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hcir::print_hcir;
    use crate::ir::parse_module;

    #[test]
    fn traverse_clause_shapes() {
        let m = parse_module(include_str!("../../tests/corpus/traverse.sir")).unwrap();
        let p = translate_module(&m).unwrap();
        let heads: Vec<(String, usize)> = p.clauses.iter().map(|c| (c.head.clone(), c.args.len())).collect();
        let want = [
            ("alloca", 2),
            ("looptest", 2),
            ("icmp_ne", 3),
            ("icmp_ne", 3),
            ("loopbody_loopend", 3),
            ("loopbody_loopend", 3),
        ];
        assert_eq!(heads, want.map(|(h, a)| (h.to_string(), a)));
        assert_eq!(p.entries["traverse"], "alloca");
        let text = print_hcir(&p);
        assert!(text.contains("looptest(I, Arr) :-\n    icmp_ne(I, 0, Zcmp),\n    loopbody_loopend(Zcmp, I, Arr)."), "{text}");
        assert!(text.contains("nth(I, Arr, Elm),\n    sub(I, 1, I1),\n    looptest(I1, Arr)."), "{text}");
    }

    #[test]
    fn instruction_in_isolation() {
        let m = parse_module("define void @f(i32 %b, [0 x i32]* %Arr, i32 %I) {\nentry:\n  %a = add i32 %b, 0\n  %Elm = getelementptr [0 x i32], [0 x i32]* %Arr, i32 0, i32 %I\n  ret void\n}\n").unwrap();
        let ins = &m.functions[0].blocks[0].instructions;
        let add = translate_instruction(&ins[0]).unwrap();
        assert_eq!(
            add,
            vec![Literal::Builtin {
                op: Builtin::Add,
                args: vec![Term::Var("B".into()), Term::Int(0), Term::Var("A".into())],
                charge: vec![Opcode::Add],
            }]
        );
        let gep = translate_instruction(&ins[1]).unwrap();
        assert_eq!(
            gep,
            vec![Literal::Builtin {
                op: Builtin::Nth,
                args: vec![Term::Var("I".into()), Term::Var("Arr".into()), Term::Var("Elm".into())],
                charge: vec![Opcode::GetElementPtr],
            }]
        );
    }

    #[test]
    fn single_block_function() {
        let m = parse_module("define i32 @f(i32 %a) {\nentry:\n  %b = mul i32 %a, 3\n  ret i32 %b\n}\n").unwrap();
        let p = translate_module(&m).unwrap();
        assert_eq!(p.clauses.len(), 1);
        assert_eq!(print_hcir(&p).lines().filter(|l| l.starts_with("entry")).count(), 1);
        assert!(print_hcir(&p).contains("entry(A, B) :-\n    mul(A, 3, B)."));
    }

    #[test]
    fn stores_version_memory() {
        let src = "define void @fill(i32 %n, [0 x i32]* %A) {\nentry:\n  br label %test\ntest:\n  %i = phi i32 [ %n, %entry ], [ %j, %body ]\n  %c = icmp sgt i32 %i, 0\n  br i1 %c, label %body, label %done\nbody:\n  %p = getelementptr [0 x i32], [0 x i32]* %A, i32 0, i32 %i\n  store i32 %i, i32* %p\n  %j = sub i32 %i, 1\n  br label %test\ndone:\n  ret void\n}\n";
        let p = translate_module(&parse_module(src).unwrap()).unwrap();
        let text = print_hcir(&p);
        assert!(text.contains("entry(N, A, A_out) :-\n    test(N, A, A_out)."), "{text}");
        assert!(text.contains("set_nth(I, A, I, A_1),\n    sub(I, 1, J),\n    test(J, A_1, A_out)."), "{text}");
        assert!(text.contains("body_done(C, I, A, A) :-\n    C = 0."), "{text}");
    }

    #[test]
    fn nested_struct_access() {
        let src = "%s = type { i32, [4 x i32] }\ndefine i32 @g([0 x %s]* %A, i32 %k) {\nentry:\n  %p = getelementptr [0 x %s], [0 x %s]* %A, i32 0, i32 %k, i32 1, i32 2\n  %v = load i32, i32* %p\n  %q = getelementptr [0 x %s], [0 x %s]* %A, i32 0, i32 %k, i32 0\n  store i32 %v, i32* %q\n  ret i32 %v\n}\n";
        let p = translate_module(&parse_module(src).unwrap()).unwrap();
        let text = print_hcir(&p);
        assert!(text.contains("nth(K, A, T_1),\n    field(1, T_1, T_2),\n    nth(2, T_2, V),"), "{text}");
        assert!(text.contains("nth(K, A, T_3),\n    set_field(0, T_3, V, T_4),\n    set_nth(K, A, T_4, A_1)."), "{text}");
    }

    #[test]
    fn clashing_names_index_consistently() {
        // %n and %N both capitalize to N
        let src = "define void @w(i32 %N, [0 x i32]* %A) {\nentry:\n  %n = sub i32 %N, 1\n  %p = getelementptr [0 x i32], [0 x i32]* %A, i32 0, i32 %n\n  %v = load i32, i32* %p\n  %q = getelementptr [0 x i32], [0 x i32]* %A, i32 0, i32 %n\n  store i32 %v, i32* %q\n  ret void\n}\n";
        let p = translate_module(&parse_module(src).unwrap()).unwrap();
        let text = print_hcir(&p);
        assert!(text.contains("sub(N, 1, N_1),\n    nth(N_1, A, V),\n    set_nth(N_1, A, V, A_1)."), "{text}");
    }

    #[test]
    fn unsupported_address_use() {
        let src = "define i32 @g([0 x i32]* %A) {\nentry:\n  %p = getelementptr [0 x i32], [0 x i32]* %A, i32 0, i32 1\n  %v = load i32, i32* %p\n  %w = load i32, i32* %p\n  ret i32 %v\n}\n";
        let e = translate_module(&parse_module(src).unwrap()).unwrap_err();
        assert!(matches!(e, TranslateError::Unsupported { line: 3, .. }), "{e}");
    }
}
