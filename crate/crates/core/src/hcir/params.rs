//! Block parameter inference.
//!
//! `params_in(b)` is computed as a least fixpoint over the successor map,
//! treating phi definitions as values received from the caller:
//!
//! ```text
//! params_in(b)  = gen(b) ∪ ⋃_{b' ∈ next(b)} (params_in(b') \ recv(b')) \ kill(b)
//! params_out(b) = (kill(b) ∪ params_in(b)) ∩ ⋃_{b' ∈ next(b)} params_out(b')
//! ```
//!
//! where `recv(b)` are the phi results of `b`, `kill(b)` its other
//! definitions, and `gen(b)` the registers it receives or reads before
//! defining them, including the phi operands it passes to its successors.
//! Both sets of the entry block are forced to the function parameters.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::ir::{def_ref, predecessors, Function, InstKind, Module, Operand, Terminator};

type Regs = BTreeSet<String>;

/// `gen(b)` and `kill(b)` of a block read literally: `kill` is every
/// register defined in `b`, and `gen` every register referenced by some
/// node before any node of `b` defines it. Phi operands count as references.
pub fn gen_kill(b: &crate::ir::Block) -> (Regs, Regs) {
    let mut gen = Regs::new();
    let mut kill: Regs = b.params.iter().map(|(n, _)| n.clone()).collect();
    for i in &b.instructions {
        let (d, r) = def_ref(i);
        gen.extend(r.into_iter().filter(|x| !kill.contains(x)));
        kill.extend(d);
    }
    if let Some(t) = &b.terminator {
        gen.extend(t.refs().into_iter().filter(|x| !kill.contains(x)));
    }
    (gen, kill)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BlockSets {
    pub gen: Regs,
    pub kill: Regs,
    pub params_in: Regs,
    pub params_out: Regs,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParamSets {
    pub blocks: BTreeMap<String, BlockSets>,
    /// Number of block evaluations until the fixpoint was reached.
    pub iterations: usize,
}

impl ParamSets {
    pub fn params_in(&self, label: &str) -> &Regs {
        &self.blocks[label].params_in
    }
}

/// Registers a block receives from its predecessors (phi results, or block
/// parameters after phi elimination).
pub(crate) fn received(b: &crate::ir::Block) -> Regs {
    b.params
        .iter()
        .map(|(n, _)| n.clone())
        .chain(b.phis().filter_map(|i| i.result.clone()))
        .collect()
}

/// `gen` and `kill` as used by the fixpoint. `written` lists pointer
/// parameters whose final contents are returned to the caller; they are
/// read by every return.
pub(crate) fn lowered_gen_kill(f: &Function, label: &str, written: &Regs) -> (Regs, Regs) {
    let b = f.block(label).expect("label of f");
    let recv = received(b);
    let mut gen = recv.clone();
    let mut defined = recv;
    let mut kill = Regs::new();
    for i in &b.instructions {
        if matches!(i.kind, InstKind::Phi { .. }) {
            continue;
        }
        let (d, r) = def_ref(i);
        gen.extend(r.into_iter().filter(|x| !defined.contains(x)));
        defined.extend(d.iter().cloned());
        kill.extend(d);
    }
    if let Some(t) = &b.terminator {
        gen.extend(t.refs().into_iter().filter(|x| !defined.contains(x)));
        for tgt in t.targets() {
            let Some(s) = f.block(&tgt.label) else { continue };
            for phi in s.phis() {
                if let InstKind::Phi { incoming } = &phi.kind {
                    for (v, from) in incoming {
                        if let (Operand::Reg(r), true) = (v, from == label) {
                            if !defined.contains(r) {
                                gen.insert(r.clone());
                            }
                        }
                    }
                }
            }
        }
        if matches!(t, Terminator::Ret(_)) {
            gen.extend(written.iter().filter(|x| !defined.contains(*x)).cloned());
        }
    }
    (gen, kill)
}

/// Parameter sets of `f`, taking as written the pointer parameters `f`
/// stores through directly.
pub fn infer_block_params(f: &Function) -> ParamSets {
    infer_block_params_with(f, &local_writes(f), None)
}

/// Parameter sets of `f` with an explicit set of written pointer parameters
/// and, optionally, the initial worklist order (block indices).
pub fn infer_block_params_with(f: &Function, written: &Regs, order: Option<&[usize]>) -> ParamSets {
    let n = f.blocks.len();
    let labels: Vec<&str> = f.blocks.iter().map(|b| b.label.as_str()).collect();
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let succ: Vec<Vec<usize>> = f
        .blocks
        .iter()
        .map(|b| {
            let mut s: Vec<usize> = b
                .terminator
                .iter()
                .flat_map(|t| t.targets())
                .filter_map(|t| index.get(t.label.as_str()).copied())
                .collect();
            s.dedup();
            s
        })
        .collect();
    let preds_map = predecessors(f);
    let preds: Vec<Vec<usize>> = labels
        .iter()
        .map(|l| preds_map[*l].iter().filter_map(|p| index.get(p.as_str()).copied()).collect())
        .collect();
    let gk: Vec<(Regs, Regs)> = labels.iter().map(|l| lowered_gen_kill(f, l, written)).collect();
    let recv: Vec<Regs> = f.blocks.iter().map(received).collect();
    let fparams: Regs = f.params.iter().map(|p| p.name.clone()).collect();

    let initial: Vec<usize> = match order {
        Some(o) => o.to_vec(),
        None => (0..n).rev().collect(),
    };
    let mut ins: Vec<Regs> = vec![Regs::new(); n];
    let mut queue: VecDeque<usize> = initial.iter().copied().collect();
    let mut queued = vec![false; n];
    for &i in &initial {
        queued[i] = true;
    }
    let mut iterations = 0;
    while let Some(b) = queue.pop_front() {
        queued[b] = false;
        iterations += 1;
        let new = if b == 0 {
            fparams.clone()
        } else {
            let mut s = gk[b].0.clone();
            for &t in &succ[b] {
                s.extend(ins[t].difference(&recv[t]).cloned());
            }
            s.retain(|x| !gk[b].1.contains(x));
            s
        };
        if new != ins[b] {
            ins[b] = new;
            for &p in &preds[b] {
                if !queued[p] {
                    queued[p] = true;
                    queue.push_back(p);
                }
            }
        }
    }

    let mut outs: Vec<Regs> = vec![Regs::new(); n];
    if n > 0 {
        outs[0] = fparams.clone();
    }
    let mut changed = true;
    while changed {
        changed = false;
        for b in 1..n {
            let mut union = Regs::new();
            for &t in &succ[b] {
                union.extend(outs[t].iter().cloned());
            }
            let new: Regs = gk[b].1.union(&ins[b]).filter(|x| union.contains(*x)).cloned().collect();
            if new != outs[b] {
                outs[b] = new;
                changed = true;
            }
        }
    }

    let blocks = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            (
                l.to_string(),
                BlockSets {
                    gen: gk[i].0.clone(),
                    kill: gk[i].1.clone(),
                    params_in: ins[i].clone(),
                    params_out: outs[i].clone(),
                },
            )
        })
        .collect();
    ParamSets { blocks, iterations }
}

/// Pointer parameters of `f` that `f` itself stores through.
fn local_writes(f: &Function) -> Regs {
    let ptr_params: Regs = f.params.iter().filter(|p| p.ty.is_pointer()).map(|p| p.name.clone()).collect();
    let mut gep_base: HashMap<&str, &str> = HashMap::new();
    for b in &f.blocks {
        for i in &b.instructions {
            if let (Some(r), InstKind::Gep { ptr: Operand::Reg(base), .. }) = (&i.result, &i.kind) {
                gep_base.insert(r, base);
            }
        }
    }
    let mut out = Regs::new();
    for b in &f.blocks {
        for i in &b.instructions {
            if let InstKind::Store { ptr: Operand::Reg(p), .. } = &i.kind {
                let root = gep_base.get(p.as_str()).copied().unwrap_or(p);
                if ptr_params.contains(root) {
                    out.insert(root.to_string());
                }
            }
        }
    }
    out
}

/// Pointer parameters each function may write, directly or through calls.
pub fn written_pointer_params(m: &Module) -> BTreeMap<String, Regs> {
    let mut w: BTreeMap<String, Regs> = m.functions.iter().map(|f| (f.name.clone(), local_writes(f))).collect();
    loop {
        let mut changed = false;
        for f in &m.functions {
            for b in &f.blocks {
                for i in &b.instructions {
                    let InstKind::Call { callee, args } = &i.kind else { continue };
                    let Some(g) = m.function(callee) else { continue };
                    for (j, (_, a)) in args.iter().enumerate() {
                        let Operand::Reg(r) = a else { continue };
                        let callee_writes = g.params.get(j).is_some_and(|p| w[&g.name].contains(&p.name));
                        if callee_writes && f.params.iter().any(|p| &p.name == r) && w.get_mut(&f.name).unwrap().insert(r.clone()) {
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            return w;
        }
    }
}

/// Head parameter order of a block: the signature for the entry block,
/// first textual occurrence in the function body otherwise.
pub fn ordered_params(f: &Function, sets: &ParamSets, label: &str) -> Vec<String> {
    if f.blocks.first().is_some_and(|b| b.label == label) {
        return f.params.iter().map(|p| p.name.clone()).collect();
    }
    let pos = occurrence_order(f);
    let mut v: Vec<String> = sets.params_in(label).iter().cloned().collect();
    v.sort_by_key(|r| (pos.get(r.as_str()).copied().unwrap_or(usize::MAX), r.clone()));
    v
}

/// Position of the first occurrence of each register in the function body.
pub(crate) fn occurrence_order(f: &Function) -> HashMap<&str, usize> {
    let mut pos: HashMap<&str, usize> = HashMap::new();
    fn note<'a>(r: &'a str, pos: &mut HashMap<&'a str, usize>) {
        let next = pos.len();
        pos.entry(r).or_insert(next);
    }
    for b in &f.blocks {
        for (n, _) in &b.params {
            note(n, &mut pos);
        }
        for i in &b.instructions {
            if let Some(r) = &i.result {
                note(r, &mut pos);
            }
            for o in i.operands() {
                if let Operand::Reg(r) = o {
                    note(r, &mut pos);
                }
            }
        }
        if let Some(t) = &b.terminator {
            match t {
                Terminator::Br(t) => t.args.iter().for_each(|(_, o)| {
                    if let Operand::Reg(r) = o {
                        note(r, &mut pos)
                    }
                }),
                Terminator::CondBr { cond, then_to, else_to } => {
                    if let Operand::Reg(r) = cond {
                        note(r, &mut pos);
                    }
                    for (_, o) in then_to.args.iter().chain(&else_to.args) {
                        if let Operand::Reg(r) = o {
                            note(r, &mut pos);
                        }
                    }
                }
                Terminator::Ret(Some((_, Operand::Reg(r)))) => note(r, &mut pos),
                Terminator::Ret(_) => {}
            }
        }
    }
    pos
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_module;

    fn set(items: &[&str]) -> Regs {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn traverse_program() -> Function {
        parse_module(crate::ir::parse::tests::FIG4).unwrap().functions.remove(0)
    }

    #[test]
    fn looptest_params() {
        let f = traverse_program();
        let p = infer_block_params(&f);
        assert_eq!(p.params_in("looptest"), &set(&["Arr", "I"]));
        assert_eq!(p.params_in("alloca"), &set(&["Arr", "N"]));
        assert_eq!(p.params_in("loopbody"), &set(&["Arr", "I"]));
        assert_eq!(p.params_in("loopend"), &set(&[]));
        assert_eq!(ordered_params(&f, &p, "looptest"), ["I", "Arr"]);
        assert_eq!(ordered_params(&f, &p, "alloca"), ["N", "Arr"]);
        for b in p.blocks.values() {
            assert!(b.gen.is_subset(&b.params_in) || b.params_in == set(&["Arr", "N"]));
        }
    }

    #[test]
    fn literal_gen_kill() {
        let f = traverse_program();
        let (g, k) = gen_kill(f.block("looptest").unwrap());
        assert_eq!(g, set(&["N", "I1"]));
        assert_eq!(k, set(&["I", "Zcmp"]));
        let (g, k) = gen_kill(f.block("loopend").unwrap());
        assert!(g.is_empty() && k.is_empty());
        let (g, k) = lowered_gen_kill(&f, "looptest", &Regs::new());
        assert_eq!(g, set(&["I"]));
        assert_eq!(k, set(&["Zcmp"]));
        let (g, _) = lowered_gen_kill(&f, "loopbody", &Regs::new());
        assert_eq!(g, set(&["Arr", "I"]));
    }

    #[test]
    fn single_block_function() {
        let m = parse_module("define i32 @f(i32 %a, i32 %b) {\nentry:\n  %c = add i32 %a, 1\n  ret i32 %c\n}\n").unwrap();
        let p = infer_block_params(&m.functions[0]);
        assert_eq!(p.params_in("entry"), &set(&["a", "b"]));
        assert_eq!(p.blocks["entry"].params_out, set(&["a", "b"]));
    }

    #[test]
    fn written_pointer_reaches_return() {
        let src = "define void @w(i32 %n, [0 x i32]* %A) {\nentry:\n  %p = getelementptr [0 x i32], [0 x i32]* %A, i32 0, i32 %n\n  store i32 1, i32* %p\n  br label %done\ndone:\n  ret void\n}\ndefine void @g([0 x i32]* %B) {\nentry:\n  call void @w(i32 0, [0 x i32]* %B)\n  ret void\n}\n";
        let m = parse_module(src).unwrap();
        let w = written_pointer_params(&m);
        assert_eq!(w["w"], set(&["A"]));
        assert_eq!(w["g"], set(&["B"]));
        let p = infer_block_params(&m.functions[0]);
        assert_eq!(p.params_in("done"), &set(&["A"]));
    }
}
