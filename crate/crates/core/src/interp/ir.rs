//! SSA IR interpreter. Memory is a set of slots, one per alloca and per
//! pointer argument; a pointer is a slot and an index path into it.

use std::collections::HashMap;

use super::{arith, external_stub, index, index_mut, on_big_stack, trunc, zext, CostMap, CostedRun, InterpError, RunOptions, Value};
use crate::hcir::params::written_pointer_params;
use crate::hcir::BlockRef;
use crate::ir::{CastOp, Function, InstKind, IrType, Module, Operand, Terminator};

#[derive(Debug, Clone, PartialEq)]
enum Reg {
    Val(Value),
    Ptr { slot: usize, path: Vec<i128> },
}

struct Machine<'a> {
    m: &'a Module,
    c: &'a CostMap,
    opts: RunOptions,
    mem: Vec<Value>,
    run: CostedRun,
    // visit counts per function (module order) and block; costed at the end
    counts: Vec<Vec<u64>>,
}

impl Machine<'_> {
    fn step(&mut self) -> Result<(), InterpError> {
        self.run.steps += 1;
        if self.run.steps > self.opts.step_limit {
            return Err(InterpError::StepLimit(self.opts.step_limit));
        }
        Ok(())
    }

    fn read(&self, slot: usize, path: &[i128]) -> Result<Value, InterpError> {
        let mut v = &self.mem[slot];
        for i in path {
            v = index(v, *i)?;
        }
        Ok(v.clone())
    }

    fn write(&mut self, slot: usize, path: &[i128], x: Value) -> Result<(), InterpError> {
        let mut v = &mut self.mem[slot];
        for i in path {
            v = index_mut(v, *i)?;
        }
        *v = x;
        Ok(())
    }

    fn call(&mut self, f: &Function, args: Vec<Reg>) -> Result<Option<Value>, InterpError> {
        if args.len() != f.params.len() {
            return Err(InterpError::Arity {
                name: f.name.clone(),
                expected: f.params.len(),
                got: args.len(),
            });
        }
        let mut regs: HashMap<&str, Reg> = f.params.iter().map(|p| p.name.as_str()).zip(args).collect();
        let get = |regs: &HashMap<&str, Reg>, o: &Operand| -> Result<Reg, InterpError> {
            match o {
                Operand::Const(c) => Ok(Reg::Val(Value::Int(*c))),
                Operand::Reg(r) => regs.get(r.as_str()).cloned().ok_or_else(|| InterpError::Undefined(r.clone())),
            }
        };
        let int = |regs: &HashMap<&str, Reg>, o: &Operand| -> Result<i128, InterpError> {
            match get(regs, o)? {
                Reg::Val(Value::Int(i)) => Ok(i),
                other => Err(InterpError::Type(format!("expected an integer, got {other:?}"))),
            }
        };
        let fi = self.m.functions.iter().position(|g| std::ptr::eq(g, f)).expect("function of the module");
        let mut cur = 0;
        let mut prev: Option<&str> = None;
        loop {
            let b = &f.blocks[cur];
            self.counts[fi][cur] += 1;
            if self.opts.trace {
                self.run.trace.push(BlockRef {
                    function: f.name.clone(),
                    label: b.label.clone(),
                });
            }
            // phis read their operands before any of them is assigned
            let mut phi_vals = Vec::new();
            for i in b.phis() {
                self.step()?;
                let InstKind::Phi { incoming } = &i.kind else { unreachable!() };
                let from = prev.ok_or_else(|| InterpError::Type(format!("phi in entry block `{}`", b.label)))?;
                let (v, _) = incoming
                    .iter()
                    .find(|(_, l)| l == from)
                    .ok_or_else(|| InterpError::Type(format!("phi in `{}` has no value for `{from}`", b.label)))?;
                phi_vals.push((i.result.as_deref().expect("phi result"), get(&regs, v)?));
            }
            let nphi = phi_vals.len();
            regs.extend(phi_vals);
            for i in &b.instructions[nphi..] {
                self.step()?;
                let v = match &i.kind {
                    InstKind::Phi { .. } => return Err(InterpError::Type("phi after the start of a block".into())),
                    InstKind::Binary { op, lhs, rhs } => {
                        let name = match op {
                            crate::ir::BinOp::Add => "add",
                            crate::ir::BinOp::Sub => "sub",
                            crate::ir::BinOp::Mul => "mul",
                        };
                        Some(Reg::Val(arith(name, int(&regs, lhs)?, int(&regs, rhs)?)?))
                    }
                    InstKind::Icmp { pred, lhs, rhs, .. } => {
                        Some(Reg::Val(Value::Int(i128::from(pred.holds(int(&regs, lhs)?, int(&regs, rhs)?)))))
                    }
                    InstKind::Cast { op, value, from } => {
                        let x = int(&regs, value)?;
                        let width = |t: &IrType| match t {
                            IrType::Int(w) => Ok(*w),
                            _ => Err(InterpError::Type("cast of a non-integer".into())),
                        };
                        Some(Reg::Val(match op {
                            CastOp::Zext => zext(x, width(from)?)?,
                            CastOp::Trunc => trunc(x, width(&i.ty)?)?,
                        }))
                    }
                    InstKind::Alloca { allocated } => {
                        self.mem.push(Value::zero_of(allocated));
                        Some(Reg::Ptr {
                            slot: self.mem.len() - 1,
                            path: vec![],
                        })
                    }
                    InstKind::Gep { ptr, indices, .. } => {
                        let Reg::Ptr { slot, mut path } = get(&regs, ptr)? else {
                            return Err(InterpError::Type("getelementptr on a non-pointer".into()));
                        };
                        for ix in &indices[1..] {
                            path.push(int(&regs, ix)?);
                        }
                        Some(Reg::Ptr { slot, path })
                    }
                    InstKind::Load { ptr } => {
                        let Reg::Ptr { slot, path } = get(&regs, ptr)? else {
                            return Err(InterpError::Type("load from a non-pointer".into()));
                        };
                        Some(Reg::Val(self.read(slot, &path)?))
                    }
                    InstKind::Store { value, ptr } => {
                        let Reg::Ptr { slot, path } = get(&regs, ptr)? else {
                            return Err(InterpError::Type("store to a non-pointer".into()));
                        };
                        let Reg::Val(x) = get(&regs, value)? else {
                            return Err(InterpError::Type("store of a pointer".into()));
                        };
                        self.write(slot, &path, x)?;
                        None
                    }
                    InstKind::Call { callee, args } => {
                        let vals = args.iter().map(|(_, o)| get(&regs, o)).collect::<Result<Vec<_>, _>>()?;
                        if let Some(g) = self.m.function(callee) {
                            self.call(g, vals)?.map(Reg::Val)
                        } else if self.m.declaration(callee).is_some() {
                            self.run.call_external(callee, self.c);
                            let plain: Vec<Value> = vals
                                .into_iter()
                                .filter_map(|r| match r {
                                    Reg::Val(v) => Some(v),
                                    Reg::Ptr { .. } => None,
                                })
                                .collect();
                            Some(Reg::Val(external_stub(&plain)))
                        } else {
                            return Err(InterpError::Unknown(callee.clone()));
                        }
                    }
                };
                if let (Some(r), Some(v)) = (&i.result, v) {
                    regs.insert(r.as_str(), v);
                }
            }
            self.step()?;
            let term = b.terminator.as_ref().ok_or_else(|| InterpError::Type(format!("block `{}` has no terminator", b.label)))?;
            let target = match term {
                Terminator::Ret(v) => {
                    return match v {
                        None => Ok(None),
                        Some((_, o)) => match get(&regs, o)? {
                            Reg::Val(x) => Ok(Some(x)),
                            Reg::Ptr { .. } => Err(InterpError::Type("return of a pointer".into())),
                        },
                    }
                }
                Terminator::Br(t) => t,
                Terminator::CondBr { cond, then_to, else_to } => {
                    if int(&regs, cond)? != 0 {
                        then_to
                    } else {
                        else_to
                    }
                }
            };
            let next = f.block_index(&target.label).ok_or_else(|| InterpError::Unknown(target.label.clone()))?;
            let vals = target.args.iter().map(|(_, o)| get(&regs, o)).collect::<Result<Vec<_>, _>>()?;
            for ((name, _), v) in f.blocks[next].params.iter().zip(vals) {
                regs.insert(name.as_str(), v);
            }
            prev = Some(&b.label);
            cur = next;
        }
    }
}

/// Runs `function` of `m` on `args` (pointer parameters take the initial
/// contents of the pointed-to value).
pub fn run_ir(m: &Module, function: &str, args: &[Value], c: &CostMap, opts: RunOptions) -> Result<CostedRun, InterpError> {
    let f = m.function(function).ok_or_else(|| InterpError::Unknown(function.to_string()))?;
    if args.len() != f.params.len() {
        return Err(InterpError::Arity {
            name: function.to_string(),
            expected: f.params.len(),
            got: args.len(),
        });
    }
    let written = written_pointer_params(m).remove(function).unwrap_or_default();
    on_big_stack(move || {
        let mut mach = Machine {
            m,
            c,
            opts,
            mem: Vec::new(),
            run: CostedRun::default(),
            counts: m.functions.iter().map(|g| vec![0; g.blocks.len()]).collect(),
        };
        let mut regs = Vec::new();
        let mut slots = Vec::new();
        for (p, a) in f.params.iter().zip(args) {
            if p.ty.is_pointer() {
                mach.mem.push(a.clone());
                slots.push((p.name.clone(), mach.mem.len() - 1));
                regs.push(Reg::Ptr {
                    slot: mach.mem.len() - 1,
                    path: vec![],
                });
            } else {
                regs.push(Reg::Val(a.clone()));
            }
        }
        let ret = mach.call(f, regs);
        for (g, counts) in m.functions.iter().zip(&mach.counts) {
            for (b, &n) in g.blocks.iter().zip(counts) {
                if n > 0 {
                    mach.run.add_visits(
                        BlockRef {
                            function: g.name.clone(),
                            label: b.label.clone(),
                        },
                        n,
                        c,
                    );
                }
            }
        }
        let ret = ret?;
        let mut results: Vec<Value> = slots
            .iter()
            .filter(|(name, _)| written.contains(name))
            .map(|(_, s)| mach.mem[*s].clone())
            .collect();
        results.extend(ret);
        mach.run.results = results;
        Ok(mach.run)
    })
}
