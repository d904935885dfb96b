//! Phi elimination: each phi becomes a parameter of its block, and every
//! predecessor passes the matching incoming value at its branch.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ir::{predecessors, Function, InstKind, Operand};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PhiError {
    #[error("phi %{reg} in `{block}` has {got} incoming values for {want} predecessors")]
    OperandCount {
        reg: String,
        block: String,
        got: usize,
        want: usize,
    },
    #[error("phi %{reg} in `{block}` names `{from}`, which is not a predecessor")]
    NotPredecessor { reg: String, block: String, from: String },
}

/// Removes all phi instructions from `f`.
pub fn eliminate_phi(f: &Function) -> Result<Function, PhiError> {
    let preds = predecessors(f);
    let mut out = f.clone();
    for bi in 0..out.blocks.len() {
        let label = out.blocks[bi].label.clone();
        let nphi = out.blocks[bi].phis().count();
        if nphi == 0 {
            continue;
        }
        let phis: Vec<_> = out.blocks[bi].instructions.drain(..nphi).collect();
        let block_preds = &preds[&label];
        let mut incoming_per_pred: Vec<(String, Vec<(crate::ir::IrType, Operand)>)> =
            block_preds.iter().map(|p| (p.clone(), Vec::new())).collect();
        for phi in &phis {
            let reg = phi.result.clone().unwrap_or_default();
            let InstKind::Phi { incoming } = &phi.kind else { unreachable!() };
            let labels: BTreeSet<&str> = incoming.iter().map(|(_, l)| l.as_str()).collect();
            if incoming.len() != block_preds.len() || labels.len() != incoming.len() {
                return Err(PhiError::OperandCount {
                    reg,
                    block: label,
                    got: incoming.len(),
                    want: block_preds.len(),
                });
            }
            for (v, from) in incoming {
                let Some(slot) = incoming_per_pred.iter_mut().find(|(p, _)| p == from) else {
                    return Err(PhiError::NotPredecessor {
                        reg,
                        block: label,
                        from: from.clone(),
                    });
                };
                slot.1.push((phi.ty.clone(), v.clone()));
            }
            out.blocks[bi].params.push((reg, phi.ty.clone()));
        }
        for (pred, args) in incoming_per_pred {
            let pb = out.blocks.iter_mut().find(|b| b.label == pred).expect("predecessor exists");
            if let Some(t) = pb.terminator.as_mut() {
                for tgt in t.targets_mut() {
                    if tgt.label == label {
                        tgt.args.extend(args.iter().cloned());
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_module, validate_ssa, Terminator};

    #[test]
    fn traverse_phi_becomes_parameter() {
        let f = parse_module(crate::ir::parse::tests::FIG4).unwrap().functions.remove(0);
        let g = eliminate_phi(&f).unwrap();
        assert!(!g.has_phi());
        let lt = g.block("looptest").unwrap();
        assert_eq!(lt.params, vec![("I".to_string(), crate::ir::IrType::i32())]);
        let Some(Terminator::Br(t)) = &g.block("alloca").unwrap().terminator else { panic!() };
        assert_eq!(t.args[0].1, Operand::Reg("N".into()));
        let Some(Terminator::Br(t)) = &g.block("loopbody").unwrap().terminator else { panic!() };
        assert_eq!(t.args[0].1, Operand::Reg("I1".into()));
        assert_eq!(validate_ssa(&g), vec![]);
        // the printed form parses back to the same function
        let again = parse_module(&g.to_string()).unwrap();
        assert_eq!(again.functions[0], g);
    }

    #[test]
    fn no_phi_is_identity() {
        let m = parse_module("define void @f() {\na:\n  br label %b\nb:\n  ret void\n}\n").unwrap();
        assert_eq!(eliminate_phi(&m.functions[0]).unwrap(), m.functions[0]);
    }

    #[test]
    fn operand_count_mismatch() {
        let m = parse_module("define void @f(i1 %c) {\na:\n  br i1 %c, label %b, label %d\nb:\n  br label %d\nd:\n  %x = phi i32 [ 1, %a ]\n  ret void\n}\n").unwrap();
        assert!(matches!(eliminate_phi(&m.functions[0]), Err(PhiError::OperandCount { got: 1, want: 2, .. })));
    }
}
