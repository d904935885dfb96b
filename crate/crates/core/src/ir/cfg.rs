use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::Function;

/// `next(b)`: block label to the labels of its immediate targets.
pub type Successors = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CfgError {
    #[error("block `{block}` branches to undefined label `%{target}`")]
    UndefinedLabel { block: String, target: String },
}

/// Successor map of `f`. Return blocks (and blocks without a terminator)
/// map to the empty set.
pub fn build_cfg(f: &Function) -> Result<Successors, CfgError> {
    let labels: BTreeSet<&str> = f.blocks.iter().map(|b| b.label.as_str()).collect();
    let mut next = Successors::new();
    for b in &f.blocks {
        let mut succ = BTreeSet::new();
        for t in b.terminator.iter().flat_map(|t| t.targets()) {
            if !labels.contains(t.label.as_str()) {
                return Err(CfgError::UndefinedLabel {
                    block: b.label.clone(),
                    target: t.label.clone(),
                });
            }
            succ.insert(t.label.clone());
        }
        next.insert(b.label.clone(), succ);
    }
    Ok(next)
}

/// Inverse of the successor relation; targets that name no block are skipped.
pub fn predecessors(f: &Function) -> BTreeMap<String, BTreeSet<String>> {
    let mut preds: BTreeMap<String, BTreeSet<String>> =
        f.blocks.iter().map(|b| (b.label.clone(), BTreeSet::new())).collect();
    for b in &f.blocks {
        for t in b.terminator.iter().flat_map(|t| t.targets()) {
            if let Some(p) = preds.get_mut(&t.label) {
                p.insert(b.label.clone());
            }
        }
    }
    preds
}

/// Labels reachable from the entry block, in depth-first preorder.
pub(crate) fn reachable(f: &Function) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut order = Vec::new();
    let Some(entry) = f.blocks.first() else {
        return order;
    };
    let mut stack = vec![entry.label.clone()];
    while let Some(l) = stack.pop() {
        if !seen.insert(l.clone()) {
            continue;
        }
        if let Some(b) = f.block(&l) {
            for t in b.terminator.iter().flat_map(|t| t.targets()).rev() {
                if !seen.contains(&t.label) {
                    stack.push(t.label.clone());
                }
            }
        }
        order.push(l);
    }
    order
}
