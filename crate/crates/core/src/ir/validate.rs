use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use petgraph::algo::dominators;
use petgraph::graph::{DiGraph, NodeIndex};

use super::cfg::reachable;
use super::{predecessors, Function, InstKind, Loc};

/// One well-formedness violation found by [`validate_ssa`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DoubleDefinition { reg: String, loc: Loc },
    UseBeforeDef { reg: String, block: String, loc: Loc },
    MissingTerminator { block: String },
    PhiNotAtStart { block: String, loc: Loc },
    PhiPredecessorMismatch { block: String, loc: Loc },
    EntryHasPredecessors { block: String },
    UnreachableBlock { block: String },
    UndefinedLabel { block: String, target: String },
    DuplicateLabel { block: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DoubleDefinition { reg, loc } => write!(f, "{}: double definition of %{reg}", loc.line),
            Violation::UseBeforeDef { reg, block, loc } => {
                write!(f, "{}: use of %{reg} in `{block}` is not dominated by a definition", loc.line)
            }
            Violation::MissingTerminator { block } => write!(f, "block `{block}` has no terminator"),
            Violation::PhiNotAtStart { block, loc } => {
                write!(f, "{}: phi after a non-phi instruction in `{block}`", loc.line)
            }
            Violation::PhiPredecessorMismatch { block, loc } => {
                write!(f, "{}: phi incoming labels in `{block}` do not match its predecessors", loc.line)
            }
            Violation::EntryHasPredecessors { block } => write!(f, "entry block `{block}` has predecessors"),
            Violation::UnreachableBlock { block } => write!(f, "block `{block}` is unreachable from entry"),
            Violation::UndefinedLabel { block, target } => {
                write!(f, "block `{block}` branches to undefined label `%{target}`")
            }
            Violation::DuplicateLabel { block } => write!(f, "label `{block}` is defined twice"),
        }
    }
}

/// Checks the SSA and block-structure invariants of `f`. An empty result
/// means the function is well formed.
pub fn validate_ssa(f: &Function) -> Vec<Violation> {
    let mut out = Vec::new();
    if f.blocks.is_empty() {
        return out;
    }

    let mut labels = BTreeSet::new();
    for b in &f.blocks {
        if !labels.insert(b.label.as_str()) {
            out.push(Violation::DuplicateLabel { block: b.label.clone() });
        }
    }
    for b in &f.blocks {
        match &b.terminator {
            None => out.push(Violation::MissingTerminator { block: b.label.clone() }),
            Some(t) => {
                for tgt in t.targets() {
                    if !labels.contains(tgt.label.as_str()) {
                        out.push(Violation::UndefinedLabel {
                            block: b.label.clone(),
                            target: tgt.label.clone(),
                        });
                    }
                }
            }
        }
    }

    let preds = predecessors(f);
    let entry = &f.blocks[0].label;
    if !preds[entry].is_empty() {
        out.push(Violation::EntryHasPredecessors { block: entry.clone() });
    }
    let reach: BTreeSet<String> = reachable(f).into_iter().collect();
    for b in &f.blocks {
        if !reach.contains(&b.label) {
            out.push(Violation::UnreachableBlock { block: b.label.clone() });
        }
    }

    // Definition sites: block index and position (-1 for block parameters,
    // None for function parameters).
    let mut defs: HashMap<&str, (Option<usize>, isize)> = HashMap::new();
    for p in &f.params {
        defs.insert(&p.name, (None, -1));
    }
    for (bi, b) in f.blocks.iter().enumerate() {
        for (n, _) in &b.params {
            if defs.insert(n, (Some(bi), -1)).is_some() {
                out.push(Violation::DoubleDefinition { reg: n.clone(), loc: b.loc });
            }
        }
        for (ii, i) in b.instructions.iter().enumerate() {
            if let Some(r) = &i.result {
                if defs.insert(r, (Some(bi), ii as isize)).is_some() {
                    out.push(Violation::DoubleDefinition { reg: r.clone(), loc: i.loc });
                }
            }
        }
    }

    for b in &f.blocks {
        let mut seen_other = false;
        for i in &b.instructions {
            match &i.kind {
                InstKind::Phi { incoming } => {
                    if seen_other {
                        out.push(Violation::PhiNotAtStart {
                            block: b.label.clone(),
                            loc: i.loc,
                        });
                    } else if reach.contains(&b.label) {
                        let from: Vec<&str> = incoming.iter().map(|(_, l)| l.as_str()).collect();
                        let uniq: BTreeSet<&str> = from.iter().copied().collect();
                        let want: BTreeSet<&str> = preds[&b.label]
                            .iter()
                            .filter(|p| reach.contains(*p))
                            .map(String::as_str)
                            .collect();
                        if uniq.len() != from.len() || uniq != want {
                            out.push(Violation::PhiPredecessorMismatch {
                                block: b.label.clone(),
                                loc: i.loc,
                            });
                        }
                    }
                }
                _ => seen_other = true,
            }
        }
    }

    // Dominance of uses, over the reachable subgraph only.
    let index: BTreeMap<&str, usize> = f
        .blocks
        .iter()
        .enumerate()
        .rev()
        .map(|(i, b)| (b.label.as_str(), i))
        .collect();
    let mut g: DiGraph<(), ()> = DiGraph::new();
    let nodes: Vec<NodeIndex> = f.blocks.iter().map(|_| g.add_node(())).collect();
    for (bi, b) in f.blocks.iter().enumerate() {
        for t in b.terminator.iter().flat_map(|t| t.targets()) {
            if let Some(&ti) = index.get(t.label.as_str()) {
                g.add_edge(nodes[bi], nodes[ti], ());
            }
        }
    }
    let doms = dominators::simple_fast(&g, nodes[0]);
    let dominates = |a: usize, b: usize| -> bool {
        doms.dominators(nodes[b])
            .map(|mut it| it.any(|d| d == nodes[a]))
            .unwrap_or(false)
    };
    // Is a definition of `reg` available at position `pos` of block `bi`?
    let available = |reg: &str, bi: usize, pos: isize| -> bool {
        match defs.get(reg) {
            None => false,
            Some((None, _)) => true,
            Some((Some(db), dp)) => {
                if *db == bi {
                    *dp < pos
                } else {
                    dominates(*db, bi)
                }
            }
        }
    };
    let mut reported: BTreeSet<String> = BTreeSet::new();
    for (bi, b) in f.blocks.iter().enumerate() {
        if !reach.contains(&b.label) {
            continue;
        }
        let mut check = |reg: &str, ok: bool, loc: Loc, out: &mut Vec<Violation>| {
            if !ok && reported.insert(reg.to_string()) {
                out.push(Violation::UseBeforeDef {
                    reg: reg.to_string(),
                    block: b.label.clone(),
                    loc,
                });
            }
        };
        for (ii, i) in b.instructions.iter().enumerate() {
            if let InstKind::Phi { incoming } = &i.kind {
                for (v, from) in incoming {
                    let Some(r) = v.reg() else { continue };
                    let ok = match index.get(from.as_str()) {
                        Some(&pi) if reach.contains(from) => available(r, pi, isize::MAX),
                        // mismatched edges are reported separately
                        _ => true,
                    };
                    check(r, ok, i.loc, &mut out);
                }
            } else {
                for o in i.operands() {
                    if let Some(r) = o.reg() {
                        check(r, available(r, bi, ii as isize), i.loc, &mut out);
                    }
                }
            }
        }
        if let Some(t) = &b.terminator {
            for r in t.refs() {
                check(&r, available(&r, bi, isize::MAX), b.term_loc, &mut out);
            }
        }
    }
    out
}
