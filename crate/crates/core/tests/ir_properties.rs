//! Property tests for the SSA IR layer: printer/parser round trips,
//! validation against seeded mutations, the successor map against a plain
//! text scan, and def/ref sets against the printed instruction.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::gen::{random_module, GenOptions};
use hcenergy::ir::{build_cfg, def_ref, parse_module, validate_ssa, Block, InstKind, Module, Operand, Terminator, Violation};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn generated(seed: u64, count: usize) -> (String, Module) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let text = random_module(count, &GenOptions::default(), &mut rng);
    let m = parse_module(&text).unwrap_or_else(|e| panic!("generated module does not parse: {e}\n{text}"));
    (text, m)
}

fn corpus() -> Vec<(String, Module)> {
    common::corpus_files()
        .into_iter()
        .map(|(file, _)| {
            let text = common::source(file);
            let m = parse_module(&text).unwrap_or_else(|e| panic!("{file}: {e}"));
            (text, m)
        })
        .collect()
}

/// Successor map read straight off the source text: block labels are the
/// unindented lines ending in `:`, edges are the `label %x` tokens of `br`
/// lines.
fn scan_edges(text: &str) -> BTreeMap<String, BTreeMap<String, BTreeSet<String>>> {
    let mut out: BTreeMap<String, BTreeMap<String, BTreeSet<String>>> = BTreeMap::new();
    let mut func = String::new();
    let mut block = String::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("define ") {
            let at = rest.find('@').unwrap();
            func = rest[at + 1..].split('(').next().unwrap().to_string();
            continue;
        }
        if !line.starts_with(' ') && line.ends_with(':') {
            block = line.trim_end_matches(':').split('(').next().unwrap().to_string();
            out.entry(func.clone()).or_default().entry(block.clone()).or_default();
            continue;
        }
        let code = line.split(';').next().unwrap().trim();
        if code.starts_with("br ") {
            for piece in code.split("label %").skip(1) {
                let target: String = piece.chars().take_while(|c| c.is_alphanumeric() || *c == '_' || *c == '.').collect();
                out.get_mut(&func).unwrap().get_mut(&block).unwrap().insert(target);
            }
        }
    }
    out
}

/// Registers named by a printed instruction, excluding its result, named
/// types, and phi incoming labels.
fn scan_refs(printed: &str, types: &BTreeSet<&str>) -> BTreeSet<String> {
    let rhs = printed.split_once(" = ").map_or(printed, |(_, r)| r);
    let name = |piece: &str| -> String { piece.chars().take_while(|c| c.is_alphanumeric() || *c == '_' || *c == '.').collect() };
    if rhs.starts_with("phi ") {
        // Only the value half of each `[ v, %l ]` pair.
        return rhs
            .split('[')
            .skip(1)
            .filter_map(|pair| pair.split(',').next().unwrap().trim().strip_prefix('%').map(name))
            .collect();
    }
    rhs.split('%').skip(1).map(name).filter(|n| !types.contains(n.as_str())).collect()
}

fn reg_operands_mut(k: &mut InstKind) -> Vec<&mut Operand> {
    let ops: Vec<&mut Operand> = match k {
        InstKind::Phi { incoming } => incoming.iter_mut().map(|(o, _)| o).collect(),
        InstKind::Binary { lhs, rhs, .. } | InstKind::Icmp { lhs, rhs, .. } => vec![lhs, rhs],
        InstKind::Cast { value, .. } => vec![value],
        InstKind::Alloca { .. } => vec![],
        InstKind::Load { ptr } => vec![ptr],
        InstKind::Store { value, ptr } => vec![value, ptr],
        InstKind::Gep { ptr, indices, .. } => std::iter::once(ptr).chain(indices.iter_mut()).collect(),
        InstKind::Call { args, .. } => args.iter_mut().map(|(_, o)| o).collect(),
    };
    ops.into_iter().filter(|o| matches!(o, Operand::Reg(_))).collect()
}

#[derive(Debug, Clone, Copy)]
enum Break {
    Duplicate,
    Undefined,
    Orphan,
}

/// Applies one seeded break to a copy of `m`'s function `fi` and returns
/// it together with the single violation it must cause.
fn mutate(m: &Module, fi: usize, kind: Break, rng: &mut ChaCha8Rng) -> Option<(hcenergy::ir::Function, Violation)> {
    let mut f = m.functions[fi].clone();
    let loc = hcenergy::ir::Loc::default();
    match kind {
        Break::Duplicate => {
            let sites: Vec<(usize, usize)> = f
                .blocks
                .iter()
                .enumerate()
                .flat_map(|(bi, b)| {
                    b.instructions.iter().enumerate().filter_map(move |(ii, i)| {
                        (i.result.is_some() && !matches!(i.kind, InstKind::Phi { .. })).then_some((bi, ii))
                    })
                })
                .collect();
            let &(bi, ii) = sites.choose(rng)?;
            let copy = f.blocks[bi].instructions[ii].clone();
            let reg = copy.result.clone().unwrap();
            f.blocks[bi].instructions.insert(ii + 1, copy);
            Some((f, Violation::DoubleDefinition { reg, loc }))
        }
        Break::Undefined => {
            let sites: Vec<(usize, usize)> = f
                .blocks
                .iter()
                .enumerate()
                .flat_map(|(bi, b)| {
                    b.instructions
                        .iter()
                        .enumerate()
                        .filter(|(_, i)| !matches!(i.kind, InstKind::Phi { .. }) && i.operands().iter().any(|o| o.reg().is_some()))
                        .map(move |(ii, _)| (bi, ii))
                })
                .collect();
            let &(bi, ii) = sites.choose(rng)?;
            let block = f.blocks[bi].label.clone();
            let mut ops = reg_operands_mut(&mut f.blocks[bi].instructions[ii].kind);
            let k = rng.gen_range(0..ops.len());
            *ops[k] = Operand::Reg("never_defined".into());
            Some((f, Violation::UseBeforeDef { reg: "never_defined".into(), block, loc }))
        }
        Break::Orphan => {
            f.blocks.push(Block {
                label: "orphan".into(),
                params: Vec::new(),
                instructions: Vec::new(),
                terminator: Some(Terminator::Ret(None)),
                term_loc: loc,
                loc,
            });
            Some((f, Violation::UnreachableBlock { block: "orphan".into() }))
        }
    }
}

fn check_mutations(m: &Module, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for fi in 0..m.functions.len() {
        for kind in [Break::Duplicate, Break::Undefined, Break::Orphan] {
            let Some((f, want)) = mutate(m, fi, kind, &mut rng) else { continue };
            let got = validate_ssa(&f);
            assert_eq!(got, vec![want], "{kind:?} in @{}:\n{f:#?}", f.name);
            checked += 1;
        }
    }
    checked
}

fn check_def_ref(m: &Module) -> usize {
    let types: BTreeSet<&str> = m.types.iter().map(|(n, _)| n.as_str()).collect();
    let mut n = 0;
    for f in &m.functions {
        for i in f.blocks.iter().flat_map(|b| &b.instructions) {
            let (def, refs) = def_ref(i);
            assert_eq!(def, i.result.iter().cloned().collect::<BTreeSet<_>>());
            assert!(def.is_disjoint(&refs), "{i}: def {def:?} meets ref {refs:?}");
            assert_eq!(refs, scan_refs(&i.to_string(), &types), "{i}");
            n += 1;
        }
    }
    n
}

fn check_cfg(text: &str, m: &Module) {
    let scanned = scan_edges(text);
    for f in &m.functions {
        assert_eq!(build_cfg(f).unwrap(), scanned[&f.name], "@{}", f.name);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_modules_round_trip(seed in any::<u64>()) {
        let (_, m) = generated(seed, 3);
        for f in &m.functions {
            prop_assert!(validate_ssa(f).is_empty(), "@{}: {:?}", f.name, validate_ssa(f));
        }
        let printed = m.to_string();
        let again = parse_module(&printed).unwrap();
        prop_assert_eq!(&again, &m);
        prop_assert_eq!(again.to_string(), printed);
    }

    #[test]
    fn one_break_one_violation(seed in any::<u64>()) {
        let (_, m) = generated(seed, 2);
        check_mutations(&m, seed ^ 0x5eed);
    }

    #[test]
    fn successors_match_text_scan(seed in any::<u64>()) {
        let (text, m) = generated(seed, 2);
        check_cfg(&text, &m);
        check_cfg(&m.to_string(), &m);
    }

    #[test]
    fn def_and_ref_are_disjoint(seed in any::<u64>()) {
        let (_, m) = generated(seed, 2);
        check_def_ref(&m);
    }
}

#[test]
fn fifty_function_corpus_is_a_print_parse_fixpoint() {
    let (_, m) = generated(20, 50);
    assert_eq!(m.functions.len(), 51);
    let once = m.to_string();
    let twice = parse_module(&once).unwrap();
    assert_eq!(twice, m);
    assert_eq!(twice.to_string(), once);
}

#[test]
fn benchmark_corpus_round_trips_and_validates() {
    for (text, m) in corpus() {
        for f in &m.functions {
            assert!(validate_ssa(f).is_empty(), "@{}: {:?}", f.name, validate_ssa(f));
        }
        let printed = m.to_string();
        assert_eq!(parse_module(&printed).unwrap(), m);
        check_cfg(&text, &m);
    }
}

#[test]
fn benchmark_corpus_mutations() {
    let mut checked = 0;
    for (seed, (_, m)) in corpus().into_iter().enumerate() {
        for round in 0..5 {
            checked += check_mutations(&m, (seed * 10 + round) as u64);
        }
    }
    assert!(checked > 100, "only {checked} mutations applied");
}

#[test]
fn benchmark_corpus_def_ref() {
    let n: usize = corpus().iter().map(|(_, m)| check_def_ref(m)).sum();
    assert!(n > 50);
}
