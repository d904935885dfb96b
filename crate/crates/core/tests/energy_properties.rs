//! Energy model properties: corrupt model lines are reported by number,
//! clause costs are a plain fold over literal charges, every used opcode
//! must be costed, and a trust assertion priced like the builtin default
//! leaves the cost function unchanged.

mod common;

use std::collections::BTreeSet;

use common::gen::{random_module, GenOptions};
use common::{corpus_files, read, source};
use hcenergy::energy::{aggregate_block_costs, load_cost_model, EnergyModel, ModelErrorKind};
use hcenergy::hcir::{translate_module, Literal, Program};
use hcenergy::ir::{parse_module, Opcode};
use hcenergy::recsolve::rat;
use hcenergy::report::{run_pipeline, Stage};
use num_rational::BigRational;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn decimal(rng: &mut ChaCha8Rng) -> String {
    let cents: i64 = rng.gen_range(0..100_000);
    format!("{}.{:02}", cents / 100, cents % 100)
}

/// A random valid model: every opcode costed, some block overrides, and
/// optionally a cost for `nth/3`.
fn random_model(p: &Program, rng: &mut ChaCha8Rng) -> String {
    let mut lines = vec!["# generated".to_string()];
    let mut ops = Opcode::ALL.to_vec();
    ops.shuffle(rng);
    for op in ops {
        lines.push(format!("instr {} {}", op.name(), decimal(rng)));
    }
    let origins: BTreeSet<_> = p.clauses.iter().filter_map(|c| c.origin.clone()).collect();
    for o in origins {
        if rng.gen_bool(0.2) {
            lines.push(format!("block {}:{} {}", o.function, o.label, decimal(rng)));
        }
    }
    if rng.gen_bool(0.5) {
        lines.push(format!("pred nth/3 avg {}", decimal(rng)));
    }
    if rng.gen_bool(0.3) {
        lines.push(String::new());
    }
    lines.join("\n") + "\n"
}

/// Clause costs folded directly from the model's tables.
fn fold(m: &EnergyModel, p: &Program) -> Vec<BigRational> {
    let op = |o: &Opcode| m.instr[o].clone();
    p.clauses
        .iter()
        .map(|c| {
            let Some(o) = &c.origin else { return rat(0) };
            if let Some(v) = m.blocks.get(&(o.function.clone(), o.label.clone())) {
                return v.clone();
            }
            let mut total: BigRational = c.residual.iter().map(op).sum();
            for lit in &c.body {
                let asserted = match lit {
                    Literal::Builtin { op: b, args, .. } => m.assertions.iter().find(|a| a.name == b.name() && a.arity == args.len()),
                    _ => None,
                };
                total += match asserted {
                    Some(a) => a.energy.clone(),
                    None => lit.charge().iter().map(op).sum(),
                };
            }
            total
        })
        .collect()
}

/// Corrupts one line of `text` and returns the result with the line number
/// the loader must blame.
fn corrupt(text: &str, rng: &mut ChaCha8Rng) -> (String, usize) {
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let live: Vec<usize> = (0..lines.len()).filter(|&i| !lines[i].trim().is_empty() && !lines[i].trim_start().starts_with('#')).collect();
    let i = *live.choose(rng).unwrap();
    let words: Vec<String> = lines[i].split_whitespace().map(str::to_string).collect();
    let last = words.len() - 1;
    let mutated = match rng.gen_range(0..7) {
        0 => {
            let mut w = words.clone();
            w[last] = "12x".into();
            w.join(" ")
        }
        1 => {
            let mut w = words.clone();
            w[last] = format!("-{}", w[last]);
            w.join(" ")
        }
        2 => words[..last].join(" "),
        3 => {
            let mut w = words.clone();
            w[0] = "cost".into();
            w.join(" ")
        }
        4 if words[0] == "instr" => format!("instr fadd {}", words[last]),
        5 => {
            // A repeated entry is blamed on its second occurrence.
            lines.insert(i + 1, lines[i].clone());
            return (lines.join("\n"), i + 2);
        }
        _ => format!("{} extra", lines[i]),
    };
    lines[i] = mutated;
    (lines.join("\n"), i + 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn corrupt_line_is_named(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = translate_module(&parse_module(&random_module(1, &GenOptions::default(), &mut rng)).unwrap()).unwrap();
        let base = match rng.gen_range(0..3) {
            0 => read("data/synthetic.model"),
            1 => read("data/unit_traverse.model"),
            _ => random_model(&p, &mut rng),
        };
        prop_assert!(load_cost_model(&base).is_ok());
        let (text, line) = corrupt(&base, &mut rng);
        match load_cost_model(&text) {
            Ok(_) => prop_assert!(false, "accepted:\n{}", text),
            Err(e) => {
                prop_assert_eq!(e.line, line, "{}\n{}", e, text);
                let prefix = format!("line {line}:");
                prop_assert!(e.to_string().starts_with(&prefix), "{}", e);
            }
        }
    }

    #[test]
    fn clause_costs_fold_over_literals(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = translate_module(&parse_module(&random_module(3, &GenOptions::default(), &mut rng)).unwrap()).unwrap();
        let m = load_cost_model(&random_model(&p, &mut rng)).unwrap();
        prop_assert_eq!(aggregate_block_costs(&m, &p).unwrap(), fold(&m, &p));
    }
}

#[test]
fn corpus_costs_fold_over_literals() {
    let m = load_cost_model(&read("data/synthetic.model")).unwrap();
    for (file, _) in corpus_files() {
        let p = translate_module(&parse_module(&source(file)).unwrap()).unwrap();
        assert_eq!(aggregate_block_costs(&m, &p).unwrap(), fold(&m, &p), "{file}");
    }
}

#[test]
fn override_replaces_instruction_costs() {
    let src = source("traverse");
    let base = read("data/synthetic.model");
    let p = translate_module(&parse_module(&src).unwrap()).unwrap();
    let plain = aggregate_block_costs(&load_cost_model(&base).unwrap(), &p).unwrap();
    let with = aggregate_block_costs(&load_cost_model(&format!("{base}block traverse:loopbody 7\n")).unwrap(), &p).unwrap();
    for (c, (a, b)) in p.clauses.iter().zip(plain.iter().zip(&with)) {
        match &c.origin {
            Some(o) if o.label == "loopbody" => assert_eq!(*b, rat(7)),
            _ => assert_eq!(a, b, "{}", c.head),
        }
    }
}

#[test]
fn every_used_opcode_needs_a_cost() {
    let full = read("data/synthetic.model");
    for (file, _) in corpus_files() {
        let src = source(file);
        let p = translate_module(&parse_module(&src).unwrap()).unwrap();
        let used: BTreeSet<Opcode> = p
            .clauses
            .iter()
            .filter(|c| c.origin.is_some())
            .flat_map(|c| c.residual.iter().chain(c.body.iter().flat_map(|l| l.charge())))
            .copied()
            .collect();
        for op in Opcode::ALL {
            let model: String = full.lines().filter(|l| !l.starts_with(&format!("instr {} ", op.name()))).map(|l| format!("{l}\n")).collect();
            match run_pipeline(&src, &model) {
                Ok(_) => assert!(!used.contains(&op), "{file}: {op} is used but its cost was not required"),
                Err(e) => {
                    assert!(used.contains(&op), "{file}: {op} unused yet: {e}");
                    assert_eq!(e.stage, Stage::Costs, "{file}: {e}");
                    assert!(e.message.contains(op.name()), "{e}");
                }
            }
        }
    }
}

#[test]
fn default_priced_assertion_changes_nothing() {
    let src = source("traverse");
    let base = read("data/synthetic.model");
    let m = load_cost_model(&base).unwrap();
    let p = translate_module(&parse_module(&src).unwrap()).unwrap();
    let nth = p
        .clauses
        .iter()
        .flat_map(|c| &c.body)
        .find(|l| matches!(l, Literal::Builtin { op, .. } if op.name() == "nth"))
        .unwrap();
    let default: BigRational = nth.charge().iter().map(|o| m.instr[o].clone()).sum();
    let as_decimal = hcenergy::energy::format_rational(&default);

    let cost_of = |model: &str| {
        let pl = run_pipeline(&src, model).unwrap();
        pl.analysis.function("traverse").unwrap().result.clone().unwrap()
    };
    let without = cost_of(&base);
    let with = cost_of(&format!("{base}pred nth/3 avg {as_decimal}\n"));
    assert_eq!(without, with);
    assert_ne!(cost_of(&format!("{base}pred nth/3 avg 1215439\n")), without);
}

#[test]
fn lower_and_upper_models_are_refused() {
    for agg in ["lower", "upper"] {
        let e = load_cost_model(&format!("instr add 1\npred nth/3 {agg} 5\n")).unwrap_err();
        assert_eq!(e.line, 2);
        assert!(matches!(e.kind, ModelErrorKind::Unsupported(_)), "{e}");
    }
}
