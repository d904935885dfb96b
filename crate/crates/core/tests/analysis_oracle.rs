//! The analysis against the interpreters: header recurrences unrolled
//! numerically, guard exclusivity, call-graph SCCs, size relations and
//! ranking detection on generated programs.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{corpus_files, read, source};
use hcenergy::analysis::{analyze, build_call_graph, infer_size_relations, unit_costs, HeaderReport, Measure};
use hcenergy::hcir::{parse_hcir, translate_module, Mode, RegularType};
use hcenergy::interp::{run_hcir, run_ir, CostMap, RunOptions, Value};
use hcenergy::ir::parse_module;
use hcenergy::recsolve::{rat, RecArg, Recurrence};
use hcenergy::report::{run_pipeline, Pipeline};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pipeline(file: &str) -> Pipeline {
    let model = if file == "traverse" { read("data/unit_traverse.model") } else { read("data/synthetic.model") };
    run_pipeline(&source(file), &model).unwrap_or_else(|e| panic!("{file}: {e}"))
}

/// `r` at `0..=top`, by iterating the equation from the base cases.
fn unroll(r: &Recurrence, env: &BTreeMap<String, BigRational>, top: u32) -> Vec<BigRational> {
    let mut f: Vec<BigRational> = Vec::new();
    for n in 0..=top {
        let v = if n < r.start {
            r.base[&n].evaluate(env).unwrap()
        } else {
            let mut at = env.clone();
            at.insert(r.var.clone(), rat(n.into()));
            let mut v = r.rhs.evaluate(&at).unwrap();
            for c in &r.calls {
                let RecArg::Shift(k) = c.arg else { panic!("{}: non-constant step", r.name) };
                v += &c.coeff * &f[(n - k) as usize];
            }
            v
        };
        f.push(v);
    }
    f
}

fn value_of(t: &RegularType, len: usize, rng: &mut ChaCha8Rng) -> Value {
    match t {
        RegularType::Num => Value::Int(rng.gen_range(-9..=9)),
        RegularType::Atm => Value::Atom("void".into()),
        RegularType::List(e) => Value::list((0..len).map(|_| value_of(e, len.min(8), rng)).collect()),
        RegularType::Functor { name, args } => Value::Functor {
            name: name.clone(),
            fields: args.iter().map(|a| value_of(a, len.min(8), rng)).collect(),
        },
    }
}

const TOP: u32 = 19;

/// Runs header `h` with integer inputs `nums` (by parameter name) and
/// large random arrays.
fn measure(p: &Pipeline, costs: &CostMap, h: &HeaderReport, nums: &BTreeMap<String, i128>, rng: &mut ChaCha8Rng) -> BigRational {
    let sig = p.program.signature(&h.pred).unwrap();
    let len = (TOP as usize + 2).pow(2);
    let args: Vec<Value> = (0..sig.arity())
        .filter(|k| sig.modes[*k] == Mode::In)
        .map(|k| match &sig.types[k] {
            RegularType::Num => Value::Int(nums[&h.params[k]]),
            t => value_of(t, len, rng),
        })
        .collect();
    let opts = RunOptions {
        step_limit: 500_000_000,
        trace: false,
    };
    run_hcir(&p.program, &h.pred, &args, costs, opts).unwrap_or_else(|e| panic!("{} {nums:?}: {e}", h.pred)).cost
}

/// Integer inputs of `h` for measure value `m`, the others from `base`;
/// `None` when the counter would start below zero.
fn inputs_at(h: &HeaderReport, base: &BTreeMap<String, i128>, m: u32) -> Option<BTreeMap<String, i128>> {
    let mut nums = base.clone();
    match &h.ranking.as_ref().unwrap().measure {
        Measure::Arg(k) => {
            nums.insert(h.params[*k].clone(), m.into());
        }
        Measure::Up { counter, bound } => {
            let env: BTreeMap<String, BigRational> = nums.iter().map(|(k, v)| (k.clone(), BigRational::from_integer((*v).into()))).collect();
            let c = (bound.eval(&env).unwrap() - rat(m.into())).to_integer().to_i128().unwrap();
            if c < 0 {
                return None;
            }
            nums.insert(h.params[*counter].clone(), c);
        }
    }
    Some(nums)
}

/// Unrolling each header recurrence reproduces the interpreter's cost of
/// running that header, for every measure value in `0..=19`. Symbols
/// `$q` stand for the cost of continuing into header `q`, which is constant
/// across the recursion; it is fitted from the interpreter at measure 0.
#[test]
fn recurrences_unroll_to_measured_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for (file, _) in corpus_files() {
        let p = pipeline(file);
        let costs = CostMap::from_model(&p.model, &p.program).unwrap();
        for h in &p.analysis.system.headers {
            let r = h.recurrence.as_ref().unwrap_or_else(|| panic!("{}: {:?}", h.pred, h.failure));
            let sig = p.program.signature(&h.pred).unwrap();
            let num_params: Vec<&String> = (0..sig.arity())
                .filter(|k| sig.modes[*k] == Mode::In && sig.types[*k] == RegularType::Num)
                .map(|k| &h.params[k])
                .collect();
            let mut vars: BTreeSet<String> = r.rhs.vars().into_iter().collect();
            for b in r.base.values() {
                vars.extend(b.vars());
            }
            vars.remove(&r.var);
            if let Some(Measure::Up { bound, .. }) = h.ranking.as_ref().map(|k| &k.measure) {
                vars.extend(bound.to_closed_form().vars());
            }
            let symbols: Vec<String> = vars.iter().filter(|v| v.starts_with('$')).cloned().collect();
            assert!(symbols.len() <= 1, "{}: several continuation symbols {symbols:?}", h.pred);
            assert!(symbols.iter().all(|s| !r.rhs.depends_on(s)), "{}: continuation in the recursive case", h.pred);
            let trials = if vars.len() == symbols.len() { 1 } else { 3 };
            for _ in 0..trials {
                // integers the cost does not depend on (offsets, accumulators)
                // sit mid-array so that indexing stays in bounds
                let base: BTreeMap<String, i128> = num_params
                    .iter()
                    .map(|v| ((*v).clone(), if vars.contains(*v) { rng.gen_range(0..=TOP as i128) } else { TOP as i128 + 1 }))
                    .collect();
                let mut env: BTreeMap<String, BigRational> = base.iter().map(|(k, v)| (k.clone(), BigRational::from_integer((*v).into()))).collect();
                for s in &symbols {
                    env.insert(s.clone(), BigRational::zero());
                }
                let Some(at0) = inputs_at(h, &base, 0) else { continue };
                let plain = unroll(r, &env, TOP);
                if let Some(s) = symbols.first() {
                    env.insert(s.clone(), rat(1));
                    let unit = unroll(r, &env, TOP);
                    let measured0 = measure(&p, &costs, h, &at0, &mut rng);
                    let slope = &unit[0] - &plain[0];
                    assert!(!slope.is_zero(), "{}: continuation not in the base case", h.pred);
                    env.insert(s.clone(), (measured0 - &plain[0]) / slope);
                }
                let want = unroll(r, &env, TOP);
                for m in 0..=TOP {
                    let Some(nums) = inputs_at(h, &base, m) else { break };
                    let got = measure(&p, &costs, h, &nums, &mut rng);
                    assert_eq!(got, want[m as usize], "{file}: {} at measure {m} with {nums:?}\n{r}", h.pred);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 300, "only {checked} checks");
}

/// At most one guard of a header holds for any integer assignment in
/// `-5..=100`.
#[test]
fn guards_are_exclusive() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (file, _) in corpus_files() {
        let p = pipeline(file);
        for h in &p.analysis.system.headers {
            let vars: BTreeSet<String> = h.equations.iter().flat_map(|e| e.conds.iter().flat_map(|c| c.vars())).collect();
            for _ in 0..2000 {
                let env: BTreeMap<String, BigRational> = vars.iter().map(|v| (v.clone(), rat(rng.gen_range(-5..=100)))).collect();
                let holding = h.equations.iter().filter(|e| e.conds.iter().all(|c| c.eval(&env) == Some(true))).count();
                assert!(holding <= 1, "{file}: {} has {holding} guards true at {env:?}", h.pred);
            }
        }
    }
}

/// The recursive case of the Fibonacci benchmark calls itself at `n - 1`
/// and `n - 2` and has two base cases.
#[test]
fn fibonacci_recurrence_shape() {
    let p = pipeline("fibonacci");
    let r = p.analysis.system.headers[0].recurrence.clone().unwrap();
    let mut steps: Vec<RecArg> = r.calls.iter().map(|c| c.arg.clone()).collect();
    steps.sort_by_key(|a| format!("{a:?}"));
    assert_eq!(steps, [RecArg::Shift(1), RecArg::Shift(2)]);
    assert_eq!(r.start, 2);
    assert_eq!(r.base.len(), 2);
    assert!(r.rhs.as_constant().is_some(), "{r}");
}

/// Strongly connected components by transitive closure.
fn closure_sccs(n: usize, edges: &BTreeSet<(usize, usize)>) -> BTreeSet<BTreeSet<usize>> {
    let mut reach = vec![vec![false; n]; n];
    for &(a, b) in edges {
        reach[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    (0..n).map(|i| (0..n).filter(|&j| j == i || (reach[i][j] && reach[j][i])).collect()).collect()
}

#[test]
fn call_graph_sccs_match_closure() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let n = rng.gen_range(1..9);
        let mut edges = BTreeSet::new();
        let mut text = String::new();
        for i in 0..n {
            text.push_str(&format!(":- pred p{i}(+num).\n"));
        }
        for i in 0..n {
            let callees: Vec<usize> = (0..rng.gen_range(0..3)).map(|_| rng.gen_range(0..n)).collect();
            let body: Vec<String> = callees.iter().map(|j| format!("p{j}(X)")).collect();
            edges.extend(callees.iter().map(|j| (i, *j)));
            if body.is_empty() {
                text.push_str(&format!("p{i}(X).\n"));
            } else {
                text.push_str(&format!("p{i}(X) :-\n    {}.\n", body.join(",\n    ")));
            }
        }
        let p = parse_hcir(&text).unwrap();
        let g = build_call_graph(&p).unwrap();
        let got: BTreeSet<BTreeSet<usize>> = g.sccs.iter().map(|s| s.iter().map(|q| q[1..].parse().unwrap()).collect()).collect();
        assert_eq!(got, closure_sccs(n, &edges), "{text}");
        for i in 0..n {
            for j in 0..n {
                assert_eq!(g.calls(&format!("p{i}"), &format!("p{j}")), edges.contains(&(i, j)));
            }
        }
    }
}

/// The inferred size of a call argument after a chain of constant
/// additions and subtractions equals the difference the interpreter
/// observes between input and argument.
#[test]
fn size_relations_match_value_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let mut body = String::new();
        let mut prev = "N".to_string();
        for k in 0..rng.gen_range(1..8) {
            let op = if rng.gen_bool(0.5) { "add" } else { "sub" };
            body.push_str(&format!("  %x{k} = {op} i32 %{prev}, {}\n", rng.gen_range(0..20)));
            prev = format!("x{k}");
        }
        let src = format!("define i32 @id(i32 %A) {{\nentry:\n  ret i32 %A\n}}\ndefine i32 @f(i32 %N) {{\nentry:\n{body}  %r = call i32 @id(i32 %{prev})\n  ret i32 %r\n}}\n");
        let m = parse_module(&src).unwrap();
        let p = translate_module(&m).unwrap();
        let rel = infer_size_relations(&p);
        let call = rel.iter().find(|c| c.callee == p.entries["id"]).unwrap();
        let size = call.args[0].clone().expect("affine size");
        let costs = CostMap::uniform(&m, rat(1));
        for n in [-7, 0, 3, 40] {
            let run = run_ir(&m, "f", &[Value::Int(n)], &costs, RunOptions::default()).unwrap();
            let Value::Int(out) = run.results[0] else { panic!() };
            let env = BTreeMap::from([("N".to_string(), rat(n as i64))]);
            assert_eq!(size.eval(&env).unwrap(), rat(out as i64), "{src}");
        }
    }
}

/// Loops generated with a known induction variable: counting down by a
/// constant step, or up towards a bound.
#[test]
fn ranking_matches_generated_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..40 {
        let step = rng.gen_range(1..4);
        let extra = rng.gen_range(0..3);
        let up = rng.gen_bool(0.5);
        // a few bystander parameters before the counter
        let others: Vec<String> = (0..extra).map(|k| format!("i32 %P{k}")).collect();
        let mut params = others.clone();
        params.push("i32 %N".into());
        let (init, cmp, next) = if up {
            ("0", "icmp slt i32 %i, %N", format!("add i32 %i, {step}"))
        } else {
            ("%N", "icmp sgt i32 %i, 0", format!("sub i32 %i, {step}"))
        };
        let src = format!(
            "define void @g({}) {{\nentry:\n  br label %head\nhead:\n  %i = phi i32 [ {init}, %entry ], [ %j, %body ]\n  %c = {cmp}\n  br i1 %c, label %body, label %done\nbody:\n  %j = {next}\n  br label %head\ndone:\n  ret void\n}}\n",
            params.join(", ")
        );
        let m = parse_module(&src).unwrap();
        let p = translate_module(&m).unwrap();
        let a = analyze(&p, &unit_costs(&p)).unwrap();
        let h = &a.system.headers[0];
        let r = h.ranking.as_ref().unwrap_or_else(|| panic!("{src}\n{:?}", h.failure));
        assert_eq!(r.decrements, [step as u32], "{src}");
        let counter = match &r.measure {
            Measure::Arg(k) => {
                assert!(!up, "{src}");
                *k
            }
            Measure::Up { counter, bound } => {
                assert!(up, "{src}");
                assert_eq!(bound.to_string(), "N", "{src}");
                *counter
            }
        };
        assert_eq!(h.params[counter], "I", "{src}");
        // larger steps need a ceiling, which no closed form here expresses
        match &a.function("g").unwrap().result {
            Ok(_) => assert_eq!(step, 1, "{src}"),
            Err(why) => assert!(step > 1, "{src}\n{why}"),
        }
    }
}
