//! Benchmark corpus shared by the integration tests: sources, entry
//! functions, and input builders for given sizes.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use hcenergy::interp::Value;
use hcenergy::recsolve::{rat, ClosedForm, Special};
use num_rational::BigRational;
use rand::Rng;

pub mod gen;

pub fn path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join(rel)
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(path(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub struct Bench {
    pub file: &'static str,
    pub function: &'static str,
    /// Expected shape of the energy function.
    pub class: &'static str,
    /// Whether the function takes a second size `M`.
    pub two_sizes: bool,
    /// Largest size worth running exhaustively.
    pub max_random: i64,
}

pub const BENCHES: [Bench; 9] = [
    Bench { file: "fact", function: "fact", class: "linear", two_sizes: false, max_random: 20 },
    Bench { file: "fibonacci", function: "fib", class: "fib/lucas", two_sizes: false, max_random: 12 },
    Bench { file: "sqr", function: "sqr", class: "quadratic", two_sizes: false, max_random: 12 },
    Bench { file: "pow_of_two", function: "pow2", class: "A*2^N+B", two_sizes: false, max_random: 9 },
    Bench { file: "reverse", function: "reverse", class: "linear", two_sizes: false, max_random: 20 },
    Bench { file: "concat", function: "concat", class: "bilinear", two_sizes: true, max_random: 20 },
    Bench { file: "matmult", function: "matmult", class: "cubic", two_sizes: false, max_random: 6 },
    Bench { file: "fir", function: "fir", class: "linear", two_sizes: false, max_random: 20 },
    Bench { file: "biquad", function: "biquad", class: "linear", two_sizes: false, max_random: 12 },
];

/// Every corpus program: the benchmarks plus the array traversal.
pub fn corpus_files() -> Vec<(&'static str, &'static str)> {
    let mut v: Vec<(&str, &str)> = BENCHES.iter().map(|b| (b.file, b.function)).collect();
    v.push(("traverse", "traverse"));
    v
}

pub fn source(file: &str) -> String {
    read(&format!("corpus/{file}.sir"))
}

fn list<R: Rng>(len: i64, rng: &mut R) -> Value {
    Value::list((0..len.max(0)).map(|_| Value::Int(rng.gen_range(-9..=9))).collect())
}

/// Arguments of `function` for sizes `n` (and `m`), with random contents,
/// and the size bindings of its energy function.
pub fn inputs<R: Rng>(function: &str, n: i64, m: i64, rng: &mut R) -> (Vec<Value>, BTreeMap<String, BigRational>) {
    let int = |v: i64| Value::Int(v.into());
    let args = match function {
        "fact" | "fib" | "sqr" | "pow2" => vec![int(n)],
        "reverse" => vec![int(n), list(n, rng), list(n, rng)],
        "concat" => vec![int(n), list(n, rng), int(m), list(m, rng), list(n + m, rng)],
        "matmult" => vec![int(n), list(n * n, rng), list(n * n, rng), list(n * n, rng)],
        "fir" => vec![int(n), list(n + 3, rng), list(4, rng), list(n, rng)],
        "biquad" => vec![int(n), list(n, rng), list(5, rng), list(n, rng)],
        "traverse" => vec![int(n), list(n + 1, rng)],
        other => panic!("no input builder for {other}"),
    };
    let mut sizes = BTreeMap::from([("N".to_string(), rat(n))]);
    if function == "concat" {
        sizes.insert("M".to_string(), rat(m));
    }
    (args, sizes)
}

/// Shape of a closed form, judged independently of how it was derived.
pub fn class_of(cf: &ClosedForm) -> String {
    let mut fib = false;
    let mut pow = Vec::new();
    let mut degree = 0;
    let mut vars = std::collections::BTreeSet::new();
    for (k, _) in cf.terms() {
        for (v, s) in &k.special {
            vars.insert(v.clone());
            match s {
                Special::Fib | Special::Lucas => fib = true,
                Special::Pow(b) => pow.push((b.clone(), k.mono.is_empty())),
            }
        }
        degree = degree.max(k.degree());
        vars.extend(k.mono.keys().cloned());
    }
    if fib {
        return "fib/lucas".into();
    }
    if !pow.is_empty() {
        return if degree == 0 && pow.iter().all(|(b, plain)| *b == rat(2) && *plain) {
            "A*2^N+B".into()
        } else {
            "exponential".into()
        };
    }
    match (vars.len(), degree) {
        (_, 0) => "constant".into(),
        (1, 1) => "linear".into(),
        (1, 2) => "quadratic".into(),
        (1, 3) => "cubic".into(),
        (2, 1) => "bilinear".into(),
        (v, d) => format!("degree {d} in {v} variables"),
    }
}
