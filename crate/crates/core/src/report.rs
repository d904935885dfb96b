//! End-to-end pipeline, analysis reports and the estimate-vs-measurement
//! comparison.
//!
//! Numbers are exact rationals up to rendering. Estimates are printed with
//! two decimals and rounded half away from zero to whole nJ; the error
//! column is `(estimate - hw) / hw * 100` from the unrounded estimate, one
//! decimal, signed.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::analysis::{analyze, Analysis};
use crate::energy::{aggregate_block_costs, emit_trust_assertions, load_cost_model, parse_decimal, EnergyModel};
use crate::hcir::{print_hcir, translate_module, var_name, Program};
use crate::interp::{run_ir, CostMap, RunOptions, Value};
use crate::ir::{parse_module, validate_ssa, IrType, Module};
use crate::recsolve::{parse_closed_form, rat, ClosedForm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Parse,
    Validate,
    Translate,
    Model,
    Costs,
    Analysis,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Parse => "parse",
            Stage::Validate => "validate",
            Stage::Translate => "translate",
            Stage::Model => "model",
            Stage::Costs => "costs",
            Stage::Analysis => "analysis",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{stage} error: {message}")]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

fn stage<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> StageError {
    move |e| StageError {
        stage,
        message: e.to_string(),
    }
}

/// Everything the pipeline produced for one program.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub module: Module,
    pub program: Program,
    pub model: EnergyModel,
    /// Local cost of each clause of `program`.
    pub costs: Vec<BigRational>,
    pub analysis: Analysis,
}

/// parse -> validate -> translate (parameter inference and phi elimination
/// included) -> model -> clause costs -> analysis.
pub fn run_pipeline(source: &str, model: &str) -> Result<Pipeline, StageError> {
    let module = parse_module(source).map_err(stage(Stage::Parse))?;
    for f in &module.functions {
        if let Some(v) = validate_ssa(f).first() {
            return Err(StageError {
                stage: Stage::Validate,
                message: format!("@{}: {v}", f.name),
            });
        }
    }
    let mut program = translate_module(&module).map_err(stage(Stage::Translate))?;
    let model = load_cost_model(model).map_err(stage(Stage::Model))?;
    emit_trust_assertions(&model, &mut program).map_err(stage(Stage::Model))?;
    let costs = aggregate_block_costs(&model, &program).map_err(stage(Stage::Costs))?;
    let analysis = analyze(&program, &costs).map_err(stage(Stage::Analysis))?;
    Ok(Pipeline {
        module,
        program,
        model,
        costs,
        analysis,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReportOptions {
    pub dump_hcir: bool,
    pub dump_recurrences: bool,
}

impl Pipeline {
    /// Size parameters of a function, named as in its cost function.
    pub fn size_params(&self, function: &str) -> Vec<String> {
        self.module
            .function(function)
            .map(|f| f.params.iter().map(|p| var_name(&p.name)).collect())
            .unwrap_or_default()
    }

    pub fn has_not_available(&self) -> bool {
        self.analysis.functions.iter().any(|f| f.result.is_err())
    }

    /// One line per function, `f(N, M) = <closed form>` or `f(N) = N/A: why`;
    /// dumps are `#` comments, so a text report is also a functions file.
    pub fn render(&self, opts: ReportOptions, format: Format) -> String {
        match format {
            Format::Csv => self.render_csv(),
            Format::Text => self.render_text(opts),
        }
    }

    fn render_text(&self, opts: ReportOptions) -> String {
        let mut out = String::new();
        let comment = |out: &mut String, title: &str, body: &str| {
            out.push_str(&format!("# {title}\n"));
            for l in body.lines() {
                out.push_str(&format!("#   {l}\n").replace("#   \n", "#\n"));
            }
        };
        if opts.dump_hcir {
            comment(&mut out, "HC IR", &print_hcir(&self.program));
        }
        if opts.dump_recurrences && !self.analysis.system.headers.is_empty() {
            comment(&mut out, "recurrences", &self.analysis.system.to_string());
        }
        for f in &self.analysis.functions {
            let head = format!("{}({})", f.function, self.size_params(&f.function).join(", "));
            match &f.result {
                Ok(cf) => out.push_str(&format!("{head} = {cf}\n")),
                Err(why) => {
                    out.push_str(&format!("{head} = N/A: {why}\n"));
                    for p in &f.pieces {
                        out.push_str(&format!("#   {p}\n"));
                    }
                    for h in self.analysis.system.headers.iter().filter(|h| h.function.as_deref() == Some(&f.function)) {
                        if let Some(r) = &h.recurrence {
                            for l in r.to_string().lines() {
                                out.push_str(&format!("#   {l}\n"));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn render_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["function", "params", "status", "energy"]).expect("in-memory write");
        for f in &self.analysis.functions {
            let params = self.size_params(&f.function).join(";");
            let (status, energy) = match &f.result {
                Ok(cf) => ("ok".to_string(), cf.to_string()),
                Err(why) => ("N/A".to_string(), why.clone()),
            };
            w.write_record([f.function.as_str(), &params, &status, &energy]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
    }

    /// Runs `function` on inputs of the given sizes and returns the visited
    /// blocks with the measured and predicted energy. Integer parameters
    /// default to 3; arrays of unspecified length get `(n + 1)^2 + 4`
    /// elements, `n` the largest integer argument.
    pub fn trace(&self, function: &str, sizes: &BTreeMap<String, i64>) -> Result<String, StageError> {
        let err = stage(Stage::Analysis);
        let f = self.module.function(function).ok_or_else(|| err(format!("unknown function @{function}")))?;
        let mut bound = BTreeMap::new();
        let ints: Vec<i64> = f
            .params
            .iter()
            .filter(|p| p.ty.is_int())
            .map(|p| sizes.get(&var_name(&p.name)).copied().unwrap_or(3))
            .collect();
        let n = ints.iter().copied().max().unwrap_or(3).max(0);
        let mut args = Vec::new();
        for p in &f.params {
            let name = var_name(&p.name);
            let (v, size) = match (&p.ty, p.ty.pointee()) {
                (t, _) if t.is_int() => {
                    let v = sizes.get(&name).copied().unwrap_or(3);
                    (Value::Int(v.into()), v)
                }
                (_, Some(IrType::Array { len: None, elem })) => {
                    let len = sizes.get(&name).copied().unwrap_or((n + 1) * (n + 1) + 4).max(0);
                    (Value::list(vec![Value::zero_of(elem); len as usize]), len)
                }
                (_, Some(t)) => (Value::zero_of(t), 0),
                (t, None) => (Value::zero_of(t), 0),
            };
            bound.insert(name, rat(size));
            args.push(v);
        }
        let costs = CostMap::from_model(&self.model, &self.program).map_err(stage(Stage::Costs))?;
        let opts = RunOptions {
            trace: true,
            ..RunOptions::default()
        };
        let run = run_ir(&self.module, function, &args, &costs, opts).map_err(|e| err(e.to_string()))?;
        let mut out = String::new();
        let shown: Vec<String> = f.params.iter().map(|p| format!("{}={}", var_name(&p.name), bound[&var_name(&p.name)])).collect();
        out.push_str(&format!("trace of {function}({})\n", shown.join(", ")));
        for b in &run.trace {
            out.push_str(&format!("  {b}\n"));
        }
        out.push_str(&format!("measured: {}\n", fixed(&run.cost, 2)));
        if let Some(Ok(cf)) = self.analysis.function(function).map(|f| &f.result) {
            if let Ok(v) = cf.evaluate(&bound) {
                out.push_str(&format!("predicted: {}\n", fixed(&v, 2)));
            }
        }
        Ok(out)
    }
}

/// `v` rounded half away from zero to `digits` decimals.
pub fn fixed(v: &BigRational, digits: usize) -> String {
    let scale = BigRational::from_integer(num_traits::pow(BigInt::from(10), digits));
    let scaled = round_half_away(&(v * &scale));
    let neg = scaled.is_negative();
    let s = format!("{:0>width$}", scaled.abs().to_string(), width = digits + 1);
    let (i, f) = s.split_at(s.len() - digits);
    let sign = if neg { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{i}")
    } else {
        format!("{sign}{i}.{f}")
    }
}

/// Nearest integer, ties away from zero.
pub fn round_half_away(v: &BigRational) -> BigInt {
    let half = BigRational::new(1.into(), 2.into());
    if v.is_negative() {
        -(-v + half).floor().to_integer()
    } else {
        (v + half).floor().to_integer()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompareError {
    #[error("line {line}: {message}")]
    Functions { line: usize, message: String },
    #[error("measurements row {row}: {message}")]
    Measurements { row: usize, message: String },
    #[error("no energy function for benchmark {0}")]
    Unmatched(String),
    #[error("{benchmark}: {message}")]
    Evaluate { benchmark: String, message: String },
}

/// A closed form in the documented grammar, canonicalized.
pub fn ingest_closed_form(text: &str) -> Result<ClosedForm, crate::recsolve::ClosedFormParseError> {
    parse_closed_form(text).map(|f| f.canonicalize())
}

/// A functions file: `name = form` or `name(args) = form` per line. Lines
/// that are blank, start with `#`, or give `N/A` are skipped.
pub fn parse_functions(text: &str) -> Result<Vec<(String, ClosedForm)>, CompareError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| CompareError::Functions { line: i + 1, message };
        let (head, body) = line.split_once('=').ok_or_else(|| err("expected `name = closed form`".into()))?;
        let name = head.split('(').next().unwrap_or("").trim();
        if name.is_empty() {
            return Err(err("missing name".into()));
        }
        let body = body.trim();
        if body.starts_with("N/A") {
            continue;
        }
        let cf = ingest_closed_form(body).map_err(|e| err(e.to_string()))?;
        out.push((name.to_string(), cf));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Measurement {
    pub benchmark: String,
    /// As written, e.g. `N=131;M=69`.
    pub sizes_text: String,
    pub sizes: BTreeMap<String, BigRational>,
    pub hw: BigRational,
}

/// A decimal with an optional exponent, e.g. `9.30e6`.
pub fn parse_number(s: &str) -> Option<BigRational> {
    let (m, e) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (s, 0),
    };
    let v = parse_decimal(m)?;
    let ten = BigRational::from_integer(10.into());
    Some(if e >= 0 {
        v * num_traits::pow(ten, e as usize)
    } else {
        v / num_traits::pow(ten, e.unsigned_abs() as usize)
    })
}

/// `N=131;M=69`.
pub fn parse_sizes(text: &str) -> Option<BTreeMap<String, BigRational>> {
    let mut out = BTreeMap::new();
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=')?;
        let v: BigInt = v.trim().parse().ok()?;
        if v.is_negative() || k.trim().is_empty() {
            return None;
        }
        out.insert(k.trim().to_string(), BigRational::from_integer(v));
    }
    (!out.is_empty()).then_some(out)
}

/// A measurements file with header `benchmark,sizes,hw_nj`.
pub fn parse_measurements(text: &str) -> Result<Vec<Measurement>, CompareError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| CompareError::Measurements { row: 0, message: e.to_string() })?;
    if headers.iter().collect::<Vec<_>>() != ["benchmark", "sizes", "hw_nj"] {
        return Err(CompareError::Measurements {
            row: 0,
            message: "header must be `benchmark,sizes,hw_nj`".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let err = |message: String| CompareError::Measurements { row, message };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let sizes = parse_sizes(&rec[1]).ok_or_else(|| err(format!("bad sizes `{}`", &rec[1])))?;
        let hw = parse_number(&rec[2]).filter(|v| v.is_positive()).ok_or_else(|| err(format!("bad energy `{}`", &rec[2])))?;
        out.push(Measurement {
            benchmark: rec[0].to_string(),
            sizes_text: rec[1].to_string(),
            sizes,
            hw,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparedRow {
    pub benchmark: String,
    pub sizes: String,
    pub hw: BigRational,
    pub estimated: BigRational,
    pub rounded: BigInt,
    /// Signed percent error of the unrounded estimate.
    pub err_pct: BigRational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub rows: Vec<ComparedRow>,
    /// Mean |Err| per benchmark, in first-appearance order.
    pub averages: Vec<(String, BigRational)>,
    pub overall: BigRational,
}

fn lookup<'a>(functions: &'a [(String, ClosedForm)], name: &str) -> Option<&'a ClosedForm> {
    functions
        .iter()
        .find(|(n, _)| n == name)
        .or_else(|| functions.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)))
        .map(|(_, f)| f)
}

pub fn compare(functions: &[(String, ClosedForm)], rows: &[Measurement]) -> Result<Comparison, CompareError> {
    let mut out = Vec::new();
    let mut sums: Vec<(String, BigRational, usize)> = Vec::new();
    for m in rows {
        let cf = lookup(functions, &m.benchmark).ok_or_else(|| CompareError::Unmatched(m.benchmark.clone()))?;
        let estimated = cf.evaluate(&m.sizes).map_err(|e| CompareError::Evaluate {
            benchmark: m.benchmark.clone(),
            message: e.to_string(),
        })?;
        let err_pct = (&estimated - &m.hw) / &m.hw * rat(100);
        match sums.iter_mut().find(|(b, _, _)| *b == m.benchmark) {
            Some((_, s, n)) => {
                *s += err_pct.abs();
                *n += 1;
            }
            None => sums.push((m.benchmark.clone(), err_pct.abs(), 1)),
        }
        out.push(ComparedRow {
            benchmark: m.benchmark.clone(),
            sizes: m.sizes_text.clone(),
            hw: m.hw.clone(),
            rounded: round_half_away(&estimated),
            estimated,
            err_pct,
        });
    }
    let averages: Vec<(String, BigRational)> = sums.into_iter().map(|(b, s, n)| (b, s / rat(n as i64))).collect();
    let overall = if out.is_empty() {
        BigRational::zero()
    } else {
        out.iter().map(|r| r.err_pct.abs()).fold(BigRational::zero(), |a, b| a + b) / rat(out.len() as i64)
    };
    Ok(Comparison { rows: out, averages, overall })
}

/// One decimal with an explicit sign: `+4.6`, `-3.9`, `0.0`.
pub fn signed_pct(v: &BigRational) -> String {
    let s = fixed(v, 1);
    if s.starts_with('-') || s == "0.0" {
        s
    } else {
        format!("+{s}")
    }
}

impl Comparison {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.render_text(),
            Format::Csv => self.render_csv(),
        }
    }

    fn render_text(&self) -> String {
        let mut table: Vec<[String; 6]> = vec![[
            "benchmark".into(),
            "sizes".into(),
            "hw_nj".into(),
            "estimated".into(),
            "rounded".into(),
            "err_pct".into(),
        ]];
        for r in &self.rows {
            table.push([
                r.benchmark.clone(),
                r.sizes.clone(),
                fixed(&r.hw, 0),
                fixed(&r.estimated, 2),
                r.rounded.to_string(),
                signed_pct(&r.err_pct),
            ]);
        }
        let widths: Vec<usize> = (0..6).map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &table {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, s)| if c < 2 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out.push('\n');
        for (b, avg) in &self.averages {
            out.push_str(&format!("{b}: average |err| {}%\n", fixed(avg, 1)));
        }
        out.push_str(&format!("overall: average |err| {}%\n", fixed(&self.overall, 1)));
        out
    }

    fn render_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["benchmark", "sizes", "hw_nj", "estimated", "rounded", "err_pct"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.benchmark.clone(),
                r.sizes.clone(),
                fixed(&r.hw, 0),
                fixed(&r.estimated, 2),
                r.rounded.to_string(),
                signed_pct(&r.err_pct),
            ])
            .expect("in-memory write");
        }
        for (b, avg) in &self.averages {
            w.write_record([b.as_str(), "average", "", "", "", &fixed(avg, 1)]).expect("in-memory write");
        }
        w.write_record(["overall", "average", "", "", "", &fixed(&self.overall, 1)]).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
    }
}
