//! SCC-wise construction and solution of the cost equation system.
//!
//! SCCs are handled callees first. A non-recursive predicate's cost is the
//! set of its guarded paths. In a recursive SCC the headers' equations are
//! solved one at a time: a header that calls itself is turned into a
//! recurrence on its ranking measure (calls to other headers become
//! symbolic constants), solved, and substituted into the remaining
//! equations; nested loops therefore resolve from the inside out.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use super::explore::{bind_params, head_params, na, Explorer, Fail, Summary};
use super::{build_call_graph, AnalysisError, Call, CallGraph, Cond, CostExpr, Piece, Size};
use crate::hcir::{Literal, Program};
use crate::recsolve::{rat, solve_recurrence, Affine, ClosedForm, RecArg, RecCall, Recurrence, TermKey};

/// What decreases on every recursive call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Measure {
    /// The size of one argument.
    Arg(usize),
    /// `bound - counter`, for a counter that grows towards a bound it is
    /// compared with; the bound's variables do not change.
    Up { counter: usize, bound: Affine },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    pub measure: Measure,
    /// Decrease of the measure on each recursive call, in call order.
    pub decrements: Vec<u32>,
}

impl Ranking {
    pub fn describe(&self, params: &[String]) -> String {
        let steps: Vec<String> = self.decrements.iter().map(u32::to_string).collect();
        match &self.measure {
            Measure::Arg(k) => format!("{} (decreases by {})", params[*k], steps.join(", ")),
            Measure::Up { counter, bound } => {
                let c = &params[*counter];
                format!("{bound} - {c} ({c} increases by {})", steps.join(", "))
            }
        }
    }
}

/// The equations of one header and what became of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderReport {
    pub pred: String,
    pub function: Option<String>,
    pub params: Vec<String>,
    /// Guarded equations after inlining, restricted to relevant arguments.
    pub equations: Vec<Piece>,
    pub ranking: Option<Ranking>,
    pub recurrence: Option<Recurrence>,
    /// Cost in terms of its arguments, possibly with calls to other headers
    /// of the SCC that were unsolved at the time.
    pub solution: Option<CostExpr>,
    pub failure: Option<String>,
}

impl fmt::Display for HeaderReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head = format!("{}({})", self.pred, self.params.join(", "));
        for e in &self.equations {
            writeln!(f, "{head} = {e}")?;
        }
        if let Some(r) = &self.ranking {
            writeln!(f, "ranking: {}", r.describe(&self.params))?;
        }
        if let Some(r) = &self.recurrence {
            writeln!(f, "{r}")?;
        }
        if let Some(s) = &self.solution {
            writeln!(f, "solution: {s}")?;
        }
        if let Some(why) = &self.failure {
            writeln!(f, "unsolved: {why}")?;
        }
        Ok(())
    }
}

/// Header equations of every recursive SCC, in solving order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RecurrenceSystem {
    pub headers: Vec<HeaderReport>,
}

impl RecurrenceSystem {
    pub fn header(&self, pred: &str) -> Option<&HeaderReport> {
        self.headers.iter().find(|h| h.pred == pred)
    }
}

impl fmt::Display for RecurrenceSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, h) in self.headers.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{h}")?;
        }
        Ok(())
    }
}

/// Energy function of one IR function, over the sizes of its parameters
/// (the value of an integer, the length of an array).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionCost {
    pub function: String,
    pub entry: String,
    pub params: Vec<String>,
    /// The closed form, or why none was found.
    pub result: Result<ClosedForm, String>,
    /// Guarded pieces when the cost differs between branches.
    pub pieces: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Analysis {
    pub functions: Vec<FunctionCost>,
    pub system: RecurrenceSystem,
}

impl Analysis {
    pub fn function(&self, name: &str) -> Option<&FunctionCost> {
        self.functions.iter().find(|f| f.function == name)
    }
}

/// Guarded equations of every recursive SCC of `p` under per-clause costs,
/// with their rankings and solutions.
pub fn extract_recurrences(p: &Program, costs: &[BigRational]) -> Result<RecurrenceSystem, AnalysisError> {
    analyze(p, costs).map(|a| a.system)
}

/// Energy functions of every function of `p`. `costs[i]` is the local cost
/// of `p.clauses[i]`; calls to declared functions cost their assertion.
pub fn analyze(p: &Program, costs: &[BigRational]) -> Result<Analysis, AnalysisError> {
    if costs.len() != p.clauses.len() {
        return Err(AnalysisError::Costs {
            expected: p.clauses.len(),
            got: costs.len(),
        });
    }
    let graph = build_call_graph(p)?;
    let mut clauses: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, c) in p.clauses.iter().enumerate() {
        clauses.entry(c.head.clone()).or_default().push(i);
    }
    let mut summaries: HashMap<String, Result<Summary, String>> = HashMap::new();
    let mut system = RecurrenceSystem::default();
    let none = BTreeSet::new();
    for scc in &graph.sccs {
        if !scc.iter().any(|m| clauses.contains_key(m)) {
            continue;
        }
        if scc.len() == 1 && !graph.calls(&scc[0], &scc[0]) {
            let pred = &scc[0];
            let params = head_params(p, pred);
            let ex = Explorer {
                p,
                clauses: &clauses,
                costs,
                summaries: &summaries,
                opaque: &none,
                inline: &none,
            };
            let s = match ex.equations(pred, &params) {
                Ok(pieces) => Ok(Summary { params, pieces }),
                Err(Fail::NotAvailable(why)) => Err(why),
                Err(Fail::Hard(e)) => return Err(e),
            };
            summaries.insert(pred.clone(), s);
            continue;
        }
        let solved = solve_scc(p, &graph, scc, &clauses, costs, &summaries, &mut system)?;
        summaries.extend(solved);
    }
    let mut functions = Vec::new();
    for (function, entry) in &p.entries {
        let params = head_params(p, entry);
        let (result, pieces) = match summaries.get(entry) {
            None => (Err(format!("no clauses for {entry}")), Vec::new()),
            Some(Err(why)) => (Err(why.clone()), Vec::new()),
            Some(Ok(s)) => collapse(entry, &s.pieces),
        };
        functions.push(FunctionCost {
            function: function.clone(),
            entry: entry.clone(),
            params,
            result,
            pieces,
        });
    }
    Ok(Analysis { functions, system })
}

/// A single closed form when every feasible piece costs the same.
fn collapse(pred: &str, pieces: &[Piece]) -> (Result<ClosedForm, String>, Vec<Piece>) {
    let Some(first) = pieces.first() else {
        return (Err(format!("no clause of {pred} can apply")), Vec::new());
    };
    if let Some(p) = pieces.iter().find(|p| !p.cost.calls.is_empty()) {
        return (Err(format!("unresolved call in {pred}: {}", p.cost)), pieces.to_vec());
    }
    if pieces.iter().all(|p| p.cost.fixed == first.cost.fixed) {
        (Ok(first.cost.fixed.clone()), Vec::new())
    } else {
        (Err(format!("the cost of {pred} depends on branch conditions")), pieces.to_vec())
    }
}

/// Headers of an SCC: predicates called from outside it or serving as an
/// entry, and targets of back edges in a depth-first walk from those.
fn choose_headers(p: &Program, graph: &CallGraph, members: &BTreeSet<String>) -> Vec<String> {
    let mut entries: Vec<String> = Vec::new();
    for c in &p.clauses {
        if members.contains(&c.head) {
            continue;
        }
        for lit in &c.body {
            if let Literal::Call { pred, .. } = lit {
                if members.contains(pred) && !entries.contains(pred) {
                    entries.push(pred.clone());
                }
            }
        }
    }
    for e in p.entries.values() {
        if members.contains(e) && !entries.contains(e) {
            entries.push(e.clone());
        }
    }
    if entries.is_empty() {
        entries.push(members.iter().next().expect("non-empty SCC").clone());
    }
    // successors in clause and literal order
    let succ = |n: &str| -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in p.clauses.iter().filter(|c| c.head == n) {
            for lit in &c.body {
                if let Literal::Call { pred, .. } = lit {
                    if members.contains(pred) && !out.contains(pred) && graph.calls(n, pred) {
                        out.push(pred.clone());
                    }
                }
            }
        }
        out
    };
    let mut headers = entries.clone();
    let mut visited = BTreeSet::new();
    for e in &entries {
        if visited.contains(e) {
            continue;
        }
        // iterative DFS with an explicit on-stack set
        let mut stack: Vec<(String, Vec<String>)> = vec![(e.clone(), succ(e))];
        let mut on_stack: BTreeSet<String> = BTreeSet::from([e.clone()]);
        visited.insert(e.clone());
        while let Some((node, rest)) = stack.last_mut() {
            if rest.is_empty() {
                on_stack.remove(node.as_str());
                stack.pop();
                continue;
            }
            let next = rest.remove(0);
            if on_stack.contains(&next) {
                if !headers.contains(&next) {
                    headers.push(next);
                }
            } else if visited.insert(next.clone()) {
                on_stack.insert(next.clone());
                let s = succ(&next);
                stack.push((next, s));
            }
        }
    }
    headers
}

/// Argument positions of each header that its cost depends on.
fn relevance(headers: &[String], params: &HashMap<String, Vec<String>>, eqs: &HashMap<String, Vec<Piece>>) -> HashMap<String, BTreeSet<usize>> {
    let mut rel: HashMap<String, BTreeSet<usize>> = headers.iter().map(|h| (h.clone(), BTreeSet::new())).collect();
    loop {
        let mut changed = false;
        for h in headers {
            let mut used: BTreeSet<String> = BTreeSet::new();
            for piece in &eqs[h] {
                for c in &piece.conds {
                    used.extend(c.vars());
                }
                used.extend(piece.cost.fixed.vars());
                for (coeff, call) in &piece.cost.calls {
                    used.extend(coeff.vars());
                    for &k in rel.get(&call.pred).into_iter().flatten() {
                        if let Some(Some(a)) = call.args.get(k) {
                            used.extend(a.coeffs.keys().cloned());
                        }
                    }
                }
            }
            for (k, v) in params[h].iter().enumerate() {
                if used.contains(v) && rel.get_mut(h).expect("header").insert(k) {
                    changed = true;
                }
            }
        }
        if !changed {
            return rel;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_scc(
    p: &Program,
    graph: &CallGraph,
    scc: &[String],
    clauses: &HashMap<String, Vec<usize>>,
    costs: &[BigRational],
    summaries: &HashMap<String, Result<Summary, String>>,
    system: &mut RecurrenceSystem,
) -> Result<HashMap<String, Result<Summary, String>>, AnalysisError> {
    let members: BTreeSet<String> = scc.iter().cloned().collect();
    let headers = choose_headers(p, graph, &members);
    let opaque: BTreeSet<String> = headers.iter().cloned().collect();
    let inline: BTreeSet<String> = members.difference(&opaque).cloned().collect();
    let ex = Explorer {
        p,
        clauses,
        costs,
        summaries,
        opaque: &opaque,
        inline: &inline,
    };
    let params: HashMap<String, Vec<String>> = headers.iter().map(|h| (h.clone(), head_params(p, h))).collect();
    let first = system.headers.len();
    for h in &headers {
        system.headers.push(HeaderReport {
            pred: h.clone(),
            function: p.signature(h).and_then(|s| s.function.clone()),
            params: params[h].clone(),
            equations: Vec::new(),
            ranking: None,
            recurrence: None,
            solution: None,
            failure: None,
        });
    }
    let fail_all = |system: &mut RecurrenceSystem, why: String| {
        let mut out = HashMap::new();
        for (i, h) in headers.iter().enumerate() {
            let r = &mut system.headers[first + i];
            if r.failure.is_none() {
                r.failure = Some(why.clone());
            }
            out.insert(h.clone(), Err(why.clone()));
        }
        out
    };
    let mut eqs: HashMap<String, Vec<Piece>> = HashMap::new();
    for h in &headers {
        match ex.equations(h, &params[h]) {
            Ok(e) => {
                eqs.insert(h.clone(), e);
            }
            Err(Fail::Hard(e)) => return Err(e),
            Err(Fail::NotAvailable(why)) => return Ok(fail_all(system, why)),
        }
    }
    let rel = relevance(&headers, &params, &eqs);
    // project calls onto relevant arguments; unknown relevant sizes are fatal
    for h in &headers {
        for piece in eqs.get_mut(h).expect("header") {
            for (_, call) in piece.cost.calls.iter_mut() {
                for (k, a) in call.args.iter_mut().enumerate() {
                    if !rel[&call.pred].contains(&k) {
                        *a = None;
                    } else if a.is_none() {
                        let why = format!(
                            "the size of argument {} of {} ({}) is unknown in a call from {h}",
                            k + 1,
                            call.pred,
                            params[&call.pred][k]
                        );
                        return Ok(fail_all(system, why));
                    }
                }
            }
        }
    }
    for (i, h) in headers.iter().enumerate() {
        system.headers[first + i].equations = eqs[h].clone();
    }
    let mut unsolved: Vec<String> = headers.clone();
    while !unsolved.is_empty() {
        let recursive = unsolved
            .iter()
            .position(|h| eqs[h].iter().any(|piece| piece.cost.calls.iter().any(|(_, c)| &c.pred == h)));
        let (h, new) = match recursive {
            Some(i) => {
                let h = unsolved.remove(i);
                let idx = first + headers.iter().position(|x| *x == h).expect("header");
                match solve_header(&h, &params[&h], &eqs[&h], &rel[&h], &mut system.headers[idx]) {
                    Ok(sol) => {
                        system.headers[idx].solution = Some(sol.clone());
                        (h, vec![Piece { conds: Vec::new(), cost: sol }])
                    }
                    Err(Fail::Hard(e)) => return Err(e),
                    Err(Fail::NotAvailable(why)) => {
                        system.headers[idx].failure = Some(why.clone());
                        return Ok(fail_all(system, format!("{h} is unsolved: {why}")));
                    }
                }
            }
            None => {
                let h = unsolved.remove(0);
                let e = eqs[&h].clone();
                (h, e)
            }
        };
        eqs.insert(h.clone(), new.clone());
        for g in &headers {
            if *g == h {
                continue;
            }
            match substitute_calls(&eqs[g], &h, &params[&h], &new) {
                Ok(e) => {
                    eqs.insert(g.clone(), e);
                }
                Err(Fail::Hard(e)) => return Err(e),
                Err(Fail::NotAvailable(why)) => return Ok(fail_all(system, why)),
            }
        }
    }
    let mut out = HashMap::new();
    for h in &headers {
        let pieces = eqs[h].clone();
        if let Some(piece) = pieces.iter().find(|p| !p.cost.calls.is_empty()) {
            return Ok(fail_all(system, format!("unresolved mutual recursion: {}", piece.cost)));
        }
        out.insert(
            h.clone(),
            Ok(Summary {
                params: params[h].clone(),
                pieces,
            }),
        );
    }
    Ok(out)
}

/// Replaces every call to `h` in `target` by the pieces of `h`.
fn substitute_calls(target: &[Piece], h: &str, params: &[String], pieces: &[Piece]) -> Result<Vec<Piece>, Fail> {
    let mut out = Vec::new();
    for piece in target {
        let (hcalls, rest): (Vec<_>, Vec<_>) = piece.cost.calls.iter().cloned().partition(|(_, c)| c.pred == h);
        let mut partial = vec![Piece {
            conds: piece.conds.clone(),
            cost: CostExpr {
                fixed: piece.cost.fixed.clone(),
                calls: rest,
            },
        }];
        for (coeff, call) in hcalls {
            let map = bind_params(h, params, &call.args, pieces)?;
            let mut next = Vec::new();
            for a in &partial {
                for q in pieces {
                    let mut conds = a.conds.clone();
                    for c in &q.conds {
                        let c = c.substitute(&map);
                        if !conds.contains(&c) {
                            conds.push(c);
                        }
                    }
                    let cost = q
                        .cost
                        .substitute(&map)
                        .and_then(|c| c.scale(&coeff))
                        .map_err(|e| Fail::NotAvailable(e.to_string()))?;
                    let piece = Piece {
                        conds,
                        cost: a.cost.add(&cost),
                    };
                    if piece.feasible() {
                        next.push(piece);
                    }
                }
            }
            partial = next;
        }
        out.extend(partial);
    }
    Ok(out)
}

fn delta(call: &Call, params: &[String], k: usize) -> Option<Affine> {
    let a = call.args.get(k)?.as_ref()?;
    Some(a.sub(&Affine::var(&params[k])))
}

/// `Some(d)` when `x` is the integer constant `d`.
fn const_int(x: &Affine) -> Option<i64> {
    if !x.is_constant() || !x.constant.is_integer() {
        return None;
    }
    x.constant.to_integer().to_i64()
}

/// Decrease of the measure on one self call.
fn step(measure: &Measure, params: &[String], call: &Call) -> Option<u32> {
    match measure {
        Measure::Arg(r) => const_int(&delta(call, params, *r)?).filter(|d| *d < 0).and_then(|d| u32::try_from(-d).ok()),
        Measure::Up { counter, bound } => {
            for v in bound.coeffs.keys() {
                let k = params.iter().position(|p| p == v)?;
                if const_int(&delta(call, params, k)?) != Some(0) {
                    return None;
                }
            }
            const_int(&delta(call, params, *counter)?).filter(|d| *d > 0).and_then(|d| u32::try_from(d).ok())
        }
    }
}

/// Ranking measure of a self-recursive header: the lowest-index relevant
/// argument that decreases by a constant on every self call, or failing
/// that a counter that grows by a constant towards an unchanging bound it
/// is compared with.
pub fn detect_ranking_argument(pred: &str, params: &[String], equations: &[Piece], relevant: &BTreeSet<usize>) -> Option<Ranking> {
    let calls: Vec<&Call> = equations
        .iter()
        .flat_map(|p| p.cost.calls.iter().map(|(_, c)| c))
        .filter(|c| c.pred == pred)
        .collect();
    if calls.is_empty() {
        return None;
    }
    let try_measure = |m: Measure| -> Option<Ranking> {
        let decrements = calls.iter().map(|c| step(&m, params, c)).collect::<Option<Vec<u32>>>()?;
        Some(Ranking { measure: m, decrements })
    };
    for &r in relevant {
        if let Some(rk) = try_measure(Measure::Arg(r)) {
            return Some(rk);
        }
    }
    for &counter in relevant {
        let x = &params[counter];
        for c in equations.iter().flat_map(|p| &p.conds) {
            let Cond::Cmp { lhs, rhs, .. } = c else { continue };
            // `x - bound` up to sign
            let e = lhs.sub(rhs);
            let Some(a) = e.coeffs.get(x) else { continue };
            if a.abs() != rat(1) {
                continue;
            }
            let bound = Affine::var(x).sub(&e.scale(&a.recip()));
            if let Some(rk) = try_measure(Measure::Up { counter, bound }) {
                return Some(rk);
            }
        }
    }
    None
}

/// `a*m + b op 0` for a condition over the measure variable alone.
struct LinCond {
    op: crate::ir::CmpPred,
    a: BigRational,
    b: BigRational,
}

impl LinCond {
    fn holds(&self, m: u32) -> bool {
        let v = &self.a * rat(i64::from(m)) + &self.b;
        self.op.holds(&v, &BigRational::zero())
    }
}

/// Opaque calls of a recurrence, stood in for by symbolic constants.
#[derive(Default)]
struct Symbols {
    table: Vec<(String, Call)>,
}

impl Symbols {
    fn of(&mut self, call: Call) -> String {
        if let Some((s, _)) = self.table.iter().find(|(_, c)| *c == call) {
            return s.clone();
        }
        let s = format!("${}", call.pred);
        let s = if self.table.iter().any(|(t, _)| *t == s) {
            format!("{s}_{}", self.table.len() + 1)
        } else {
            s
        };
        self.table.push((s.clone(), call));
        s
    }
}

fn lift<T>(r: Result<T, crate::recsolve::ClosedFormError>) -> Result<T, Fail> {
    r.map_err(|e| Fail::NotAvailable(e.to_string()))
}

/// Turns a cost expression (outside self calls) into a closed form with
/// symbols for calls to other headers. `map` rewrites header variables.
fn symbolic(cost: &CostExpr, self_pred: &str, map: &BTreeMap<String, Affine>, mvar: &str, syms: &mut Symbols) -> Result<ClosedForm, Fail> {
    let mut out = lift(cost.fixed.substitute(map))?;
    for (coeff, call) in &cost.calls {
        if call.pred == self_pred {
            continue;
        }
        let coeff = lift(coeff.substitute(map))?;
        let args: Vec<Size> = call.args.iter().map(|a| a.as_ref().map(|a| a.substitute(map))).collect();
        if coeff.depends_on(mvar) || args.iter().flatten().any(|a| a.coeffs.contains_key(mvar)) {
            return na(format!("call {} depends on the ranking measure", call.pred));
        }
        let s = syms.of(Call {
            pred: call.pred.clone(),
            args,
        });
        out = out.add(&lift(coeff.mul(&ClosedForm::var(&s)))?);
    }
    Ok(out)
}

fn solve_header(h: &str, params: &[String], eqs: &[Piece], relevant: &BTreeSet<usize>, report: &mut HeaderReport) -> Result<CostExpr, Fail> {
    if let Some(c) = eqs.iter().flat_map(|p| &p.conds).find(|c| matches!(c, Cond::Unknown(_))) {
        return na(format!("{h} branches on a value of unknown size ({c})"));
    }
    let Some(ranking) = detect_ranking_argument(h, params, eqs, relevant) else {
        return na(format!("no argument of {h} decreases on every recursive call"));
    };
    report.ranking = Some(ranking.clone());
    // the measure's variable, and how header variables are expressed in it
    let (mvar, inv, measure) = match &ranking.measure {
        Measure::Arg(r) => (params[*r].clone(), BTreeMap::new(), Affine::var(&params[*r])),
        Measure::Up { counter, bound } => {
            let mut name = format!("{}_left", params[*counter]);
            while params.contains(&name) {
                name.push('_');
            }
            let inv = BTreeMap::from([(params[*counter].clone(), bound.sub(&Affine::var(&name)))]);
            let m = bound.sub(&Affine::var(&params[*counter]));
            (name, inv, m)
        }
    };
    let fixed_args: Vec<usize> = relevant
        .iter()
        .copied()
        .filter(|k| match &ranking.measure {
            Measure::Arg(r) => k != r,
            Measure::Up { counter, .. } => k != counter,
        })
        .collect();
    let mut conds: Vec<Vec<LinCond>> = Vec::new();
    let mut recursive: Vec<bool> = Vec::new();
    for piece in eqs {
        let mut lc = Vec::new();
        for c in &piece.conds {
            let Cond::Cmp { op, lhs, rhs } = c else {
                return na(format!("{h} branches on a value of unknown size ({c})"));
            };
            let e = lhs.sub(rhs).substitute(&inv);
            if e.coeffs.keys().any(|v| *v != mvar) {
                return na(format!("condition `{c}` of {h} is not a function of the ranking measure"));
            }
            lc.push(LinCond {
                op: *op,
                a: e.coeffs.get(&mvar).cloned().unwrap_or_else(BigRational::zero),
                b: e.constant,
            });
        }
        conds.push(lc);
        let self_calls: Vec<&Call> = piece.cost.calls.iter().map(|(_, c)| c).filter(|c| c.pred == h).collect();
        for call in &self_calls {
            for &k in &fixed_args {
                if delta(call, params, k).and_then(|d| const_int(&d)) != Some(0) {
                    return na(format!("argument {} of {h} changes on recursive calls", params[k]));
                }
            }
        }
        recursive.push(!self_calls.is_empty());
    }
    // beyond every threshold all conditions are constant
    let mut limit: u32 = 32;
    for lc in conds.iter().flatten() {
        if !lc.a.is_zero() {
            let t = (&lc.b / &lc.a).abs().ceil().to_integer().to_u32().unwrap_or(u32::MAX - 3);
            limit = limit.max(t.saturating_add(3));
        }
    }
    if limit > 10_000 {
        return na(format!("thresholds of {h} are too large"));
    }
    let mut applies = Vec::new();
    for m in 0..=limit {
        let app: Vec<usize> = (0..eqs.len()).filter(|&i| conds[i].iter().all(|c| c.holds(m))).collect();
        match app.as_slice() {
            [i] => applies.push(*i),
            [] => return na(format!("no equation of {h} applies when {mvar} = {m}")),
            _ => return na(format!("equations of {h} overlap when {mvar} = {m}")),
        }
    }
    let eventual = applies[limit as usize];
    if !recursive[eventual] {
        return na(format!("{h} does not recurse for large {mvar}"));
    }
    let start = (0..=limit).rev().take_while(|&m| applies[m as usize] == eventual).last().unwrap_or(limit);
    if let Some(m) = (0..start).find(|&m| recursive[applies[m as usize]]) {
        return na(format!("{h} recurses through another equation when {mvar} = {m}"));
    }
    let mut syms = Symbols::default();
    let mut calls = Vec::new();
    for (coeff, call) in &eqs[eventual].cost.calls {
        if call.pred != h {
            continue;
        }
        let Some(c) = coeff.as_constant() else {
            return na(format!("recursive call of {h} has a non-constant coefficient {coeff}"));
        };
        let d = step(&ranking.measure, params, call).expect("ranking covers every self call");
        calls.push(RecCall {
            coeff: c,
            arg: RecArg::Shift(d),
        });
    }
    let rhs = symbolic(&eqs[eventual].cost, h, &inv, &mvar, &mut syms)?;
    let mut base = BTreeMap::new();
    for m in 0..start {
        let mut map: BTreeMap<String, Affine> = inv.iter().map(|(k, v)| (k.clone(), v.substitute(&BTreeMap::from([(mvar.clone(), Affine::constant(rat(i64::from(m))))])))).collect();
        map.insert(mvar.clone(), Affine::constant(rat(i64::from(m))));
        let v = symbolic(&eqs[applies[m as usize]].cost, h, &map, &mvar, &mut syms)?;
        base.insert(m, v);
    }
    let rec = Recurrence {
        name: h.to_string(),
        var: mvar.clone(),
        calls,
        rhs,
        start,
        base,
    };
    report.recurrence = Some(rec.clone());
    let cf = solve_recurrence(&rec).map_err(|e| Fail::NotAvailable(e.to_string()))?;
    let cf = if matches!(ranking.measure, Measure::Up { .. }) {
        lift(cf.substitute(&BTreeMap::from([(mvar.clone(), measure)])))?
    } else {
        cf
    };
    // split off the symbols again
    let mut sol = CostExpr::default();
    let mut per_sym: BTreeMap<String, Vec<(TermKey, BigRational)>> = BTreeMap::new();
    let mut fixed = Vec::new();
    for (k, c) in cf.terms() {
        let hit: Vec<&String> = k.mono.keys().chain(k.special.keys()).filter(|v| v.starts_with('$')).collect();
        match hit.as_slice() {
            [] => fixed.push((k.clone(), c.clone())),
            [s] if k.mono.get(*s) == Some(&1) && !k.special.contains_key(*s) => {
                let mut key = k.clone();
                key.mono.remove(*s);
                per_sym.entry((*s).clone()).or_default().push((key, c.clone()));
            }
            _ => return na(format!("solution of {h} is not linear in the costs of other blocks")),
        }
    }
    sol.fixed = ClosedForm::from_terms(fixed);
    for (s, call) in syms.table {
        if let Some(terms) = per_sym.remove(&s) {
            sol.add_call(ClosedForm::from_terms(terms), call);
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::unit_costs;
    use crate::hcir::translate_module;
    use crate::ir::parse_module;

    fn analyze_src(src: &str) -> Analysis {
        let p = translate_module(&parse_module(src).unwrap()).unwrap();
        analyze(&p, &unit_costs(&p)).unwrap()
    }

    #[test]
    fn traverse_unit_costs() {
        let a = analyze_src(include_str!("../../tests/corpus/traverse.sir"));
        let f = a.function("traverse").unwrap();
        assert_eq!(f.result.as_ref().unwrap().to_string(), "2*N + 3");
        let h = a.system.header("looptest").unwrap();
        assert_eq!(h.ranking.as_ref().unwrap().describe(&h.params), "I (decreases by 1)");
        assert_eq!(
            h.recurrence.as_ref().unwrap().to_string(),
            "looptest(0) = 2\nlooptest(I) = looptest(I-1) + 2    for I >= 1"
        );
        assert_eq!(h.equations.len(), 2);
        assert_eq!(h.equations[0].to_string(), "2 + looptest(I - 1, ?)    if I != 0");
    }

    #[test]
    fn count_up_nested_loops() {
        let src = "define i32 @sqr(i32 %N) {
entry:
  br label %outer
outer:
  %i = phi i32 [ 0, %entry ], [ %i1, %latch ]
  %r = phi i32 [ 0, %entry ], [ %r1, %latch ]
  %c = icmp slt i32 %i, %N
  br i1 %c, label %pre, label %done
pre:
  br label %inner
inner:
  %j = phi i32 [ 0, %pre ], [ %j1, %body ]
  %s = phi i32 [ %r, %pre ], [ %s1, %body ]
  %cj = icmp slt i32 %j, %N
  br i1 %cj, label %body, label %latch
body:
  %s1 = add i32 %s, 1
  %j1 = add i32 %j, 1
  br label %inner
latch:
  %r1 = add i32 %s, 0
  %i1 = add i32 %i, 1
  br label %outer
done:
  ret i32 %r
}
";
        let a = analyze_src(src);
        let f = a.function("sqr").unwrap();
        // entry 1; per outer iteration outer, pre, inner exit, latch = 4 and
        // 2 per inner iteration; final outer test and done = 2
        assert_eq!(f.result.as_ref().unwrap().to_string(), "2*N^2 + 4*N + 3");
        let inner = a.system.header("inner").unwrap();
        assert_eq!(inner.ranking.as_ref().unwrap().describe(&inner.params), "N - J (J increases by 1)");
    }

    #[test]
    fn data_dependent_loop_is_not_available() {
        let src = "define void @walk([0 x i32]* %A) {
entry:
  br label %test
test:
  %i = phi i32 [ 0, %entry ], [ %v, %test ]
  %p = getelementptr [0 x i32], [0 x i32]* %A, i32 0, i32 %i
  %v = load i32, i32* %p
  %c = icmp ne i32 %v, 0
  br i1 %c, label %test, label %done
done:
  ret void
}
";
        let a = analyze_src(src);
        let f = a.function("walk").unwrap();
        let why = f.result.as_ref().unwrap_err();
        assert!(why.contains("unknown"), "{why}");
    }

    #[test]
    fn ranking_tie_break() {
        let eq = |args: Vec<Affine>| Piece {
            conds: vec![],
            cost: CostExpr {
                fixed: ClosedForm::zero(),
                calls: vec![(
                    ClosedForm::constant(rat(1)),
                    Call {
                        pred: "f".into(),
                        args: args.into_iter().map(Some).collect(),
                    },
                )],
            },
        };
        let params = vec!["A".to_string(), "B".to_string()];
        let minus = |v: &str, k: i64| Affine::var(v).sub(&Affine::constant(rat(k)));
        let r = detect_ranking_argument("f", &params, &[eq(vec![minus("A", 2), minus("B", 1)])], &BTreeSet::from([0, 1])).unwrap();
        assert_eq!(r.measure, Measure::Arg(0));
        assert_eq!(r.decrements, vec![2]);
        let mut up = eq(vec![minus("A", -1), minus("B", 0)]);
        assert!(detect_ranking_argument("f", &params, &[up.clone()], &BTreeSet::from([0, 1])).is_none());
        up.conds.push(Cond::Cmp {
            op: crate::ir::CmpPred::Slt,
            lhs: Affine::var("A"),
            rhs: Affine::var("B"),
        });
        let r = detect_ranking_argument("f", &params, &[up], &BTreeSet::from([0, 1])).unwrap();
        assert_eq!(
            r.measure,
            Measure::Up {
                counter: 0,
                bound: Affine::var("B")
            }
        );
        assert!(detect_ranking_argument("f", &params, &[eq(vec![minus("A", -1), minus("B", -1)])], &BTreeSet::from([0, 1])).is_none());
    }
}
