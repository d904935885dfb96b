//! Random well-formed SSA programs, produced as text so that the parser is
//! exercised rather than bypassed.
//!
//! Every block is reachable through a spanning tree of forward edges; extra
//! edges (including back edges) are sprinkled on top. Values defined in the
//! entry block are visible everywhere, other values only in their own
//! block, so dominance holds by construction. Each element address is used
//! by exactly one load or store in its block, which keeps the output within
//! what the clause translator accepts.

use rand::seq::SliceRandom;
use rand::Rng;

pub const PRELUDE: &str = "%pair = type { i32, i32 }\n\ndefine i32 @inc(i32 %x) {\nentry:\n  %y = add i32 %x, 1\n  ret i32 %y\n}\n";

pub struct GenOptions {
    pub max_blocks: usize,
    pub max_insts: usize,
    /// Allow `br` edges back to earlier blocks.
    pub back_edges: bool,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions { max_blocks: 6, max_insts: 8, back_edges: true }
    }
}

/// Successor lists of a random CFG with `n` blocks: every block `i > 0` has
/// a predecessor `j < i`, no block branches to the entry, and a block has at
/// most two distinct successors.
pub fn random_cfg<R: Rng>(n: usize, back_edges: bool, rng: &mut R) -> Vec<Vec<usize>> {
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 1..n {
        let open: Vec<usize> = (0..i).filter(|&j| succ[j].len() < 2).collect();
        let j = *open.choose(rng).expect("a tree on i nodes leaves spare out-degree");
        succ[j].push(i);
    }
    if n > 1 {
        for (j, s) in succ.iter_mut().enumerate() {
            if s.len() < 2 && rng.gen_bool(0.3) {
                let t = rng.gen_range(1..n);
                if !s.contains(&t) && (back_edges || t > j) {
                    s.push(t);
                }
            }
        }
    }
    succ
}

struct Fn<'a, R> {
    rng: &'a mut R,
    next: usize,
    out: String,
}

impl<R: Rng> Fn<'_, R> {
    fn fresh(&mut self, stem: &str) -> String {
        self.next += 1;
        format!("{stem}{}", self.next)
    }

    fn pick(&mut self, pool: &[String]) -> String {
        if self.rng.gen_bool(0.2) {
            return self.rng.gen_range(-3..10).to_string();
        }
        pool.choose(self.rng).unwrap().clone()
    }

    fn line(&mut self, s: &str) {
        self.out.push_str("  ");
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn body(&mut self, ints: &mut Vec<String>, bools: &mut Vec<String>, count: usize) {
        for _ in 0..count {
            match self.rng.gen_range(0..10) {
                0..=2 => {
                    let op = ["add", "sub", "mul"].choose(self.rng).unwrap();
                    let (a, b) = (self.pick(ints), self.pick(ints));
                    let r = self.fresh("v");
                    self.line(&format!("%{r} = {op} i32 {a}, {b}"));
                    ints.push(format!("%{r}"));
                }
                3 => {
                    let p = ["eq", "ne", "slt", "sle", "sgt", "sge"].choose(self.rng).unwrap();
                    let (a, b) = (self.pick(ints), self.pick(ints));
                    let r = self.fresh("c");
                    self.line(&format!("%{r} = icmp {p} i32 {a}, {b}"));
                    bools.push(format!("%{r}"));
                }
                4 => {
                    if let Some(c) = bools.choose(self.rng).cloned() {
                        let r = self.fresh("z");
                        self.line(&format!("%{r} = zext i1 {c} to i32"));
                        ints.push(format!("%{r}"));
                    } else {
                        let a = self.pick(ints);
                        let r = self.fresh("t");
                        self.line(&format!("%{r} = trunc i32 {a} to i1"));
                        bools.push(format!("%{r}"));
                    }
                }
                5 => {
                    let i = self.pick(ints);
                    let (p, r) = (self.fresh("p"), self.fresh("e"));
                    self.line(&format!("%{p} = getelementptr [0 x i32], [0 x i32]* %A, i32 0, i32 {i}"));
                    self.line(&format!("%{r} = load i32, i32* %{p}"));
                    ints.push(format!("%{r}"));
                }
                6 => {
                    let (i, v) = (self.pick(ints), self.pick(ints));
                    let p = self.fresh("p");
                    self.line(&format!("%{p} = getelementptr [0 x i32], [0 x i32]* %A, i32 0, i32 {i}"));
                    self.line(&format!("store i32 {v}, i32* %{p}"));
                }
                7 => {
                    let field = self.rng.gen_range(0..2);
                    let (p, r) = (self.fresh("f"), self.fresh("g"));
                    self.line(&format!("%{p} = getelementptr %pair, %pair* %P, i32 0, i32 {field}"));
                    self.line(&format!("%{r} = load i32, i32* %{p}"));
                    ints.push(format!("%{r}"));
                }
                8 => {
                    let v = self.pick(ints);
                    let (s, r) = (self.fresh("s"), self.fresh("l"));
                    self.line(&format!("%{s} = alloca i32"));
                    self.line(&format!("store i32 {v}, i32* %{s}"));
                    self.line(&format!("%{r} = load i32, i32* %{s}"));
                    ints.push(format!("%{r}"));
                }
                _ => {
                    let a = self.pick(ints);
                    let r = self.fresh("k");
                    self.line(&format!("%{r} = call i32 @inc(i32 {a})"));
                    ints.push(format!("%{r}"));
                }
            }
        }
    }
}

/// Text of one random function named `name`.
pub fn random_function<R: Rng>(name: &str, opts: &GenOptions, rng: &mut R) -> String {
    let n = rng.gen_range(1..=opts.max_blocks);
    let succ = random_cfg(n, opts.back_edges, rng);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, s) in succ.iter().enumerate() {
        for &t in s {
            preds[t].push(j);
        }
    }
    let label = |i: usize| if i == 0 { "entry".to_string() } else { format!("b{i}") };

    let mut g = Fn { rng, next: 0, out: String::new() };
    g.out.push_str(&format!("define i32 @{name}(i32 %a, i32 %b, [0 x i32]* %A, %pair* %P) {{\n"));
    let mut global_ints = vec!["%a".to_string(), "%b".to_string()];
    let mut global_bools = Vec::new();
    for i in 0..n {
        g.out.push_str(&format!("{}:\n", label(i)));
        let (mut ints, mut bools) = (global_ints.clone(), global_bools.clone());
        if preds[i].len() > 1 && g.rng.gen_bool(0.7) {
            let r = g.fresh("m");
            let incoming: Vec<String> = preds[i]
                .iter()
                .map(|&p| {
                    let v = if g.rng.gen_bool(0.5) { "%a".to_string() } else { g.rng.gen_range(0..5).to_string() };
                    format!("[ {v}, %{} ]", label(p))
                })
                .collect();
            g.line(&format!("%{r} = phi i32 {}", incoming.join(", ")));
            ints.push(format!("%{r}"));
        }
        let count = g.rng.gen_range(0..=opts.max_insts);
        g.body(&mut ints, &mut bools, count);
        match succ[i].as_slice() {
            [] => {
                let v = g.pick(&ints);
                g.line(&format!("ret i32 {v}"));
            }
            [t] => g.line(&format!("br label %{}", label(*t))),
            [t, e] => {
                let c = match bools.choose(g.rng).cloned() {
                    Some(c) => c,
                    None => {
                        let (x, y) = (g.pick(&ints), g.pick(&ints));
                        let c = g.fresh("c");
                        g.line(&format!("%{c} = icmp slt i32 {x}, {y}"));
                        format!("%{c}")
                    }
                };
                g.line(&format!("br i1 {c}, label %{}, label %{}", label(*t), label(*e)));
            }
            _ => unreachable!("at most two successors"),
        }
        if i == 0 {
            global_ints = ints;
            global_bools = bools;
        }
    }
    g.out.push_str("}\n");
    g.out
}

/// A module of `count` random functions after the shared prelude.
pub fn random_module<R: Rng>(count: usize, opts: &GenOptions, rng: &mut R) -> String {
    let mut text = PRELUDE.to_string();
    for k in 0..count {
        text.push('\n');
        text.push_str(&random_function(&format!("f{k}"), opts, rng));
    }
    text
}
