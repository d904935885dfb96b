//! Reference interpreters for the SSA IR and for HC IR, with cost
//! accounting per visited block.
//!
//! Both charge `blocks[b]` once per execution of block `b` (for HC IR: once
//! per clause whose origin is `b`) and `externals[f]` once per call of a
//! declared function `f`. Declared functions behave as a stub returning
//! their first integer argument, or 0.
//!
//! Integers are `i128`; overflow is an error rather than a wrap.

mod hc;
mod ir;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use crate::energy::{aggregate_block_costs, CostError, EnergyModel};
use crate::hcir::{BlockRef, Program};
use crate::ir::{IrType, Module};

pub use hc::run_hcir;
pub use ir::run_ir;

pub const DEFAULT_STEP_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i128),
    /// Shared until written; copies of large arrays are cheap.
    List(Arc<Vec<Value>>),
    Functor { name: String, fields: Vec<Value> },
    Atom(String),
}

impl Value {
    pub fn list(items: Vec<Value>) -> Value {
        Value::List(Arc::new(items))
    }

    pub fn int(&self) -> Option<i128> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Zero-initialised value of an IR type. Arbitrary-length arrays are
    /// empty. Structures are named `struct` whatever their type name, so a
    /// value does not depend on how its type was spelled.
    pub fn zero_of(t: &IrType) -> Value {
        match t {
            IrType::Int(_) => Value::Int(0),
            IrType::Array { len, elem } => Value::list(vec![Value::zero_of(elem); len.unwrap_or(0) as usize]),
            IrType::Struct { fields, .. } => Value::Functor {
                name: "struct".into(),
                fields: fields.iter().map(Value::zero_of).collect(),
            },
            IrType::Pointer(t) => Value::zero_of(t),
            IrType::Void | IrType::Label => Value::Atom("void".into()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Atom(a) => f.write_str(a),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Value::Functor { name, fields } => {
                write!(f, "{name}(")?;
                for (i, v) in fields.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Cost of one execution of each block, and of each call to a declared
/// function. Blocks missing from the map cost nothing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostMap {
    pub blocks: BTreeMap<BlockRef, BigRational>,
    pub externals: BTreeMap<String, BigRational>,
}

impl CostMap {
    /// Every block of `m` at `cost`.
    pub fn uniform(m: &Module, cost: BigRational) -> Self {
        let mut c = CostMap::default();
        for f in &m.functions {
            for b in &f.blocks {
                c.blocks.insert(
                    BlockRef {
                        function: f.name.clone(),
                        label: b.label.clone(),
                    },
                    cost.clone(),
                );
            }
        }
        c
    }

    /// Block costs aggregated from an energy model, and external costs from
    /// its trust assertions.
    pub fn from_model(m: &EnergyModel, p: &Program) -> Result<Self, CostError> {
        let costs = aggregate_block_costs(m, p)?;
        let mut c = CostMap::default();
        for (clause, cost) in p.clauses.iter().zip(costs) {
            if let Some(o) = &clause.origin {
                c.blocks.insert(o.clone(), cost);
            }
        }
        for s in &p.signatures {
            if s.kind == crate::hcir::PredKind::Abstract {
                if let Some(a) = m.assertions.iter().find(|a| a.name == s.name && a.arity == s.arity()) {
                    c.externals.insert(s.name.clone(), a.energy.clone());
                }
            }
        }
        Ok(c)
    }

    fn block(&self, b: &BlockRef) -> BigRational {
        self.blocks.get(b).cloned().unwrap_or_else(BigRational::zero)
    }

    fn external(&self, name: &str) -> BigRational {
        self.externals.get(name).cloned().unwrap_or_else(BigRational::zero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub step_limit: u64,
    /// Record the sequence of visited blocks.
    pub trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            step_limit: DEFAULT_STEP_LIMIT,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostedRun {
    /// Final contents of the written pointer arguments, in parameter order,
    /// then the return value of non-void functions.
    pub results: Vec<Value>,
    pub cost: BigRational,
    pub visits: BTreeMap<BlockRef, u64>,
    pub external_calls: BTreeMap<String, u64>,
    pub steps: u64,
    pub trace: Vec<BlockRef>,
}

impl CostedRun {
    fn add_visits(&mut self, b: BlockRef, n: u64, c: &CostMap) {
        self.cost += c.block(&b) * BigRational::from_integer(n.into());
        *self.visits.entry(b).or_insert(0) += n;
    }

    fn call_external(&mut self, name: &str, c: &CostMap) {
        self.cost += c.external(name);
        *self.external_calls.entry(name.to_string()).or_insert(0) += 1;
    }

    /// `Σ c_b * visits(b) + Σ c_f * calls(f)`; equals `cost` for every run.
    pub fn decomposed_cost(&self, c: &CostMap) -> BigRational {
        let mut total = BigRational::zero();
        for (b, n) in &self.visits {
            total += c.block(b) * BigRational::from_integer((*n).into());
        }
        for (f, n) in &self.external_calls {
            total += c.external(f) * BigRational::from_integer((*n).into());
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("step limit of {0} exceeded (nontermination suspected)")]
    StepLimit(u64),
    #[error("index {index} out of bounds for length {len}")]
    OutOfBounds { index: i128, len: usize },
    #[error("type error: {0}")]
    Type(String),
    #[error("integer overflow in {0}")]
    Overflow(String),
    #[error("no clause of {0} applies")]
    NoClause(String),
    #[error("unbound variable {var} in {pred}")]
    Unbound { var: String, pred: String },
    #[error("unknown function or predicate {0}")]
    Unknown(String),
    #[error("{name} expects {expected} arguments, got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("register %{0} used before definition")]
    Undefined(String),
    #[error("interpreter thread failed")]
    Thread,
}

/// Runs `f` on a thread with a large stack; both interpreters recurse once
/// per call.
fn on_big_stack<T: Send>(f: impl FnOnce() -> Result<T, InterpError> + Send) -> Result<T, InterpError> {
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(1 << 30)
            .spawn_scoped(s, f)
            .map_err(|_| InterpError::Thread)?
            .join()
            .map_err(|_| InterpError::Thread)?
    })
}

fn checked(op: &str, r: Option<i128>) -> Result<Value, InterpError> {
    r.map(Value::Int).ok_or_else(|| InterpError::Overflow(op.to_string()))
}

/// Integer built-ins shared by both interpreters.
pub(crate) fn arith(op: &str, a: i128, b: i128) -> Result<Value, InterpError> {
    match op {
        "add" => checked(op, a.checked_add(b)),
        "sub" => checked(op, a.checked_sub(b)),
        "mul" => checked(op, a.checked_mul(b)),
        _ => Err(InterpError::Unknown(op.to_string())),
    }
}

/// `zext` from `width` bits: negative values are read as unsigned.
pub(crate) fn zext(x: i128, width: u32) -> Result<Value, InterpError> {
    if x >= 0 {
        return Ok(Value::Int(x));
    }
    if width >= 127 {
        return Err(InterpError::Overflow("zext".into()));
    }
    Ok(Value::Int(x + (1i128 << width)))
}

/// `trunc` to `width` bits, two's complement; `i1` stays 0 or 1.
pub(crate) fn trunc(x: i128, width: u32) -> Result<Value, InterpError> {
    if width >= 127 {
        return Ok(Value::Int(x));
    }
    let m = 1i128 << width;
    let r = x.rem_euclid(m);
    if width > 1 && r >= m / 2 {
        Ok(Value::Int(r - m))
    } else {
        Ok(Value::Int(r))
    }
}

/// Result of a declared function under the stub semantics.
pub(crate) fn external_stub(args: &[Value]) -> Value {
    Value::Int(args.iter().find_map(Value::int).unwrap_or(0))
}

pub(crate) fn index(v: &Value, i: i128) -> Result<&Value, InterpError> {
    match v {
        Value::List(items) => usize::try_from(i)
            .ok()
            .and_then(|k| items.get(k))
            .ok_or(InterpError::OutOfBounds { index: i, len: items.len() }),
        Value::Functor { fields, .. } => usize::try_from(i)
            .ok()
            .and_then(|k| fields.get(k))
            .ok_or(InterpError::OutOfBounds { index: i, len: fields.len() }),
        other => Err(InterpError::Type(format!("cannot index into {other}"))),
    }
}

pub(crate) fn index_mut(v: &mut Value, i: i128) -> Result<&mut Value, InterpError> {
    match v {
        Value::List(items) => index_slot(Arc::<Vec<Value>>::make_mut(items), i),
        Value::Functor { fields, .. } => index_slot(fields, i),
        other => Err(InterpError::Type(format!("cannot index into {other}"))),
    }
}

fn index_slot(items: &mut [Value], i: i128) -> Result<&mut Value, InterpError> {
    let len = items.len();
    usize::try_from(i)
        .ok()
        .and_then(|k| items.get_mut(k))
        .ok_or(InterpError::OutOfBounds { index: i, len })
}
