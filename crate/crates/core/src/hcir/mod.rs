//! Horn-clause block representation.
//!
//! Every basic block becomes a clause `block(Params) :- S1, ..., Sn.` whose
//! head parameters are inferred by a liveness-style fixpoint ([`params`]).
//! Conditional branches become calls to a fresh two-clause predicate whose
//! clauses start with a guard on the branch condition. Aggregates are
//! immutable values: a store produces a new version of the aggregate, and
//! element access is expressed with `nth/3`, `set_nth/4`, `field/3` and
//! `set_field/4`.

pub mod params;
pub mod phi;
mod text;
mod translate;

use std::collections::BTreeMap;
use std::fmt;

use crate::energy::TrustAssertion;
use crate::ir::{CmpPred, IrType, Opcode};

pub use params::{gen_kill, infer_block_params, ParamSets};
pub use phi::{eliminate_phi, PhiError};
pub use text::{parse_hcir, print_hcir, HcParseError};
pub use translate::{translate_function, translate_instruction, translate_module, TranslateError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegularType {
    Num,
    Atm,
    List(Box<RegularType>),
    Functor { name: String, args: Vec<RegularType> },
}

impl fmt::Display for RegularType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegularType::Num => f.write_str("num"),
            RegularType::Atm => f.write_str("atm"),
            RegularType::List(t) => write!(f, "list({t})"),
            RegularType::Functor { name, args } => {
                write!(f, "functor({name},[")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str("])")
            }
        }
    }
}

/// Translates an IR type. Anonymous structures become functors named
/// `struct`.
pub fn translate_type(t: &IrType) -> RegularType {
    match t {
        IrType::Int(_) => RegularType::Num,
        IrType::Void | IrType::Label => RegularType::Atm,
        IrType::Array { elem, .. } => RegularType::List(Box::new(translate_type(elem))),
        IrType::Struct { name, fields } => RegularType::Functor {
            name: name.clone().unwrap_or_else(|| "struct".to_string()),
            args: fields.iter().map(translate_type).collect(),
        },
        IrType::Pointer(t) => translate_type(t),
    }
}

/// Renders `t` as a set of `regtype` definitions, one per list or functor
/// node, in the style `array1 := [] | [~num|array1].`. Returns the name of
/// the root type and the definitions.
pub fn regtype_defs(t: &RegularType) -> (String, Vec<String>) {
    fn go(t: &RegularType, arrays: &mut usize, structs: &mut usize, out: &mut Vec<String>) -> String {
        match t {
            RegularType::Num => "num".into(),
            RegularType::Atm => "atm".into(),
            RegularType::List(e) => {
                *arrays += 1;
                let name = format!("array{arrays}");
                let slot = out.len();
                out.push(String::new());
                let inner = go(e, arrays, structs, out);
                out[slot] = format!(":- regtype {name}/1.\n{name} := [] | [~{inner}|{name}].");
                name
            }
            RegularType::Functor { name: fname, args } => {
                *structs += 1;
                let name = if *structs == 1 { "struct".to_string() } else { format!("struct{structs}") };
                let slot = out.len();
                out.push(String::new());
                let inner: Vec<String> = args.iter().map(|a| format!("~{}", go(a, arrays, structs, out))).collect();
                out[slot] = format!(":- regtype {name}/1.\n{name} := {fname}({}).", inner.join(","));
                name
            }
        }
    }
    let mut out = Vec::new();
    let root = go(t, &mut 0, &mut 0, &mut out);
    (root, out)
}

/// Clause-level term. Atoms only appear as the quoted type argument of
/// `mk_value/2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Int(i128),
    Atom(String),
}

impl Term {
    pub fn var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }
}

/// Built-in literals. The last argument is the result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Builtin {
    Add,
    Sub,
    Mul,
    /// `zext(X, FromWidth, R)`
    Zext,
    /// `trunc(X, ToWidth, R)`
    Trunc,
    Mov,
    /// `nth(I, L, E)`, 0-based.
    Nth,
    /// `set_nth(I, L, V, L1)`
    SetNth,
    /// `field(K, S, V)`, 0-based.
    Field,
    /// `set_field(K, S, V, S1)`
    SetField,
    /// `mk_value('type', V)`: a zero-initialised value of an IR type.
    MkValue,
}

impl Builtin {
    pub const ALL: [Builtin; 11] = [
        Builtin::Add,
        Builtin::Sub,
        Builtin::Mul,
        Builtin::Zext,
        Builtin::Trunc,
        Builtin::Mov,
        Builtin::Nth,
        Builtin::SetNth,
        Builtin::Field,
        Builtin::SetField,
        Builtin::MkValue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Add => "add",
            Builtin::Sub => "sub",
            Builtin::Mul => "mul",
            Builtin::Zext => "zext",
            Builtin::Trunc => "trunc",
            Builtin::Mov => "mov",
            Builtin::Nth => "nth",
            Builtin::SetNth => "set_nth",
            Builtin::Field => "field",
            Builtin::SetField => "set_field",
            Builtin::MkValue => "mk_value",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::Mov | Builtin::MkValue => 2,
            Builtin::SetNth | Builtin::SetField => 4,
            _ => 3,
        }
    }

    pub fn from_name(name: &str, arity: usize) -> Option<Self> {
        Builtin::ALL.into_iter().find(|b| b.name() == name && b.arity() == arity)
    }
}

/// Name of the two-clause predicate that implements `icmp <pred>`.
pub fn compare_pred_name(p: CmpPred) -> String {
    format!("icmp_{}", p.name())
}

pub fn compare_pred_from_name(name: &str) -> Option<CmpPred> {
    name.strip_prefix("icmp_").and_then(CmpPred::from_name)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    Builtin {
        op: Builtin,
        args: Vec<Term>,
        /// IR opcodes whose cost this literal carries.
        charge: Vec<Opcode>,
    },
    Call {
        pred: String,
        args: Vec<Term>,
        charge: Vec<Opcode>,
    },
    /// `Var = value`, the branch test at the start of a conditional clause.
    Guard { var: String, value: i128 },
    /// Arithmetic test; only in the bodies of comparison predicates.
    Test { op: CmpPred, lhs: Term, rhs: Term },
}

impl Literal {
    pub fn charge(&self) -> &[Opcode] {
        match self {
            Literal::Builtin { charge, .. } | Literal::Call { charge, .. } => charge,
            _ => &[],
        }
    }

    pub fn args(&self) -> Vec<&Term> {
        match self {
            Literal::Builtin { args, .. } | Literal::Call { args, .. } => args.iter().collect(),
            Literal::Guard { .. } => vec![],
            Literal::Test { lhs, rhs, .. } => vec![lhs, rhs],
        }
    }
}

/// The IR block a clause was translated from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockRef {
    pub function: String,
    pub label: String,
}

impl fmt::Display for BlockRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.function, self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    pub head: String,
    pub args: Vec<Term>,
    pub body: Vec<Literal>,
    /// Opcodes of the origin block with no literal of their own (phi, ret).
    pub residual: Vec<Opcode>,
    pub origin: Option<BlockRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    In,
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredKind {
    /// Standalone clause of one IR block.
    Block,
    /// Fresh predicate for a conditional branch.
    Branch,
    /// `icmp_<pred>/3`.
    Compare,
    /// Declared external function; behaviour given by a trust assertion.
    Abstract,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredSig {
    pub name: String,
    pub modes: Vec<Mode>,
    pub types: Vec<RegularType>,
    pub kind: PredKind,
    /// Owning function, for block and branch predicates.
    pub function: Option<String>,
}

impl PredSig {
    pub fn arity(&self) -> usize {
        self.modes.len()
    }

    pub fn inputs(&self) -> impl Iterator<Item = usize> + '_ {
        self.modes.iter().enumerate().filter(|(_, m)| **m == Mode::In).map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub clauses: Vec<Clause>,
    /// Predicate signatures in first-definition order.
    pub signatures: Vec<PredSig>,
    pub assertions: Vec<TrustAssertion>,
    /// Function name to its entry predicate.
    pub entries: BTreeMap<String, String>,
}

impl Program {
    pub fn signature(&self, name: &str) -> Option<&PredSig> {
        self.signatures.iter().find(|s| s.name == name)
    }

    pub fn clauses_of<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Clause> + 'a {
        self.clauses.iter().filter(move |c| c.head == name)
    }

    pub fn assertion(&self, name: &str, arity: usize) -> Option<&TrustAssertion> {
        self.assertions.iter().find(|a| a.name == name && a.arity == arity)
    }
}

/// Maps an IR register name to a clause variable name.
pub fn var_name(reg: &str) -> String {
    let mut s: String = reg.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    match s.chars().next() {
        Some(c) if c.is_ascii_lowercase() => {
            s.replace_range(..1, &c.to_ascii_uppercase().to_string());
            s
        }
        Some(c) if c.is_ascii_uppercase() => s,
        _ => format!("V{s}"),
    }
}
