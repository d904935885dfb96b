//! Restricted SSA input language (`.sir`).
//!
//! The accepted text is a strict subset of the LLVM textual form: integer,
//! array, structure, pointer, `void` and `label` types, and the opcodes listed
//! in [`Opcode`]. Anything outside the subset is a parse error. Integer widths
//! are kept for printing, but downstream arithmetic is unbounded.
//!
//! Grammar (informal; `;` starts a comment that runs to end of line):
//!
//! ```text
//! module    := (typedef | declare | define)*
//! typedef   := %name = type { type, ... }
//! declare   := declare type @name ( type, ... )
//! define    := define type @name ( type %p, ... ) { block+ }
//! block     := label [ ( type %x, ... ) ] : inst* term
//! inst      := %r = phi type [ op, %label ], ...
//!            | %r = add|sub|mul type op, op
//!            | %r = icmp eq|ne|slt|sle|sgt|sge type op, op
//!            | %r = zext|trunc type op to type
//!            | %r = alloca type
//!            | %r = load type, type* op
//!            | store type op, type* op
//!            | %r = getelementptr [inbounds] type, type* op, type op, ...
//!            | [%r =] call type @f(type op, ...)
//! term      := br label %l [ ( type op, ... ) ]
//!            | br i1 op, label %a [ (...) ], label %b [ (...) ]
//!            | ret void | ret type op
//! type      := iN | void | label | [N x type] | { type, ... } | %name | type*
//! ```
//!
//! `[0 x T]` denotes an array of arbitrary length. Block parameters (the
//! `( type %x, ... )` lists) never appear in hand-written input; they are the
//! printed form of a function after phi elimination.

mod cfg;
pub(crate) mod parse;
mod print;
mod validate;

use std::collections::BTreeSet;
use std::fmt;

pub use cfg::{build_cfg, predecessors, CfgError, Successors};
pub use parse::{parse_module, parse_type, ParseError, ParseErrorKind};
pub use validate::{validate_ssa, Violation};

/// Source position; ignored by structural equality.
#[derive(Debug, Clone, Copy, Default)]
pub struct Loc {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Loc {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Loc {}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IrType {
    Int(u32),
    /// `len == None` is the arbitrary-length array `[0 x T]`.
    Array {
        len: Option<u64>,
        elem: Box<IrType>,
    },
    Struct {
        name: Option<String>,
        fields: Vec<IrType>,
    },
    Pointer(Box<IrType>),
    Void,
    Label,
}

impl IrType {
    pub fn i1() -> Self {
        IrType::Int(1)
    }

    pub fn i32() -> Self {
        IrType::Int(32)
    }

    pub fn ptr(self) -> Self {
        IrType::Pointer(Box::new(self))
    }

    pub fn is_int(&self) -> bool {
        matches!(self, IrType::Int(_))
    }

    pub fn is_pointer(&self) -> bool {
        matches!(self, IrType::Pointer(_))
    }

    pub fn pointee(&self) -> Option<&IrType> {
        match self {
            IrType::Pointer(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_aggregate(&self) -> bool {
        matches!(self, IrType::Array { .. } | IrType::Struct { .. })
    }

    /// Text of the type with named structures written out in full.
    pub fn expanded(&self) -> String {
        match self {
            IrType::Array { len, elem } => format!("[{} x {}]", len.unwrap_or(0), elem.expanded()),
            IrType::Struct { fields, .. } if fields.is_empty() => "{}".to_string(),
            IrType::Struct { fields, .. } => {
                let inner: Vec<String> = fields.iter().map(IrType::expanded).collect();
                format!("{{ {} }}", inner.join(", "))
            }
            IrType::Pointer(t) => format!("{}*", t.expanded()),
            other => other.to_string(),
        }
    }

    /// Whether the type contains an arbitrary-length array by value.
    pub fn has_unsized_array(&self) -> bool {
        match self {
            IrType::Array { len: None, .. } => true,
            IrType::Array { elem, .. } => elem.has_unsized_array(),
            IrType::Struct { fields, .. } => fields.iter().any(IrType::has_unsized_array),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operand {
    Reg(String),
    Const(i128),
}

impl Operand {
    pub fn reg(&self) -> Option<&str> {
        match self {
            Operand::Reg(r) => Some(r),
            Operand::Const(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpPred {
    Eq,
    Ne,
    Slt,
    Sle,
    Sgt,
    Sge,
}

impl CmpPred {
    pub const ALL: [CmpPred; 6] = [
        CmpPred::Eq,
        CmpPred::Ne,
        CmpPred::Slt,
        CmpPred::Sle,
        CmpPred::Sgt,
        CmpPred::Sge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CmpPred::Eq => "eq",
            CmpPred::Ne => "ne",
            CmpPred::Slt => "slt",
            CmpPred::Sle => "sle",
            CmpPred::Sgt => "sgt",
            CmpPred::Sge => "sge",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        CmpPred::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn holds<T: Ord>(self, a: T, b: T) -> bool {
        match self {
            CmpPred::Eq => a == b,
            CmpPred::Ne => a != b,
            CmpPred::Slt => a < b,
            CmpPred::Sle => a <= b,
            CmpPred::Sgt => a > b,
            CmpPred::Sge => a >= b,
        }
    }

    pub fn negate(self) -> Self {
        match self {
            CmpPred::Eq => CmpPred::Ne,
            CmpPred::Ne => CmpPred::Eq,
            CmpPred::Slt => CmpPred::Sge,
            CmpPred::Sle => CmpPred::Sgt,
            CmpPred::Sgt => CmpPred::Sle,
            CmpPred::Sge => CmpPred::Slt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CastOp {
    Zext,
    Trunc,
}

/// Opcode table of the supported subset, also used as the key of
/// instruction-level energy costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    Phi,
    Add,
    Sub,
    Mul,
    Icmp,
    Zext,
    Trunc,
    Alloca,
    Load,
    Store,
    GetElementPtr,
    Call,
    Br,
    BrCond,
    Ret,
}

impl Opcode {
    pub const ALL: [Opcode; 15] = [
        Opcode::Phi,
        Opcode::Add,
        Opcode::Sub,
        Opcode::Mul,
        Opcode::Icmp,
        Opcode::Zext,
        Opcode::Trunc,
        Opcode::Alloca,
        Opcode::Load,
        Opcode::Store,
        Opcode::GetElementPtr,
        Opcode::Call,
        Opcode::Br,
        Opcode::BrCond,
        Opcode::Ret,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Opcode::Phi => "phi",
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Mul => "mul",
            Opcode::Icmp => "icmp",
            Opcode::Zext => "zext",
            Opcode::Trunc => "trunc",
            Opcode::Alloca => "alloca",
            Opcode::Load => "load",
            Opcode::Store => "store",
            Opcode::GetElementPtr => "getelementptr",
            Opcode::Call => "call",
            Opcode::Br => "br",
            Opcode::BrCond => "br_cond",
            Opcode::Ret => "ret",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Opcode::ALL.into_iter().find(|o| o.name() == s)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstKind {
    Phi {
        incoming: Vec<(Operand, String)>,
    },
    Binary {
        op: BinOp,
        lhs: Operand,
        rhs: Operand,
    },
    Icmp {
        pred: CmpPred,
        /// Operand type; the result is always `i1`.
        ty: IrType,
        lhs: Operand,
        rhs: Operand,
    },
    Cast {
        op: CastOp,
        value: Operand,
        from: IrType,
    },
    Alloca {
        allocated: IrType,
    },
    Load {
        ptr: Operand,
    },
    Store {
        value: Operand,
        ptr: Operand,
    },
    /// `indices[0]` is the pointer step and must be the constant 0.
    Gep {
        base: IrType,
        ptr: Operand,
        indices: Vec<Operand>,
    },
    Call {
        callee: String,
        args: Vec<(IrType, Operand)>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub result: Option<String>,
    /// Result type for value-producing instructions; operand type for
    /// `store`; `void` for void calls.
    pub ty: IrType,
    pub kind: InstKind,
    pub loc: Loc,
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match &self.kind {
            InstKind::Phi { .. } => Opcode::Phi,
            InstKind::Binary { op: BinOp::Add, .. } => Opcode::Add,
            InstKind::Binary { op: BinOp::Sub, .. } => Opcode::Sub,
            InstKind::Binary { op: BinOp::Mul, .. } => Opcode::Mul,
            InstKind::Icmp { .. } => Opcode::Icmp,
            InstKind::Cast { op: CastOp::Zext, .. } => Opcode::Zext,
            InstKind::Cast { op: CastOp::Trunc, .. } => Opcode::Trunc,
            InstKind::Alloca { .. } => Opcode::Alloca,
            InstKind::Load { .. } => Opcode::Load,
            InstKind::Store { .. } => Opcode::Store,
            InstKind::Gep { .. } => Opcode::GetElementPtr,
            InstKind::Call { .. } => Opcode::Call,
        }
    }

    /// Operands in textual order.
    pub fn operands(&self) -> Vec<&Operand> {
        match &self.kind {
            InstKind::Phi { incoming } => incoming.iter().map(|(o, _)| o).collect(),
            InstKind::Binary { lhs, rhs, .. } | InstKind::Icmp { lhs, rhs, .. } => vec![lhs, rhs],
            InstKind::Cast { value, .. } => vec![value],
            InstKind::Alloca { .. } => vec![],
            InstKind::Load { ptr } => vec![ptr],
            InstKind::Store { value, ptr } => vec![value, ptr],
            InstKind::Gep { ptr, indices, .. } => std::iter::once(ptr).chain(indices).collect(),
            InstKind::Call { args, .. } => args.iter().map(|(_, o)| o).collect(),
        }
    }
}

/// Registers written and read by one instruction. For
/// `x = phi(x1, ..., xn)` this is `({x}, {x1, ..., xn})`.
pub fn def_ref(inst: &Instruction) -> (BTreeSet<String>, BTreeSet<String>) {
    let def = inst.result.iter().cloned().collect();
    let refs = inst
        .operands()
        .into_iter()
        .filter_map(|o| o.reg().map(str::to_owned))
        .collect();
    (def, refs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchTarget {
    pub label: String,
    /// Values for the target's block parameters (empty before phi elimination).
    pub args: Vec<(IrType, Operand)>,
}

impl BranchTarget {
    pub fn new(label: impl Into<String>) -> Self {
        BranchTarget {
            label: label.into(),
            args: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminator {
    Br(BranchTarget),
    CondBr {
        cond: Operand,
        then_to: BranchTarget,
        else_to: BranchTarget,
    },
    Ret(Option<(IrType, Operand)>),
}

impl Terminator {
    pub fn opcode(&self) -> Opcode {
        match self {
            Terminator::Br(_) => Opcode::Br,
            Terminator::CondBr { .. } => Opcode::BrCond,
            Terminator::Ret(_) => Opcode::Ret,
        }
    }

    pub fn targets(&self) -> Vec<&BranchTarget> {
        match self {
            Terminator::Br(t) => vec![t],
            Terminator::CondBr {
                then_to, else_to, ..
            } => vec![then_to, else_to],
            Terminator::Ret(_) => vec![],
        }
    }

    pub fn targets_mut(&mut self) -> Vec<&mut BranchTarget> {
        match self {
            Terminator::Br(t) => vec![t],
            Terminator::CondBr {
                then_to, else_to, ..
            } => vec![then_to, else_to],
            Terminator::Ret(_) => vec![],
        }
    }

    /// Registers read by the terminator, including block arguments.
    pub fn refs(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut add = |o: &Operand| {
            if let Operand::Reg(r) = o {
                out.insert(r.clone());
            }
        };
        match self {
            Terminator::Br(t) => t.args.iter().for_each(|(_, o)| add(o)),
            Terminator::CondBr {
                cond,
                then_to,
                else_to,
            } => {
                add(cond);
                then_to.args.iter().for_each(|(_, o)| add(o));
                else_to.args.iter().for_each(|(_, o)| add(o));
            }
            Terminator::Ret(Some((_, v))) => add(v),
            Terminator::Ret(None) => {}
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub label: String,
    /// Block parameters; only present after phi elimination.
    pub params: Vec<(String, IrType)>,
    pub instructions: Vec<Instruction>,
    /// `None` only in malformed input; reported by [`validate_ssa`].
    pub terminator: Option<Terminator>,
    pub term_loc: Loc,
    pub loc: Loc,
}

impl Block {
    pub fn phis(&self) -> impl Iterator<Item = &Instruction> {
        self.instructions
            .iter()
            .take_while(|i| matches!(i.kind, InstKind::Phi { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: IrType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: IrType,
    pub blocks: Vec<Block>,
    pub loc: Loc,
}

impl Function {
    pub fn entry(&self) -> &Block {
        &self.blocks[0]
    }

    pub fn block(&self, label: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    pub fn has_phi(&self) -> bool {
        self.blocks.iter().any(|b| b.phis().next().is_some())
    }
}

/// External function known only by signature; its behaviour comes from a
/// trust assertion in the energy model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Declaration {
    pub name: String,
    pub params: Vec<IrType>,
    pub ret: IrType,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Module {
    /// Named structure types, in definition order.
    pub types: Vec<(String, IrType)>,
    pub declarations: Vec<Declaration>,
    pub functions: Vec<Function>,
}

impl Module {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn declaration(&self, name: &str) -> Option<&Declaration> {
        self.declarations.iter().find(|d| d.name == name)
    }
}
