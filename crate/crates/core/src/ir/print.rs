use std::fmt::{self, Display, Formatter};

use super::*;

impl Display for IrType {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            IrType::Int(w) => write!(f, "i{w}"),
            IrType::Array { len, elem } => write!(f, "[{} x {elem}]", len.unwrap_or(0)),
            IrType::Struct { name: Some(n), .. } => write!(f, "%{n}"),
            IrType::Struct { name: None, fields } => write_fields(f, fields),
            IrType::Pointer(t) => write!(f, "{t}*"),
            IrType::Void => f.write_str("void"),
            IrType::Label => f.write_str("label"),
        }
    }
}

fn write_fields(f: &mut Formatter<'_>, fields: &[IrType]) -> fmt::Result {
    if fields.is_empty() {
        return f.write_str("{}");
    }
    f.write_str("{ ")?;
    for (i, t) in fields.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{t}")?;
    }
    f.write_str(" }")
}

impl Display for Operand {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "%{r}"),
            Operand::Const(c) => write!(f, "{c}"),
        }
    }
}

impl Display for Instruction {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if let Some(r) = &self.result {
            write!(f, "%{r} = ")?;
        }
        let ty = &self.ty;
        match &self.kind {
            InstKind::Phi { incoming } => {
                write!(f, "phi {ty} ")?;
                for (i, (v, l)) in incoming.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "[ {v}, %{l} ]")?;
                }
                Ok(())
            }
            InstKind::Binary { lhs, rhs, .. } => write!(f, "{} {ty} {lhs}, {rhs}", self.opcode()),
            InstKind::Icmp { pred, ty, lhs, rhs } => write!(f, "icmp {} {ty} {lhs}, {rhs}", pred.name()),
            InstKind::Cast { value, from, .. } => write!(f, "{} {from} {value} to {ty}", self.opcode()),
            InstKind::Alloca { allocated } => write!(f, "alloca {allocated}"),
            InstKind::Load { ptr } => write!(f, "load {ty}, {ty}* {ptr}"),
            InstKind::Store { value, ptr } => write!(f, "store {ty} {value}, {ty}* {ptr}"),
            InstKind::Gep { base, ptr, indices } => {
                write!(f, "getelementptr {base}, {base}* {ptr}")?;
                for i in indices {
                    write!(f, ", i32 {i}")?;
                }
                Ok(())
            }
            InstKind::Call { callee, args } => {
                write!(f, "call {ty} @{callee}(")?;
                for (i, (t, a)) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t} {a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl Display for BranchTarget {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "label %{}", self.label)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, (t, a)) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{t} {a}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl Display for Terminator {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Terminator::Br(t) => write!(f, "br {t}"),
            Terminator::CondBr {
                cond,
                then_to,
                else_to,
            } => write!(f, "br i1 {cond}, {then_to}, {else_to}"),
            Terminator::Ret(None) => f.write_str("ret void"),
            Terminator::Ret(Some((t, v))) => write!(f, "ret {t} {v}"),
        }
    }
}

impl Display for Block {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)?;
        if !self.params.is_empty() {
            f.write_str("(")?;
            for (i, (n, t)) in self.params.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{t} %{n}")?;
            }
            f.write_str(")")?;
        }
        writeln!(f, ":")?;
        for i in &self.instructions {
            writeln!(f, "  {i}")?;
        }
        if let Some(t) = &self.terminator {
            writeln!(f, "  {t}")?;
        }
        Ok(())
    }
}

impl Display for Function {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "define {} @{}(", self.ret, self.name)?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} %{}", p.ty, p.name)?;
        }
        writeln!(f, ") {{")?;
        for b in &self.blocks {
            write!(f, "{b}")?;
        }
        writeln!(f, "}}")
    }
}

impl Display for Module {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let mut sep = |f: &mut Formatter<'_>| {
            let r = if first { Ok(()) } else { writeln!(f) };
            first = false;
            r
        };
        if !self.types.is_empty() {
            sep(f)?;
            for (n, t) in &self.types {
                write!(f, "%{n} = type ")?;
                match t {
                    IrType::Struct { fields, .. } => write_fields(f, fields)?,
                    other => write!(f, "{other}")?,
                }
                writeln!(f)?;
            }
        }
        if !self.declarations.is_empty() {
            sep(f)?;
            for d in &self.declarations {
                write!(f, "declare {} @{}(", d.ret, d.name)?;
                for (i, t) in d.params.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t}")?;
                }
                writeln!(f, ")")?;
            }
        }
        for func in &self.functions {
            sep(f)?;
            write!(f, "{func}")?;
        }
        Ok(())
    }
}
