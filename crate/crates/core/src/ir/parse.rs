use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown opcode `{0}`")]
    UnknownOpcode(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("unknown type `%{0}`")]
    UnknownType(String),
    #[error("duplicate function `@{0}`")]
    DuplicateFunction(String),
    #[error("call to undefined function `@{0}`")]
    UndefinedCallee(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Local(String),
    Global(String),
    Int(i128),
    Punct(char),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Local(n) => format!("`%{n}`"),
            Tok::Global(n) => format!("`@{n}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Punct(c) => format!("`{c}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$')
}

fn lex(text: &str) -> Result<Vec<(Tok, Loc)>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let loc = Loc { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == ';' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c == '%' || c == '@' {
            i += 1;
            while i < chars.len() && is_name_char(chars[i]) {
                i += 1;
            }
            let name: String = chars[start + 1..i].iter().collect();
            if name.is_empty() {
                return Err(ParseError {
                    line,
                    col,
                    kind: ParseErrorKind::Syntax(format!("empty name after `{c}`")),
                });
            }
            if c == '%' {
                Tok::Local(name)
            } else {
                Tok::Global(name)
            }
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            // a label such as `12:` lexes as a word
            if i < chars.len() && is_name_char(chars[i]) {
                while i < chars.len() && is_name_char(chars[i]) {
                    i += 1;
                }
                Tok::Word(chars[start..i].iter().collect())
            } else {
                let s: String = chars[start..i].iter().collect();
                match s.parse::<i128>() {
                    Ok(v) => Tok::Int(v),
                    Err(_) => {
                        return Err(ParseError {
                            line,
                            col,
                            kind: ParseErrorKind::Syntax(format!("integer `{s}` out of range")),
                        })
                    }
                }
            }
        } else if is_name_char(c) {
            while i < chars.len() && is_name_char(chars[i]) {
                i += 1;
            }
            Tok::Word(chars[start..i].iter().collect())
        } else if "(){}[],=*:".contains(c) {
            i += 1;
            Tok::Punct(c)
        } else {
            return Err(ParseError {
                line,
                col,
                kind: ParseErrorKind::Syntax(format!("unexpected character `{c}`")),
            });
        };
        col += i - start;
        out.push((tok, loc));
    }
    out.push((Tok::Eof, Loc { line, col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Loc)>,
    pos: usize,
    named: HashMap<String, IrType>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn loc(&self) -> Loc {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_at<T>(&self, loc: Loc, kind: ParseErrorKind) -> PResult<T> {
        Err(ParseError {
            line: loc.line,
            col: loc.col,
            kind,
        })
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> PResult<T> {
        self.err_at(self.loc(), ParseErrorKind::Syntax(msg.into()))
    }

    fn expected<T>(&self, what: &str) -> PResult<T> {
        self.syntax(format!("expected {what}, found {}", self.peek().describe()))
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Punct(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> PResult<()> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            self.expected(&format!("`{c}`"))
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if matches!(self.peek(), Tok::Word(x) if x == w) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<()> {
        if self.eat_word(w) {
            Ok(())
        } else {
            self.expected(&format!("`{w}`"))
        }
    }

    fn expect_local(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Local(n) => {
                self.bump();
                Ok(n)
            }
            _ => self.expected("a `%` name"),
        }
    }

    fn expect_global(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Global(n) => {
                self.bump();
                Ok(n)
            }
            _ => self.expected("a `@` name"),
        }
    }

    fn expect_int(&mut self) -> PResult<i128> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(v)
            }
            _ => self.expected("an integer"),
        }
    }

    fn parse_type(&mut self) -> PResult<IrType> {
        let loc = self.loc();
        let mut ty = match self.bump() {
            Tok::Word(w) if w == "void" => IrType::Void,
            Tok::Word(w) if w == "label" => IrType::Label,
            Tok::Word(w) if w.starts_with('i') && w.len() > 1 && w[1..].bytes().all(|b| b.is_ascii_digit()) => {
                let width: u32 = w[1..].parse().map_err(|_| ParseError {
                    line: loc.line,
                    col: loc.col,
                    kind: ParseErrorKind::Syntax(format!("bad integer width `{w}`")),
                })?;
                if width == 0 {
                    return self.err_at(loc, ParseErrorKind::Syntax("zero-width integer".into()));
                }
                IrType::Int(width)
            }
            Tok::Word(w) if matches!(w.as_str(), "float" | "double" | "half" | "fp128" | "x86_fp80") => {
                return self.err_at(loc, ParseErrorKind::Unsupported(format!("floating-point type `{w}`")));
            }
            Tok::Punct('[') => {
                let n = self.expect_int()?;
                if n < 0 {
                    return self.err_at(loc, ParseErrorKind::Syntax("negative array length".into()));
                }
                self.expect_word("x")?;
                let elem = self.parse_type()?;
                self.expect_punct(']')?;
                IrType::Array {
                    len: if n == 0 { None } else { Some(n as u64) },
                    elem: Box::new(elem),
                }
            }
            Tok::Punct('{') => {
                let mut fields = Vec::new();
                if !self.eat_punct('}') {
                    loop {
                        fields.push(self.parse_type()?);
                        if self.eat_punct('}') {
                            break;
                        }
                        self.expect_punct(',')?;
                    }
                }
                IrType::Struct { name: None, fields }
            }
            Tok::Local(n) => match self.named.get(&n) {
                Some(t) => t.clone(),
                None => return self.err_at(loc, ParseErrorKind::UnknownType(n)),
            },
            t => {
                return self.err_at(loc, ParseErrorKind::Syntax(format!("expected a type, found {}", t.describe())));
            }
        };
        while self.eat_punct('*') {
            ty = ty.ptr();
        }
        if let IrType::Array { elem, .. } = &ty {
            if matches!(**elem, IrType::Void | IrType::Label) {
                return self.err_at(loc, ParseErrorKind::TypeMismatch("array of void/label".into()));
            }
        }
        Ok(ty)
    }

    fn parse_operand(&mut self) -> PResult<Operand> {
        match self.peek().clone() {
            Tok::Local(n) => {
                self.bump();
                Ok(Operand::Reg(n))
            }
            Tok::Int(v) => {
                self.bump();
                Ok(Operand::Const(v))
            }
            Tok::Word(w) if w == "true" || w == "false" => {
                self.bump();
                Ok(Operand::Const(i128::from(w == "true")))
            }
            _ => self.expected("an operand"),
        }
    }

    fn parse_module(&mut self) -> PResult<Module> {
        let mut m = Module::default();
        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Local(name) => {
                    let loc = self.loc();
                    self.bump();
                    self.expect_punct('=')?;
                    self.expect_word("type")?;
                    let ty = self.parse_type()?;
                    let IrType::Struct { fields, .. } = ty else {
                        return self.err_at(loc, ParseErrorKind::Unsupported("named non-structure type".into()));
                    };
                    let ty = IrType::Struct {
                        name: Some(name.clone()),
                        fields,
                    };
                    if self.named.insert(name.clone(), ty.clone()).is_some() {
                        return self.err_at(loc, ParseErrorKind::Syntax(format!("duplicate type `%{name}`")));
                    }
                    m.types.push((name, ty));
                }
                Tok::Word(w) if w == "declare" => {
                    self.bump();
                    let ret = self.parse_type()?;
                    let name = self.expect_global()?;
                    self.expect_punct('(')?;
                    let mut params = Vec::new();
                    if !self.eat_punct(')') {
                        loop {
                            params.push(self.parse_type()?);
                            // parameter names are optional in declarations
                            if matches!(self.peek(), Tok::Local(_)) {
                                self.bump();
                            }
                            if self.eat_punct(')') {
                                break;
                            }
                            self.expect_punct(',')?;
                        }
                    }
                    m.declarations.push(Declaration { name, params, ret });
                }
                Tok::Word(w) if w == "define" => {
                    let f = self.parse_function()?;
                    if m.functions.iter().any(|g| g.name == f.name) {
                        return self.err_at(f.loc, ParseErrorKind::DuplicateFunction(f.name));
                    }
                    m.functions.push(f);
                }
                _ => return self.expected("`define`, `declare` or a type definition"),
            }
        }
        Ok(m)
    }

    fn parse_function(&mut self) -> PResult<Function> {
        let loc = self.loc();
        self.expect_word("define")?;
        let ret = self.parse_type()?;
        let name = self.expect_global()?;
        self.expect_punct('(')?;
        let mut params = Vec::new();
        if !self.eat_punct(')') {
            loop {
                let ty = self.parse_type()?;
                while matches!(self.peek(), Tok::Word(w) if matches!(w.as_str(), "noalias" | "nocapture" | "readonly")) {
                    self.bump();
                }
                let pname = self.expect_local()?;
                params.push(Param { name: pname, ty });
                if self.eat_punct(')') {
                    break;
                }
                self.expect_punct(',')?;
            }
        }
        self.expect_punct('{')?;
        let mut blocks = Vec::new();
        while !self.eat_punct('}') {
            blocks.push(self.parse_block()?);
        }
        if blocks.is_empty() {
            return self.err_at(loc, ParseErrorKind::Syntax(format!("function `@{name}` has no blocks")));
        }
        Ok(Function {
            name,
            params,
            ret,
            blocks,
            loc,
        })
    }

    fn parse_label_def(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Word(w) => {
                self.bump();
                Ok(w)
            }
            Tok::Int(v) if v >= 0 => {
                self.bump();
                Ok(v.to_string())
            }
            _ => self.expected("a block label"),
        }
    }

    fn parse_block(&mut self) -> PResult<Block> {
        let loc = self.loc();
        let label = self.parse_label_def()?;
        let mut params = Vec::new();
        if self.eat_punct('(') && !self.eat_punct(')') {
            loop {
                let ty = self.parse_type()?;
                let n = self.expect_local()?;
                params.push((n, ty));
                if self.eat_punct(')') {
                    break;
                }
                self.expect_punct(',')?;
            }
        }
        self.expect_punct(':')?;
        let mut instructions = Vec::new();
        loop {
            let at = self.loc();
            match self.peek().clone() {
                Tok::Word(w) if w == "br" || w == "ret" => {
                    let term = self.parse_terminator()?;
                    return Ok(Block {
                        label,
                        params,
                        instructions,
                        terminator: Some(term),
                        term_loc: at,
                        loc,
                    });
                }
                Tok::Punct('}') => break,
                // a label starts the next block: this one has no terminator
                Tok::Word(_) | Tok::Int(_)
                    if matches!(self.peek_at(1), Tok::Punct(':') | Tok::Punct('('))
                        && !matches!(self.peek(), Tok::Word(w) if w == "store" || w == "call") =>
                {
                    break
                }
                _ => instructions.push(self.parse_instruction()?),
            }
        }
        Ok(Block {
            label,
            params,
            instructions,
            terminator: None,
            term_loc: self.loc(),
            loc,
        })
    }

    fn parse_target(&mut self) -> PResult<BranchTarget> {
        self.expect_word("label")?;
        let label = self.expect_local()?;
        let mut args = Vec::new();
        if self.eat_punct('(') && !self.eat_punct(')') {
            loop {
                let ty = self.parse_type()?;
                args.push((ty, self.parse_operand()?));
                if self.eat_punct(')') {
                    break;
                }
                self.expect_punct(',')?;
            }
        }
        Ok(BranchTarget { label, args })
    }

    fn parse_terminator(&mut self) -> PResult<Terminator> {
        let loc = self.loc();
        match self.bump() {
            Tok::Word(w) if w == "ret" => {
                if self.eat_word("void") {
                    return Ok(Terminator::Ret(None));
                }
                let ty = self.parse_type()?;
                let v = self.parse_operand()?;
                Ok(Terminator::Ret(Some((ty, v))))
            }
            Tok::Word(w) if w == "br" => {
                if matches!(self.peek(), Tok::Word(w) if w == "label") {
                    return Ok(Terminator::Br(self.parse_target()?));
                }
                let ty = self.parse_type()?;
                if ty != IrType::i1() {
                    return self.err_at(loc, ParseErrorKind::TypeMismatch("conditional branch on non-i1".into()));
                }
                let cond = self.parse_operand()?;
                self.expect_punct(',')?;
                let then_to = self.parse_target()?;
                self.expect_punct(',')?;
                let else_to = self.parse_target()?;
                Ok(Terminator::CondBr {
                    cond,
                    then_to,
                    else_to,
                })
            }
            _ => unreachable!(),
        }
    }

    fn parse_instruction(&mut self) -> PResult<Instruction> {
        let loc = self.loc();
        let result = if let (Tok::Local(n), Tok::Punct('=')) = (self.peek().clone(), self.peek_at(1).clone()) {
            self.bump();
            self.bump();
            Some(n)
        } else {
            None
        };
        let op_loc = self.loc();
        let opname = match self.bump() {
            Tok::Word(w) => w,
            t => {
                return self.err_at(op_loc, ParseErrorKind::Syntax(format!("expected an opcode, found {}", t.describe())));
            }
        };
        let need_result = |p: &Self, yes: bool| -> PResult<()> {
            match (yes, result.is_some()) {
                (true, false) => p.err_at(op_loc, ParseErrorKind::Syntax(format!("`{opname}` needs a result register"))),
                (false, true) => p.err_at(op_loc, ParseErrorKind::Syntax(format!("`{opname}` produces no value"))),
                _ => Ok(()),
            }
        };
        let (ty, kind) = match opname.as_str() {
            "phi" => {
                need_result(self, true)?;
                let ty = self.parse_type()?;
                let mut incoming = Vec::new();
                loop {
                    self.expect_punct('[')?;
                    let v = self.parse_operand()?;
                    self.expect_punct(',')?;
                    let l = self.expect_local()?;
                    self.expect_punct(']')?;
                    incoming.push((v, l));
                    if !self.eat_punct(',') {
                        break;
                    }
                }
                (ty, InstKind::Phi { incoming })
            }
            "add" | "sub" | "mul" => {
                need_result(self, true)?;
                while self.eat_word("nsw") || self.eat_word("nuw") {}
                let ty = self.parse_type()?;
                let lhs = self.parse_operand()?;
                self.expect_punct(',')?;
                let rhs = self.parse_operand()?;
                let op = match opname.as_str() {
                    "add" => BinOp::Add,
                    "sub" => BinOp::Sub,
                    _ => BinOp::Mul,
                };
                (ty, InstKind::Binary { op, lhs, rhs })
            }
            "icmp" => {
                need_result(self, true)?;
                let ploc = self.loc();
                let pred = match self.bump() {
                    Tok::Word(p) => match CmpPred::from_name(&p) {
                        Some(p) => p,
                        None => return self.err_at(ploc, ParseErrorKind::Unsupported(format!("icmp predicate `{p}`"))),
                    },
                    _ => return self.err_at(ploc, ParseErrorKind::Syntax("expected an icmp predicate".into())),
                };
                let ty = self.parse_type()?;
                let lhs = self.parse_operand()?;
                self.expect_punct(',')?;
                let rhs = self.parse_operand()?;
                if !ty.is_int() {
                    return self.err_at(op_loc, ParseErrorKind::TypeMismatch("icmp on non-integer".into()));
                }
                (IrType::i1(), InstKind::Icmp { pred, ty, lhs, rhs })
            }
            "zext" | "trunc" => {
                need_result(self, true)?;
                let from = self.parse_type()?;
                let value = self.parse_operand()?;
                self.expect_word("to")?;
                let to = self.parse_type()?;
                let op = if opname == "zext" { CastOp::Zext } else { CastOp::Trunc };
                (to, InstKind::Cast { op, value, from })
            }
            "alloca" => {
                need_result(self, true)?;
                let allocated = self.parse_type()?;
                (allocated.clone().ptr(), InstKind::Alloca { allocated })
            }
            "load" => {
                need_result(self, true)?;
                let ty = self.parse_type()?;
                self.expect_punct(',')?;
                let pty = self.parse_type()?;
                let ptr = self.parse_operand()?;
                if pty.pointee() != Some(&ty) {
                    return self.err_at(op_loc, ParseErrorKind::TypeMismatch("load pointer type does not match value type".into()));
                }
                (ty, InstKind::Load { ptr })
            }
            "store" => {
                need_result(self, false)?;
                let ty = self.parse_type()?;
                let value = self.parse_operand()?;
                self.expect_punct(',')?;
                let pty = self.parse_type()?;
                let ptr = self.parse_operand()?;
                if pty.pointee() != Some(&ty) {
                    return self.err_at(op_loc, ParseErrorKind::TypeMismatch("store pointer type does not match value type".into()));
                }
                (ty, InstKind::Store { value, ptr })
            }
            "getelementptr" => {
                need_result(self, true)?;
                self.eat_word("inbounds");
                let base = self.parse_type()?;
                self.expect_punct(',')?;
                let pty = self.parse_type()?;
                let ptr = self.parse_operand()?;
                if pty.pointee() != Some(&base) {
                    return self.err_at(op_loc, ParseErrorKind::TypeMismatch("getelementptr base type does not match pointer".into()));
                }
                let mut indices = Vec::new();
                while self.eat_punct(',') {
                    let ity = self.parse_type()?;
                    if !ity.is_int() {
                        return self.err_at(op_loc, ParseErrorKind::TypeMismatch("non-integer index".into()));
                    }
                    indices.push(self.parse_operand()?);
                }
                let elem = gep_result_type(&base, &indices).map_err(|kind| ParseError {
                    line: op_loc.line,
                    col: op_loc.col,
                    kind,
                })?;
                (elem.ptr(), InstKind::Gep { base, ptr, indices })
            }
            "call" => {
                let ty = self.parse_type()?;
                need_result(self, ty != IrType::Void)?;
                let callee = self.expect_global()?;
                self.expect_punct('(')?;
                let mut args = Vec::new();
                if !self.eat_punct(')') {
                    loop {
                        let aty = self.parse_type()?;
                        args.push((aty, self.parse_operand()?));
                        if self.eat_punct(')') {
                            break;
                        }
                        self.expect_punct(',')?;
                    }
                }
                (ty, InstKind::Call { callee, args })
            }
            other => return self.err_at(op_loc, ParseErrorKind::UnknownOpcode(other.to_string())),
        };
        Ok(Instruction { result, ty, kind, loc })
    }
}

/// Element type addressed by a `getelementptr`; the first index must be 0.
pub(crate) fn gep_result_type(base: &IrType, indices: &[Operand]) -> Result<IrType, ParseErrorKind> {
    match indices.first() {
        Some(Operand::Const(0)) => {}
        Some(_) => return Err(ParseErrorKind::Unsupported("pointer arithmetic (first index must be 0)".into())),
        None => return Err(ParseErrorKind::Syntax("getelementptr without indices".into())),
    }
    if indices.len() < 2 {
        return Err(ParseErrorKind::Unsupported("address-only getelementptr".into()));
    }
    let mut cur = base.clone();
    for idx in &indices[1..] {
        cur = match cur {
            IrType::Array { elem, .. } => *elem,
            IrType::Struct { fields, .. } => match idx {
                Operand::Const(k) if *k >= 0 && (*k as usize) < fields.len() => fields[*k as usize].clone(),
                _ => return Err(ParseErrorKind::TypeMismatch("structure index must be a constant field number".into())),
            },
            _ => return Err(ParseErrorKind::TypeMismatch("index into a non-aggregate".into())),
        };
    }
    Ok(cur)
}

fn check_types(m: &Module) -> Result<(), ParseError> {
    let sigs: BTreeMap<&str, (Vec<IrType>, IrType)> = m
        .functions
        .iter()
        .map(|f| (f.name.as_str(), (f.params.iter().map(|p| p.ty.clone()).collect(), f.ret.clone())))
        .chain(m.declarations.iter().map(|d| (d.name.as_str(), (d.params.clone(), d.ret.clone()))))
        .collect();
    for f in &m.functions {
        let mut regs: HashMap<&str, &IrType> = HashMap::new();
        for p in &f.params {
            regs.insert(&p.name, &p.ty);
        }
        for b in &f.blocks {
            for (n, t) in &b.params {
                regs.insert(n, t);
            }
            for i in &b.instructions {
                if let Some(r) = &i.result {
                    regs.insert(r, &i.ty);
                }
            }
        }
        let mismatch = |loc: Loc, msg: String| ParseError {
            line: loc.line,
            col: loc.col,
            kind: ParseErrorKind::TypeMismatch(msg),
        };
        let check = |loc: Loc, o: &Operand, want: &IrType| -> Result<(), ParseError> {
            match o {
                Operand::Reg(r) => match regs.get(r.as_str()) {
                    Some(t) if *t != want => Err(mismatch(loc, format!("%{r} has type {t}, expected {want}"))),
                    _ => Ok(()),
                },
                Operand::Const(_) if !want.is_int() => Err(mismatch(loc, format!("integer constant used as {want}"))),
                Operand::Const(_) => Ok(()),
            }
        };
        for b in &f.blocks {
            for i in &b.instructions {
                match &i.kind {
                    InstKind::Phi { incoming } => {
                        for (v, _) in incoming {
                            check(i.loc, v, &i.ty)?;
                        }
                    }
                    InstKind::Binary { lhs, rhs, .. } => {
                        if !i.ty.is_int() {
                            return Err(mismatch(i.loc, "arithmetic on non-integer".into()));
                        }
                        check(i.loc, lhs, &i.ty)?;
                        check(i.loc, rhs, &i.ty)?;
                    }
                    InstKind::Icmp { ty, lhs, rhs, .. } => {
                        check(i.loc, lhs, ty)?;
                        check(i.loc, rhs, ty)?;
                    }
                    InstKind::Cast { value, from, .. } => {
                        if !from.is_int() || !i.ty.is_int() {
                            return Err(mismatch(i.loc, "cast of non-integer".into()));
                        }
                        check(i.loc, value, from)?;
                    }
                    InstKind::Alloca { .. } => {}
                    InstKind::Load { ptr } => check(i.loc, ptr, &i.ty.clone().ptr())?,
                    InstKind::Store { value, ptr } => {
                        check(i.loc, value, &i.ty)?;
                        check(i.loc, ptr, &i.ty.clone().ptr())?;
                    }
                    InstKind::Gep { base, ptr, .. } => check(i.loc, ptr, &base.clone().ptr())?,
                    InstKind::Call { callee, args } => {
                        let Some((ptys, ret)) = sigs.get(callee.as_str()) else {
                            return Err(ParseError {
                                line: i.loc.line,
                                col: i.loc.col,
                                kind: ParseErrorKind::UndefinedCallee(callee.clone()),
                            });
                        };
                        if *ret != i.ty || ptys.len() != args.len() {
                            return Err(mismatch(i.loc, format!("call does not match the signature of @{callee}")));
                        }
                        for ((aty, a), want) in args.iter().zip(ptys) {
                            if aty != want {
                                return Err(mismatch(i.loc, format!("argument of type {aty}, @{callee} expects {want}")));
                            }
                            check(i.loc, a, want)?;
                        }
                    }
                }
            }
            match &b.terminator {
                Some(Terminator::CondBr { cond, .. }) => check(b.term_loc, cond, &IrType::i1())?,
                Some(Terminator::Ret(r)) => {
                    let got = r.as_ref().map(|(t, _)| t.clone()).unwrap_or(IrType::Void);
                    if got != f.ret {
                        return Err(mismatch(b.term_loc, format!("returns {got} from a function returning {}", f.ret)));
                    }
                    if let Some((t, v)) = r {
                        check(b.term_loc, v, t)?;
                    }
                }
                _ => {}
            }
        }
    }
    Ok(())
}

/// Parses `.sir` source text into a module.
pub fn parse_module(text: &str) -> Result<Module, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        named: HashMap::new(),
    };
    let m = p.parse_module()?;
    check_types(&m)?;
    Ok(m)
}

/// Parses a single type written without named structures, as produced by
/// [`IrType::expanded`].
pub fn parse_type(text: &str) -> Result<IrType, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        named: HashMap::new(),
    };
    let t = p.parse_type()?;
    if *p.peek() != Tok::Eof {
        return p.expected("end of type");
    }
    Ok(t)
}
