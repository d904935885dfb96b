//! Text form of HC IR programs.
//!
//! ```text
//! :- resource energy.
//! :- trust pred nth(A1, A2, A3) : (num(A1), list(A2, num)) => (num(A3), size(A3, elem($1), elem($1))) + resource(avg, energy, 1215439).
//! :- pred looptest(+num, +list(num)).
//!
//! looptest(I, Arr) :-
//!     icmp_ne(I, 0, Zcmp),
//!     loopbody_loopend(Zcmp, I, Arr).
//! ```
//!
//! Charges and origins are not part of the text.

use std::fmt::{self, Write as _};

use thiserror::Error;

use super::{compare_pred_from_name, Builtin, Clause, Literal, Mode, PredKind, PredSig, Program, RegularType, Term};
use crate::energy::{parse_decimal, format_rational, SizeExpr, SizeRelation, TrustAssertion};
use crate::ir::CmpPred;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {msg}")]
pub struct HcParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Int(i) => write!(f, "{i}"),
            Term::Atom(a) if is_plain_atom(a) => f.write_str(a),
            Term::Atom(a) => write!(f, "'{}'", a.replace('\\', "\\\\").replace('\'', "\\'")),
        }
    }
}

fn is_plain_atom(a: &str) -> bool {
    a.starts_with(|c: char| c.is_ascii_lowercase()) && a.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn test_op(p: CmpPred) -> &'static str {
    match p {
        CmpPred::Eq => "=",
        CmpPred::Ne => "\\=",
        CmpPred::Slt => "<",
        CmpPred::Sle => "=<",
        CmpPred::Sgt => ">",
        CmpPred::Sge => ">=",
    }
}

fn write_args(out: &mut String, args: &[Term]) {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{a}");
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        match self {
            Literal::Builtin { op, args, .. } => {
                s.push_str(op.name());
                s.push('(');
                write_args(&mut s, args);
                s.push(')');
            }
            Literal::Call { pred, args, .. } => {
                s.push_str(pred);
                if !args.is_empty() {
                    s.push('(');
                    write_args(&mut s, args);
                    s.push(')');
                }
            }
            Literal::Guard { var, value } => {
                let _ = write!(s, "{var} = {value}");
            }
            Literal::Test { op, lhs, rhs } => {
                let _ = write!(s, "{lhs} {} {rhs}", test_op(*op));
            }
        }
        f.write_str(&s)
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut head = self.head.clone();
        if !self.args.is_empty() {
            head.push('(');
            write_args(&mut head, &self.args);
            head.push(')');
        }
        if self.body.is_empty() {
            return write!(f, "{head}.");
        }
        write!(f, "{head} :-")?;
        for (i, l) in self.body.iter().enumerate() {
            let end = if i + 1 == self.body.len() { "." } else { "," };
            write!(f, "\n    {l}{end}")?;
        }
        Ok(())
    }
}

/// `num(A1)`-style type literal for argument `arg`.
fn type_literal(arg: &str, t: &RegularType) -> String {
    match t {
        RegularType::Num => format!("num({arg})"),
        RegularType::Atm => format!("atm({arg})"),
        RegularType::List(e) => format!("list({arg}, {e})"),
        RegularType::Functor { .. } => format!("regtype({arg}, {t})"),
    }
}

impl fmt::Display for TrustAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vars: Vec<String> = (1..=self.arity).map(|k| format!("A{k}")).collect();
        write!(f, ":- trust pred {}", self.name)?;
        if self.arity > 0 {
            write!(f, "({})", vars.join(", "))?;
        }
        if !self.pre.is_empty() {
            let items: Vec<String> = self
                .pre
                .iter()
                .enumerate()
                .filter_map(|(k, t)| t.as_ref().map(|t| type_literal(&vars[k], t)))
                .collect();
            if items.is_empty() {
                f.write_str(" : true")?;
            } else {
                write!(f, " : ({})", items.join(", "))?;
            }
        }
        let mut post: Vec<String> = self.post.iter().enumerate().map(|(k, t)| type_literal(&vars[k], t)).collect();
        post.extend(self.sizes.iter().map(|s| format!("size({}, {}, {})", vars[s.arg], s.lower, s.upper)));
        if !post.is_empty() {
            write!(f, " => ({})", post.join(", "))?;
        }
        write!(f, " + resource(avg, energy, {}).", format_rational(&self.energy))
    }
}

fn sig_directive(s: &PredSig) -> String {
    let mut out = format!(":- pred {}", s.name);
    if !s.modes.is_empty() {
        let args: Vec<String> = s
            .modes
            .iter()
            .zip(&s.types)
            .map(|(m, t)| format!("{}{t}", if *m == Mode::In { '+' } else { '-' }))
            .collect();
        let _ = write!(out, "({})", args.join(", "));
    }
    out.push('.');
    out
}

/// Renders `p`: directives first, then the clauses grouped by predicate
/// with a blank line between groups. The empty program renders as "".
pub fn print_hcir(p: &Program) -> String {
    let mut out = String::new();
    if !p.assertions.is_empty() {
        out.push_str(":- resource energy.\n");
        for a in &p.assertions {
            let _ = writeln!(out, "{a}");
        }
    }
    for s in &p.signatures {
        out.push_str(&sig_directive(s));
        out.push('\n');
    }
    let mut prev: Option<&str> = None;
    for c in &p.clauses {
        if prev != Some(c.head.as_str()) && !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "{c}");
        prev = Some(&c.head);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Var(String),
    Atom(String),
    Quoted(String),
    Int(i128),
    Punct(&'static str),
    Eof,
}

const PUNCTS: [&str; 14] = [":-", "\\=", "=<", ">=", "(", ")", "[", "]", ",", ".", "=", "<", ">", "+"];

fn lex(src: &str) -> Result<Vec<(Tok, usize, usize)>, HcParseError> {
    let mut toks = Vec::new();
    let b = src.as_bytes();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, col, msg: String| HcParseError { line, col, msg };
    while i < b.len() {
        let c = b[i] as char;
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
        if c == '%' {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < b.len() && ((b[i] as char).is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            let w = &src[start..i];
            if c.is_ascii_lowercase() {
                Tok::Atom(w.to_string())
            } else {
                Tok::Var(w.to_string())
            }
        } else if c.is_ascii_digit() || (c == '-' && b.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i += 1;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            let v = src[start..i].parse().map_err(|_| err(line, col, "integer out of range".into()))?;
            Tok::Int(v)
        } else if c == '\'' {
            i += 1;
            let mut s = String::new();
            loop {
                match b.get(i) {
                    None | Some(b'\n') => return Err(err(line, col, "unterminated quoted atom".into())),
                    Some(b'\'') => {
                        i += 1;
                        break;
                    }
                    Some(b'\\') if i + 1 < b.len() => {
                        s.push(b[i + 1] as char);
                        i += 2;
                    }
                    Some(_) => {
                        let ch = src[i..].chars().next().expect("char");
                        s.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            Tok::Quoted(s)
        } else if let Some(p) = PUNCTS.iter().find(|p| src[i..].starts_with(**p)) {
            i += p.len();
            Tok::Punct(p)
        } else {
            return Err(err(line, col, format!("unexpected character `{c}`")));
        };
        toks.push((tok, line, col));
        col += i - start;
    }
    toks.push((Tok::Eof, line, col));
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn err(&self, msg: impl Into<String>) -> HcParseError {
        let (_, line, col) = &self.toks[self.pos];
        HcParseError {
            line: *line,
            col: *col,
            msg: msg.into(),
        }
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if t != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Tok::Punct(q) if *q == p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &str) -> Result<(), HcParseError> {
        if self.eat(p) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{p}`")))
        }
    }

    fn atom(&mut self) -> Result<String, HcParseError> {
        match self.bump() {
            Tok::Atom(a) => Ok(a),
            _ => {
                self.pos -= 1;
                Err(self.err("expected a name"))
            }
        }
    }

    fn term(&mut self) -> Result<Term, HcParseError> {
        match self.bump() {
            Tok::Var(v) => Ok(Term::Var(v)),
            Tok::Int(i) => Ok(Term::Int(i)),
            Tok::Atom(a) | Tok::Quoted(a) => Ok(Term::Atom(a)),
            Tok::Eof => Err(self.err("unexpected end of input")),
            _ => {
                self.pos -= 1;
                Err(self.err("expected a term"))
            }
        }
    }

    fn args(&mut self) -> Result<Vec<Term>, HcParseError> {
        let mut out = Vec::new();
        if self.eat("(") {
            loop {
                out.push(self.term()?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        Ok(out)
    }

    fn literal(&mut self) -> Result<Literal, HcParseError> {
        if let Tok::Atom(name) = self.peek().clone() {
            self.pos += 1;
            let args = self.args()?;
            return Ok(match Builtin::from_name(&name, args.len()) {
                Some(op) => Literal::Builtin { op, args, charge: vec![] },
                None => Literal::Call {
                    pred: name,
                    args,
                    charge: vec![],
                },
            });
        }
        let lhs = self.term()?;
        let op = match self.bump() {
            Tok::Punct(p) => p,
            _ => {
                self.pos -= 1;
                return Err(self.err("expected a comparison"));
            }
        };
        let rhs = self.term()?;
        if let (Term::Var(v), "=", Term::Int(k)) = (&lhs, op, &rhs) {
            return Ok(Literal::Guard { var: v.clone(), value: *k });
        }
        let cmp = CmpPred::ALL.into_iter().find(|p| test_op(*p) == op).ok_or_else(|| self.err(format!("unknown test `{op}`")))?;
        Ok(Literal::Test { op: cmp, lhs, rhs })
    }

    fn clause(&mut self) -> Result<Clause, HcParseError> {
        let head = self.atom()?;
        let args = self.args()?;
        let mut body = Vec::new();
        if self.eat(":-") {
            loop {
                body.push(self.literal()?);
                if self.eat(".") {
                    break;
                }
                self.expect(",")?;
            }
        } else {
            self.expect(".")?;
        }
        Ok(Clause {
            head,
            args,
            body,
            residual: vec![],
            origin: None,
        })
    }
}

/// Splits at top-level commas.
fn split_top(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0, 0);
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    let last = s[start..].trim();
    if !last.is_empty() {
        out.push(last);
    }
    out
}

/// Parses the `Display` form of a regular type.
pub(crate) fn parse_regtype(s: &str) -> Option<RegularType> {
    let s = s.trim();
    match s {
        "num" => return Some(RegularType::Num),
        "atm" => return Some(RegularType::Atm),
        _ => {}
    }
    if let Some(inner) = s.strip_prefix("list(").and_then(|r| r.strip_suffix(')')) {
        return Some(RegularType::List(Box::new(parse_regtype(inner)?)));
    }
    let inner = s.strip_prefix("functor(")?.strip_suffix(')')?;
    let (name, rest) = inner.split_once(',')?;
    let rest = rest.trim().strip_prefix('[')?.strip_suffix(']')?;
    let args = split_top(rest).into_iter().map(parse_regtype).collect::<Option<Vec<_>>>()?;
    Some(RegularType::Functor {
        name: name.trim().to_string(),
        args,
    })
}

fn strip_parens(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(s)
}

fn parse_trust(text: &str) -> Option<TrustAssertion> {
    let rest = text.strip_prefix("trust")?.trim_start().strip_prefix("pred")?.trim_start();
    let (body, resource) = rest.rsplit_once("+ resource(avg, energy,")?;
    let energy = parse_decimal(resource.trim().strip_suffix(')')?.trim())?;
    let (body, post) = match body.split_once(" => ") {
        Some((b, p)) => (b, Some(p)),
        None => (body, None),
    };
    let (head, pre) = match body.split_once(" : ") {
        Some((h, p)) => (h.trim(), Some(p)),
        None => (body.trim(), None),
    };
    let (name, arity) = match head.split_once('(') {
        Some((n, a)) => (n, split_top(a.strip_suffix(')')?).len()),
        None => (head, 0),
    };
    let arg_index = |v: &str| -> Option<usize> {
        let k: usize = v.trim().strip_prefix('A')?.parse().ok()?;
        (1..=arity).contains(&k).then(|| k - 1)
    };
    let type_item = |item: &str| -> Option<(usize, RegularType)> {
        let (f, inner) = item.split_once('(')?;
        let parts = split_top(inner.strip_suffix(')')?);
        let k = arg_index(parts.first()?)?;
        let t = match (f, parts.len()) {
            ("num", 1) => RegularType::Num,
            ("atm", 1) => RegularType::Atm,
            ("list", 2) => RegularType::List(Box::new(parse_regtype(parts[1])?)),
            ("regtype", 2) => parse_regtype(parts[1])?,
            _ => return None,
        };
        Some((k, t))
    };
    let mut a = TrustAssertion {
        name: name.trim().to_string(),
        arity,
        pre: vec![],
        post: vec![],
        sizes: vec![],
        energy,
    };
    if let Some(pre) = pre {
        a.pre = vec![None; arity];
        let pre = pre.trim();
        if pre != "true" {
            for item in split_top(strip_parens(pre)) {
                let (k, t) = type_item(item)?;
                a.pre[k] = Some(t);
            }
        }
    }
    if let Some(post) = post {
        let mut types: Vec<Option<RegularType>> = vec![None; arity];
        for item in split_top(strip_parens(post)) {
            if let Some(inner) = item.strip_prefix("size(") {
                let parts = split_top(inner.strip_suffix(')')?);
                if parts.len() != 3 {
                    return None;
                }
                a.sizes.push(SizeRelation {
                    arg: arg_index(parts[0])?,
                    lower: SizeExpr::parse(parts[1])?,
                    upper: SizeExpr::parse(parts[2])?,
                });
            } else {
                let (k, t) = type_item(item)?;
                types[k] = Some(t);
            }
        }
        if types.iter().any(Option::is_some) {
            a.post = types.into_iter().collect::<Option<Vec<_>>>()?;
        }
    }
    Some(a)
}

fn parse_sig(text: &str) -> Option<PredSig> {
    let rest = text.strip_prefix("pred")?.trim_start();
    let (name, args) = match rest.split_once('(') {
        Some((n, a)) => (n.trim(), split_top(a.strip_suffix(')')?)),
        None => (rest.trim(), vec![]),
    };
    let mut modes = Vec::new();
    let mut types = Vec::new();
    for a in args {
        let (m, t) = if let Some(t) = a.strip_prefix('+') {
            (Mode::In, t)
        } else {
            (Mode::Out, a.strip_prefix('-')?)
        };
        modes.push(m);
        types.push(parse_regtype(t)?);
    }
    Some(PredSig {
        name: name.to_string(),
        modes,
        types,
        kind: PredKind::Block,
        function: None,
    })
}

/// Parses the text produced by [`print_hcir`]. Charges, origins and the
/// owning functions of predicates are not recovered; predicate kinds are
/// inferred from names and clause shapes.
pub fn parse_hcir(text: &str) -> Result<Program, HcParseError> {
    // directives are single lines; blank them out for the clause lexer
    let mut prog = Program::default();
    let mut clause_text = String::with_capacity(text.len());
    for (i, line) in text.lines().enumerate() {
        let Some(d) = line.trim_start().strip_prefix(":-") else {
            clause_text.push_str(line);
            clause_text.push('\n');
            continue;
        };
        clause_text.push('\n');
        let bad = |what: &str| HcParseError {
            line: i + 1,
            col: line.len() - line.trim_start().len() + 1,
            msg: format!("malformed {what} directive"),
        };
        let d = d.trim().strip_suffix('.').ok_or_else(|| bad("unterminated"))?.trim();
        if d == "resource energy" {
            continue;
        } else if d.starts_with("trust") {
            prog.assertions.push(parse_trust(d).ok_or_else(|| bad("trust"))?);
        } else if d.starts_with("pred") {
            prog.signatures.push(parse_sig(d).ok_or_else(|| bad("pred"))?);
        } else {
            return Err(bad("unknown"));
        }
    }
    let mut p = Parser { toks: lex(&clause_text)?, pos: 0 };
    while *p.peek() != Tok::Eof {
        prog.clauses.push(p.clause()?);
    }
    for s in &mut prog.signatures {
        let mut clauses = prog.clauses.iter().filter(|c| c.head == s.name).peekable();
        s.kind = if compare_pred_from_name(&s.name).is_some() {
            PredKind::Compare
        } else if clauses.peek().is_none() {
            PredKind::Abstract
        } else if clauses.all(|c| matches!(c.body.first(), Some(Literal::Guard { .. }))) {
            PredKind::Branch
        } else {
            PredKind::Block
        };
    }
    Ok(prog)
}
