//! The mini-IR: a line-based imperative language with fallible call sites.
//!
//! Grammar, one statement per line (`#` starts a comment):
//!
//! ```text
//! extern <name> ptr|int [ok <int>]
//! func <name>:
//! block <label>:
//!   <reg> = in <offset>                  read input byte
//!   <reg> = <operand>                    constant or copy
//!   <reg> = <operand> <op> <operand>     op ∈ + - * == != < <= > >=
//!   <reg> = call <callee>                call with result
//!   call <callee>                        call without result
//!   fcall <reg> = <callee> @<ep-label>   fallible call (error point)
//!   handler <kind>                       kind ∈ return break continue goto
//!                                        log exit close delete free
//!   crash <bug-label> if <reg>           conditional crash
//!   jmp <label>                          terminators
//!   br <reg> <then> <else>
//!   switch <reg> <val>:<label> ... default:<label>
//!   ret [<operand>]
//!   halt
//!   crash <bug-label>
//! ```
//!
//! `serialize` emits the canonical form; loading is bit-exact in the sense
//! that `serialize(load(serialize(load(t)))) == serialize(load(t))`.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;
use thiserror::Error;

pub const MAX_INPUT_OFFSET: u16 = 4095;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReturnKind {
    /// NULL-on-error style: the distinguished error value is 0.
    Pointer,
    /// errno style: the distinguished error value is -1.
    Integer,
}

impl ReturnKind {
    pub fn err_value(self) -> i64 {
        match self {
            ReturnKind::Pointer => 0,
            ReturnKind::Integer => -1,
        }
    }

    fn keyword(self) -> &'static str {
        match self {
            ReturnKind::Pointer => "ptr",
            ReturnKind::Integer => "int",
        }
    }
}

/// A fallible primitive a `fcall` may target. Externs have no body; the VM
/// models them as returning `ok_value` or the kind's error value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternDecl {
    pub name: String,
    pub kind: ReturnKind,
    pub ok_value: i64,
}

pub type Reg = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    Reg(Reg),
    Const(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }

    pub fn apply(self, lhs: i64, rhs: i64) -> i64 {
        match self {
            BinOp::Add => lhs.wrapping_add(rhs),
            BinOp::Sub => lhs.wrapping_sub(rhs),
            BinOp::Mul => lhs.wrapping_mul(rhs),
            BinOp::Eq => (lhs == rhs) as i64,
            BinOp::Ne => (lhs != rhs) as i64,
            BinOp::Lt => (lhs < rhs) as i64,
            BinOp::Le => (lhs <= rhs) as i64,
            BinOp::Gt => (lhs > rhs) as i64,
            BinOp::Ge => (lhs >= rhs) as i64,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
        }
    }
}

/// The nine exception-handling markers recognized by the extractor. The
/// control-flow kinds double as annotations; only `exit` has a runtime
/// effect (terminates with outcome EXIT).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum HandlerKind {
    Return,
    Break,
    Continue,
    Goto,
    Log,
    Exit,
    Close,
    Delete,
    Free,
}

impl HandlerKind {
    pub const ALL: [HandlerKind; 9] = [
        HandlerKind::Return,
        HandlerKind::Break,
        HandlerKind::Continue,
        HandlerKind::Goto,
        HandlerKind::Log,
        HandlerKind::Exit,
        HandlerKind::Close,
        HandlerKind::Delete,
        HandlerKind::Free,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            HandlerKind::Return => "return",
            HandlerKind::Break => "break",
            HandlerKind::Continue => "continue",
            HandlerKind::Goto => "goto",
            HandlerKind::Log => "log",
            HandlerKind::Exit => "exit",
            HandlerKind::Close => "close",
            HandlerKind::Delete => "delete",
            HandlerKind::Free => "free",
        }
    }

    fn from_keyword(kw: &str) -> Option<HandlerKind> {
        HandlerKind::ALL.iter().copied().find(|k| k.keyword() == kw)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Operand(Operand),
    Bin {
        op: BinOp,
        lhs: Operand,
        rhs: Operand,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instr {
    ReadInput {
        dst: Reg,
        offset: u16,
    },
    Assign {
        dst: Reg,
        expr: Expr,
    },
    /// Plain call into a defined IR function; inlined into the supergraph.
    Call {
        dst: Option<Reg>,
        callee: String,
        /// Resolved function index, filled during validation.
        callee_idx: u32,
    },
    /// Atomic fallible call into an extern; the error-point primitive.
    FallibleCall {
        dst: Reg,
        callee: String,
        /// Resolved extern index, filled during validation.
        callee_idx: u32,
        label: String,
    },
    Handler {
        kind: HandlerKind,
    },
    CrashIf {
        bug: String,
        cond: Reg,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminator {
    Jmp {
        label: String,
        target: u32,
    },
    Br {
        cond: Reg,
        then_label: String,
        then_target: u32,
        else_label: String,
        else_target: u32,
    },
    Switch {
        scrutinee: Reg,
        cases: Vec<(i64, String, u32)>,
        default_label: String,
        default_target: u32,
    },
    Ret(Option<Operand>),
    Halt,
    Crash(String),
}

impl Terminator {
    pub fn targets(&self) -> Vec<u32> {
        match self {
            Terminator::Jmp { target, .. } => vec![*target],
            Terminator::Br {
                then_target,
                else_target,
                ..
            } => vec![*then_target, *else_target],
            Terminator::Switch {
                cases,
                default_target,
                ..
            } => {
                let mut t: Vec<u32> = cases.iter().map(|&(_, _, tgt)| tgt).collect();
                t.push(*default_target);
                t
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrBlock {
    pub label: String,
    pub instrs: Vec<Instr>,
    pub term: Terminator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub blocks: Vec<IrBlock>,
    pub reg_count: u16,
}

impl Function {
    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub externs: Vec<ExternDecl>,
    pub funcs: Vec<Function>,
    /// Index of the entry function (`main`).
    pub entry_func: u32,
}

impl Program {
    pub fn func_by_name(&self, name: &str) -> Option<(u32, &Function)> {
        self.funcs
            .iter()
            .position(|f| f.name == name)
            .map(|i| (i as u32, &self.funcs[i]))
    }

    pub fn extern_by_name(&self, name: &str) -> Option<(u32, &ExternDecl)> {
        self.externs
            .iter()
            .position(|e| e.name == name)
            .map(|i| (i as u32, &self.externs[i]))
    }

    pub fn entry(&self) -> &Function {
        &self.funcs[self.entry_func as usize]
    }

    /// All fallible-call labels in program-text order.
    pub fn error_point_labels(&self) -> Vec<&str> {
        let mut labels = Vec::new();
        for f in &self.funcs {
            for b in &f.blocks {
                for i in &b.instrs {
                    if let Instr::FallibleCall { label, .. } = i {
                        labels.push(label.as_str());
                    }
                }
            }
        }
        labels
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error("line {line}, col {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("validation: {0}")]
    Validate(String),
}

fn perr(line: usize, col: usize, msg: impl Into<String>) -> ProgramError {
    ProgramError::Parse {
        line,
        col,
        msg: msg.into(),
    }
}

fn verr(msg: impl Into<String>) -> ProgramError {
    ProgramError::Validate(msg.into())
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn parse_reg(tok: &str, line: usize, col: usize) -> Result<Reg, ProgramError> {
    tok.strip_prefix('r')
        .and_then(|n| n.parse::<Reg>().ok())
        .ok_or_else(|| perr(line, col, format!("expected register (rN), got `{tok}`")))
}

fn parse_operand(tok: &str, line: usize, col: usize) -> Result<Operand, ProgramError> {
    if tok.starts_with('r') && tok[1..].chars().all(|c| c.is_ascii_digit()) && tok.len() > 1 {
        Ok(Operand::Reg(parse_reg(tok, line, col)?))
    } else {
        tok.parse::<i64>()
            .map(Operand::Const)
            .map_err(|_| perr(line, col, format!("expected register or integer, got `{tok}`")))
    }
}

fn parse_binop(tok: &str) -> Option<BinOp> {
    match tok {
        "+" => Some(BinOp::Add),
        "-" => Some(BinOp::Sub),
        "*" => Some(BinOp::Mul),
        "==" => Some(BinOp::Eq),
        "!=" => Some(BinOp::Ne),
        "<" => Some(BinOp::Lt),
        "<=" => Some(BinOp::Le),
        ">" => Some(BinOp::Gt),
        ">=" => Some(BinOp::Ge),
        _ => None,
    }
}

enum Stmt {
    Instr(Instr),
    Term(Terminator),
}

/// Parses one instruction or terminator line (already trimmed, non-empty).
fn parse_stmt(line_text: &str, line: usize) -> Result<Stmt, ProgramError> {
    let col = |tok: &str| line_text.find(tok).map(|i| i + 1).unwrap_or(1);
    let toks: Vec<&str> = line_text.split_whitespace().collect();
    match toks[0] {
        "jmp" => {
            if toks.len() != 2 || !is_ident(toks[1]) {
                return Err(perr(line, 1, "usage: jmp <label>"));
            }
            Ok(Stmt::Term(Terminator::Jmp {
                label: toks[1].to_string(),
                target: u32::MAX,
            }))
        }
        "br" => {
            if toks.len() != 4 {
                return Err(perr(line, 1, "usage: br <reg> <then> <else>"));
            }
            Ok(Stmt::Term(Terminator::Br {
                cond: parse_reg(toks[1], line, col(toks[1]))?,
                then_label: toks[2].to_string(),
                then_target: u32::MAX,
                else_label: toks[3].to_string(),
                else_target: u32::MAX,
            }))
        }
        "switch" => {
            if toks.len() < 3 {
                return Err(perr(line, 1, "usage: switch <reg> <val>:<label> ... default:<label>"));
            }
            let scrutinee = parse_reg(toks[1], line, col(toks[1]))?;
            let mut cases = Vec::new();
            let mut default = None;
            let mut seen_vals = HashSet::new();
            for tok in &toks[2..] {
                let (lhs, label) = tok
                    .split_once(':')
                    .ok_or_else(|| perr(line, col(tok), format!("malformed switch arm `{tok}`")))?;
                if lhs == "default" {
                    if default.replace(label.to_string()).is_some() {
                        return Err(perr(line, col(tok), "duplicate default arm"));
                    }
                } else {
                    let v: i64 = lhs
                        .parse()
                        .map_err(|_| perr(line, col(tok), format!("bad case value `{lhs}`")))?;
                    if !seen_vals.insert(v) {
                        return Err(perr(line, col(tok), format!("duplicate case value {v}")));
                    }
                    cases.push((v, label.to_string(), u32::MAX));
                }
            }
            let default_label =
                default.ok_or_else(|| perr(line, 1, "switch requires a default arm"))?;
            Ok(Stmt::Term(Terminator::Switch {
                scrutinee,
                cases,
                default_label,
                default_target: u32::MAX,
            }))
        }
        "ret" => match toks.len() {
            1 => Ok(Stmt::Term(Terminator::Ret(None))),
            2 => Ok(Stmt::Term(Terminator::Ret(Some(parse_operand(
                toks[1],
                line,
                col(toks[1]),
            )?)))),
            _ => Err(perr(line, 1, "usage: ret [<operand>]")),
        },
        "halt" => {
            if toks.len() != 1 {
                return Err(perr(line, 1, "halt takes no operands"));
            }
            Ok(Stmt::Term(Terminator::Halt))
        }
        "crash" => match toks.len() {
            2 if is_ident(toks[1]) => Ok(Stmt::Term(Terminator::Crash(toks[1].to_string()))),
            4 if toks[2] == "if" => Ok(Stmt::Instr(Instr::CrashIf {
                bug: toks[1].to_string(),
                cond: parse_reg(toks[3], line, col(toks[3]))?,
            })),
            _ => Err(perr(line, 1, "usage: crash <label> [if <reg>]")),
        },
        "handler" => {
            if toks.len() != 2 {
                return Err(perr(line, 1, "usage: handler <kind>"));
            }
            let kind = HandlerKind::from_keyword(toks[1])
                .ok_or_else(|| perr(line, col(toks[1]), format!("unknown handler kind `{}`", toks[1])))?;
            Ok(Stmt::Instr(Instr::Handler { kind }))
        }
        "call" => {
            if toks.len() != 2 || !is_ident(toks[1]) {
                return Err(perr(line, 1, "usage: call <callee>"));
            }
            Ok(Stmt::Instr(Instr::Call {
                dst: None,
                callee: toks[1].to_string(),
                callee_idx: u32::MAX,
            }))
        }
        "fcall" => {
            // fcall <dst> = <callee> @<ep-label>
            if toks.len() != 5 || toks[2] != "=" || !toks[4].starts_with('@') {
                return Err(perr(line, 1, "usage: fcall <dst> = <callee> @<ep-label>"));
            }
            let label = &toks[4][1..];
            if !is_ident(label) {
                return Err(perr(line, col(toks[4]), format!("bad error-point label `{label}`")));
            }
            Ok(Stmt::Instr(Instr::FallibleCall {
                dst: parse_reg(toks[1], line, col(toks[1]))?,
                callee: toks[3].to_string(),
                callee_idx: u32::MAX,
                label: label.to_string(),
            }))
        }
        _ if toks.len() >= 3 && toks[1] == "=" => {
            let dst = parse_reg(toks[0], line, 1)?;
            match (toks.len(), toks[2]) {
                (4, "in") => {
                    let offset: u16 = toks[3]
                        .parse()
                        .ok()
                        .filter(|&o| o <= MAX_INPUT_OFFSET)
                        .ok_or_else(|| {
                            perr(line, col(toks[3]), format!("bad input offset `{}`", toks[3]))
                        })?;
                    Ok(Stmt::Instr(Instr::ReadInput { dst, offset }))
                }
                (4, "call") => Ok(Stmt::Instr(Instr::Call {
                    dst: Some(dst),
                    callee: toks[3].to_string(),
                    callee_idx: u32::MAX,
                })),
                (3, _) => Ok(Stmt::Instr(Instr::Assign {
                    dst,
                    expr: Expr::Operand(parse_operand(toks[2], line, col(toks[2]))?),
                })),
                (5, _) => {
                    let op = parse_binop(toks[3])
                        .ok_or_else(|| perr(line, col(toks[3]), format!("unknown operator `{}`", toks[3])))?;
                    Ok(Stmt::Instr(Instr::Assign {
                        dst,
                        expr: Expr::Bin {
                            op,
                            lhs: parse_operand(toks[2], line, col(toks[2]))?,
                            rhs: parse_operand(toks[4], line, col(toks[4]))?,
                        },
                    }))
                }
                _ => Err(perr(line, 1, format!("malformed assignment `{line_text}`"))),
            }
        }
        other => Err(perr(line, 1, format!("unknown statement `{other}`"))),
    }
}

/// Parses and validates a program from its textual form.
pub fn load_program(text: &str) -> Result<Program, ProgramError> {
    struct RawBlock {
        label: String,
        line: usize,
        instrs: Vec<Instr>,
        term: Option<Terminator>,
    }
    struct RawFunc {
        name: String,
        blocks: Vec<RawBlock>,
    }

    let mut externs: Vec<ExternDecl> = Vec::new();
    let mut funcs: Vec<RawFunc> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let stmt = match raw.find('#') {
            Some(i) => raw[..i].trim(),
            None => raw.trim(),
        };
        if stmt.is_empty() {
            continue;
        }
        if let Some(rest) = stmt.strip_prefix("extern ") {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if toks.is_empty() || !is_ident(toks[0]) {
                return Err(perr(line, 1, "usage: extern <name> ptr|int [ok <int>]"));
            }
            let kind = match toks.get(1) {
                Some(&"ptr") | None => ReturnKind::Pointer,
                Some(&"int") => ReturnKind::Integer,
                Some(other) => return Err(perr(line, 1, format!("unknown return kind `{other}`"))),
            };
            let ok_value = match toks.get(2) {
                None => 1,
                Some(&"ok") => toks
                    .get(3)
                    .and_then(|v| v.parse::<i64>().ok())
                    .ok_or_else(|| perr(line, 1, "expected integer after `ok`"))?,
                Some(other) => return Err(perr(line, 1, format!("unexpected token `{other}`"))),
            };
            externs.push(ExternDecl {
                name: toks[0].to_string(),
                kind,
                ok_value,
            });
            continue;
        }
        if let Some(rest) = stmt.strip_prefix("func ") {
            let name = rest.trim_end_matches(':').trim();
            if !is_ident(name) || !rest.trim_end().ends_with(':') {
                return Err(perr(line, 1, "usage: func <name>:"));
            }
            funcs.push(RawFunc {
                name: name.to_string(),
                blocks: Vec::new(),
            });
            continue;
        }
        if let Some(rest) = stmt.strip_prefix("block ") {
            let label = rest.trim_end_matches(':').trim();
            if !is_ident(label) || !rest.trim_end().ends_with(':') {
                return Err(perr(line, 1, "usage: block <label>:"));
            }
            let func = funcs
                .last_mut()
                .ok_or_else(|| perr(line, 1, "block outside of a function"))?;
            if let Some(prev) = func.blocks.last() {
                if prev.term.is_none() && !ends_with_crash_if(&prev.instrs) {
                    return Err(verr(format!(
                        "block `{}` in `{}` has no terminator",
                        prev.label, func.name
                    )));
                }
            }
            func.blocks.push(RawBlock {
                label: label.to_string(),
                line,
                instrs: Vec::new(),
                term: None,
            });
            continue;
        }
        let func = funcs
            .last_mut()
            .ok_or_else(|| perr(line, 1, "statement outside of a function"))?;
        let block = func
            .blocks
            .last_mut()
            .ok_or_else(|| perr(line, 1, "statement outside of a block"))?;
        if block.term.is_some() {
            return Err(perr(line, 1, "statement after block terminator"));
        }
        match parse_stmt(stmt, line)? {
            Stmt::Instr(i) => block.instrs.push(i),
            Stmt::Term(t) => block.term = Some(t),
        }
    }

    // Assemble, desugaring a trailing conditional crash into crash-if + halt.
    let mut out_funcs: Vec<Function> = Vec::new();
    let mut func_names = HashSet::new();
    let extern_names: HashMap<&str, u32> = externs
        .iter()
        .enumerate()
        .map(|(i, e)| (e.name.as_str(), i as u32))
        .collect();
    if extern_names.len() != externs.len() {
        return Err(verr("duplicate extern declaration"));
    }
    for e in &externs {
        if e.ok_value == e.kind.err_value() {
            return Err(verr(format!(
                "extern `{}`: ok value {} equals the {} error value",
                e.name,
                e.ok_value,
                e.kind.keyword()
            )));
        }
    }

    for f in funcs {
        if !func_names.insert(f.name.clone()) {
            return Err(verr(format!("duplicate function `{}`", f.name)));
        }
        if f.blocks.is_empty() {
            return Err(verr(format!("function `{}` has no blocks", f.name)));
        }
        let mut labels = HashMap::new();
        for (i, b) in f.blocks.iter().enumerate() {
            if labels.insert(b.label.clone(), i as u32).is_some() {
                return Err(verr(format!(
                    "duplicate block label `{}` in `{}`",
                    b.label, f.name
                )));
            }
        }
        let mut blocks = Vec::new();
        for b in f.blocks {
            let term = match b.term {
                Some(t) => t,
                None if ends_with_crash_if(&b.instrs) => Terminator::Halt,
                None => {
                    return Err(verr(format!(
                        "block `{}` in `{}` (line {}) has no terminator",
                        b.label, f.name, b.line
                    )))
                }
            };
            blocks.push(IrBlock {
                label: b.label,
                instrs: b.instrs,
                term,
            });
        }
        out_funcs.push(Function {
            name: f.name,
            blocks,
            reg_count: 0,
        });
    }

    let func_indices: HashMap<String, u32> = out_funcs
        .iter()
        .enumerate()
        .map(|(i, f)| (f.name.clone(), i as u32))
        .collect();
    let entry_func = *func_indices
        .get("main")
        .ok_or_else(|| verr("no `main` function"))?;

    // Resolution + per-function checks.
    let mut ep_labels = HashSet::new();
    for f in &mut out_funcs {
        let labels: HashMap<String, u32> = f
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.label.clone(), i as u32))
            .collect();
        let mut max_reg: i32 = -1;
        let mut defined: HashSet<Reg> = HashSet::new();
        let mut read: Vec<Reg> = Vec::new();
        let track = |op: &Operand, read: &mut Vec<Reg>| {
            if let Operand::Reg(r) = op {
                read.push(*r);
            }
        };
        for b in &mut f.blocks {
            for instr in &mut b.instrs {
                match instr {
                    Instr::ReadInput { dst, .. } => {
                        defined.insert(*dst);
                        max_reg = max_reg.max(*dst as i32);
                    }
                    Instr::Assign { dst, expr } => {
                        match expr {
                            Expr::Operand(op) => track(op, &mut read),
                            Expr::Bin { lhs, rhs, .. } => {
                                track(lhs, &mut read);
                                track(rhs, &mut read);
                            }
                        }
                        defined.insert(*dst);
                        max_reg = max_reg.max(*dst as i32);
                    }
                    Instr::Call {
                        dst,
                        callee,
                        callee_idx,
                    } => {
                        let idx = func_indices.get(callee).copied().ok_or_else(|| {
                            verr(format!("call to undefined function `{callee}`"))
                        })?;
                        *callee_idx = idx;
                        if let Some(d) = dst {
                            defined.insert(*d);
                            max_reg = max_reg.max(*d as i32);
                        }
                    }
                    Instr::FallibleCall {
                        dst,
                        callee,
                        callee_idx,
                        label,
                    } => {
                        let idx = extern_names.get(callee.as_str()).copied().ok_or_else(|| {
                            verr(format!("fcall to undeclared extern `{callee}`"))
                        })?;
                        *callee_idx = idx;
                        if !ep_labels.insert(label.clone()) {
                            return Err(verr(format!("duplicate error-point label `{label}`")));
                        }
                        defined.insert(*dst);
                        max_reg = max_reg.max(*dst as i32);
                    }
                    Instr::Handler { .. } => {}
                    Instr::CrashIf { cond, .. } => read.push(*cond),
                }
            }
            let resolve = |label: &str, target: &mut u32| -> Result<(), ProgramError> {
                *target = labels.get(label).copied().ok_or_else(|| {
                    verr(format!(
                        "undefined branch target `{label}` in `{}`",
                        f.name
                    ))
                })?;
                Ok(())
            };
            match &mut b.term {
                Terminator::Jmp { label, target } => resolve(label, target)?,
                Terminator::Br {
                    cond,
                    then_label,
                    then_target,
                    else_label,
                    else_target,
                } => {
                    read.push(*cond);
                    resolve(then_label, then_target)?;
                    resolve(else_label, else_target)?;
                }
                Terminator::Switch {
                    scrutinee,
                    cases,
                    default_label,
                    default_target,
                } => {
                    read.push(*scrutinee);
                    for (_, label, target) in cases.iter_mut() {
                        *target = labels.get(label.as_str()).copied().ok_or_else(|| {
                            verr(format!("undefined branch target `{label}` in `{}`", f.name))
                        })?;
                    }
                    resolve(default_label, default_target)?;
                }
                Terminator::Ret(Some(op)) => track(op, &mut read),
                _ => {}
            }
        }
        for r in read {
            if !defined.contains(&r) {
                return Err(verr(format!(
                    "register r{r} read but never assigned in `{}`",
                    f.name
                )));
            }
            max_reg = max_reg.max(r as i32);
        }
        if max_reg >= u16::MAX as i32 {
            return Err(verr(format!(
                "register index r{max_reg} in `{}` exceeds the register file",
                f.name
            )));
        }
        f.reg_count = (max_reg + 1) as u16;
    }

    Ok(Program {
        externs,
        funcs: out_funcs,
        entry_func,
    })
}

fn ends_with_crash_if(instrs: &[Instr]) -> bool {
    matches!(instrs.last(), Some(Instr::CrashIf { .. }))
}

fn fmt_operand(op: &Operand) -> String {
    match op {
        Operand::Reg(r) => format!("r{r}"),
        Operand::Const(c) => c.to_string(),
    }
}

/// Emits the canonical textual form.
pub fn serialize(p: &Program) -> String {
    let mut out = String::new();
    for e in &p.externs {
        out.push_str(&format!(
            "extern {} {} ok {}\n",
            e.name,
            e.kind.keyword(),
            e.ok_value
        ));
    }
    for f in &p.funcs {
        out.push('\n');
        out.push_str(&format!("func {}:\n", f.name));
        for b in &f.blocks {
            out.push_str(&format!("block {}:\n", b.label));
            for i in &b.instrs {
                let text = match i {
                    Instr::ReadInput { dst, offset } => format!("r{dst} = in {offset}"),
                    Instr::Assign { dst, expr } => match expr {
                        Expr::Operand(op) => format!("r{dst} = {}", fmt_operand(op)),
                        Expr::Bin { op, lhs, rhs } => format!(
                            "r{dst} = {} {} {}",
                            fmt_operand(lhs),
                            op.symbol(),
                            fmt_operand(rhs)
                        ),
                    },
                    Instr::Call {
                        dst: Some(d),
                        callee,
                        ..
                    } => format!("r{d} = call {callee}"),
                    Instr::Call {
                        dst: None, callee, ..
                    } => format!("call {callee}"),
                    Instr::FallibleCall {
                        dst, callee, label, ..
                    } => format!("fcall r{dst} = {callee} @{label}"),
                    Instr::Handler { kind } => format!("handler {}", kind.keyword()),
                    Instr::CrashIf { bug, cond } => format!("crash {bug} if r{cond}"),
                };
                out.push_str(&format!("  {text}\n"));
            }
            let term = match &b.term {
                Terminator::Jmp { label, .. } => format!("jmp {label}"),
                Terminator::Br {
                    cond,
                    then_label,
                    else_label,
                    ..
                } => format!("br r{cond} {then_label} {else_label}"),
                Terminator::Switch {
                    scrutinee,
                    cases,
                    default_label,
                    ..
                } => {
                    let arms: Vec<String> = cases
                        .iter()
                        .map(|(v, l, _)| format!("{v}:{l}"))
                        .chain(std::iter::once(format!("default:{default_label}")))
                        .collect();
                    format!("switch r{scrutinee} {}", arms.join(" "))
                }
                Terminator::Ret(None) => "ret".to_string(),
                Terminator::Ret(Some(op)) => format!("ret {}", fmt_operand(op)),
                Terminator::Halt => "halt".to_string(),
                Terminator::Crash(label) => format!("crash {label}"),
            };
            out.push_str(&format!("  {term}\n"));
        }
    }
    out
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize(self))
    }
}
