//! Linear byte constraints: conjunctions of `Σ coeff·b[i] ⋈ const` atoms over
//! program input bytes. This is the predicate language carried on CFG edges
//! and solved by the interval solver.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Highest input byte offset a constraint may reference (exclusive).
pub const MAX_INPUT_LEN: usize = 4096;

/// Comparison operator of a constraint atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// Linear expression over input bytes: a sorted, deduplicated list of
/// `(byte offset, coefficient)` terms with no zero coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(u16, i32)>,
}

impl LinExpr {
    pub fn zero() -> LinExpr {
        LinExpr { terms: Vec::new() }
    }

    pub fn byte(offset: u16) -> LinExpr {
        LinExpr {
            terms: vec![(offset, 1)],
        }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (u16, i32)>) -> LinExpr {
        let mut e = LinExpr {
            terms: terms.into_iter().collect(),
        };
        e.normalize();
        e
    }

    fn normalize(&mut self) {
        self.terms.sort_by_key(|&(off, _)| off);
        let mut out: Vec<(u16, i32)> = Vec::with_capacity(self.terms.len());
        for &(off, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == off => last.1 = last.1.saturating_add(c),
                _ => out.push((off, c)),
            }
        }
        out.retain(|&(_, c)| c != 0);
        self.terms = out;
    }

    pub fn add(&self, other: &LinExpr) -> LinExpr {
        LinExpr::from_terms(self.terms.iter().chain(other.terms.iter()).copied())
    }

    pub fn sub(&self, other: &LinExpr) -> LinExpr {
        LinExpr::from_terms(
            self.terms
                .iter()
                .copied()
                .chain(other.terms.iter().map(|&(o, c)| (o, c.saturating_neg()))),
        )
    }

    pub fn scale(&self, factor: i32) -> LinExpr {
        LinExpr::from_terms(
            self.terms
                .iter()
                .map(|&(o, c)| (o, c.saturating_mul(factor))),
        )
    }

    pub fn is_constant_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Evaluates against concrete input; bytes beyond the input read as 0.
    pub fn eval(&self, input: &[u8]) -> i64 {
        self.terms
            .iter()
            .map(|&(off, c)| c as i64 * input.get(off as usize).copied().unwrap_or(0) as i64)
            .sum()
    }

    pub fn offsets(&self) -> impl Iterator<Item = u16> + '_ {
        self.terms.iter().map(|&(off, _)| off)
    }
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, &(off, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if c == 1 {
                write!(f, "b{off}")?;
            } else {
                write!(f, "{c}*b{off}")?;
            }
        }
        Ok(())
    }
}

/// One comparison atom: `expr ⋈ rhs`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub expr: LinExpr,
    pub op: CmpOp,
    pub rhs: i64,
}

impl Atom {
    pub fn new(expr: LinExpr, op: CmpOp, rhs: i64) -> Atom {
        Atom { expr, op, rhs }
    }

    /// An atom with no byte terms, true or false by construction.
    pub fn constant(truth: bool) -> Atom {
        Atom {
            expr: LinExpr::zero(),
            op: if truth { CmpOp::Eq } else { CmpOp::Ne },
            rhs: 0,
        }
    }

    pub fn negate(&self) -> Atom {
        Atom {
            expr: self.expr.clone(),
            op: self.op.negate(),
            rhs: self.rhs,
        }
    }

    pub fn eval(&self, input: &[u8]) -> bool {
        self.op.holds(self.expr.eval(input), self.rhs)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.expr, self.op.symbol(), self.rhs)
    }
}

/// Conjunction of atoms. The empty conjunction is the always-true constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ByteConstraint {
    pub atoms: Vec<Atom>,
}

impl ByteConstraint {
    pub fn always_true() -> ByteConstraint {
        ByteConstraint { atoms: Vec::new() }
    }

    pub fn from_atom(atom: Atom) -> ByteConstraint {
        ByteConstraint { atoms: vec![atom] }
    }

    pub fn and(&self, other: &ByteConstraint) -> ByteConstraint {
        ByteConstraint {
            atoms: self
                .atoms
                .iter()
                .chain(other.atoms.iter())
                .cloned()
                .collect(),
        }
    }

    pub fn push(&mut self, atom: Atom) {
        self.atoms.push(atom);
    }

    pub fn eval(&self, input: &[u8]) -> bool {
        self.atoms.iter().all(|a| a.eval(input))
    }

    /// All byte offsets referenced by any atom, sorted and deduplicated.
    pub fn offsets(&self) -> Vec<u16> {
        let mut offs: Vec<u16> = self.atoms.iter().flat_map(|a| a.expr.offsets()).collect();
        offs.sort_unstable();
        offs.dedup();
        offs
    }

    /// Checks the module invariants: offsets below the input bound. Coefficient
    /// width is enforced by the i32 representation.
    pub fn validate(&self) -> Result<(), ConstraintError> {
        for atom in &self.atoms {
            for off in atom.expr.offsets() {
                if off as usize >= MAX_INPUT_LEN {
                    return Err(ConstraintError::OffsetOutOfRange(off));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for ByteConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return write!(f, "true");
        }
        for (i, atom) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, " && ")?;
            }
            write!(f, "{atom}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("byte offset b{0} exceeds the maximum input length")]
    OffsetOutOfRange(u16),
    #[error("constraint parse error: {0}")]
    Parse(String),
}

/// Parses the textual form produced by `Display`, e.g.
/// `b1 < 5 && 2*b0 + -1*b3 >= 7`. `true` parses to the empty conjunction.
pub fn parse_constraint(text: &str) -> Result<ByteConstraint, ConstraintError> {
    let text = text.trim();
    if text.is_empty() || text == "true" {
        return Ok(ByteConstraint::always_true());
    }
    let mut atoms = Vec::new();
    for part in text.split("&&") {
        atoms.push(parse_atom(part.trim())?);
    }
    Ok(ByteConstraint { atoms })
}

fn parse_atom(text: &str) -> Result<Atom, ConstraintError> {
    let err = |msg: &str| ConstraintError::Parse(format!("{msg} in `{text}`"));
    // Two-char operators first so `<` does not shadow `<=`.
    let ops = [
        ("==", CmpOp::Eq),
        ("!=", CmpOp::Ne),
        ("<=", CmpOp::Le),
        (">=", CmpOp::Ge),
        ("<", CmpOp::Lt),
        (">", CmpOp::Gt),
    ];
    let (lhs_text, op, rhs_text) = ops
        .iter()
        .find_map(|&(sym, op)| {
            text.split_once(sym)
                .filter(|(l, _)| !l.ends_with('!') && !l.ends_with('<') && !l.ends_with('>'))
                .map(|(l, r)| (l, op, r))
        })
        .ok_or_else(|| err("no comparison operator"))?;
    let rhs: i64 = rhs_text
        .trim()
        .parse()
        .map_err(|_| err("bad right-hand constant"))?;
    let mut terms = Vec::new();
    let lhs_text = lhs_text.trim();
    if lhs_text != "0" {
        for term in lhs_text.split('+') {
            let term = term.trim();
            let (coeff, byte) = match term.split_once('*') {
                Some((c, b)) => (
                    c.trim()
                        .parse::<i32>()
                        .map_err(|_| err("bad coefficient"))?,
                    b.trim(),
                ),
                None => (1, term),
            };
            let off = byte
                .strip_prefix('b')
                .and_then(|s| s.parse::<u16>().ok())
                .ok_or_else(|| err("bad byte reference"))?;
            terms.push((off, coeff));
        }
    }
    let atom = Atom::new(LinExpr::from_terms(terms), op, rhs);
    Ok(atom)
}
