//! Interval-propagation solver for conjunctions of linear byte constraints.
//!
//! Bounds propagation runs to a fixpoint over per-byte [lo, hi] domains;
//! an emptied domain proves UNSAT. Remaining freedom is closed by bounded
//! enumeration over the most-constrained bytes. Every SAT answer is
//! re-evaluated against the full conjunction before it is returned, so an
//! incomplete search can yield UNKNOWN but never a wrong model.

use crate::constraint::{Atom, ByteConstraint, CmpOp};

/// Default cap on candidate assignments tried during enumeration.
pub const DEFAULT_SOLVE_BUDGET: u64 = 100_000;
/// At most this many bytes are enumerated; the rest stay at their domain
/// minimum.
const MAX_ENUM_VARS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveResult {
    /// A model, materialized as input bytes (length = highest referenced
    /// offset + 1, unreferenced bytes zero).
    Sat(Vec<u8>),
    /// Interval propagation proved the conjunction empty.
    Unsat,
    /// Enumeration budget exhausted without a model.
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Domain {
    lo: i64,
    hi: i64,
}

impl Domain {
    fn full() -> Domain {
        Domain { lo: 0, hi: 255 }
    }

    fn is_empty(self) -> bool {
        self.lo > self.hi
    }

    fn size(self) -> i64 {
        (self.hi - self.lo + 1).max(0)
    }
}

/// Solves `c` over inputs of at most `max_len` bytes, trying at most
/// `budget` enumerated assignments.
pub fn solve(c: &ByteConstraint, max_len: usize, budget: u64) -> SolveResult {
    // Trivial constant atoms are decided up front; a false constant atom is
    // an immediate (and provable) UNSAT.
    for atom in &c.atoms {
        if atom.expr.is_constant_zero() && !atom.op.holds(0, atom.rhs) {
            return SolveResult::Unsat;
        }
    }
    let offsets = c.offsets();
    if offsets.iter().any(|&o| o as usize >= max_len) {
        return SolveResult::Unsat;
    }
    if offsets.is_empty() {
        return SolveResult::Sat(Vec::new());
    }

    let mut domains: Vec<Domain> = vec![Domain::full(); offsets.len()];
    let index_of = |off: u16| offsets.binary_search(&off).expect("offset indexed");

    // Bounds propagation to fixpoint. Domains only shrink, and Ne nibbling
    // is endpoint-only, so 600 passes comfortably covers the worst case of
    // one-value-at-a-time shrinking before enumeration takes over.
    for _ in 0..600 {
        let mut changed = false;
        for atom in &c.atoms {
            match propagate_atom(atom, &mut domains, index_of) {
                Propagation::Empty => return SolveResult::Unsat,
                Propagation::Changed => changed = true,
                Propagation::Stable => {}
            }
        }
        if !changed {
            break;
        }
    }

    // Forward-checked depth-first search over the most-constrained bytes
    // (smallest domains first); any byte beyond the search set sits at its
    // domain minimum. The budget counts candidate assignments.
    let mut order: Vec<usize> = (0..offsets.len()).collect();
    order.sort_by_key(|&i| (domains[i].size(), offsets[i]));
    let search_vars: Vec<usize> = order.iter().copied().take(MAX_ENUM_VARS).collect();
    let in_search: Vec<bool> = {
        let mut v = vec![false; offsets.len()];
        for &i in &search_vars {
            v[i] = true;
        }
        v
    };

    let mut assignment: Vec<Option<i64>> = domains
        .iter()
        .zip(in_search.iter())
        .map(|(d, &s)| if s { None } else { Some(d.lo) })
        .collect();
    let build = |assignment: &[Option<i64>]| -> Vec<u8> {
        let max_off = *offsets.last().unwrap() as usize;
        let mut input = vec![0u8; max_off + 1];
        for (i, &off) in offsets.iter().enumerate() {
            input[off as usize] = assignment[i].unwrap_or(domains[i].lo) as u8;
        }
        input
    };

    // An atom stays feasible while its value interval under the partial
    // assignment can still satisfy the comparison.
    let feasible = |atom: &Atom, assignment: &[Option<i64>]| -> bool {
        let mut lo = 0i64;
        let mut hi = 0i64;
        for &(off, coeff) in &atom.expr.terms {
            let vi = index_of(off);
            match assignment[vi] {
                Some(v) => {
                    lo += coeff as i64 * v;
                    hi += coeff as i64 * v;
                }
                None => {
                    let d = domains[vi];
                    let (a, b) = (coeff as i64 * d.lo, coeff as i64 * d.hi);
                    lo += a.min(b);
                    hi += a.max(b);
                }
            }
        }
        match atom.op {
            CmpOp::Eq => lo <= atom.rhs && atom.rhs <= hi,
            CmpOp::Ne => !(lo == hi && lo == atom.rhs),
            CmpOp::Lt => lo < atom.rhs,
            CmpOp::Le => lo <= atom.rhs,
            CmpOp::Gt => hi > atom.rhs,
            CmpOp::Ge => hi >= atom.rhs,
        }
    };

    struct Dfs<'a> {
        c: &'a ByteConstraint,
        domains: &'a [Domain],
        search_vars: &'a [usize],
        tried: u64,
        budget: u64,
    }
    enum Outcome {
        Found(Vec<Option<i64>>),
        Exhausted,
        OutOfBudget,
    }
    impl Dfs<'_> {
        fn go(
            &mut self,
            level: usize,
            assignment: &mut Vec<Option<i64>>,
            feasible: &dyn Fn(&Atom, &[Option<i64>]) -> bool,
        ) -> Outcome {
            if level == self.search_vars.len() {
                return Outcome::Found(assignment.clone());
            }
            let vi = self.search_vars[level];
            let d = self.domains[vi];
            for v in d.lo..=d.hi {
                if self.tried >= self.budget {
                    return Outcome::OutOfBudget;
                }
                self.tried += 1;
                assignment[vi] = Some(v);
                if self.c.atoms.iter().all(|a| feasible(a, assignment)) {
                    match self.go(level + 1, assignment, feasible) {
                        Outcome::Exhausted => {}
                        other => return other,
                    }
                }
            }
            assignment[vi] = None;
            Outcome::Exhausted
        }
    }

    let mut dfs = Dfs {
        c,
        domains: &domains,
        search_vars: &search_vars,
        tried: 0,
        budget,
    };
    match dfs.go(0, &mut assignment, &feasible) {
        Outcome::Found(assignment) => {
            let candidate = build(&assignment);
            if c.eval(&candidate) {
                SolveResult::Sat(candidate)
            } else {
                // Fixed non-search bytes can defeat the search; stay honest.
                SolveResult::Unknown
            }
        }
        // Exhaustion is a proof only over the searched projection; UNSAT
        // remains reserved for interval propagation.
        Outcome::Exhausted | Outcome::OutOfBudget => SolveResult::Unknown,
    }
}

enum Propagation {
    Stable,
    Changed,
    Empty,
}

fn propagate_atom(
    atom: &Atom,
    domains: &mut [Domain],
    index_of: impl Fn(u16) -> usize,
) -> Propagation {
    let terms = &atom.expr.terms;
    if terms.is_empty() {
        return Propagation::Stable;
    }

    // Eq splits into Le + Ge; Ne only trims matching endpoints of
    // single-variable unit atoms (intervals cannot represent holes).
    let mut changed = false;
    let bounds: Vec<(usize, i32)> = terms.iter().map(|&(o, c)| (index_of(o), c)).collect();

    let apply = |domains: &mut [Domain], op: CmpOp, rhs: i64, changed: &mut bool| -> bool {
        // For Σ c_i x_i ⋈ rhs, refine each variable against the extreme
        // contribution of the others.
        for &(vi, coeff) in &bounds {
            let mut rest_min: i64 = 0;
            let mut rest_max: i64 = 0;
            for &(vj, cj) in &bounds {
                if vj == vi {
                    continue;
                }
                let d = domains[vj];
                let (a, b) = (cj as i64 * d.lo, cj as i64 * d.hi);
                rest_min += a.min(b);
                rest_max += a.max(b);
            }
            let d = &mut domains[vi];
            let c = coeff as i64;
            match op {
                CmpOp::Le | CmpOp::Lt => {
                    let bound = if op == CmpOp::Lt { rhs - 1 } else { rhs };
                    // c*x <= bound - rest_min
                    let room = bound - rest_min;
                    if c > 0 {
                        let hi = room.div_euclid(c);
                        if hi < d.hi {
                            d.hi = hi;
                            *changed = true;
                        }
                    } else {
                        let lo = (-room).div_euclid(-c) + i64::from((-room).rem_euclid(-c) != 0);
                        if lo > d.lo {
                            d.lo = lo;
                            *changed = true;
                        }
                    }
                }
                CmpOp::Ge | CmpOp::Gt => {
                    let bound = if op == CmpOp::Gt { rhs + 1 } else { rhs };
                    // c*x >= bound - rest_max
                    let need = bound - rest_max;
                    if c > 0 {
                        let lo = need.div_euclid(c) + i64::from(need.rem_euclid(c) != 0);
                        if lo > d.lo {
                            d.lo = lo;
                            *changed = true;
                        }
                    } else {
                        let hi = (-need).div_euclid(-c);
                        if hi < d.hi {
                            d.hi = hi;
                            *changed = true;
                        }
                    }
                }
                CmpOp::Eq | CmpOp::Ne => unreachable!("handled by caller"),
            }
            if d.is_empty() {
                return false;
            }
        }
        true
    };

    let ok = match atom.op {
        CmpOp::Le | CmpOp::Lt | CmpOp::Ge | CmpOp::Gt => {
            apply(domains, atom.op, atom.rhs, &mut changed)
        }
        CmpOp::Eq => {
            apply(domains, CmpOp::Le, atom.rhs, &mut changed)
                && apply(domains, CmpOp::Ge, atom.rhs, &mut changed)
        }
        CmpOp::Ne => {
            if terms.len() == 1 && terms[0].1.abs() == 1 {
                let (off, c) = terms[0];
                let vi = index_of(off);
                let d = &mut domains[vi];
                // x != v with unit coefficient: v = rhs / c when exact.
                if atom.rhs % c as i64 == 0 {
                    let v = atom.rhs / c as i64;
                    if d.lo == d.hi && d.lo == v {
                        return Propagation::Empty;
                    }
                    if d.lo == v {
                        d.lo += 1;
                        changed = true;
                    }
                    if d.hi == v {
                        d.hi -= 1;
                        changed = true;
                    }
                    if d.is_empty() {
                        return Propagation::Empty;
                    }
                }
            }
            true
        }
    };
    if !ok {
        return Propagation::Empty;
    }
    if changed {
        Propagation::Changed
    } else {
        Propagation::Stable
    }
}
