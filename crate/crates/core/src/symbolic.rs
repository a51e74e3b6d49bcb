//! Symbolic input tracking over the VM and static path-constraint folding.
//!
//! `symbolic_trace` re-runs a program on a concrete input while shadowing
//! every register with its symbolic form over input bytes, recording for
//! each conditional edge taken the atom the input satisfied. Expressions
//! outside the linear fragment are concretized: the involved bytes are
//! pinned to their concrete values and the step is flagged.
//!
//! `path_constraints` is the static route the scheduler uses: it folds the
//! exact predicates the supergraph already carries along a path.

use crate::cfg::{BlockId, Cfg, EdgeKind, PathSpec};
use crate::constraint::{Atom, ByteConstraint, CmpOp, LinExpr};
use crate::derive::CallSite;
use crate::ir::{BinOp, Expr, Instr, Operand, Terminator};
use crate::vm::{ErrorSequence, InputBytes, MapState, Target};
use std::collections::BTreeSet;
use thiserror::Error;

/// One recorded conditional edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub from: BlockId,
    pub to: BlockId,
    pub constraint: ByteConstraint,
    /// The branch condition fell outside the linear fragment and the
    /// involved bytes were pinned to their concrete values instead.
    pub concretized: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathConstraintError {
    #[error("blocks {0:?} and {1:?} are not connected")]
    NotAnEdge(BlockId, BlockId),
    #[error("edge {0:?} -> {1:?} carries an opaque predicate")]
    OpaqueEdge(BlockId, BlockId),
}

/// Conjunction of the predicates along `path`. Unconditional edges add
/// nothing; an opaque edge makes the path unsolvable.
pub fn path_constraints(cfg: &Cfg, path: &PathSpec) -> Result<ByteConstraint, PathConstraintError> {
    let mut out = ByteConstraint::always_true();
    for w in path.blocks.windows(2) {
        let edge = cfg
            .edge_between(w[0], w[1])
            .ok_or(PathConstraintError::NotAnEdge(w[0], w[1]))?;
        match &edge.kind {
            EdgeKind::Unconditional => {}
            EdgeKind::Predicated(p) => out = out.and(&p.constraint),
            EdgeKind::Opaque => return Err(PathConstraintError::OpaqueEdge(w[0], w[1])),
        }
    }
    Ok(out)
}

/// Shadow value: affine form, comparison atom, or an opaque value tainted by
/// the given bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Shadow {
    Affine(LinExpr, i64),
    Pred(Atom),
    Opaque(BTreeSet<u16>),
}

impl Shadow {
    fn constant(c: i64) -> Shadow {
        Shadow::Affine(LinExpr::zero(), c)
    }

    fn bytes(&self) -> BTreeSet<u16> {
        match self {
            Shadow::Affine(e, _) => e.offsets().collect(),
            Shadow::Pred(a) => a.expr.offsets().collect(),
            Shadow::Opaque(b) => b.clone(),
        }
    }
}

fn shadow_bin(op: BinOp, lhs: &Shadow, rhs: &Shadow) -> Shadow {
    use Shadow::*;
    match (op, lhs, rhs) {
        (BinOp::Add, Affine(e1, c1), Affine(e2, c2)) => Affine(e1.add(e2), c1.wrapping_add(*c2)),
        (BinOp::Sub, Affine(e1, c1), Affine(e2, c2)) => Affine(e1.sub(e2), c1.wrapping_sub(*c2)),
        (BinOp::Mul, Affine(e1, c1), Affine(e2, c2)) => {
            if e2.is_constant_zero() && i32::try_from(*c2).is_ok() {
                Affine(e1.scale(*c2 as i32), c1.wrapping_mul(*c2))
            } else if e1.is_constant_zero() && i32::try_from(*c1).is_ok() {
                Affine(e2.scale(*c1 as i32), c2.wrapping_mul(*c1))
            } else {
                let mut b = lhs.bytes();
                b.extend(rhs.bytes());
                Opaque(b)
            }
        }
        (cmp, Affine(e1, c1), Affine(e2, c2)) if cmp.is_comparison() => {
            let op = match cmp {
                BinOp::Eq => CmpOp::Eq,
                BinOp::Ne => CmpOp::Ne,
                BinOp::Lt => CmpOp::Lt,
                BinOp::Le => CmpOp::Le,
                BinOp::Gt => CmpOp::Gt,
                BinOp::Ge => CmpOp::Ge,
                _ => unreachable!(),
            };
            Pred(Atom::new(e1.sub(e2), op, c2.wrapping_sub(*c1)))
        }
        _ => {
            let mut b = lhs.bytes();
            b.extend(rhs.bytes());
            Opaque(b)
        }
    }
}

struct SymFrame {
    func: u32,
    block: u32,
    instr: u32,
    regs: Vec<i64>,
    shadows: Vec<Shadow>,
    ret_dst: Option<u16>,
    map: MapState,
}

/// Executes the program on `input` with all fallible calls succeeding,
/// recording the constraint each conditional edge imposed on the input.
/// The conjunction of the returned constraints is satisfied by `input`.
pub fn symbolic_trace(target: &Target, input: &InputBytes, step_budget: u64) -> Vec<TraceStep> {
    let p = &target.program;
    let bytes = input.as_slice();
    let es = ErrorSequence::empty();
    let mut steps = Vec::new();
    let mut budget = step_budget;
    let mut enc = 0usize;

    let mut frames = vec![SymFrame {
        func: p.entry_func,
        block: 0,
        instr: 0,
        regs: vec![0; p.entry().reg_count as usize],
        shadows: vec![Shadow::constant(0); p.entry().reg_count as usize],
        ret_dst: None,
        map: MapState::Mapped(crate::derive::ROOT_CTX),
    }];

    // Records the conditional edge from the current terminator position to
    // the next block, with the atom the concrete input satisfied.
    let record = |steps: &mut Vec<TraceStep>,
                  target_ref: &Target,
                  frame: &SymFrame,
                  term_instr: u32,
                  next_block: u32,
                  shadow: &Shadow,
                  atoms: Option<ByteConstraint>| {
        let from = target_ref.position_node(frame.func, frame.block, term_instr, frame.map);
        let to = target_ref.position_node(frame.func, next_block, 0, frame.map);
        match atoms {
            Some(constraint) => {
                if !constraint.atoms.is_empty() {
                    debug_assert!(constraint.eval(bytes), "taken-edge atom must hold");
                    steps.push(TraceStep {
                        from,
                        to,
                        constraint,
                        concretized: false,
                    });
                }
            }
            None => {
                // Concretize: pin every involved byte.
                let pins: Vec<Atom> = shadow
                    .bytes()
                    .into_iter()
                    .map(|off| {
                        Atom::new(
                            LinExpr::byte(off),
                            CmpOp::Eq,
                            bytes.get(off as usize).copied().unwrap_or(0) as i64,
                        )
                    })
                    .collect();
                if !pins.is_empty() {
                    steps.push(TraceStep {
                        from,
                        to,
                        constraint: ByteConstraint { atoms: pins },
                        concretized: true,
                    });
                }
            }
        }
    };

    while budget > 0 {
        budget -= 1;
        let fidx = frames.last().unwrap().func as usize;
        let bidx = frames.last().unwrap().block as usize;
        let iidx = frames.last().unwrap().instr as usize;
        let block = &p.funcs[fidx].blocks[bidx];

        if iidx < block.instrs.len() {
            match &block.instrs[iidx] {
                Instr::ReadInput { dst, offset } => {
                    let frame = frames.last_mut().unwrap();
                    frame.regs[*dst as usize] =
                        bytes.get(*offset as usize).copied().unwrap_or(0) as i64;
                    frame.shadows[*dst as usize] = Shadow::Affine(LinExpr::byte(*offset), 0);
                    frame.instr += 1;
                }
                Instr::Assign { dst, expr } => {
                    let frame = frames.last_mut().unwrap();
                    let cval = |o: &Operand, regs: &[i64]| match o {
                        Operand::Const(c) => *c,
                        Operand::Reg(r) => regs[*r as usize],
                    };
                    let sval = |o: &Operand, shadows: &[Shadow]| match o {
                        Operand::Const(c) => Shadow::constant(*c),
                        Operand::Reg(r) => shadows[*r as usize].clone(),
                    };
                    let (v, s) = match expr {
                        Expr::Operand(o) => (cval(o, &frame.regs), sval(o, &frame.shadows)),
                        Expr::Bin { op, lhs, rhs } => (
                            op.apply(cval(lhs, &frame.regs), cval(rhs, &frame.regs)),
                            shadow_bin(*op, &sval(lhs, &frame.shadows), &sval(rhs, &frame.shadows)),
                        ),
                    };
                    frame.regs[*dst as usize] = v;
                    frame.shadows[*dst as usize] = s;
                    frame.instr += 1;
                }
                Instr::FallibleCall {
                    dst, callee_idx, ..
                } => {
                    let decl = &p.externs[*callee_idx as usize];
                    let injected = es.get(enc);
                    enc += 1;
                    let frame = frames.last_mut().unwrap();
                    let v = if injected {
                        decl.kind.err_value()
                    } else {
                        decl.ok_value
                    };
                    frame.regs[*dst as usize] = v;
                    // Not input-dependent: constant shadow.
                    frame.shadows[*dst as usize] = Shadow::constant(v);
                    frame.instr += 1;
                }
                Instr::Call {
                    dst, callee_idx, ..
                } => {
                    let site = CallSite {
                        func: fidx as u32,
                        block: bidx as u32,
                        instr: iidx as u32,
                    };
                    let parent = frames.last().unwrap();
                    let map = target.map_after_call(parent.map, site, *callee_idx);
                    let nregs = p.funcs[*callee_idx as usize].reg_count as usize;
                    frames.push(SymFrame {
                        func: *callee_idx,
                        block: 0,
                        instr: 0,
                        regs: vec![0; nregs],
                        shadows: vec![Shadow::constant(0); nregs],
                        ret_dst: *dst,
                        map,
                    });
                }
                Instr::Handler { kind } => {
                    if *kind == crate::ir::HandlerKind::Exit {
                        return steps;
                    }
                    frames.last_mut().unwrap().instr += 1;
                }
                Instr::CrashIf { cond, .. } => {
                    let frame = frames.last_mut().unwrap();
                    if frame.regs[*cond as usize] != 0 {
                        return steps;
                    }
                    frame.instr += 1;
                }
            }
            continue;
        }

        let term_pos = block.instrs.len() as u32;
        match &block.term {
            Terminator::Jmp { target: t, .. } => {
                let frame = frames.last_mut().unwrap();
                frame.block = *t;
                frame.instr = 0;
            }
            Terminator::Br {
                cond,
                then_target,
                else_target,
                ..
            } => {
                let frame = frames.last().unwrap();
                let taken_then = frame.regs[*cond as usize] != 0;
                let next = if taken_then { *then_target } else { *else_target };
                let shadow = frame.shadows[*cond as usize].clone();
                let atoms = match &shadow {
                    Shadow::Pred(a) => Some(ByteConstraint::from_atom(if taken_then {
                        a.clone()
                    } else {
                        a.negate()
                    })),
                    Shadow::Affine(e, c) => {
                        if e.is_constant_zero() {
                            Some(ByteConstraint::always_true()) // constant branch
                        } else {
                            let nz = Atom::new(e.clone(), CmpOp::Ne, c.wrapping_neg());
                            Some(ByteConstraint::from_atom(if taken_then {
                                nz
                            } else {
                                nz.negate()
                            }))
                        }
                    }
                    Shadow::Opaque(_) => None,
                };
                record(&mut steps, target, frame, term_pos, next, &shadow, atoms);
                let frame = frames.last_mut().unwrap();
                frame.block = next;
                frame.instr = 0;
            }
            Terminator::Switch {
                scrutinee,
                cases,
                default_target,
                ..
            } => {
                let frame = frames.last().unwrap();
                let v = frame.regs[*scrutinee as usize];
                let taken_case = cases.iter().find(|(cv, _, _)| *cv == v);
                let next = taken_case.map(|(_, _, t)| *t).unwrap_or(*default_target);
                let shadow = frame.shadows[*scrutinee as usize].clone();
                let atoms = match &shadow {
                    Shadow::Affine(e, c) if !e.is_constant_zero() => Some(match taken_case {
                        Some((cv, _, _)) => ByteConstraint::from_atom(Atom::new(
                            e.clone(),
                            CmpOp::Eq,
                            cv.wrapping_sub(*c),
                        )),
                        None => ByteConstraint {
                            atoms: cases
                                .iter()
                                .map(|(cv, _, _)| {
                                    Atom::new(e.clone(), CmpOp::Ne, cv.wrapping_sub(*c))
                                })
                                .collect(),
                        },
                    }),
                    Shadow::Affine(_, _) => Some(ByteConstraint::always_true()),
                    _ => None,
                };
                record(&mut steps, target, frame, term_pos, next, &shadow, atoms);
                let frame = frames.last_mut().unwrap();
                frame.block = next;
                frame.instr = 0;
            }
            Terminator::Ret(op) => {
                let frame = frames.last().unwrap();
                let (v, s) = match op {
                    Some(Operand::Const(c)) => (*c, Shadow::constant(*c)),
                    Some(Operand::Reg(r)) => (
                        frame.regs[*r as usize],
                        frame.shadows[*r as usize].clone(),
                    ),
                    None => (0, Shadow::constant(0)),
                };
                let done = frames.pop().unwrap();
                match frames.last_mut() {
                    None => return steps,
                    Some(caller) => {
                        if let Some(dst) = done.ret_dst {
                            caller.regs[dst as usize] = v;
                            caller.shadows[dst as usize] = s;
                        }
                        caller.instr += 1;
                    }
                }
            }
            Terminator::Halt | Terminator::Crash(_) => return steps,
        }
    }
    steps
}
