//! Static error-point extraction: finds fallible call sites and checked
//! plain calls, classifies the exception-handling style of each check's
//! error branch, and resolves each point's entry path in the supergraph.

pub use crate::ir::{HandlerKind, ReturnKind};

use crate::cfg::{BlockId, Cfg, CfgError, PathSpec};
use crate::derive::SuperCfg;
use crate::ir::{Expr, Function, Instr, Operand, Program, Terminator};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, VecDeque};

/// How many following instructions may separate a plain call from the
/// comparison consuming its result for the call to count as checked.
pub const CHECK_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointSource {
    Fallible,
    CheckedCall,
}

/// One candidate or confirmed error point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub label: String,
    pub func: String,
    pub block: String,
    /// Instruction index within the block.
    pub instr: u32,
    pub callee: String,
    pub return_kind: ReturnKind,
    pub handler_kinds: BTreeSet<HandlerKind>,
    pub realistic: bool,
    pub source: PointSource,
}

/// Entry path of one error point in the derived supergraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorPointPath {
    pub label: String,
    pub path: PathSpec,
}

/// An error point resolved to its canonical supergraph block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocatedPoint {
    pub label: String,
    pub block: BlockId,
}

/// All candidate error points in program-text order: every fallible call,
/// plus plain calls whose result feeds a comparison within [`CHECK_WINDOW`]
/// instructions of the same block. `realistic` is set when a reachable check
/// consumes the result; overrides can adjust it afterwards.
pub fn extract_candidates(p: &Program) -> Vec<ErrorPoint> {
    let mut out = Vec::new();
    for f in &p.funcs {
        for (bi, b) in f.blocks.iter().enumerate() {
            for (ii, instr) in b.instrs.iter().enumerate() {
                match instr {
                    Instr::FallibleCall {
                        dst,
                        callee,
                        callee_idx,
                        label,
                    } => {
                        let kind = p.externs[*callee_idx as usize].kind;
                        let realistic = has_reachable_check(f, bi, ii, *dst);
                        out.push(ErrorPoint {
                            label: label.clone(),
                            func: f.name.clone(),
                            block: b.label.clone(),
                            instr: ii as u32,
                            callee: callee.clone(),
                            return_kind: kind,
                            handler_kinds: classify_handler_at(f, bi, ii, *dst, kind),
                            realistic,
                            source: PointSource::Fallible,
                        });
                    }
                    Instr::Call {
                        dst: Some(dst),
                        callee,
                        ..
                    } => {
                        let checked = b.instrs[ii + 1..]
                            .iter()
                            .take(CHECK_WINDOW)
                            .take_while(|i| !assigns(i, *dst))
                            .any(|i| compares(i, *dst));
                        if checked {
                            let kind = ReturnKind::Integer;
                            out.push(ErrorPoint {
                                label: format!("call.{}.{}.{ii}", f.name, b.label),
                                func: f.name.clone(),
                                block: b.label.clone(),
                                instr: ii as u32,
                                callee: callee.clone(),
                                return_kind: kind,
                                handler_kinds: classify_handler_at(f, bi, ii, *dst, kind),
                                realistic: true,
                                source: PointSource::CheckedCall,
                            });
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    out
}

fn assigns(instr: &Instr, reg: u16) -> bool {
    match instr {
        Instr::ReadInput { dst, .. }
        | Instr::Assign { dst, .. }
        | Instr::FallibleCall { dst, .. } => *dst == reg,
        Instr::Call { dst, .. } => *dst == Some(reg),
        _ => false,
    }
}

fn compares(instr: &Instr, reg: u16) -> bool {
    matches!(
        instr,
        Instr::Assign {
            expr: Expr::Bin { op, lhs, rhs },
            ..
        } if op.is_comparison()
            && (*lhs == Operand::Reg(reg) || *rhs == Operand::Reg(reg))
    )
}

/// True when some path from the point reaches a comparison consuming `reg`
/// before `reg` is reassigned.
fn has_reachable_check(f: &Function, block: usize, instr: usize, reg: u16) -> bool {
    find_check(f, block, instr, reg).is_some()
}

/// Locates the first comparison consuming `reg` reachable from the point:
/// returns (block, instr, dst of the comparison).
fn find_check(f: &Function, block: usize, instr: usize, reg: u16) -> Option<(usize, usize, u16)> {
    let scan = |bi: usize, from: usize| -> Result<Option<(usize, usize, u16)>, ()> {
        for (ii, i) in f.blocks[bi].instrs.iter().enumerate().skip(from) {
            if compares(i, reg) {
                if let Instr::Assign { dst, .. } = i {
                    return Ok(Some((bi, ii, *dst)));
                }
            }
            if assigns(i, reg) {
                return Err(()); // reassigned before any check on this path
            }
        }
        Ok(None)
    };
    match scan(block, instr + 1) {
        Ok(Some(hit)) => return Some(hit),
        Err(()) => return None,
        Ok(None) => {}
    }
    let mut seen = BTreeSet::from([block]);
    let mut queue: VecDeque<usize> = f.blocks[block]
        .term
        .targets()
        .into_iter()
        .map(|t| t as usize)
        .collect();
    while let Some(bi) = queue.pop_front() {
        if !seen.insert(bi) {
            continue;
        }
        match scan(bi, 0) {
            Ok(Some(hit)) => return Some(hit),
            Err(()) => continue,
            Ok(None) => {
                for t in f.blocks[bi].term.targets() {
                    queue.push_back(t as usize);
                }
            }
        }
    }
    None
}

/// Handler kinds appearing on the error branch of the check dominated by the
/// error point, within the handler region (error-branch blocks up to the
/// check block's postdominators). Empty when no check or no decodable error
/// branch exists.
pub fn classify_handler(p: &Program, ep: &ErrorPoint) -> BTreeSet<HandlerKind> {
    let Some((_, f)) = p.func_by_name(&ep.func) else {
        return BTreeSet::new();
    };
    let Some(bi) = f.block_index(&ep.block) else {
        return BTreeSet::new();
    };
    let dst = match &f.blocks[bi].instrs.get(ep.instr as usize) {
        Some(Instr::FallibleCall { dst, .. }) => *dst,
        Some(Instr::Call { dst: Some(d), .. }) => *d,
        _ => return BTreeSet::new(),
    };
    classify_handler_at(f, bi, ep.instr as usize, dst, ep.return_kind)
}

fn classify_handler_at(
    f: &Function,
    block: usize,
    instr: usize,
    dst: u16,
    kind: ReturnKind,
) -> BTreeSet<HandlerKind> {
    let mut kinds = BTreeSet::new();
    let Some((check_block, check_instr, check_dst)) = find_check(f, block, instr, dst) else {
        return kinds;
    };
    // The branch must be the check block's terminator conditioned directly
    // on the comparison result.
    let Terminator::Br {
        cond,
        then_target,
        else_target,
        ..
    } = &f.blocks[check_block].term
    else {
        return kinds;
    };
    if *cond != check_dst {
        return kinds;
    }
    // Decide which successor is the error branch by evaluating the
    // comparison with the result register set to the error value.
    let Some(Instr::Assign {
        expr: Expr::Bin { op, lhs, rhs },
        ..
    }) = f.blocks[check_block].instrs.get(check_instr)
    else {
        return kinds;
    };
    let err_val = kind.err_value();
    let value = |o: &Operand| -> Option<i64> {
        match o {
            Operand::Const(c) => Some(*c),
            Operand::Reg(r) if *r == dst => Some(err_val),
            Operand::Reg(_) => None,
        }
    };
    let (Some(l), Some(r)) = (value(lhs), value(rhs)) else {
        return kinds;
    };
    let err_is_then = op.apply(l, r) != 0;
    let err_succ = if err_is_then {
        *then_target as usize
    } else {
        *else_target as usize
    };

    // Region: reachable from the error successor without touching any strict
    // postdominator of the check block.
    let spd = strict_postdominators(f, check_block);
    if spd.contains(&err_succ) {
        return kinds; // error branch rejoins immediately, no handler code
    }
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([err_succ]);
    while let Some(bi) = queue.pop_front() {
        if spd.contains(&bi) || !seen.insert(bi) {
            continue;
        }
        let b = &f.blocks[bi];
        for i in &b.instrs {
            if let Instr::Handler { kind } = i {
                kinds.insert(*kind);
            }
        }
        match &b.term {
            Terminator::Ret(_) => {
                kinds.insert(HandlerKind::Return);
            }
            _ => {
                for t in b.term.targets() {
                    queue.push_back(t as usize);
                }
            }
        }
    }
    kinds
}

/// Strict postdominators of `block` over the function's block graph with a
/// virtual exit joined from every terminal block.
fn strict_postdominators(f: &Function, block: usize) -> BTreeSet<usize> {
    let n = f.blocks.len();
    let exit = n;
    let full: BTreeSet<usize> = (0..=n).collect();
    let mut pd: Vec<BTreeSet<usize>> = vec![full; n + 1];
    pd[exit] = BTreeSet::from([exit]);
    let succs = |i: usize| -> Vec<usize> {
        let t = f.blocks[i].term.targets();
        if t.is_empty() {
            vec![exit]
        } else {
            t.into_iter().map(|x| x as usize).collect()
        }
    };
    let mut changed = true;
    while changed {
        changed = false;
        for i in (0..n).rev() {
            let mut inter: Option<BTreeSet<usize>> = None;
            for s in succs(i) {
                inter = Some(match inter {
                    None => pd[s].clone(),
                    Some(acc) => acc.intersection(&pd[s]).copied().collect(),
                });
            }
            let mut next = inter.unwrap_or_default();
            next.insert(i);
            if next != pd[i] {
                pd[i] = next;
                changed = true;
            }
        }
    }
    let mut out = pd[block].clone();
    out.remove(&block);
    out.remove(&exit);
    out
}

/// Applies an allow/deny override file (`allow <label>` / `deny <label>`,
/// one per line) to the realistic flags.
pub fn apply_overrides(points: &mut [ErrorPoint], text: &str) -> Result<(), String> {
    let mut rules: HashMap<&str, bool> = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (verb, label) = line.split_once(char::is_whitespace).ok_or_else(|| {
            format!(
                "line {}: expected `allow <label>` or `deny <label>`",
                lineno + 1
            )
        })?;
        let value = match verb {
            "allow" => true,
            "deny" => false,
            other => return Err(format!("line {}: unknown verb `{other}`", lineno + 1)),
        };
        rules.insert(label.trim(), value);
    }
    for p in points.iter_mut() {
        if let Some(&v) = rules.get(p.label.as_str()) {
            p.realistic = v;
        }
    }
    Ok(())
}

/// Resolves points to canonical supergraph blocks. Points whose code never
/// materialized (statically unreachable) are skipped.
pub fn locate_points(sg: &SuperCfg, p: &Program, points: &[ErrorPoint]) -> Vec<LocatedPoint> {
    let entry_dist = sg
        .cfg
        .distances_from(sg.cfg.entry())
        .expect("entry is a member");
    let mut out = Vec::new();
    for ep in points {
        let block = match ep.source {
            PointSource::Fallible => sg.canonical_ep_block(&ep.label),
            PointSource::CheckedCall => {
                // The call instruction is its own segment; find its node
                // instances and pick the canonical one.
                p.func_by_name(&ep.func).and_then(|(fi, f)| {
                    let bi = f.block_index(&ep.block)? as u32;
                    let segs = &sg.segments[fi as usize][bi as usize];
                    let si = segs.iter().position(|s| s.call == Some(ep.instr))? as u32;
                    sg.nodes
                        .iter()
                        .enumerate()
                        .filter(|(_, n)| {
                            n.summary_of.is_none()
                                && n.func == fi
                                && n.block == bi
                                && n.seg == si
                        })
                        .map(|(i, _)| BlockId(i as u32))
                        .min_by_key(|b| (entry_dist[b.index()], *b))
                })
            }
        };
        if let Some(block) = block {
            out.push(LocatedPoint {
                label: ep.label.clone(),
                block,
            });
        }
    }
    out
}

/// One shortest entry path per located point, ties broken by the
/// lexicographically smallest block sequence. Unreachable points produce an
/// error entry; the rest are still returned.
pub fn error_point_paths(
    cfg: &Cfg,
    points: &[LocatedPoint],
) -> Vec<Result<ErrorPointPath, CfgError>> {
    points
        .iter()
        .map(|p| match cfg.canonical_entry_path(p.block) {
            Ok(Some(path)) => Ok(ErrorPointPath {
                label: p.label.clone(),
                path,
            }),
            Ok(None) => Err(CfgError::Unreachable(cfg.name(p.block).to_string())),
            Err(e) => Err(e),
        })
        .collect()
}
