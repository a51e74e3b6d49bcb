//! Context-inlined supergraph derivation.
//!
//! Each materialized node is one `(function, block, segment, context)`
//! quadruple. Blocks split only at plain call sites (pre-call run → call node
//! → continuation); fallible calls are atomic and stay inside runs. Call
//! chains are expanded up to `context_depth` nested call sites; deeper calls
//! collapse into one summary node per callee function. Conditional edges
//! carry exact byte predicates recovered by a per-function symbolic dataflow
//! over the linear fragment; branches that fall outside it become opaque
//! edges, which the concolic side refuses to solve rather than guess.

use crate::cfg::{BlockId, Cfg, Edge, EdgeKind, EdgePredicate};
use crate::constraint::{Atom, ByteConstraint, CmpOp, LinExpr};
use crate::ir::{BinOp, Expr, Function, Instr, Operand, Program, Terminator};
use std::collections::{BTreeMap, HashMap, VecDeque};
use thiserror::Error;

pub const DEFAULT_CONTEXT_DEPTH: u32 = 4;
pub const DEFAULT_BLOCK_BUDGET: usize = 100_000;

#[derive(Debug, Error)]
pub enum DeriveError {
    #[error("supergraph exceeds the block budget of {budget} nodes")]
    BlockBudget { budget: usize },
    #[error("graph construction failed: {0}")]
    Graph(#[from] crate::cfg::CfgError),
}

/// Root context id (empty call stack).
pub const ROOT_CTX: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CallSite {
    pub func: u32,
    pub block: u32,
    pub instr: u32,
}

#[derive(Debug, Clone)]
pub struct CtxEntry {
    pub parent: u32,
    pub site: CallSite,
    pub depth: u32,
}

/// Interned calling contexts for the materialized part of the graph.
#[derive(Debug, Default, Clone)]
pub struct ContextTable {
    /// Entry 0 is a sentinel for the root context.
    entries: Vec<Option<CtxEntry>>,
    lookup: HashMap<(u32, CallSite), u32>,
}

impl ContextTable {
    fn new() -> ContextTable {
        ContextTable {
            entries: vec![None],
            lookup: HashMap::new(),
        }
    }

    fn intern(&mut self, parent: u32, site: CallSite) -> u32 {
        if let Some(&id) = self.lookup.get(&(parent, site)) {
            return id;
        }
        let depth = self.depth(parent) + 1;
        let id = self.entries.len() as u32;
        self.entries.push(Some(CtxEntry {
            parent,
            site,
            depth,
        }));
        self.lookup.insert((parent, site), id);
        id
    }

    pub fn depth(&self, ctx: u32) -> u32 {
        self.entries[ctx as usize].as_ref().map_or(0, |e| e.depth)
    }

    pub fn transition(&self, ctx: u32, site: CallSite) -> Option<u32> {
        self.lookup.get(&(ctx, site)).copied()
    }

    /// Call-site chain from the root to `ctx`.
    pub fn sites(&self, ctx: u32) -> Vec<CallSite> {
        let mut chain = Vec::new();
        let mut cur = ctx;
        while let Some(e) = &self.entries[cur as usize] {
            chain.push(e.site);
            cur = e.parent;
        }
        chain.reverse();
        chain
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.len() <= 1
    }
}

/// One slice of an IR block after splitting at plain call sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    /// Instruction range within the block (end exclusive).
    pub start: u32,
    pub end: u32,
    /// Index of the plain-call instruction when this is a call node.
    pub call: Option<u32>,
    /// The block terminator executes at the end of this segment.
    pub has_term: bool,
}

/// Splits a block's instruction list into segments. The final segment always
/// carries the terminator and is never a call node.
pub fn split_segments(instrs: &[Instr]) -> Vec<Segment> {
    let mut segs = Vec::new();
    let mut run_start = 0u32;
    for (i, instr) in instrs.iter().enumerate() {
        if matches!(instr, Instr::Call { .. }) {
            if run_start < i as u32 {
                segs.push(Segment {
                    start: run_start,
                    end: i as u32,
                    call: None,
                    has_term: false,
                });
            }
            segs.push(Segment {
                start: i as u32,
                end: i as u32 + 1,
                call: Some(i as u32),
                has_term: false,
            });
            run_start = i as u32 + 1;
        }
    }
    segs.push(Segment {
        start: run_start,
        end: instrs.len() as u32,
        call: None,
        has_term: true,
    });
    segs
}

#[derive(Debug, Clone)]
pub struct NodeInfo {
    pub func: u32,
    pub block: u32,
    pub seg: u32,
    pub ctx: u32,
    /// Set on summary nodes: the collapsed callee function.
    pub summary_of: Option<u32>,
}

/// The derived supergraph plus everything the VM and the analyses need to
/// map between IR positions and graph nodes.
pub struct SuperCfg {
    pub cfg: Cfg,
    pub nodes: Vec<NodeInfo>,
    pub contexts: ContextTable,
    /// Materialized blocks per error-point label, ordered by BlockId.
    pub ep_blocks: BTreeMap<String, Vec<BlockId>>,
    /// (func, block, seg, ctx) → node.
    node_lookup: HashMap<(u32, u32, u32, u32), BlockId>,
    /// Summary node per collapsed function.
    pub summaries: BTreeMap<u32, BlockId>,
    /// Per function per block: segment table.
    pub segments: Vec<Vec<Vec<Segment>>>,
    pub context_depth: u32,
}

impl SuperCfg {
    pub fn node(&self, func: u32, block: u32, seg: u32, ctx: u32) -> Option<BlockId> {
        self.node_lookup.get(&(func, block, seg, ctx)).copied()
    }

    pub fn summary_node(&self, func: u32) -> Option<BlockId> {
        self.summaries.get(&func).copied()
    }

    /// Canonical block for an error point: the materialized instance nearest
    /// the entry (ties to the smallest id).
    pub fn canonical_ep_block(&self, label: &str) -> Option<BlockId> {
        let blocks = self.ep_blocks.get(label)?;
        let from_entry = self.cfg.distances_from(self.cfg.entry()).ok()?;
        blocks
            .iter()
            .copied()
            .min_by_key(|b| (from_entry[b.index()], *b))
    }
}

/// Static symbolic value of a register in the linear byte fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
enum SymVal {
    /// expr + const
    Affine(LinExpr, i64),
    /// 0/1 truth of a comparison atom
    Pred(Atom),
    Unknown,
}

impl SymVal {
    fn constant(c: i64) -> SymVal {
        SymVal::Affine(LinExpr::zero(), c)
    }

    fn meet(&self, other: &SymVal) -> SymVal {
        if self == other {
            self.clone()
        } else {
            SymVal::Unknown
        }
    }
}

/// Predicate computed for one static conditional edge.
#[derive(Debug, Clone, PartialEq)]
enum StaticPred {
    Exact(ByteConstraint),
    Opaque,
}

type RegState = Vec<SymVal>;

/// Per-function dataflow result: predicates for every conditional static
/// edge, keyed by (block, successor slot).
struct FuncFlow {
    branch_preds: HashMap<(u32, u32), StaticPred>,
    ret_summary: SymVal,
}

fn eval_operand(state: &RegState, op: &Operand) -> SymVal {
    match op {
        Operand::Const(c) => SymVal::constant(*c),
        Operand::Reg(r) => state[*r as usize].clone(),
    }
}

fn eval_bin(op: BinOp, lhs: &SymVal, rhs: &SymVal) -> SymVal {
    use SymVal::*;
    match (op, lhs, rhs) {
        (BinOp::Add, Affine(e1, c1), Affine(e2, c2)) => {
            Affine(e1.add(e2), c1.wrapping_add(*c2))
        }
        (BinOp::Sub, Affine(e1, c1), Affine(e2, c2)) => {
            Affine(e1.sub(e2), c1.wrapping_sub(*c2))
        }
        (BinOp::Mul, Affine(e1, c1), Affine(e2, c2)) => {
            if e2.is_constant_zero() && i32::try_from(*c2).is_ok() {
                Affine(e1.scale(*c2 as i32), c1.wrapping_mul(*c2))
            } else if e1.is_constant_zero() && i32::try_from(*c1).is_ok() {
                Affine(e2.scale(*c1 as i32), c2.wrapping_mul(*c1))
            } else {
                Unknown
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
                BinOp::Add | BinOp::Sub | BinOp::Mul => unreachable!("guarded by is_comparison"),
            };
            // e1 + c1 ⋈ e2 + c2  ⟺  (e1 - e2) ⋈ c2 - c1
            Pred(Atom::new(e1.sub(e2), op, c2.wrapping_sub(*c1)))
        }
        _ => Unknown,
    }
}

/// Truthiness atoms for branching on a register value.
fn truth_atoms(v: &SymVal) -> Option<(Atom, Atom)> {
    match v {
        SymVal::Pred(a) => Some((a.clone(), a.negate())),
        SymVal::Affine(e, c) => {
            // value ≠ 0 ⟺ e ≠ -c
            let nz = Atom::new(e.clone(), CmpOp::Ne, c.wrapping_neg());
            Some((nz.clone(), nz.negate()))
        }
        SymVal::Unknown => None,
    }
}

/// Runs the symbolic dataflow for one function given callee return summaries.
fn flow_function(f: &Function, ret_summaries: &[SymVal]) -> FuncFlow {
    let nregs = f.reg_count as usize;
    // Entry state per block: registers start at 0 in the entry block and are
    // joined across predecessors elsewhere.
    let mut entry_state: Vec<Option<RegState>> = vec![None; f.blocks.len()];
    entry_state[0] = Some(vec![SymVal::constant(0); nregs]);
    let mut branch_preds: HashMap<(u32, u32), StaticPred> = HashMap::new();
    let mut work: VecDeque<u32> = VecDeque::from([0u32]);
    let mut ret_summary: Option<SymVal> = None;

    while let Some(bi) = work.pop_front() {
        let block = &f.blocks[bi as usize];
        let mut state = entry_state[bi as usize].clone().expect("queued with state");
        for instr in &block.instrs {
            match instr {
                Instr::ReadInput { dst, offset } => {
                    state[*dst as usize] = SymVal::Affine(LinExpr::byte(*offset), 0);
                }
                Instr::Assign { dst, expr } => {
                    state[*dst as usize] = match expr {
                        Expr::Operand(op) => eval_operand(&state, op),
                        Expr::Bin { op, lhs, rhs } => {
                            eval_bin(*op, &eval_operand(&state, lhs), &eval_operand(&state, rhs))
                        }
                    };
                }
                Instr::Call { dst, callee_idx, .. } => {
                    if let Some(d) = dst {
                        state[*d as usize] = ret_summaries[*callee_idx as usize].clone();
                    }
                }
                Instr::FallibleCall { dst, .. } => {
                    state[*dst as usize] = SymVal::Unknown;
                }
                Instr::Handler { .. } | Instr::CrashIf { .. } => {}
            }
        }

        let propagate = |target: u32,
                             state: &RegState,
                             entry_state: &mut Vec<Option<RegState>>,
                             work: &mut VecDeque<u32>| {
            let slot = &mut entry_state[target as usize];
            match slot {
                None => {
                    *slot = Some(state.clone());
                    work.push_back(target);
                }
                Some(existing) => {
                    let mut changed = false;
                    for (e, n) in existing.iter_mut().zip(state.iter()) {
                        let met = e.meet(n);
                        if met != *e {
                            *e = met;
                            changed = true;
                        }
                    }
                    if changed {
                        work.push_back(target);
                    }
                }
            }
        };

        match &block.term {
            Terminator::Jmp { target, .. } => {
                propagate(*target, &state, &mut entry_state, &mut work);
            }
            Terminator::Br {
                cond,
                then_target,
                else_target,
                ..
            } => {
                let preds = truth_atoms(&state[*cond as usize]);
                let (then_p, else_p) = match preds {
                    Some((t, e)) => (
                        StaticPred::Exact(ByteConstraint::from_atom(t)),
                        StaticPred::Exact(ByteConstraint::from_atom(e)),
                    ),
                    None => (StaticPred::Opaque, StaticPred::Opaque),
                };
                merge_pred(&mut branch_preds, (bi, 0), then_p);
                merge_pred(&mut branch_preds, (bi, 1), else_p);
                propagate(*then_target, &state, &mut entry_state, &mut work);
                propagate(*else_target, &state, &mut entry_state, &mut work);
            }
            Terminator::Switch {
                scrutinee,
                cases,
                default_target,
                ..
            } => {
                let scrut = state[*scrutinee as usize].clone();
                for (slot, (v, _, target)) in cases.iter().enumerate() {
                    let p = match &scrut {
                        SymVal::Affine(e, c) => StaticPred::Exact(ByteConstraint::from_atom(
                            Atom::new(e.clone(), CmpOp::Eq, v.wrapping_sub(*c)),
                        )),
                        _ => StaticPred::Opaque,
                    };
                    merge_pred(&mut branch_preds, (bi, slot as u32), p);
                    propagate(*target, &state, &mut entry_state, &mut work);
                }
                let p = match &scrut {
                    SymVal::Affine(e, c) => {
                        let mut cons = ByteConstraint::always_true();
                        for (v, _, _) in cases {
                            cons.push(Atom::new(e.clone(), CmpOp::Ne, v.wrapping_sub(*c)));
                        }
                        StaticPred::Exact(cons)
                    }
                    _ => StaticPred::Opaque,
                };
                merge_pred(&mut branch_preds, (bi, cases.len() as u32), p);
                propagate(*default_target, &state, &mut entry_state, &mut work);
            }
            Terminator::Ret(op) => {
                let v = match op {
                    Some(op) => eval_operand(&state, op),
                    None => SymVal::constant(0),
                };
                ret_summary = Some(match ret_summary.take() {
                    None => v,
                    Some(prev) => prev.meet(&v),
                });
            }
            Terminator::Halt | Terminator::Crash(_) => {}
        }
    }

    FuncFlow {
        branch_preds,
        ret_summary: ret_summary.unwrap_or(SymVal::Unknown),
    }
}

fn merge_pred(map: &mut HashMap<(u32, u32), StaticPred>, key: (u32, u32), p: StaticPred) {
    match map.entry(key) {
        std::collections::hash_map::Entry::Vacant(v) => {
            v.insert(p);
        }
        std::collections::hash_map::Entry::Occupied(mut o) => {
            if *o.get() != p {
                o.insert(StaticPred::Opaque);
            }
        }
    }
}

/// Whole-program dataflow: callee-first over the plain-call graph, functions
/// on call cycles keep Unknown return summaries.
fn flow_program(p: &Program) -> Vec<FuncFlow> {
    let n = p.funcs.len();
    let mut callees: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (fi, f) in p.funcs.iter().enumerate() {
        for b in &f.blocks {
            for i in &b.instrs {
                if let Instr::Call { callee_idx, .. } = i {
                    callees[fi].push(*callee_idx);
                }
            }
        }
    }
    // Kahn topological order, callees first.
    let mut indeg = vec![0usize; n];
    let mut callers: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (fi, cs) in callees.iter().enumerate() {
        for &c in cs {
            callers[c as usize].push(fi as u32);
            indeg[fi] += 1;
        }
    }
    let mut order: Vec<u32> = Vec::new();
    let mut queue: VecDeque<u32> = (0..n as u32).filter(|&i| indeg[i as usize] == 0).collect();
    while let Some(f) = queue.pop_front() {
        order.push(f);
        for &caller in &callers[f as usize] {
            indeg[caller as usize] -= 1;
            if indeg[caller as usize] == 0 {
                queue.push_back(caller);
            }
        }
    }
    let mut summaries = vec![SymVal::Unknown; n];
    let mut flows: Vec<Option<FuncFlow>> = (0..n).map(|_| None).collect();
    for &fi in &order {
        let flow = flow_function(&p.funcs[fi as usize], &summaries);
        summaries[fi as usize] = flow.ret_summary.clone();
        flows[fi as usize] = Some(flow);
    }
    // Functions on call cycles (not in topo order) still need their edge
    // predicates; their summaries stay Unknown.
    (0..n)
        .map(|fi| {
            flows[fi]
                .take()
                .unwrap_or_else(|| flow_function(&p.funcs[fi], &summaries))
        })
        .collect()
}

/// Derives the context-inlined supergraph for a validated program.
pub fn derive_cfg(
    p: &Program,
    context_depth: u32,
    block_budget: usize,
) -> Result<SuperCfg, DeriveError> {
    let flows = flow_program(p);
    let segments: Vec<Vec<Vec<Segment>>> = p
        .funcs
        .iter()
        .map(|f| f.blocks.iter().map(|b| split_segments(&b.instrs)).collect())
        .collect();

    // Assign constraint ids c1.. to static predicated edges in text order.
    let mut edge_ids: HashMap<(u32, u32, u32), String> = HashMap::new();
    let mut next_id = 1u32;
    for (fi, f) in p.funcs.iter().enumerate() {
        for (bi, _b) in f.blocks.iter().enumerate() {
            let nslots = match &f.blocks[bi].term {
                Terminator::Br { .. } => 2,
                Terminator::Switch { cases, .. } => cases.len() + 1,
                _ => 0,
            };
            for slot in 0..nslots as u32 {
                if let Some(StaticPred::Exact(_)) = flows[fi].branch_preds.get(&(bi as u32, slot))
                {
                    edge_ids.insert((fi as u32, bi as u32, slot), format!("c{next_id}"));
                    next_id += 1;
                }
            }
        }
    }

    let mut contexts = ContextTable::new();
    let mut nodes: Vec<NodeInfo> = Vec::new();
    let mut node_lookup: HashMap<(u32, u32, u32, u32), BlockId> = HashMap::new();
    let mut summaries: BTreeMap<u32, BlockId> = BTreeMap::new();
    let mut edges: Vec<(BlockId, BlockId, EdgeKind)> = Vec::new();
    let mut edge_seen: HashMap<(BlockId, BlockId), ()> = HashMap::new();
    // Return target node per context (unique per non-root context).
    let mut ret_target: HashMap<u32, (u32, u32, u32, u32)> = HashMap::new();
    let mut ep_blocks: BTreeMap<String, Vec<BlockId>> = BTreeMap::new();

    let mut queue: VecDeque<BlockId> = VecDeque::new();
    let touch = |key: (u32, u32, u32, u32),
                     nodes: &mut Vec<NodeInfo>,
                     node_lookup: &mut HashMap<(u32, u32, u32, u32), BlockId>,
                     queue: &mut VecDeque<BlockId>|
     -> Result<BlockId, DeriveError> {
        if let Some(&id) = node_lookup.get(&key) {
            return Ok(id);
        }
        let id = BlockId(nodes.len() as u32);
        if nodes.len() >= block_budget {
            return Err(DeriveError::BlockBudget {
                budget: block_budget,
            });
        }
        nodes.push(NodeInfo {
            func: key.0,
            block: key.1,
            seg: key.2,
            ctx: key.3,
            summary_of: None,
        });
        node_lookup.insert(key, id);
        queue.push_back(id);
        Ok(id)
    };

    let entry_key = (p.entry_func, 0u32, 0u32, ROOT_CTX);
    let entry_id = touch(entry_key, &mut nodes, &mut node_lookup, &mut queue)?;
    debug_assert_eq!(entry_id, BlockId(0));

    while let Some(node_id) = queue.pop_front() {
        let info = nodes[node_id.index()].clone();
        if info.summary_of.is_some() {
            continue;
        }
        let (fi, bi, si, ctx) = (info.func, info.block, info.seg, info.ctx);
        let f = &p.funcs[fi as usize];
        let block = &f.blocks[bi as usize];
        let seg = segments[fi as usize][bi as usize][si as usize];

        // Index error points contained in this segment.
        for idx in seg.start..seg.end {
            if let Instr::FallibleCall { label, .. } = &block.instrs[idx as usize] {
                let list = ep_blocks.entry(label.clone()).or_default();
                if !list.contains(&node_id) {
                    list.push(node_id);
                }
            }
        }

        let add_edge = |from: BlockId,
                            to: BlockId,
                            kind: EdgeKind,
                            edges: &mut Vec<(BlockId, BlockId, EdgeKind)>,
                            edge_seen: &mut HashMap<(BlockId, BlockId), ()>| {
            if edge_seen.insert((from, to), ()).is_none() {
                edges.push((from, to, kind));
            }
        };

        if let Some(call_idx) = seg.call {
            let Instr::Call { callee_idx, .. } = &block.instrs[call_idx as usize] else {
                unreachable!("call segment without call instruction");
            };
            let callee = *callee_idx;
            let cont_key = (fi, bi, si + 1, ctx);
            let site = CallSite {
                func: fi,
                block: bi,
                instr: call_idx,
            };
            if contexts.depth(ctx) < context_depth {
                let child = contexts.intern(ctx, site);
                ret_target.entry(child).or_insert(cont_key);
                let callee_entry =
                    touch((callee, 0, 0, child), &mut nodes, &mut node_lookup, &mut queue)?;
                add_edge(
                    node_id,
                    callee_entry,
                    EdgeKind::Unconditional,
                    &mut edges,
                    &mut edge_seen,
                );
            } else {
                // Deep call: route through the callee's summary node.
                let sum_id = match summaries.get(&callee) {
                    Some(&id) => id,
                    None => {
                        if nodes.len() >= block_budget {
                            return Err(DeriveError::BlockBudget {
                                budget: block_budget,
                            });
                        }
                        let id = BlockId(nodes.len() as u32);
                        nodes.push(NodeInfo {
                            func: callee,
                            block: 0,
                            seg: 0,
                            ctx: ROOT_CTX,
                            summary_of: Some(callee),
                        });
                        summaries.insert(callee, id);
                        // Deep regions can loop arbitrarily inside the
                        // summary, so the node carries a self-edge.
                        edges.push((id, id, EdgeKind::Unconditional));
                        edge_seen.insert((id, id), ());
                        id
                    }
                };
                add_edge(
                    node_id,
                    sum_id,
                    EdgeKind::Unconditional,
                    &mut edges,
                    &mut edge_seen,
                );
                let cont =
                    touch(cont_key, &mut nodes, &mut node_lookup, &mut queue)?;
                add_edge(
                    sum_id,
                    cont,
                    EdgeKind::Unconditional,
                    &mut edges,
                    &mut edge_seen,
                );
            }
            continue;
        }

        if !seg.has_term {
            // Run followed by a call segment.
            let next = touch((fi, bi, si + 1, ctx), &mut nodes, &mut node_lookup, &mut queue)?;
            add_edge(
                node_id,
                next,
                EdgeKind::Unconditional,
                &mut edges,
                &mut edge_seen,
            );
            continue;
        }

        let conditional_edge = |slot: u32,
                                    target_block: u32,
                                    nodes: &mut Vec<NodeInfo>,
                                    node_lookup: &mut HashMap<(u32, u32, u32, u32), BlockId>,
                                    queue: &mut VecDeque<BlockId>,
                                    edges: &mut Vec<(BlockId, BlockId, EdgeKind)>,
                                    edge_seen: &mut HashMap<(BlockId, BlockId), ()>|
         -> Result<(), DeriveError> {
            let target = touch((fi, target_block, 0, ctx), nodes, node_lookup, queue)?;
            let kind = match flows[fi as usize].branch_preds.get(&(bi, slot)) {
                Some(StaticPred::Exact(c)) => EdgeKind::Predicated(EdgePredicate {
                    id: edge_ids[&(fi, bi, slot)].clone(),
                    constraint: c.clone(),
                }),
                _ => EdgeKind::Opaque,
            };
            if edge_seen.insert((node_id, target), ()).is_none() {
                edges.push((node_id, target, kind));
            }
            Ok(())
        };

        match &block.term {
            Terminator::Jmp { target, .. } => {
                let t = touch((fi, *target, 0, ctx), &mut nodes, &mut node_lookup, &mut queue)?;
                add_edge(
                    node_id,
                    t,
                    EdgeKind::Unconditional,
                    &mut edges,
                    &mut edge_seen,
                );
            }
            Terminator::Br {
                then_target,
                else_target,
                ..
            } => {
                conditional_edge(
                    0,
                    *then_target,
                    &mut nodes,
                    &mut node_lookup,
                    &mut queue,
                    &mut edges,
                    &mut edge_seen,
                )?;
                conditional_edge(
                    1,
                    *else_target,
                    &mut nodes,
                    &mut node_lookup,
                    &mut queue,
                    &mut edges,
                    &mut edge_seen,
                )?;
            }
            Terminator::Switch {
                cases,
                default_target,
                ..
            } => {
                for (slot, (_, _, target)) in cases.iter().enumerate() {
                    conditional_edge(
                        slot as u32,
                        *target,
                        &mut nodes,
                        &mut node_lookup,
                        &mut queue,
                        &mut edges,
                        &mut edge_seen,
                    )?;
                }
                conditional_edge(
                    cases.len() as u32,
                    *default_target,
                    &mut nodes,
                    &mut node_lookup,
                    &mut queue,
                    &mut edges,
                    &mut edge_seen,
                )?;
            }
            Terminator::Ret(_) => {
                if let Some(&target_key) = ret_target.get(&ctx) {
                    let t = touch(target_key, &mut nodes, &mut node_lookup, &mut queue)?;
                    add_edge(
                        node_id,
                        t,
                        EdgeKind::Unconditional,
                        &mut edges,
                        &mut edge_seen,
                    );
                }
            }
            Terminator::Halt | Terminator::Crash(_) => {}
        }
    }

    // Display names: bare block labels, qualified only as needed.
    let names = assign_names(p, &nodes, &segments);
    let cfg_edges: Vec<Edge> = edges
        .into_iter()
        .map(|(from, to, kind)| Edge { from, to, kind })
        .collect();
    let cfg = Cfg::new_derived(names, BlockId(0), cfg_edges)?;

    Ok(SuperCfg {
        cfg,
        nodes,
        contexts,
        ep_blocks,
        node_lookup,
        summaries,
        segments,
        context_depth,
    })
}

fn assign_names(p: &Program, nodes: &[NodeInfo], _segments: &[Vec<Vec<Segment>>]) -> Vec<String> {
    let base = |n: &NodeInfo| -> String {
        if let Some(f) = n.summary_of {
            return format!("{}.deep", p.funcs[f as usize].name);
        }
        let label = &p.funcs[n.func as usize].blocks[n.block as usize].label;
        if n.seg > 0 {
            format!("{label}.{}", n.seg)
        } else {
            label.clone()
        }
    };
    // Qualify with @ctx when a (func, block, seg) shows up in several
    // contexts, then with the function name when labels collide across
    // functions.
    let mut count_by_pos: HashMap<(u32, u32, u32), u32> = HashMap::new();
    for n in nodes {
        if n.summary_of.is_none() {
            *count_by_pos.entry((n.func, n.block, n.seg)).or_default() += 1;
        }
    }
    let mut names: Vec<String> = nodes
        .iter()
        .map(|n| {
            let mut name = base(n);
            if n.summary_of.is_none() && count_by_pos[&(n.func, n.block, n.seg)] > 1 {
                name = format!("{name}@{}", n.ctx);
            }
            name
        })
        .collect();
    let mut by_name: HashMap<String, u32> = HashMap::new();
    for name in &names {
        *by_name.entry(name.clone()).or_default() += 1;
    }
    for (i, n) in nodes.iter().enumerate() {
        if by_name[&names[i]] > 1 {
            names[i] = format!("{}.{}", p.funcs[n.func as usize].name, names[i]);
        }
    }
    names
}
