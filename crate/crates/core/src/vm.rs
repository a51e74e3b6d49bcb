//! Deterministic interpreter for the mini-IR with the three instrumentation
//! duties built in: calling-context recording at function entry/exit, fault
//! injection gated by the error sequence at each fallible call, and
//! block-level coverage via the supergraph-aligned execution path.
//!
//! `execute` is a pure function of (program, input, error sequence, budget):
//! identical arguments produce byte-identical traces.

use crate::cfg::{BlockId, Cfg, PathSpec};
use crate::derive::{derive_cfg, CallSite, DeriveError, SuperCfg, DEFAULT_BLOCK_BUDGET, DEFAULT_CONTEXT_DEPTH};
use crate::digest::{fnv1a_continue, DigestWriter};
use crate::ir::{Expr, HandlerKind, Instr, Operand, Program, Terminator};
use std::collections::HashMap;

/// Hard cap on program input size.
pub const MAX_INPUT_LEN: usize = crate::constraint::MAX_INPUT_LEN;
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

/// Program input. Construction clamps to [`MAX_INPUT_LEN`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct InputBytes {
    bytes: Vec<u8>,
}

impl InputBytes {
    pub fn new(mut bytes: Vec<u8>) -> InputBytes {
        bytes.truncate(MAX_INPUT_LEN);
        InputBytes { bytes }
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.bytes
    }
}

impl From<Vec<u8>> for InputBytes {
    fn from(v: Vec<u8>) -> Self {
        InputBytes::new(v)
    }
}

/// Ordered fault-injection decisions; the i-th fallible-call encounter
/// consumes bit i, encounters beyond the list run normally (0).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ErrorSequence {
    pub decisions: Vec<bool>,
}

impl ErrorSequence {
    pub fn new(decisions: Vec<bool>) -> ErrorSequence {
        ErrorSequence { decisions }
    }

    pub fn empty() -> ErrorSequence {
        ErrorSequence::default()
    }

    /// Single-fault sequence: inject only at encounter `index`.
    pub fn single(index: usize) -> ErrorSequence {
        let mut decisions = vec![false; index + 1];
        decisions[index] = true;
        ErrorSequence { decisions }
    }

    pub fn get(&self, i: usize) -> bool {
        self.decisions.get(i).copied().unwrap_or(false)
    }

    pub fn bits_string(&self) -> String {
        self.decisions
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect()
    }

    pub fn from_bits_string(s: &str) -> Option<ErrorSequence> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<bool>>>()
            .map(ErrorSequence::new)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// The entry function returned.
    Ok,
    /// A planted bug fired.
    Crash(String),
    /// `halt` or a `handler exit` terminated the run.
    Exit,
    /// The step budget ran out.
    BudgetExceeded,
}

/// One fallible-call execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encounter {
    /// Error-point index into [`Target::ep_labels`].
    pub ep: u32,
    /// Stable hash of the full runtime call-site stack.
    pub ctx_hash: u64,
    /// The encounter happened deeper than the supergraph's context depth.
    pub truncated: bool,
    pub injected: bool,
    /// Full call-site stack, captured only when stack recording is on.
    pub stack: Option<Vec<CallSite>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub block_path: Vec<BlockId>,
    pub encounters: Vec<Encounter>,
    pub outcome: Outcome,
    pub steps: u64,
}

impl ExecutionTrace {
    pub fn path_spec(&self) -> PathSpec {
        PathSpec::new(self.block_path.clone())
    }

    /// Traversed (from, to) edges in path order.
    pub fn branch_edges(&self) -> impl Iterator<Item = (BlockId, BlockId)> + '_ {
        self.block_path.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn digest(&self) -> u128 {
        let mut w = DigestWriter::new();
        w.u64(self.block_path.len() as u64);
        for b in &self.block_path {
            w.u64(b.0 as u64);
        }
        w.u64(self.encounters.len() as u64);
        for e in &self.encounters {
            w.u64(e.ep as u64);
            w.u64(e.ctx_hash);
            w.u8(e.injected as u8);
        }
        match &self.outcome {
            Outcome::Ok => w.u8(0),
            Outcome::Crash(l) => {
                w.u8(1);
                w.bytes(l.as_bytes());
            }
            Outcome::Exit => w.u8(2),
            Outcome::BudgetExceeded => w.u8(3),
        }
        w.finish()
    }
}

/// Where a frame's activity lands in the supergraph.
#[derive(Clone, Copy, Debug)]
pub(crate) enum MapState {
    /// Materialized context.
    Mapped(u32),
    /// Deeper than the context depth: everything maps to this summary node.
    Summary(BlockId),
}

struct Frame {
    func: u32,
    block: u32,
    instr: u32,
    regs: Vec<i64>,
    /// Caller register receiving the return value.
    ret_dst: Option<u16>,
    ctx_hash: u64,
    map: MapState,
}

/// A loaded program bundled with its derived supergraph; the executable unit
/// shared (immutably) by fuzzer and concolic workers.
pub struct Target {
    pub program: Program,
    pub sg: SuperCfg,
    /// Error-point labels in program-text order; `Encounter::ep` indexes this.
    pub ep_labels: Vec<String>,
    ep_index: HashMap<String, u32>,
    /// [func][block][instr position 0..=len] → segment index.
    seg_of_instr: Vec<Vec<Vec<u32>>>,
    pub max_input: usize,
}

impl Target {
    pub fn new(program: Program) -> Result<Target, DeriveError> {
        Target::with_options(program, DEFAULT_CONTEXT_DEPTH, DEFAULT_BLOCK_BUDGET)
    }

    pub fn with_options(
        program: Program,
        context_depth: u32,
        block_budget: usize,
    ) -> Result<Target, DeriveError> {
        let sg = derive_cfg(&program, context_depth, block_budget)?;
        let ep_labels: Vec<String> = program
            .error_point_labels()
            .into_iter()
            .map(str::to_string)
            .collect();
        let ep_index = ep_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as u32))
            .collect();
        let seg_of_instr = program
            .funcs
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                f.blocks
                    .iter()
                    .enumerate()
                    .map(|(bi, b)| {
                        // Positions inside a segment map to it; the terminator
                        // position maps to the final segment.
                        let segs = &sg.segments[fi][bi];
                        let mut table = vec![0u32; b.instrs.len() + 1];
                        for (si, seg) in segs.iter().enumerate() {
                            for pos in seg.start..seg.end {
                                table[pos as usize] = si as u32;
                            }
                            if seg.has_term {
                                table[b.instrs.len()] = si as u32;
                            }
                        }
                        table
                    })
                    .collect()
            })
            .collect();
        Ok(Target {
            program,
            sg,
            ep_labels,
            ep_index,
            seg_of_instr,
            max_input: MAX_INPUT_LEN,
        })
    }

    pub fn cfg(&self) -> &Cfg {
        &self.sg.cfg
    }

    pub fn ep_id(&self, label: &str) -> Option<u32> {
        self.ep_index.get(label).copied()
    }

    fn site_hash(parent: u64, site: CallSite) -> u64 {
        let mut h = parent;
        h = fnv1a_continue(h, &site.func.to_le_bytes());
        h = fnv1a_continue(h, &site.block.to_le_bytes());
        h = fnv1a_continue(h, &site.instr.to_le_bytes());
        h
    }

    pub fn execute(&self, input: &InputBytes, es: &ErrorSequence, budget: u64) -> ExecutionTrace {
        self.execute_recording(input, es, budget, false)
    }

    /// As `execute`, optionally capturing full call stacks per encounter
    /// (test use; the fuzzing loop keeps hashes only).
    pub fn execute_recording(
        &self,
        input: &InputBytes,
        es: &ErrorSequence,
        budget: u64,
        record_stacks: bool,
    ) -> ExecutionTrace {
        let bytes = input.as_slice();
        let mut path: Vec<BlockId> = Vec::new();
        let mut encounters: Vec<Encounter> = Vec::new();
        let mut steps: u64 = 0;
        let mut enc_count: usize = 0;
        let mut stack_sites: Vec<CallSite> = Vec::new();

        let root = Frame {
            func: self.program.entry_func,
            block: 0,
            instr: 0,
            regs: vec![0; self.program.entry().reg_count as usize],
            ret_dst: None,
            ctx_hash: crate::digest::fnv1a(b""),
            map: MapState::Mapped(crate::derive::ROOT_CTX),
        };
        let mut frames: Vec<Frame> = vec![root];
        self.record(&mut path, frames.last().unwrap(), 0);

        macro_rules! finish {
            ($outcome:expr) => {
                return ExecutionTrace {
                    block_path: path,
                    encounters,
                    outcome: $outcome,
                    steps,
                }
            };
        }

        loop {
            if steps >= budget {
                finish!(Outcome::BudgetExceeded);
            }
            steps += 1;

            let fidx = frames.last().unwrap().func as usize;
            let bidx = frames.last().unwrap().block as usize;
            let iidx = frames.last().unwrap().instr as usize;
            let block = &self.program.funcs[fidx].blocks[bidx];

            if iidx < block.instrs.len() {
                match &block.instrs[iidx] {
                    Instr::ReadInput { dst, offset } => {
                        let v = bytes.get(*offset as usize).copied().unwrap_or(0) as i64;
                        let frame = frames.last_mut().unwrap();
                        frame.regs[*dst as usize] = v;
                        frame.instr += 1;
                    }
                    Instr::Assign { dst, expr } => {
                        let frame = frames.last_mut().unwrap();
                        let val = |op: &Operand, regs: &[i64]| match op {
                            Operand::Const(c) => *c,
                            Operand::Reg(r) => regs[*r as usize],
                        };
                        let v = match expr {
                            Expr::Operand(op) => val(op, &frame.regs),
                            Expr::Bin { op, lhs, rhs } => {
                                op.apply(val(lhs, &frame.regs), val(rhs, &frame.regs))
                            }
                        };
                        frame.regs[*dst as usize] = v;
                        frame.instr += 1;
                    }
                    Instr::FallibleCall {
                        dst,
                        callee_idx,
                        label,
                        ..
                    } => {
                        let decl = &self.program.externs[*callee_idx as usize];
                        let injected = es.get(enc_count);
                        enc_count += 1;
                        let frame = frames.last_mut().unwrap();
                        frame.regs[*dst as usize] = if injected {
                            decl.kind.err_value()
                        } else {
                            decl.ok_value
                        };
                        let truncated = matches!(frame.map, MapState::Summary(_));
                        encounters.push(Encounter {
                            ep: self.ep_index[label],
                            ctx_hash: frame.ctx_hash,
                            truncated,
                            injected,
                            stack: record_stacks.then(|| stack_sites.clone()),
                        });
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
                        // The call instruction is its own segment node.
                        self.record(&mut path, frames.last().unwrap(), iidx as u32);
                        let parent = frames.last().unwrap();
                        let child_map = self.map_after_call(parent.map, site, *callee_idx);
                        let child = Frame {
                            func: *callee_idx,
                            block: 0,
                            instr: 0,
                            regs: vec![
                                0;
                                self.program.funcs[*callee_idx as usize].reg_count as usize
                            ],
                            ret_dst: *dst,
                            ctx_hash: Self::site_hash(parent.ctx_hash, site),
                            map: child_map,
                        };
                        stack_sites.push(site);
                        frames.push(child);
                        self.record(&mut path, frames.last().unwrap(), 0);
                    }
                    Instr::Handler { kind } => {
                        if *kind == HandlerKind::Exit {
                            finish!(Outcome::Exit);
                        }
                        frames.last_mut().unwrap().instr += 1;
                    }
                    Instr::CrashIf { bug, cond } => {
                        let frame = frames.last_mut().unwrap();
                        if frame.regs[*cond as usize] != 0 {
                            finish!(Outcome::Crash(bug.clone()));
                        }
                        frame.instr += 1;
                    }
                }
                continue;
            }

            // Terminator.
            match &block.term {
                Terminator::Jmp { target, .. } => {
                    let frame = frames.last_mut().unwrap();
                    frame.block = *target;
                    frame.instr = 0;
                    self.record(&mut path, frames.last().unwrap(), 0);
                }
                Terminator::Br {
                    cond,
                    then_target,
                    else_target,
                    ..
                } => {
                    let frame = frames.last_mut().unwrap();
                    frame.block = if frame.regs[*cond as usize] != 0 {
                        *then_target
                    } else {
                        *else_target
                    };
                    frame.instr = 0;
                    self.record(&mut path, frames.last().unwrap(), 0);
                }
                Terminator::Switch {
                    scrutinee,
                    cases,
                    default_target,
                    ..
                } => {
                    let frame = frames.last_mut().unwrap();
                    let v = frame.regs[*scrutinee as usize];
                    frame.block = cases
                        .iter()
                        .find(|(cv, _, _)| *cv == v)
                        .map(|(_, _, t)| *t)
                        .unwrap_or(*default_target);
                    frame.instr = 0;
                    self.record(&mut path, frames.last().unwrap(), 0);
                }
                Terminator::Ret(op) => {
                    let value = match op {
                        Some(Operand::Const(c)) => *c,
                        Some(Operand::Reg(r)) => frames.last().unwrap().regs[*r as usize],
                        None => 0,
                    };
                    let done = frames.pop().unwrap();
                    match frames.last_mut() {
                        None => finish!(Outcome::Ok),
                        Some(caller) => {
                            if let Some(dst) = done.ret_dst {
                                caller.regs[dst as usize] = value;
                            }
                            stack_sites.pop();
                            // Resume after the call instruction.
                            caller.instr += 1;
                            let resume = caller.instr;
                            self.record(&mut path, frames.last().unwrap(), resume);
                        }
                    }
                }
                Terminator::Halt => finish!(Outcome::Exit),
                Terminator::Crash(label) => finish!(Outcome::Crash(label.clone())),
            }
        }
    }

    /// Appends the supergraph node for the frame position, deduplicating
    /// consecutive repeats inside summary zones.
    fn record(&self, path: &mut Vec<BlockId>, frame: &Frame, instr: u32) {
        let node = self.position_node(frame.func, frame.block, instr, frame.map);
        if path.last() != Some(&node) {
            path.push(node);
        }
    }

    /// Supergraph node of an executed position.
    pub(crate) fn position_node(&self, func: u32, block: u32, instr: u32, map: MapState) -> BlockId {
        match map {
            MapState::Summary(s) => s,
            MapState::Mapped(ctx) => {
                let seg = self.seg_of_instr[func as usize][block as usize][instr as usize];
                self.sg
                    .node(func, block, seg, ctx)
                    .expect("executed position is materialized")
            }
        }
    }

    /// Map state of a callee frame created at `site`.
    pub(crate) fn map_after_call(&self, parent: MapState, site: CallSite, callee: u32) -> MapState {
        match parent {
            MapState::Mapped(ctx) => match self.sg.contexts.transition(ctx, site) {
                Some(child) => MapState::Mapped(child),
                None => MapState::Summary(
                    self.sg
                        .summary_node(callee)
                        .expect("deep call has a summary node"),
                ),
            },
            MapState::Summary(s) => MapState::Summary(s),
        }
    }
}
