//! Directed control-flow graph with predicate-labeled edges, plus the
//! ancestor and distance queries the clustering and weighting stages run.
//!
//! Graphs are immutable once built; every query is a pure read, so a `Cfg`
//! can be shared freely across fuzzer and concolic workers.

use crate::constraint::ByteConstraint;
use crate::solve::{solve, SolveResult};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, VecDeque};
use thiserror::Error;

/// Identifier of one basic block, dense within its `Cfg`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct BlockId(pub u32);

impl BlockId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Input-byte predicate attached to a conditional edge, carrying the
/// constraint id used in reports (`c1`, `c2`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgePredicate {
    pub id: String,
    pub constraint: ByteConstraint,
}

/// How an edge constrains program input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Unconditional control transfer (fallthrough, call/return linkage,
    /// unique successor).
    Unconditional,
    /// Conditional edge whose exact byte constraint is known.
    Predicated(EdgePredicate),
    /// Conditional edge whose branch condition could not be expressed in the
    /// linear byte fragment. Paths through such edges are not solvable.
    Opaque,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: BlockId,
    pub to: BlockId,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn predicate(&self) -> Option<&EdgePredicate> {
        match &self.kind {
            EdgeKind::Predicated(p) => Some(p),
            _ => None,
        }
    }
}

/// An entry-rooted block sequence; consecutive blocks must be Cfg edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PathSpec {
    pub blocks: Vec<BlockId>,
}

impl PathSpec {
    pub fn new(blocks: Vec<BlockId>) -> PathSpec {
        PathSpec { blocks }
    }

    pub fn last(&self) -> Option<BlockId> {
        self.blocks.last().copied()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CfgError {
    #[error("block {0:?} is not a member of this graph")]
    UnknownBlock(BlockId),
    #[error("block named `{0}` is not a member of this graph")]
    UnknownName(String),
    #[error("entry block {0:?} is out of range")]
    BadEntry(BlockId),
    #[error("edge endpoint {0:?} is out of range")]
    BadEdgeEndpoint(BlockId),
    #[error("duplicate edge {0:?} -> {1:?}")]
    DuplicateEdge(BlockId, BlockId),
    #[error("block `{0}` is unreachable from the entry")]
    Unreachable(String),
    #[error("duplicate block name `{0}`")]
    DuplicateName(String),
    #[error("out-edges of `{0}` carry overlapping predicates ({1} and {2})")]
    OverlappingPredicates(String, String, String),
    #[error("n-way dispatch out of `{0}` must carry disjoint equality predicates")]
    BadDispatch(String),
    #[error("path is not a valid entry-rooted walk at position {0}")]
    InvalidPath(usize),
}

/// Immutable directed CFG. Block names are retained for fixtures, DOT
/// round-trips, and reports.
#[derive(Debug, Clone)]
pub struct Cfg {
    names: Vec<String>,
    entry: BlockId,
    edges: Vec<Edge>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<BlockId>>,
    by_name: HashMap<String, BlockId>,
}

impl Cfg {
    /// Builds and validates a graph. `names` supplies one display name per
    /// block; ids are the dense indices into `names`.
    pub fn new(names: Vec<String>, entry: BlockId, edges: Vec<Edge>) -> Result<Cfg, CfgError> {
        Self::build(names, entry, edges, true)
    }

    /// As `new` but skips the sibling-predicate exclusivity check. Derived
    /// supergraphs guarantee exclusivity by construction (else-edges are
    /// negations) and their return-linkage fan-in must not be checked as if
    /// it were a branch.
    pub fn new_derived(
        names: Vec<String>,
        entry: BlockId,
        edges: Vec<Edge>,
    ) -> Result<Cfg, CfgError> {
        Self::build(names, entry, edges, false)
    }

    fn build(
        names: Vec<String>,
        entry: BlockId,
        edges: Vec<Edge>,
        check_siblings: bool,
    ) -> Result<Cfg, CfgError> {
        let n = names.len();
        if entry.index() >= n {
            return Err(CfgError::BadEntry(entry));
        }
        let mut by_name = HashMap::with_capacity(n);
        for (i, name) in names.iter().enumerate() {
            if by_name.insert(name.clone(), BlockId(i as u32)).is_some() {
                return Err(CfgError::DuplicateName(name.clone()));
            }
        }
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut pred: Vec<Vec<BlockId>> = vec![Vec::new(); n];
        let mut seen_pairs = BTreeSet::new();
        for (idx, e) in edges.iter().enumerate() {
            if e.from.index() >= n {
                return Err(CfgError::BadEdgeEndpoint(e.from));
            }
            if e.to.index() >= n {
                return Err(CfgError::BadEdgeEndpoint(e.to));
            }
            if !seen_pairs.insert((e.from, e.to)) {
                return Err(CfgError::DuplicateEdge(e.from, e.to));
            }
            succ[e.from.index()].push(idx);
            pred[e.to.index()].push(e.from);
        }
        for p in pred.iter_mut() {
            p.sort_unstable();
        }

        let cfg = Cfg {
            names,
            entry,
            edges,
            succ,
            pred,
            by_name,
        };
        // Every block reachable from entry.
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([entry]);
        seen[entry.index()] = true;
        while let Some(b) = queue.pop_front() {
            for &ei in &cfg.succ[b.index()] {
                let to = cfg.edges[ei].to;
                if !seen[to.index()] {
                    seen[to.index()] = true;
                    queue.push_back(to);
                }
            }
        }
        if let Some(i) = seen.iter().position(|&s| !s) {
            return Err(CfgError::Unreachable(cfg.names[i].clone()));
        }
        if check_siblings {
            cfg.check_sibling_predicates()?;
        }
        Ok(cfg)
    }

    /// Sibling out-edges of a conditional block must be mutually exclusive:
    /// for 2-way branches the conjunction of both predicates must be
    /// unsatisfiable; n-way dispatches must carry disjoint equality atoms
    /// over one expression (plus at most one all-`!=` default edge).
    fn check_sibling_predicates(&self) -> Result<(), CfgError> {
        for (b, outs) in self.succ.iter().enumerate() {
            let preds: Vec<&EdgePredicate> = outs
                .iter()
                .filter_map(|&ei| self.edges[ei].predicate())
                .collect();
            if preds.len() < 2 {
                continue;
            }
            if preds.len() == 2 {
                let both = preds[0].constraint.and(&preds[1].constraint);
                let max_len = crate::constraint::MAX_INPUT_LEN;
                if let SolveResult::Sat(_) = solve(&both, max_len, 100_000) {
                    return Err(CfgError::OverlappingPredicates(
                        self.names[b].clone(),
                        preds[0].id.clone(),
                        preds[1].id.clone(),
                    ));
                }
                continue;
            }
            // n-way dispatch: single Eq atoms with pairwise-distinct constants
            // over a common expression; one default edge of Ne atoms allowed.
            let mut eq_vals: Vec<i64> = Vec::new();
            let mut expr = None;
            let mut defaults = 0usize;
            for p in &preds {
                let atoms = &p.constraint.atoms;
                let all_ne = !atoms.is_empty()
                    && atoms.iter().all(|a| a.op == crate::constraint::CmpOp::Ne);
                if all_ne {
                    defaults += 1;
                    continue;
                }
                if atoms.len() != 1 || atoms[0].op != crate::constraint::CmpOp::Eq {
                    return Err(CfgError::BadDispatch(self.names[b].clone()));
                }
                match &expr {
                    None => expr = Some(atoms[0].expr.clone()),
                    Some(e) if *e == atoms[0].expr => {}
                    Some(_) => return Err(CfgError::BadDispatch(self.names[b].clone())),
                }
                if eq_vals.contains(&atoms[0].rhs) {
                    return Err(CfgError::BadDispatch(self.names[b].clone()));
                }
                eq_vals.push(atoms[0].rhs);
            }
            if defaults > 1 {
                return Err(CfgError::BadDispatch(self.names[b].clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn entry(&self) -> BlockId {
        self.entry
    }

    pub fn name(&self, b: BlockId) -> &str {
        &self.names[b.index()]
    }

    pub fn block_by_name(&self, name: &str) -> Result<BlockId, CfgError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| CfgError::UnknownName(name.to_string()))
    }

    pub fn blocks(&self) -> impl Iterator<Item = BlockId> {
        (0..self.names.len() as u32).map(BlockId)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn successors(&self, b: BlockId) -> impl Iterator<Item = &Edge> {
        self.succ[b.index()].iter().map(move |&ei| &self.edges[ei])
    }

    pub fn predecessors(&self, b: BlockId) -> &[BlockId] {
        &self.pred[b.index()]
    }

    pub fn edge_between(&self, from: BlockId, to: BlockId) -> Option<&Edge> {
        self.succ[from.index()]
            .iter()
            .map(|&ei| &self.edges[ei])
            .find(|e| e.to == to)
    }

    fn check_member(&self, b: BlockId) -> Result<(), CfgError> {
        if b.index() >= self.names.len() {
            return Err(CfgError::UnknownBlock(b));
        }
        Ok(())
    }

    /// Blocks reachable from `b` by 1..k reverse edges; `b` itself excluded,
    /// `k = 0` is empty. Cycles are fine: visited blocks appear once.
    pub fn k_hop_ancestors(&self, b: BlockId, k: u32) -> Result<BTreeSet<BlockId>, CfgError> {
        self.check_member(b)?;
        let mut out = BTreeSet::new();
        if k == 0 {
            return Ok(out);
        }
        let mut frontier = vec![b];
        let mut seen = vec![false; self.names.len()];
        seen[b.index()] = true;
        for _ in 0..k {
            let mut next = Vec::new();
            for cur in frontier {
                for &p in self.predecessors(cur) {
                    if !seen[p.index()] {
                        seen[p.index()] = true;
                        out.insert(p);
                        next.push(p);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        // A block on a cycle through itself is its own ancestor; the self
        // exclusion applies only to the trivial zero-length walk, so re-add
        // b when a reverse walk of length ≥ 1 returns to it.
        if self.reverse_walk_returns(b, k) {
            out.insert(b);
        }
        Ok(out)
    }

    fn reverse_walk_returns(&self, b: BlockId, k: u32) -> bool {
        // BFS from b's predecessors, counting the first hop.
        let mut seen = vec![false; self.names.len()];
        let mut frontier: Vec<BlockId> = Vec::new();
        for &p in self.predecessors(b) {
            if p == b {
                return k >= 1;
            }
            if !seen[p.index()] {
                seen[p.index()] = true;
                frontier.push(p);
            }
        }
        let mut depth = 1;
        while !frontier.is_empty() && depth < k {
            let mut next = Vec::new();
            for cur in frontier {
                for &p in self.predecessors(cur) {
                    if p == b {
                        return true;
                    }
                    if !seen[p.index()] {
                        seen[p.index()] = true;
                        next.push(p);
                    }
                }
            }
            frontier = next;
            depth += 1;
        }
        false
    }

    /// Length in edges of the shortest directed path, `None` if unreachable.
    pub fn shortest_distance(&self, from: BlockId, to: BlockId) -> Result<Option<u32>, CfgError> {
        self.check_member(from)?;
        self.check_member(to)?;
        if from == to {
            return Ok(Some(0));
        }
        let mut dist = vec![u32::MAX; self.names.len()];
        dist[from.index()] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur.index()];
            for e in self.successors(cur) {
                if dist[e.to.index()] == u32::MAX {
                    dist[e.to.index()] = d + 1;
                    if e.to == to {
                        return Ok(Some(d + 1));
                    }
                    queue.push_back(e.to);
                }
            }
        }
        Ok(None)
    }

    /// All-blocks BFS distance vector from `from`; `u32::MAX` = unreachable.
    pub fn distances_from(&self, from: BlockId) -> Result<Vec<u32>, CfgError> {
        self.check_member(from)?;
        let mut dist = vec![u32::MAX; self.names.len()];
        dist[from.index()] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur.index()];
            for e in self.successors(cur) {
                if dist[e.to.index()] == u32::MAX {
                    dist[e.to.index()] = d + 1;
                    queue.push_back(e.to);
                }
            }
        }
        Ok(dist)
    }

    /// Reverse BFS distance vector towards `to` (distance from each block to
    /// `to`); `u32::MAX` = cannot reach.
    pub fn distances_to(&self, to: BlockId) -> Result<Vec<u32>, CfgError> {
        self.check_member(to)?;
        let mut dist = vec![u32::MAX; self.names.len()];
        dist[to.index()] = 0;
        let mut queue = VecDeque::from([to]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur.index()];
            for &p in self.predecessors(cur) {
                if dist[p.index()] == u32::MAX {
                    dist[p.index()] = d + 1;
                    queue.push_back(p);
                }
            }
        }
        Ok(dist)
    }

    /// Minimum over blocks on `path` of the shortest distance to `target`;
    /// 0 when the target lies on the path, `None` when no path block reaches
    /// the target.
    pub fn path_distance(&self, path: &PathSpec, target: BlockId) -> Result<Option<u32>, CfgError> {
        self.check_member(target)?;
        let to_target = self.distances_to(target)?;
        let mut best = u32::MAX;
        for &b in &path.blocks {
            self.check_member(b)?;
            best = best.min(to_target[b.index()]);
        }
        Ok((best != u32::MAX).then_some(best))
    }

    /// Validates that `path` starts at the entry and follows edges.
    pub fn validate_path(&self, path: &PathSpec) -> Result<(), CfgError> {
        match path.blocks.first() {
            None => return Err(CfgError::InvalidPath(0)),
            Some(&b) if b != self.entry => return Err(CfgError::InvalidPath(0)),
            _ => {}
        }
        for (i, pair) in path.blocks.windows(2).enumerate() {
            if self.edge_between(pair[0], pair[1]).is_none() {
                return Err(CfgError::InvalidPath(i + 1));
            }
        }
        Ok(())
    }

    /// Shortest entry→target path with the lexicographically smallest block
    /// sequence among shortest paths; `None` if unreachable.
    pub fn canonical_entry_path(&self, target: BlockId) -> Result<Option<PathSpec>, CfgError> {
        self.check_member(target)?;
        let to_target = self.distances_to(target)?;
        if to_target[self.entry.index()] == u32::MAX {
            return Ok(None);
        }
        let mut path = vec![self.entry];
        let mut cur = self.entry;
        while cur != target {
            let need = to_target[cur.index()] - 1;
            let next = self
                .successors(cur)
                .map(|e| e.to)
                .filter(|t| to_target[t.index()] == need)
                .min()
                .expect("distance field guarantees a successor");
            path.push(next);
            cur = next;
        }
        Ok(Some(PathSpec::new(path)))
    }
}
