//! Shared generators for oracle tests: seeded random DAGs and error-point
//! placements. Each integration-test binary includes this module and uses a
//! different subset of it.
#![allow(dead_code)]

use huntfuzz_core::cfg::{BlockId, Cfg, Edge, EdgeKind, EdgePredicate};
use huntfuzz_core::constraint::parse_constraint;
use huntfuzz_core::extract::LocatedPoint;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random connected DAG over `n` blocks (edges only go id-upward, block 0 is
/// the entry, every block gets an in-edge from some earlier block).
pub fn gen_dag(rng: &mut ChaCha8Rng, n: usize) -> Cfg {
    assert!(n >= 1);
    let names: Vec<String> = (0..n).map(|i| format!("b{i}")).collect();
    let mut edges: Vec<Edge> = Vec::new();
    for to in 1..n {
        let from = rng.gen_range(0..to);
        edges.push(Edge {
            from: BlockId(from as u32),
            to: BlockId(to as u32),
            kind: EdgeKind::Unconditional,
        });
    }
    // Extra forward edges for diamonds and fan-in.
    let extra = if n >= 2 { rng.gen_range(0..=n) } else { 0 };
    for _ in 0..extra {
        let from = rng.gen_range(0..n - 1);
        let to = rng.gen_range(from + 1..n);
        if !edges
            .iter()
            .any(|e| e.from == BlockId(from as u32) && e.to == BlockId(to as u32))
        {
            edges.push(Edge {
                from: BlockId(from as u32),
                to: BlockId(to as u32),
                kind: EdgeKind::Unconditional,
            });
        }
    }
    Cfg::new(names, BlockId(0), edges).expect("generated DAG is valid")
}

/// A DAG whose edges sometimes carry predicates or opaque markers, for DOT
/// round-trip coverage. Sibling predicate exclusivity is kept by giving each
/// predicated block a fresh byte offset with complementary atoms.
pub fn gen_dag_with_predicates(rng: &mut ChaCha8Rng, n: usize) -> Cfg {
    let plain = gen_dag(rng, n);
    let mut edges: Vec<Edge> = plain.edges().to_vec();
    let mut next_byte = 0u16;
    let mut next_id = 1u32;
    for b in plain.blocks() {
        let outs: Vec<usize> = edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.from == b)
            .map(|(i, _)| i)
            .collect();
        if outs.len() == 2 && rng.gen_bool(0.6) {
            let c_then = parse_constraint(&format!("b{next_byte} == 1")).unwrap();
            let c_else = parse_constraint(&format!("b{next_byte} != 1")).unwrap();
            for (slot, (idx, c)) in [(outs[0], c_then), (outs[1], c_else)]
                .into_iter()
                .enumerate()
            {
                let _ = slot;
                edges[idx].kind = EdgeKind::Predicated(EdgePredicate {
                    id: format!("c{next_id}"),
                    constraint: c,
                });
                next_id += 1;
            }
            next_byte += 1;
        } else if outs.len() == 1 && rng.gen_bool(0.15) {
            edges[outs[0]].kind = EdgeKind::Opaque;
        }
    }
    let names: Vec<String> = plain.blocks().map(|b| plain.name(b).to_string()).collect();
    Cfg::new(names, plain.entry(), edges).expect("predicated DAG is valid")
}

/// Picks up to `max` distinct blocks as error points, skipping the entry.
pub fn pick_points(rng: &mut ChaCha8Rng, cfg: &Cfg, max: usize) -> Vec<LocatedPoint> {
    let n = cfg.len();
    if n <= 1 {
        return Vec::new();
    }
    let want = rng.gen_range(1..=max.min(n - 1));
    let mut blocks: Vec<u32> = (1..n as u32).collect();
    // Fisher–Yates prefix.
    for i in 0..want.min(blocks.len()) {
        let j = rng.gen_range(i..blocks.len());
        blocks.swap(i, j);
    }
    blocks[..want.min(blocks.len())]
        .iter()
        .enumerate()
        .map(|(i, &b)| LocatedPoint {
            label: format!("ep{i}"),
            block: BlockId(b),
        })
        .collect()
}

/// Exhaustive reverse-walk oracle: blocks reachable by 1..=k reverse steps.
pub fn reverse_walk_oracle(cfg: &Cfg, start: BlockId, k: u32) -> std::collections::BTreeSet<BlockId> {
    let mut out = std::collections::BTreeSet::new();
    let mut frontier = vec![start];
    for _ in 0..k {
        let mut next = Vec::new();
        for b in frontier {
            for &p in cfg.predecessors(b) {
                out.insert(p);
                next.push(p);
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_unstable();
        next.dedup();
        frontier = next;
    }
    out
}

/// Floyd–Warshall all-pairs distances; `None` = unreachable.
pub fn floyd_warshall(cfg: &Cfg) -> Vec<Vec<Option<u32>>> {
    let n = cfg.len();
    let mut d: Vec<Vec<Option<u32>>> = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for e in cfg.edges() {
        let slot = &mut d[e.from.index()][e.to.index()];
        if slot.is_none_or(|v| v > 1) && e.from != e.to {
            *slot = Some(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            let Some(ik) = d[i][k] else { continue };
            #[allow(clippy::needless_range_loop)] // d[i] and d[k] both in play
            for j in 0..n {
                let Some(kj) = d[k][j] else { continue };
                let via = ik + kj;
                if d[i][j].is_none_or(|cur| cur > via) {
                    d[i][j] = Some(via);
                }
            }
        }
    }
    d
}

