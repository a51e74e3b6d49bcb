//! Error-point clustering: group points whose distance to a shared ancestor
//! is at most k, preferring same-path points.
//!
//! Two modes ship. `pivot` follows the published pseudocode literally: a
//! random unvisited pivot absorbs every unvisited point that is same-path
//! with it or whose bbkSet intersects the pivot's. `strict` (the default)
//! additionally requires the running intersection of all members'
//! (bbkSet ∪ own block) to stay non-empty, which is what actually guarantees
//! every member sits within k of the cluster's common parent.

use crate::cfg::{BlockId, Cfg, CfgError, PathSpec};
use crate::extract::LocatedPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMode {
    Strict,
    Pivot,
}

impl std::str::FromStr for ClusterMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(ClusterMode::Strict),
            "pivot" => Ok(ClusterMode::Pivot),
            other => Err(format!("unknown clustering mode `{other}`")),
        }
    }
}

impl std::fmt::Display for ClusterMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClusterMode::Strict => "strict",
            ClusterMode::Pivot => "pivot",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub id: u32,
    /// Member labels in absorption order (pivot first).
    pub members: Vec<String>,
    pub common_parent: BlockId,
    /// Longest shared entry prefix of the members' canonical paths.
    pub common_path: PathSpec,
}

impl Cluster {
    pub fn contains(&self, label: &str) -> bool {
        self.members.iter().any(|m| m == label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    pub k: u32,
    pub mode: ClusterMode,
    pub seed: u64,
}

impl ClusterSet {
    pub fn cluster_of(&self, label: &str) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.contains(label))
    }
}

/// True iff one block lies on some entry path through the other (directed
/// reachability in either direction; a block is same-path with itself).
pub fn same_path(cfg: &Cfg, a: BlockId, b: BlockId) -> bool {
    if a == b {
        return true;
    }
    matches!(cfg.shortest_distance(a, b), Ok(Some(_)))
        || matches!(cfg.shortest_distance(b, a), Ok(Some(_)))
}

/// Maximal common prefix of the given entry paths. With no paths this is
/// empty; otherwise it starts at the shared first block.
pub fn longest_common_path(paths: &[PathSpec]) -> PathSpec {
    let Some(first) = paths.first() else {
        return PathSpec::default();
    };
    let mut len = first.blocks.len();
    for p in &paths[1..] {
        let mut common = 0;
        for (a, b) in first.blocks.iter().zip(p.blocks.iter()) {
            if a != b {
                break;
            }
            common += 1;
        }
        len = len.min(common);
    }
    PathSpec::new(first.blocks[..len].to_vec())
}

/// Groups the points per Algorithm 1. `seed` drives pivot selection; a fixed
/// seed gives an identical ClusterSet.
pub fn cluster_error_points(
    points: &[LocatedPoint],
    cfg: &Cfg,
    k: u32,
    mode: ClusterMode,
    seed: u64,
) -> Result<ClusterSet, CfgError> {
    let entry_dist = cfg.distances_from(cfg.entry())?;
    let deepest = |set: &BTreeSet<BlockId>| -> Option<BlockId> {
        set.iter()
            .copied()
            .max_by(|a, b| {
                entry_dist[a.index()]
                    .cmp(&entry_dist[b.index()])
                    .then(b.cmp(a)) // deeper wins; ties to the smaller id
            })
    };
    let canon_path = |b: BlockId| -> Result<PathSpec, CfgError> {
        Ok(cfg
            .canonical_entry_path(b)?
            .unwrap_or_else(|| PathSpec::new(vec![cfg.entry()])))
    };

    let mut clusters: Vec<Cluster> = Vec::new();
    let push_cluster = |members: Vec<usize>,
                            parent: BlockId,
                            clusters: &mut Vec<Cluster>|
     -> Result<(), CfgError> {
        let paths: Vec<PathSpec> = members
            .iter()
            .map(|&i| canon_path(points[i].block))
            .collect::<Result<_, _>>()?;
        clusters.push(Cluster {
            id: clusters.len() as u32,
            members: members.iter().map(|&i| points[i].label.clone()).collect(),
            common_parent: parent,
            common_path: longest_common_path(&paths),
        });
        Ok(())
    };

    // k = 0 means no actual clustering: every point is its own cluster with
    // itself as the parent (distance 0).
    if k == 0 {
        for (i, p) in points.iter().enumerate() {
            push_cluster(vec![i], p.block, &mut clusters)?;
        }
        return Ok(ClusterSet {
            clusters,
            k,
            mode,
            seed,
        });
    }

    let bbk: Vec<BTreeSet<BlockId>> = points
        .iter()
        .map(|p| cfg.k_hop_ancestors(p.block, k))
        .collect::<Result<_, _>>()?;
    let own: Vec<BTreeSet<BlockId>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut s = bbk[i].clone();
            s.insert(p.block);
            s
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unvisited: Vec<usize> = (0..points.len()).collect();

    while !unvisited.is_empty() {
        let pivot = unvisited.remove(rng.gen_range(0..unvisited.len()));
        let mut members = vec![pivot];
        let mut inter = own[pivot].clone();
        let mut absorbed = Vec::new();
        for (pos, &i) in unvisited.iter().enumerate() {
            let related = same_path(cfg, points[pivot].block, points[i].block)
                || bbk[pivot].intersection(&bbk[i]).next().is_some();
            if !related {
                continue;
            }
            let next_inter: BTreeSet<BlockId> = inter.intersection(&own[i]).copied().collect();
            match mode {
                ClusterMode::Strict => {
                    if !next_inter.is_empty() {
                        inter = next_inter;
                        members.push(i);
                        absorbed.push(pos);
                    }
                }
                ClusterMode::Pivot => {
                    inter = next_inter;
                    members.push(i);
                    absorbed.push(pos);
                }
            }
        }
        for &pos in absorbed.iter().rev() {
            unvisited.remove(pos);
        }

        let parent = if members.len() == 1 {
            // Singletons take their deepest proper ancestor within k, or
            // themselves when none exists.
            deepest(&bbk[pivot]).unwrap_or(points[pivot].block)
        } else if let Some(p) = deepest(&inter) {
            p
        } else {
            // Pivot mode can drain the intersection; fall back to the
            // deepest ancestor common to every member at any distance.
            let mut common: Option<BTreeSet<BlockId>> = None;
            for &m in &members {
                let mut anc = cfg.k_hop_ancestors(points[m].block, cfg.len() as u32)?;
                anc.insert(points[m].block);
                common = Some(match common {
                    None => anc,
                    Some(acc) => acc.intersection(&anc).copied().collect(),
                });
            }
            deepest(&common.unwrap_or_default()).unwrap_or(cfg.entry())
        };
        push_cluster(members, parent, &mut clusters)?;
    }

    Ok(ClusterSet {
        clusters,
        k,
        mode,
        seed,
    })
}

/// JSON export with block names resolved for readability.
pub fn cluster_set_json(set: &ClusterSet, cfg: &Cfg) -> serde_json::Value {
    json!({
        "k": set.k,
        "mode": set.mode.to_string(),
        "seed": set.seed,
        "clusters": set.clusters.iter().map(|c| json!({
            "id": c.id,
            "members": c.members,
            "common_parent": cfg.name(c.common_parent),
            "common_path": c.common_path.blocks.iter().map(|&b| cfg.name(b)).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::{Edge, EdgeKind};

    fn edge(from: u32, to: u32) -> Edge {
        Edge {
            from: BlockId(from),
            to: BlockId(to),
            kind: EdgeKind::Unconditional,
        }
    }

    /// main→A, A→B, A→D, B→EP1, B→EP3, EP1→EP2, D→EP4, D→E
    fn fig2_graph() -> Cfg {
        Cfg::new(
            vec![
                "main".into(), // 0
                "A".into(),    // 1
                "B".into(),    // 2
                "EP1".into(),  // 3
                "EP2".into(),  // 4
                "EP3".into(),  // 5
                "D".into(),    // 6
                "EP4".into(),  // 7
                "E".into(),    // 8
            ],
            BlockId(0),
            vec![
                edge(0, 1),
                edge(1, 2),
                edge(1, 6),
                edge(2, 3),
                edge(2, 5),
                edge(3, 4),
                edge(6, 7),
                edge(6, 8),
            ],
        )
        .unwrap()
    }

    fn fig2_points() -> Vec<LocatedPoint> {
        [("EP1", 3), ("EP2", 4), ("EP3", 5), ("EP4", 7)]
            .into_iter()
            .map(|(l, b)| LocatedPoint {
                label: l.into(),
                block: BlockId(b),
            })
            .collect()
    }

    #[test]
    fn bbk_sets_match_worked_example() {
        let g = fig2_graph();
        let bbk = |b: u32| g.k_hop_ancestors(BlockId(b), 2).unwrap();
        assert_eq!(bbk(3), BTreeSet::from([BlockId(2), BlockId(1)])); // EP1: {B, A}
        assert_eq!(bbk(4), BTreeSet::from([BlockId(3), BlockId(2)])); // EP2: {EP1, B}
        assert_eq!(bbk(5), BTreeSet::from([BlockId(2), BlockId(1)])); // EP3: {B, A}
        assert_eq!(bbk(7), BTreeSet::from([BlockId(6), BlockId(1)])); // EP4: {D, A}
    }

    fn assert_golden(set: &ClusterSet) {
        assert_eq!(set.clusters.len(), 2, "expected two clusters: {set:?}");
        let c1 = set.cluster_of("EP1").unwrap();
        let mut m = c1.members.clone();
        m.sort();
        assert_eq!(m, vec!["EP1", "EP2", "EP3"]);
        assert_eq!(c1.common_parent, BlockId(2)); // B
        assert_eq!(
            c1.common_path.blocks,
            vec![BlockId(0), BlockId(1), BlockId(2)] // main → A → B
        );
        let c2 = set.cluster_of("EP4").unwrap();
        assert_eq!(c2.members, vec!["EP4"]);
        assert_eq!(c2.common_parent, BlockId(6)); // D
    }

    #[test]
    fn fig2_strict_is_golden_at_default_seed() {
        let g = fig2_graph();
        let pts = fig2_points();
        let set = cluster_error_points(&pts, &g, 2, ClusterMode::Strict, 0).unwrap();
        assert_golden(&set);
    }

    #[test]
    fn fig2_pivot_literal_merges_through_shared_grandparent() {
        // The literal pairwise-with-pivot rule lets EP4 join through the
        // shared ancestor A whenever the pivot is EP1 or EP3, which is why
        // strict mode exists and is the default.
        let g = fig2_graph();
        let pts = fig2_points();
        let set = cluster_error_points(&pts, &g, 2, ClusterMode::Pivot, 0).unwrap();
        assert_eq!(set.clusters.len(), 1);
        assert_eq!(set.clusters[0].members.len(), 4);
        assert_eq!(set.clusters[0].common_parent, BlockId(1)); // A
        assert_eq!(
            set.clusters[0].common_path.blocks,
            vec![BlockId(0), BlockId(1)] // main → A
        );
    }

    #[test]
    fn k_zero_all_singletons() {
        let g = fig2_graph();
        let pts = fig2_points();
        for mode in [ClusterMode::Strict, ClusterMode::Pivot] {
            let set = cluster_error_points(&pts, &g, 0, mode, 0).unwrap();
            assert_eq!(set.clusters.len(), 4);
            for c in &set.clusters {
                assert_eq!(c.members.len(), 1);
                let p = pts.iter().find(|p| p.label == c.members[0]).unwrap();
                assert_eq!(c.common_parent, p.block, "k=0 parent is the block itself");
            }
        }
    }

    #[test]
    fn same_path_judgments() {
        let g = fig2_graph();
        assert!(same_path(&g, BlockId(3), BlockId(4))); // EP1 → EP2
        assert!(same_path(&g, BlockId(4), BlockId(3))); // either direction
        assert!(same_path(&g, BlockId(3), BlockId(3)));
        assert!(!same_path(&g, BlockId(3), BlockId(7))); // EP1 vs EP4
        assert!(!same_path(&g, BlockId(3), BlockId(5))); // siblings
    }

    #[test]
    fn partition_property() {
        let g = fig2_graph();
        let pts = fig2_points();
        for seed in 0..16 {
            for mode in [ClusterMode::Strict, ClusterMode::Pivot] {
                let set = cluster_error_points(&pts, &g, 2, mode, seed).unwrap();
                let mut seen = BTreeSet::new();
                for c in &set.clusters {
                    for m in &c.members {
                        assert!(seen.insert(m.clone()), "{m} appears twice");
                    }
                }
                assert_eq!(seen.len(), pts.len());
            }
        }
    }

    #[test]
    fn strict_invariant_holds() {
        let g = fig2_graph();
        let pts = fig2_points();
        for seed in 0..16 {
            let set = cluster_error_points(&pts, &g, 2, ClusterMode::Strict, seed).unwrap();
            for c in &set.clusters {
                for m in &c.members {
                    let b = pts.iter().find(|p| &p.label == m).unwrap().block;
                    let ok = c.common_parent == b
                        || g.k_hop_ancestors(b, 2).unwrap().contains(&c.common_parent);
                    assert!(ok, "member {m} farther than k from parent");
                }
            }
        }
    }

    #[test]
    fn longest_common_path_prefix() {
        let p1 = PathSpec::new(vec![BlockId(0), BlockId(1), BlockId(2), BlockId(3)]);
        let p2 = PathSpec::new(vec![BlockId(0), BlockId(1), BlockId(2), BlockId(5)]);
        let p3 = PathSpec::new(vec![BlockId(0), BlockId(1), BlockId(6)]);
        assert_eq!(
            longest_common_path(&[p1.clone(), p2, p3]).blocks,
            vec![BlockId(0), BlockId(1)]
        );
        assert_eq!(longest_common_path(std::slice::from_ref(&p1)).blocks, p1.blocks);
    }
}
