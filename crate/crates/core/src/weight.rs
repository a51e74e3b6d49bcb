//! Cluster weighting: rank clusters by uncovered-point count and proximity
//! to the current execution path, then pick the next concolic target.
//!
//! The weight is w1·(uncovered/max-uncovered) + w2·proximity with
//! proximity = 1/(1+d), d the path distance to the cluster's common parent.
//! A `raw` distance term is available for ablation: it adds the unnormalized
//! distance itself, which is the published formula read literally.

use crate::cfg::{Cfg, CfgError, PathSpec};
use crate::cluster::ClusterSet;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub w1: f64,
    pub w2: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeightError {
    #[error("weights must be non-negative with a positive sum")]
    BadWeights,
}

impl WeightConfig {
    /// Normalizes raw weights so w1 + w2 = 1.
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail validation
    pub fn new(w1: f64, w2: f64) -> Result<WeightConfig, WeightError> {
        if !(w1 >= 0.0) || !(w2 >= 0.0) || w1 + w2 <= 0.0 {
            return Err(WeightError::BadWeights);
        }
        let sum = w1 + w2;
        Ok(WeightConfig {
            w1: w1 / sum,
            w2: w2 / sum,
        })
    }
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig { w1: 0.5, w2: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceTerm {
    Proximity,
    Raw,
}

impl std::str::FromStr for DistanceTerm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proximity" => Ok(DistanceTerm::Proximity),
            "raw" => Ok(DistanceTerm::Raw),
            other => Err(format!("unknown distance term `{other}`")),
        }
    }
}

impl std::fmt::Display for DistanceTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistanceTerm::Proximity => "proximity",
            DistanceTerm::Raw => "raw",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterScore {
    pub cluster_id: u32,
    /// Uncovered members.
    pub ep_num: u32,
    /// Path distance to the common parent; `None` when no path block
    /// reaches it.
    pub raw_distance: Option<u32>,
    pub proximity: f64,
    pub weight: f64,
}

/// Scores every cluster that still has an uncovered member; fully covered
/// clusters are omitted. An empty result signals campaign completion.
pub fn score_clusters(
    clusters: &ClusterSet,
    current_path: &PathSpec,
    covered: &BTreeSet<String>,
    cfg: &Cfg,
    wc: &WeightConfig,
    term: DistanceTerm,
) -> Result<Vec<ClusterScore>, CfgError> {
    let uncovered: Vec<(u32, u32)> = clusters
        .clusters
        .iter()
        .map(|c| {
            let n = c.members.iter().filter(|m| !covered.contains(*m)).count() as u32;
            (c.id, n)
        })
        .filter(|&(_, n)| n > 0)
        .collect();
    let max_ep = uncovered.iter().map(|&(_, n)| n).max().unwrap_or(1);

    let mut scores = Vec::with_capacity(uncovered.len());
    for (id, ep_num) in uncovered {
        let cluster = &clusters.clusters[id as usize];
        let raw_distance = cfg.path_distance(current_path, cluster.common_parent)?;
        let proximity = match raw_distance {
            Some(d) => 1.0 / (1.0 + d as f64),
            None => 0.0,
        };
        let weight = match term {
            DistanceTerm::Proximity => {
                wc.w1 * (ep_num as f64 / max_ep as f64) + wc.w2 * proximity
            }
            DistanceTerm::Raw => {
                wc.w1 * ep_num as f64 + wc.w2 * raw_distance.unwrap_or(0) as f64
            }
        };
        scores.push(ClusterScore {
            cluster_id: id,
            ep_num,
            raw_distance,
            proximity,
            weight,
        });
    }
    Ok(scores)
}

/// Argmax by weight, ties to the smaller cluster id. `None` means every
/// cluster is covered: the campaign-complete signal.
pub fn select_next_cluster(scores: &[ClusterScore]) -> Option<u32> {
    scores
        .iter()
        .max_by(|a, b| {
            a.weight
                .partial_cmp(&b.weight)
                .expect("weights are finite")
                .then(b.cluster_id.cmp(&a.cluster_id))
        })
        .map(|s| s.cluster_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::BlockId;
    use crate::cluster::Cluster;

    fn fig2() -> (Cfg, ClusterSet) {
        use crate::cfg::{Edge, EdgeKind};
        let edge = |from: u32, to: u32| Edge {
            from: BlockId(from),
            to: BlockId(to),
            kind: EdgeKind::Unconditional,
        };
        let cfg = Cfg::new(
            vec![
                "main".into(),
                "A".into(),
                "B".into(),
                "EP1".into(),
                "EP2".into(),
                "EP3".into(),
                "D".into(),
                "EP4".into(),
                "E".into(),
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
        .unwrap();
        let clusters = ClusterSet {
            clusters: vec![
                Cluster {
                    id: 0,
                    members: vec!["EP1".into(), "EP2".into(), "EP3".into()],
                    common_parent: BlockId(2), // B
                    common_path: PathSpec::new(vec![BlockId(0), BlockId(1), BlockId(2)]),
                },
                Cluster {
                    id: 1,
                    members: vec!["EP4".into()],
                    common_parent: BlockId(6), // D
                    common_path: PathSpec::new(vec![BlockId(0), BlockId(1), BlockId(6)]),
                },
            ],
            k: 2,
            mode: crate::cluster::ClusterMode::Strict,
            seed: 0,
        };
        (cfg, clusters)
    }

    /// Current path main→A→D→E with no coverage: cluster 0 scores
    /// 0.5·1.0 + 0.5·0.5 = 0.75, cluster 1 scores 0.5/3 + 0.5 ≈ 0.6667.
    #[test]
    fn worked_example_weights() {
        let (cfg, clusters) = fig2();
        let path = PathSpec::new(vec![BlockId(0), BlockId(1), BlockId(6), BlockId(8)]);
        let scores = score_clusters(
            &clusters,
            &path,
            &BTreeSet::new(),
            &cfg,
            &WeightConfig::default(),
            DistanceTerm::Proximity,
        )
        .unwrap();
        assert_eq!(scores.len(), 2);
        let s0 = &scores[0];
        assert_eq!((s0.ep_num, s0.raw_distance), (3, Some(1)));
        assert!((s0.proximity - 0.5).abs() < 1e-12);
        assert!((s0.weight - 0.75).abs() < 1e-12);
        let s1 = &scores[1];
        assert_eq!((s1.ep_num, s1.raw_distance), (1, Some(0)));
        assert!((s1.proximity - 1.0).abs() < 1e-12);
        assert!((s1.weight - (0.5 / 3.0 + 0.5)).abs() < 1e-12);
        assert_eq!(select_next_cluster(&scores), Some(0));
    }

    #[test]
    fn covered_members_shrink_ep_num_and_drop_clusters() {
        let (cfg, clusters) = fig2();
        let path = PathSpec::new(vec![BlockId(0)]);
        let covered: BTreeSet<String> =
            ["EP1", "EP2", "EP3"].iter().map(|s| s.to_string()).collect();
        let scores = score_clusters(
            &clusters,
            &path,
            &covered,
            &cfg,
            &WeightConfig::default(),
            DistanceTerm::Proximity,
        )
        .unwrap();
        assert_eq!(scores.len(), 1);
        assert_eq!(scores[0].cluster_id, 1);
    }

    #[test]
    fn all_covered_is_empty() {
        let (cfg, clusters) = fig2();
        let covered: BTreeSet<String> = ["EP1", "EP2", "EP3", "EP4"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let scores = score_clusters(
            &clusters,
            &PathSpec::new(vec![BlockId(0)]),
            &covered,
            &cfg,
            &WeightConfig::default(),
            DistanceTerm::Proximity,
        )
        .unwrap();
        assert!(scores.is_empty());
        assert_eq!(select_next_cluster(&scores), None);
    }

    #[test]
    fn w1_only_orders_by_uncovered_count() {
        let (cfg, clusters) = fig2();
        let wc = WeightConfig::new(1.0, 0.0).unwrap();
        let path = PathSpec::new(vec![BlockId(0), BlockId(1), BlockId(6)]);
        let scores = score_clusters(
            &clusters,
            &path,
            &BTreeSet::new(),
            &cfg,
            &wc,
            DistanceTerm::Proximity,
        )
        .unwrap();
        assert_eq!(select_next_cluster(&scores), Some(0), "larger cluster wins");
    }

    #[test]
    fn selection_invariant_under_rescaling_and_permutation() {
        let (cfg, clusters) = fig2();
        let path = PathSpec::new(vec![BlockId(0), BlockId(1), BlockId(6), BlockId(8)]);
        let base = score_clusters(
            &clusters,
            &path,
            &BTreeSet::new(),
            &cfg,
            &WeightConfig::default(),
            DistanceTerm::Proximity,
        )
        .unwrap();
        // Raw (0.3, 0.3) normalizes to (0.5, 0.5): same selection.
        let rescaled = score_clusters(
            &clusters,
            &path,
            &BTreeSet::new(),
            &cfg,
            &WeightConfig::new(0.3, 0.3).unwrap(),
            DistanceTerm::Proximity,
        )
        .unwrap();
        assert_eq!(select_next_cluster(&base), select_next_cluster(&rescaled));
        let mut permuted = base.clone();
        permuted.reverse();
        assert_eq!(select_next_cluster(&base), select_next_cluster(&permuted));
    }

    #[test]
    fn weights_normalize_and_validate() {
        let wc = WeightConfig::new(2.0, 2.0).unwrap();
        assert!((wc.w1 - 0.5).abs() < 1e-12);
        assert!(WeightConfig::new(-1.0, 2.0).is_err());
        assert!(WeightConfig::new(0.0, 0.0).is_err());
    }

    #[test]
    fn covering_a_member_never_raises_the_weight() {
        let (cfg, clusters) = fig2();
        let path = PathSpec::new(vec![BlockId(0), BlockId(1), BlockId(6), BlockId(8)]);
        let weight_of = |covered: &BTreeSet<String>| -> f64 {
            score_clusters(
                &clusters,
                &path,
                covered,
                &cfg,
                &WeightConfig::default(),
                DistanceTerm::Proximity,
            )
            .unwrap()
            .iter()
            .find(|s| s.cluster_id == 0)
            .map(|s| s.weight)
            .unwrap_or(0.0)
        };
        let before = weight_of(&BTreeSet::new());
        let after = weight_of(&BTreeSet::from(["EP1".to_string()]));
        assert!(after <= before, "{after} > {before}");
    }

    /// The literal published formula adds the raw distance, which prefers
    /// clusters *farther* from the current path; exposed for ablation.
    #[test]
    fn raw_distance_term_is_the_literal_formula() {
        let (cfg, clusters) = fig2();
        let path = PathSpec::new(vec![BlockId(0), BlockId(1), BlockId(6), BlockId(8)]);
        let scores = score_clusters(
            &clusters,
            &path,
            &BTreeSet::new(),
            &cfg,
            &WeightConfig::default(),
            DistanceTerm::Raw,
        )
        .unwrap();
        // w1·EPNum + w2·distance: cluster 0 → 0.5·3 + 0.5·1 = 2.0,
        // cluster 1 → 0.5·1 + 0.5·0 = 0.5.
        assert!((scores[0].weight - 2.0).abs() < 1e-12);
        assert!((scores[1].weight - 0.5).abs() < 1e-12);
        assert_eq!(select_next_cluster(&scores), Some(0));
    }
}
