//! Concolic scheduler: selects the highest-weight uncovered cluster, solves
//! the constraints of its entry→common-parent path, hands the model to the
//! fuzzer as a test case, and watches traces until the cluster is covered or
//! the per-cluster mutation budget runs out.
//!
//! Termination: a threshold-abandoned cluster is not reselected until every
//! other eligible cluster has been attempted; a full rotation without any
//! new member coverage ends the campaign (the fuzzer keeps running on its
//! own). With finite clusters this bounds scheduler activity by
//! clusters × (threshold + 1) fuzzer inputs per rotation.

use crate::cfg::PathSpec;
use crate::cluster::ClusterSet;
use crate::constraint::ByteConstraint;
use crate::solve::{solve, SolveResult, DEFAULT_SOLVE_BUDGET};
use crate::symbolic::path_constraints;
use crate::vm::{ExecutionTrace, Target};
use crate::weight::{score_clusters, select_next_cluster, DistanceTerm, WeightConfig};
use serde::Serialize;
use std::collections::BTreeSet;
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_MUTATE_THRESHOLD: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchedulerConfig {
    pub mutate_threshold: u32,
    pub weights: WeightConfig,
    pub distance_term: DistanceTerm,
    /// Candidate-assignment budget per solve call.
    pub solve_budget: u64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            mutate_threshold: DEFAULT_MUTATE_THRESHOLD,
            weights: WeightConfig::default(),
            distance_term: DistanceTerm::Proximity,
            solve_budget: DEFAULT_SOLVE_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Selecting,
    AwaitingCoverage(u32),
    Complete,
}

pub enum SchedEvent<'a> {
    CampaignStart,
    FuzzerInput(&'a ExecutionTrace),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchedAction {
    /// Hand this input to the fuzzer with high priority.
    EmitTestCase(Vec<u8>),
    /// Nothing left to target.
    CampaignComplete,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("fuzzer input before campaign start")]
    NotStarted,
    #[error("campaign already started")]
    AlreadyStarted,
    #[error("event after campaign completion")]
    Finished,
}

/// One scheduler transition, loggable as a JSON line. The timestamp is the
/// deterministic event counter, so transcripts replay byte-identically.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub t: u64,
    pub phase: String,
    pub cluster: Option<u32>,
    pub count: u32,
    pub action: String,
}

/// Precomputed per-cluster solving state.
struct ClusterTarget {
    /// Conjunction along entry→common-parent, `None` when the path crosses
    /// an opaque edge or a summary node (unsolvable by construction).
    constraint: Option<ByteConstraint>,
}

pub struct Scheduler {
    target: Arc<Target>,
    pub clusters: ClusterSet,
    config: SchedulerConfig,
    cluster_targets: Vec<ClusterTarget>,
    phase: Phase,
    cur_mutation_count: u32,
    covered: BTreeSet<String>,
    unsolvable: BTreeSet<u32>,
    attempted: BTreeSet<u32>,
    progress_in_rotation: bool,
    decisions: Vec<Decision>,
    events: u64,
    /// solve() invocations so far; the fuzzer charges these against its
    /// execution budget.
    pub solves: u64,
}

impl Scheduler {
    pub fn new(target: Arc<Target>, clusters: ClusterSet, config: SchedulerConfig) -> Scheduler {
        let cfg = target.cfg();
        let cluster_targets = clusters
            .clusters
            .iter()
            .map(|c| {
                let path = match cfg.canonical_entry_path(c.common_parent) {
                    Ok(Some(p)) => p,
                    _ => {
                        return ClusterTarget { constraint: None };
                    }
                };
                let crosses_summary = path
                    .blocks
                    .iter()
                    .any(|b| target.sg.nodes[b.index()].summary_of.is_some());
                if crosses_summary {
                    return ClusterTarget { constraint: None };
                }
                ClusterTarget {
                    constraint: path_constraints(cfg, &path).ok(),
                }
            })
            .collect();
        Scheduler {
            target,
            clusters,
            config,
            cluster_targets,
            phase: Phase::Idle,
            cur_mutation_count: 0,
            covered: BTreeSet::new(),
            unsolvable: BTreeSet::new(),
            attempted: BTreeSet::new(),
            progress_in_rotation: false,
            decisions: Vec::new(),
            events: 0,
            solves: 0,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_complete(&self) -> bool {
        self.phase == Phase::Complete
    }

    pub fn covered_labels(&self) -> &BTreeSet<String> {
        &self.covered
    }

    pub fn unsolvable_clusters(&self) -> &BTreeSet<u32> {
        &self.unsolvable
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn decision_log_jsonl(&self) -> String {
        self.decisions
            .iter()
            .map(|d| serde_json::to_string(d).expect("decision serializes"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn log(&mut self, phase: &str, cluster: Option<u32>, action: &str) {
        self.decisions.push(Decision {
            t: self.events,
            phase: phase.to_string(),
            cluster,
            count: self.cur_mutation_count,
            action: action.to_string(),
        });
    }

    pub fn step(&mut self, event: SchedEvent) -> Result<Vec<SchedAction>, ProtocolError> {
        self.events += 1;
        match (event, self.phase) {
            (_, Phase::Complete) => Err(ProtocolError::Finished),
            (SchedEvent::CampaignStart, Phase::Idle) => {
                self.log("idle", None, "start");
                let entry_path = PathSpec::new(vec![self.target.cfg().entry()]);
                Ok(self.select(&entry_path))
            }
            (SchedEvent::CampaignStart, _) => Err(ProtocolError::AlreadyStarted),
            (SchedEvent::FuzzerInput(_), Phase::Idle) => Err(ProtocolError::NotStarted),
            (SchedEvent::FuzzerInput(trace), Phase::AwaitingCoverage(cluster)) => {
                self.cur_mutation_count += 1;
                self.absorb_coverage(trace);
                let members_covered = self.clusters.clusters[cluster as usize]
                    .members
                    .iter()
                    .all(|m| self.covered.contains(m));
                if members_covered {
                    self.log("awaiting", Some(cluster), "covered");
                    Ok(self.select(&trace.path_spec()))
                } else if self.cur_mutation_count > self.config.mutate_threshold {
                    self.log("awaiting", Some(cluster), "abandoned");
                    Ok(self.select(&trace.path_spec()))
                } else {
                    Ok(Vec::new())
                }
            }
            (SchedEvent::FuzzerInput(_), Phase::Selecting) => {
                unreachable!("selecting resolves within a step")
            }
        }
    }

    /// Marks members fault-covered by this trace's injected encounters.
    fn absorb_coverage(&mut self, trace: &ExecutionTrace) {
        for e in &trace.encounters {
            if e.injected {
                let label = &self.target.ep_labels[e.ep as usize];
                if self.covered.insert(label.clone()) {
                    self.progress_in_rotation = true;
                }
            }
        }
    }

    /// Picks the next cluster, solving until an emission or completion.
    fn select(&mut self, current_path: &PathSpec) -> Vec<SchedAction> {
        self.phase = Phase::Selecting;
        self.cur_mutation_count = 0;
        loop {
            let scores = score_clusters(
                &self.clusters,
                current_path,
                &self.covered,
                self.target.cfg(),
                &self.config.weights,
                self.config.distance_term,
            )
            .expect("cluster parents are graph members");
            let eligible: Vec<_> = scores
                .into_iter()
                .filter(|s| {
                    !self.unsolvable.contains(&s.cluster_id)
                        && !self.attempted.contains(&s.cluster_id)
                })
                .collect();
            let Some(pick) = select_next_cluster(&eligible) else {
                if self.progress_in_rotation && !self.attempted.is_empty() {
                    // Something was covered this rotation: abandoned
                    // clusters deserve another pass.
                    self.attempted.clear();
                    self.progress_in_rotation = false;
                    continue;
                }
                self.phase = Phase::Complete;
                self.log("selecting", None, "complete");
                return vec![SchedAction::CampaignComplete];
            };
            let constraint = self.cluster_targets[pick as usize].constraint.clone();
            let result = match &constraint {
                None => None,
                Some(c) => {
                    self.solves += 1;
                    match solve(c, self.target.max_input, self.config.solve_budget) {
                        SolveResult::Sat(input) => Some(input),
                        SolveResult::Unsat | SolveResult::Unknown => None,
                    }
                }
            };
            match result {
                Some(input) => {
                    self.attempted.insert(pick);
                    self.phase = Phase::AwaitingCoverage(pick);
                    self.log("selecting", Some(pick), "emit");
                    return vec![SchedAction::EmitTestCase(input)];
                }
                None => {
                    self.unsolvable.insert(pick);
                    self.log("selecting", Some(pick), "unsolvable");
                }
            }
        }
    }
}
