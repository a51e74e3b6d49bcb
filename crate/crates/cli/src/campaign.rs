//! One campaign: load a target, extract and cluster its error points, wire
//! up the mode (full pipeline, k=0 baseline, or scheduler-free fuzzing), run
//! the loop, and collect artifacts.

use crate::config::{CampaignConfig, Mode};
use anyhow::{Context, Result};
use huntfuzz_core::cluster::cluster_error_points;
use huntfuzz_core::extract::{extract_candidates, locate_points, ErrorPoint};
use huntfuzz_core::fuzz::{fuzz_loop, series_csv, BugReport, FuzzConfig, FuzzOutcome, Seed};
use huntfuzz_core::ir::load_program;
use huntfuzz_core::sched::{Scheduler, SchedulerConfig};
use huntfuzz_core::vm::Target;
use huntfuzz_core::weight::WeightConfig;
use std::path::Path;
use std::sync::Arc;

/// Default initial seed: 64 zero bytes.
pub fn default_seed() -> Seed {
    Seed::initial(vec![0u8; 64])
}

pub struct CampaignOutcome {
    pub fuzz: FuzzOutcome,
    pub decisions_jsonl: String,
    pub unsolvable: Vec<u32>,
    pub realistic_points: usize,
    pub clusters: usize,
}

pub fn load_target(path: &Path, context_depth: u32) -> Result<Arc<Target>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading target {}", path.display()))?;
    let program = load_program(&text).with_context(|| format!("loading {}", path.display()))?;
    let target = Target::with_options(
        program,
        context_depth,
        huntfuzz_core::derive::DEFAULT_BLOCK_BUDGET,
    )
    .with_context(|| format!("deriving supergraph for {}", path.display()))?;
    Ok(Arc::new(target))
}

/// Extracts candidates and keeps the realistic ones (after optional
/// overrides).
pub fn realistic_points(target: &Target, overrides: Option<&str>) -> Result<Vec<ErrorPoint>> {
    let mut eps = extract_candidates(&target.program);
    if let Some(text) = overrides {
        huntfuzz_core::extract::apply_overrides(&mut eps, text)
            .map_err(|e| anyhow::anyhow!("override file: {e}"))?;
    }
    eps.retain(|e| e.realistic);
    Ok(eps)
}

/// Runs one campaign on an already-loaded target.
pub fn run_campaign(target: &Arc<Target>, config: &CampaignConfig) -> Result<CampaignOutcome> {
    config.validate()?;
    let eps = realistic_points(target, None)?;
    let located = locate_points(&target.sg, &target.program, &eps);

    let k = match config.mode {
        Mode::BaselineK0 => 0,
        _ => config.k,
    };
    let scheduler = match config.mode {
        Mode::NoConcolic => None,
        Mode::Huntfuzz | Mode::BaselineK0 => {
            let clusters = cluster_error_points(
                &located,
                target.cfg(),
                k,
                config.clustering_mode,
                config.rng_seed,
            )?;
            let sched_config = SchedulerConfig {
                mutate_threshold: config.mutate_threshold,
                weights: WeightConfig::new(config.w1, config.w2)
                    .map_err(|e| anyhow::anyhow!("{e}"))?,
                distance_term: config.distance_term,
                ..SchedulerConfig::default()
            };
            Some(Scheduler::new(Arc::clone(target), clusters, sched_config))
        }
    };
    let n_clusters = scheduler
        .as_ref()
        .map(|s| s.clusters.clusters.len())
        .unwrap_or(0);

    let fuzz_config = FuzzConfig {
        rng_seed: config.rng_seed,
        context_insensitive: config.context_insensitive,
        solve_cost: config.solve_cost,
        sample_every: config.sample_every,
        ..FuzzConfig::default()
    };
    let mut sched = scheduler;
    let fuzz = fuzz_loop(
        target,
        vec![default_seed()],
        config.budget,
        sched.as_mut(),
        &fuzz_config,
    )?;

    Ok(CampaignOutcome {
        fuzz,
        decisions_jsonl: sched
            .as_ref()
            .map(|s| s.decision_log_jsonl())
            .unwrap_or_default(),
        unsolvable: sched
            .as_ref()
            .map(|s| s.unsolvable_clusters().iter().copied().collect())
            .unwrap_or_default(),
        realistic_points: eps.len(),
        clusters: n_clusters,
    })
}

/// Writes campaign artifacts: time series, bug reports, reproducers, the
/// scheduler decision log, and a one-object summary.
pub fn write_outputs(out_dir: &Path, outcome: &CampaignOutcome) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("series.csv"), series_csv(&outcome.fuzz.series))?;
    let bugs_jsonl: String = outcome
        .fuzz
        .bugs
        .iter()
        .map(|b| serde_json::to_string(b).expect("bug serializes"))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(out_dir.join("bugs.jsonl"), bugs_jsonl)?;
    for bug in &outcome.fuzz.bugs {
        std::fs::write(out_dir.join(format!("{}.repro", bug.bug)), repro_text(bug))?;
    }
    if !outcome.decisions_jsonl.is_empty() {
        std::fs::write(out_dir.join("decisions.jsonl"), &outcome.decisions_jsonl)?;
    }
    let summary = serde_json::json!({
        "executions": outcome.fuzz.executions,
        "branch_edges": outcome.fuzz.ledger.branch_edges.len(),
        "error_sequences": outcome.fuzz.ledger.error_sequences.len(),
        "bugs": outcome.fuzz.bugs.len(),
        "realistic_points": outcome.realistic_points,
        "clusters": outcome.clusters,
        "unsolvable_clusters": outcome.unsolvable,
        "first_fault_cover": outcome.fuzz.first_fault_cover,
    });
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(())
}

pub fn repro_text(bug: &BugReport) -> String {
    format!(
        "bug {}\ninput {}\nerrseq {}\n",
        bug.bug, bug.input_hex, bug.error_seq
    )
}

pub struct Repro {
    pub bug: String,
    pub input: Vec<u8>,
    pub error_seq: huntfuzz_core::ErrorSequence,
}

pub fn parse_repro(text: &str) -> Result<Repro> {
    let mut bug = None;
    let mut input = None;
    let mut error_seq = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(v) = line.strip_prefix("bug ") {
            bug = Some(v.trim().to_string());
        } else if let Some(v) = line.strip_prefix("input") {
            input = Some(
                huntfuzz_core::fuzz::hex_decode(v.trim())
                    .ok_or_else(|| anyhow::anyhow!("bad input hex"))?,
            );
        } else if let Some(v) = line.strip_prefix("errseq") {
            error_seq = Some(
                huntfuzz_core::ErrorSequence::from_bits_string(v.trim())
                    .ok_or_else(|| anyhow::anyhow!("bad error-sequence bits"))?,
            );
        }
    }
    Ok(Repro {
        bug: bug.ok_or_else(|| anyhow::anyhow!("repro missing `bug` line"))?,
        input: input.unwrap_or_default(),
        error_seq: error_seq.unwrap_or_default(),
    })
}
