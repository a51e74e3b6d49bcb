//! Benchmark grid: (target × mode × sweep value × repeat) campaign cells run
//! in parallel, each writing its own artifact directory, plus a median
//! summary table.

use crate::campaign::{load_target, run_campaign, write_outputs};
use crate::config::{CampaignConfig, Mode};
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub target: String,
    pub mode: String,
    pub sweep_param: Option<String>,
    pub sweep_value: Option<String>,
    pub repeat: u32,
    pub rng_seed: u64,
    pub executions: u64,
    pub branch_edges: u64,
    pub error_sequences: u64,
    pub bugs: u64,
    /// Executions until every ground-truth-known error point was
    /// fault-covered at least once; here: until the last first-cover event.
    pub last_first_cover: Option<u64>,
    pub covered_points: u64,
    pub cell_dir: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub target: String,
    pub mode: String,
    pub sweep_param: Option<String>,
    pub sweep_value: Option<String>,
    pub median_error_sequences: u64,
    pub median_bugs: u64,
    pub median_covered_points: u64,
    pub median_last_first_cover: Option<u64>,
    pub repeats: u32,
}

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub targets: Vec<PathBuf>,
    pub modes: Vec<Mode>,
    /// (param name, values); currently `k` and `mutate-threshold` sweep.
    pub sweep: Option<(String, Vec<String>)>,
    pub base: CampaignConfig,
}

pub fn parse_sweep(text: &str) -> Result<(String, Vec<String>)> {
    let (param, values) = text
        .split_once('=')
        .ok_or_else(|| anyhow::anyhow!("sweep must be <param>=<v1,v2,...>"))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    match param {
        "k" | "mutate-threshold" | "w1" | "solve-cost" => {}
        other => bail!("unsupported sweep parameter `{other}`"),
    }
    Ok((param.to_string(), values))
}

fn apply_sweep(config: &mut CampaignConfig, param: &str, value: &str) -> Result<()> {
    match param {
        "k" => config.k = value.parse()?,
        "mutate-threshold" => config.mutate_threshold = value.parse()?,
        "w1" => {
            config.w1 = value.parse()?;
            config.w2 = 1.0 - config.w1;
        }
        "solve-cost" => config.solve_cost = value.parse()?,
        other => bail!("unsupported sweep parameter `{other}`"),
    }
    Ok(())
}

pub fn median_u64(values: &mut [u64]) -> u64 {
    values.sort_unstable();
    values[values.len() / 2]
}

/// Runs the full grid under `out_dir` and returns (cells, summary).
pub fn run_bench(plan: &BenchPlan, out_dir: &Path) -> Result<(Vec<CellResult>, Vec<SummaryRow>)> {
    std::fs::create_dir_all(out_dir)?;
    let sweep_values: Vec<Option<(String, String)>> = match &plan.sweep {
        None => vec![None],
        Some((param, values)) => values
            .iter()
            .map(|v| Some((param.clone(), v.clone())))
            .collect(),
    };

    // Build the cell list first so workers share nothing.
    struct CellSpec {
        target: PathBuf,
        mode: Mode,
        sweep: Option<(String, String)>,
        repeat: u32,
    }
    let mut cells = Vec::new();
    for target in &plan.targets {
        for &mode in &plan.modes {
            for sweep in &sweep_values {
                for repeat in 0..plan.base.repeats {
                    cells.push(CellSpec {
                        target: target.clone(),
                        mode,
                        sweep: sweep.clone(),
                        repeat,
                    });
                }
            }
        }
    }

    let results: Result<Vec<CellResult>> = cells
        .par_iter()
        .map(|cell| -> Result<CellResult> {
            let mut config = plan.base.clone();
            config.mode = cell.mode;
            config.repeats = 1;
            if let Some((param, value)) = &cell.sweep {
                apply_sweep(&mut config, param, value)?;
            }
            config.rng_seed = plan.base.rng_seed.wrapping_add(cell.repeat as u64);
            let target = load_target(&cell.target, config.context_depth)?;
            let outcome = run_campaign(&target, &config)?;
            let target_name = cell
                .target
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "target".into());
            let cell_name = match &cell.sweep {
                Some((p, v)) => format!("{target_name}__{}__{p}{v}__r{}", cell.mode, cell.repeat),
                None => format!("{target_name}__{}__r{}", cell.mode, cell.repeat),
            };
            let cell_dir = out_dir.join(&cell_name);
            write_outputs(&cell_dir, &outcome)
                .with_context(|| format!("writing cell {cell_name}"))?;
            Ok(CellResult {
                target: target_name,
                mode: cell.mode.to_string(),
                sweep_param: cell.sweep.as_ref().map(|(p, _)| p.clone()),
                sweep_value: cell.sweep.as_ref().map(|(_, v)| v.clone()),
                repeat: cell.repeat,
                rng_seed: config.rng_seed,
                executions: outcome.fuzz.executions,
                branch_edges: outcome.fuzz.ledger.branch_edges.len() as u64,
                error_sequences: outcome.fuzz.ledger.error_sequences.len() as u64,
                bugs: outcome.fuzz.bugs.len() as u64,
                last_first_cover: outcome.fuzz.first_fault_cover.values().max().copied(),
                covered_points: outcome.fuzz.first_fault_cover.len() as u64,
                cell_dir: cell_name,
            })
        })
        .collect();
    let mut results = results?;
    results.sort_by(|a, b| {
        (
            &a.target,
            &a.mode,
            &a.sweep_param,
            &a.sweep_value,
            a.repeat,
        )
            .cmp(&(&b.target, &b.mode, &b.sweep_param, &b.sweep_value, b.repeat))
    });

    // Medians over repeats.
    let mut summary: Vec<SummaryRow> = Vec::new();
    let mut i = 0;
    while i < results.len() {
        let key = (
            results[i].target.clone(),
            results[i].mode.clone(),
            results[i].sweep_param.clone(),
            results[i].sweep_value.clone(),
        );
        let mut errs = Vec::new();
        let mut bug_counts = Vec::new();
        let mut covered = Vec::new();
        let mut first_cover = Vec::new();
        let mut j = i;
        while j < results.len()
            && (
                results[j].target.clone(),
                results[j].mode.clone(),
                results[j].sweep_param.clone(),
                results[j].sweep_value.clone(),
            ) == key
        {
            errs.push(results[j].error_sequences);
            bug_counts.push(results[j].bugs);
            covered.push(results[j].covered_points);
            if let Some(fc) = results[j].last_first_cover {
                first_cover.push(fc);
            }
            j += 1;
        }
        summary.push(SummaryRow {
            target: key.0,
            mode: key.1,
            sweep_param: key.2,
            sweep_value: key.3,
            median_error_sequences: median_u64(&mut errs),
            median_bugs: median_u64(&mut bug_counts),
            median_covered_points: median_u64(&mut covered),
            median_last_first_cover: if first_cover.is_empty() {
                None
            } else {
                Some(median_u64(&mut first_cover))
            },
            repeats: (j - i) as u32,
        });
        i = j;
    }

    // Persist the tables.
    let mut cells_csv = String::from(
        "target,mode,sweep_param,sweep_value,repeat,rng_seed,executions,branch_edges,error_sequences,bugs,covered_points,last_first_cover,cell_dir\n",
    );
    for r in &results {
        cells_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.target,
            r.mode,
            r.sweep_param.as_deref().unwrap_or(""),
            r.sweep_value.as_deref().unwrap_or(""),
            r.repeat,
            r.rng_seed,
            r.executions,
            r.branch_edges,
            r.error_sequences,
            r.bugs,
            r.covered_points,
            r.last_first_cover.map(|v| v.to_string()).unwrap_or_default(),
            r.cell_dir
        ));
    }
    std::fs::write(out_dir.join("cells.csv"), cells_csv)?;
    let mut summary_csv = String::from(
        "target,mode,sweep_param,sweep_value,repeats,median_error_sequences,median_bugs,median_covered_points,median_last_first_cover\n",
    );
    for s in &summary {
        summary_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.target,
            s.mode,
            s.sweep_param.as_deref().unwrap_or(""),
            s.sweep_value.as_deref().unwrap_or(""),
            s.repeats,
            s.median_error_sequences,
            s.median_bugs,
            s.median_covered_points,
            s.median_last_first_cover
                .map(|v| v.to_string())
                .unwrap_or_default()
        ));
    }
    std::fs::write(out_dir.join("summary.csv"), summary_csv)?;
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "cells": results,
            "summary": summary,
        }))?,
    )?;
    Ok((results, summary))
}
