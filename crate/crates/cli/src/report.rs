//! Report aggregation: folds a bench directory's cell CSVs into one summary
//! JSON, optionally rendering simple SVG coverage curves.

use anyhow::{Context, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct CellSeries {
    pub cell: String,
    pub rows: Vec<(u64, u64)>,
    pub final_error_sequences: u64,
    pub final_branch_edges: u64,
    pub final_bugs: u64,
}

/// Reads every `*/series.csv` under the bench directory.
pub fn collect_series(bench_dir: &Path) -> Result<Vec<CellSeries>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(bench_dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let csv = entry.path().join("series.csv");
        if !csv.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&csv)
            .with_context(|| format!("reading {}", csv.display()))?;
        let mut rows = Vec::new();
        let mut last = (0u64, 0u64, 0u64);
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                continue;
            }
            let execs: u64 = cols[0].parse().unwrap_or(0);
            let edges: u64 = cols[2].parse().unwrap_or(0);
            let seqs: u64 = cols[3].parse().unwrap_or(0);
            let bugs: u64 = cols[4].parse().unwrap_or(0);
            rows.push((execs, seqs));
            last = (edges, seqs, bugs);
        }
        out.push(CellSeries {
            cell: entry.file_name().to_string_lossy().to_string(),
            rows,
            final_branch_edges: last.0,
            final_error_sequences: last.1,
            final_bugs: last.2,
        });
    }
    out.sort_by(|a, b| a.cell.cmp(&b.cell));
    Ok(out)
}

/// Aggregated report: per-cell finals plus per (target, mode) curve groups.
pub fn write_report(bench_dir: &Path, out_file: &Path, plot_dir: Option<&Path>) -> Result<()> {
    let cells = collect_series(bench_dir)?;
    let mut groups: BTreeMap<String, Vec<&CellSeries>> = BTreeMap::new();
    for c in &cells {
        // Cell directories are named target__mode[__sweep]__rN.
        let group = c
            .cell
            .rsplit_once("__r")
            .map(|(head, _)| head.to_string())
            .unwrap_or_else(|| c.cell.clone());
        groups.entry(group).or_default().push(c);
    }
    let report = serde_json::json!({
        "cells": cells,
        "groups": groups.iter().map(|(g, cs)| {
            let mut finals: Vec<u64> = cs.iter().map(|c| c.final_error_sequences).collect();
            finals.sort_unstable();
            serde_json::json!({
                "group": g,
                "cells": cs.len(),
                "median_final_error_sequences": finals[finals.len() / 2],
            })
        }).collect::<Vec<_>>(),
    });
    if let Some(parent) = out_file.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(out_file, serde_json::to_string_pretty(&report)?)?;

    if let Some(dir) = plot_dir {
        std::fs::create_dir_all(dir)?;
        for (group, cs) in &groups {
            let svg = plot_group(group, cs);
            std::fs::write(dir.join(format!("{group}.svg")), svg)?;
        }
    }
    Ok(())
}

/// Minimal SVG polyline plot: error sequences over executions, one line per
/// repeat.
fn plot_group(title: &str, cells: &[&CellSeries]) -> String {
    let (w, h, pad) = (640.0f64, 360.0f64, 40.0f64);
    let max_x = cells
        .iter()
        .flat_map(|c| c.rows.iter().map(|r| r.0))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let max_y = cells
        .iter()
        .flat_map(|c| c.rows.iter().map(|r| r.1))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n<text x=\"{}\" y=\"20\" font-family=\"monospace\" font-size=\"13\">{title}: error sequences vs executions</text>\n",
        pad
    );
    let colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];
    for (i, c) in cells.iter().enumerate() {
        let pts: Vec<String> = c
            .rows
            .iter()
            .map(|&(x, y)| {
                let px = pad + (x as f64 / max_x) * (w - 2.0 * pad);
                let py = h - pad - (y as f64 / max_y) * (h - 2.0 * pad);
                format!("{px:.1},{py:.1}")
            })
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            colors[i % colors.len()],
            pts.join(" ")
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>\n<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{max_x}</text>\n<text x=\"6\" y=\"{pad}\" font-family=\"monospace\" font-size=\"11\">{max_y}</text>\n</svg>\n",
        h - pad,
        w - pad,
        h - pad,
        h - pad,
        w - pad - 30.0,
        h - pad + 14.0,
    ));
    svg
}
