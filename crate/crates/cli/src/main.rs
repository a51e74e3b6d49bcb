//! `huntfuzz` command line: extract error points, cluster them, run fuzzing
//! campaigns, generate synthetic targets, benchmark campaign modes, and
//! aggregate reports.
//!
//! Exit codes: 0 success, 1 usage error, 2 target error, 3 internal error.

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use huntfuzz_cli::bench::{parse_sweep, run_bench, BenchPlan};
use huntfuzz_cli::campaign::{
    load_target, parse_repro, realistic_points, run_campaign, write_outputs,
};
use huntfuzz_cli::config::{parse_budget, CampaignConfig, Mode};
use huntfuzz_cli::gen::{generate_targets, GeneratorSpec, MotifCounts};
use huntfuzz_cli::report::write_report;
use huntfuzz_core::cluster::{cluster_error_points, cluster_set_json, ClusterMode};
use huntfuzz_core::extract::locate_points;
use huntfuzz_core::vm::{InputBytes, Outcome};
use huntfuzz_core::weight::DistanceTerm;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "huntfuzz", version, about = "SFI fuzzing with clustered error points and concolic common-path solving")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by campaign-running subcommands; they mirror the config
/// file keys and override them.
#[derive(Args, Clone, Default)]
struct CampaignFlags {
    /// Key=value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Campaign mode: huntfuzz | baseline-k0 | no-concolic.
    #[arg(long)]
    mode: Option<String>,
    /// Cluster distance threshold.
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    w1: Option<f64>,
    #[arg(long)]
    w2: Option<f64>,
    #[arg(long = "mutate-threshold")]
    mutate_threshold: Option<u32>,
    /// strict | pivot.
    #[arg(long = "clustering-mode")]
    clustering_mode: Option<String>,
    /// proximity | raw.
    #[arg(long = "distance-term")]
    distance_term: Option<String>,
    /// `<N>execs` or `<S>s`.
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<u32>,
    /// Collapse calling contexts in the error-coverage ledger.
    #[arg(long = "context-insensitive")]
    context_insensitive: bool,
    /// Executions charged per concolic solve.
    #[arg(long = "solve-cost")]
    solve_cost: Option<u64>,
    /// Call-string depth of the derived supergraph.
    #[arg(long = "context-depth")]
    context_depth: Option<u32>,
    /// Emit a time-series sample every N executions.
    #[arg(long = "sample-every")]
    sample_every: Option<u64>,
}

impl CampaignFlags {
    fn build(&self) -> Result<CampaignConfig> {
        let mut config = CampaignConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            config.apply_file(&text)?;
        }
        if let Some(v) = &self.mode {
            config.mode = v.parse::<Mode>().map_err(|e| anyhow!(e))?;
        }
        if let Some(v) = self.k {
            config.k = v;
        }
        if let Some(v) = self.w1 {
            config.w1 = v;
        }
        if let Some(v) = self.w2 {
            config.w2 = v;
        }
        if let Some(v) = self.mutate_threshold {
            config.mutate_threshold = v;
        }
        if let Some(v) = &self.clustering_mode {
            config.clustering_mode = v.parse::<ClusterMode>().map_err(|e| anyhow!(e))?;
        }
        if let Some(v) = &self.distance_term {
            config.distance_term = v.parse::<DistanceTerm>().map_err(|e| anyhow!(e))?;
        }
        if let Some(v) = &self.budget {
            config.budget = parse_budget(v)?;
        }
        if let Some(v) = self.seed {
            config.rng_seed = v;
        }
        if let Some(v) = self.repeats {
            config.repeats = v;
        }
        if self.context_insensitive {
            config.context_insensitive = true;
        }
        if let Some(v) = self.solve_cost {
            config.solve_cost = v;
        }
        if let Some(v) = self.context_depth {
            config.context_depth = v;
        }
        if let Some(v) = self.sample_every {
            config.sample_every = v;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract candidate error points as JSON.
    Extract {
        #[arg(long)]
        target: PathBuf,
        /// Allow/deny override file (one `allow <label>`/`deny <label>` per line).
        #[arg(long)]
        overrides: Option<PathBuf>,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster a target's realistic error points.
    Cluster {
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long = "clustering-mode", default_value = "strict")]
        clustering_mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "context-depth")]
        context_depth: Option<u32>,
        /// ClusterSet JSON output (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the supergraph as DOT here.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Run one fuzzing campaign (or replay a reproducer).
    Fuzz {
        #[arg(long)]
        target: PathBuf,
        #[command(flatten)]
        flags: CampaignFlags,
        /// Output directory for series.csv, bugs, reproducers.
        #[arg(long, default_value = "huntfuzz-out")]
        out: PathBuf,
        /// Replay a `.repro` file instead of fuzzing.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Generate synthetic targets with ground truth.
    Generate {
        #[arg(long, default_value = "targets")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        targets: u32,
        #[arg(long = "switch-dispatch", default_value_t = 1)]
        switch_dispatch: u32,
        #[arg(long, default_value_t = 1)]
        chain: u32,
        #[arg(long = "deep-magic", default_value_t = 1)]
        deep_magic: u32,
        #[arg(long, default_value_t = 1)]
        diamond: u32,
        #[arg(long, default_value_t = 1.0)]
        density: f64,
        #[arg(long = "bug-rate", default_value_t = 0.5)]
        bug_rate: f64,
        #[arg(long = "deep-pad", default_value_t = 64)]
        deep_pad: u32,
        #[arg(long = "magic-width", default_value_t = 4)]
        magic_width: u32,
        #[arg(long, default_value_t = 1)]
        wrappers: u32,
    },
    /// Run a campaign matrix over targets × modes × sweep × repeats.
    Bench {
        /// Directory of `.ir` targets (or a single file).
        #[arg(long)]
        targets: PathBuf,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
        /// Comma-separated campaign modes.
        #[arg(long, default_value = "huntfuzz,no-concolic")]
        modes: String,
        /// Parameter sweep, e.g. `k=0,1,2,4,8`.
        #[arg(long)]
        sweep: Option<String>,
        #[command(flatten)]
        flags: CampaignFlags,
    },
    /// Aggregate a bench directory into a summary JSON (and optional plots).
    Report {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Write per-group SVG coverage curves into this directory.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

/// Error category → exit code.
enum Failure {
    Usage(String),
    Target(anyhow::Error),
    Internal(anyhow::Error),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Target(e)) => {
            eprintln!("target error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Extract {
            target,
            overrides,
            out,
        } => {
            let t = load_target(&target, huntfuzz_core::derive::DEFAULT_CONTEXT_DEPTH)
                .map_err(Failure::Target)?;
            let overrides_text = match &overrides {
                Some(p) => Some(std::fs::read_to_string(p).map_err(|e| {
                    Failure::Target(anyhow!("reading overrides {}: {e}", p.display()))
                })?),
                None => None,
            };
            let mut eps = huntfuzz_core::extract::extract_candidates(&t.program);
            if let Some(text) = &overrides_text {
                huntfuzz_core::extract::apply_overrides(&mut eps, text)
                    .map_err(|e| Failure::Usage(e.to_string()))?;
            }
            let json = serde_json::to_string_pretty(&eps).map_err(|e| Failure::Internal(e.into()))?;
            emit(out.as_deref(), &json).map_err(Failure::Internal)?;
            Ok(())
        }
        Command::Cluster {
            target,
            k,
            clustering_mode,
            seed,
            context_depth,
            out,
            dot,
        } => {
            let mode: ClusterMode = clustering_mode
                .parse()
                .map_err(|e: String| Failure::Usage(e))?;
            let depth = context_depth.unwrap_or(huntfuzz_core::derive::DEFAULT_CONTEXT_DEPTH);
            let t = load_target(&target, depth).map_err(Failure::Target)?;
            let eps = realistic_points(&t, None).map_err(Failure::Target)?;
            let located = locate_points(&t.sg, &t.program, &eps);
            let set = cluster_error_points(&located, t.cfg(), k, mode, seed)
                .map_err(|e| Failure::Internal(e.into()))?;
            let json = serde_json::to_string_pretty(&cluster_set_json(&set, t.cfg()))
                .map_err(|e| Failure::Internal(e.into()))?;
            emit(out.as_deref(), &json).map_err(Failure::Internal)?;
            if let Some(dot_path) = dot {
                std::fs::write(&dot_path, cluster_overlay_dot(t.cfg(), &set, &located))
                    .map_err(|e| Failure::Internal(e.into()))?;
            }
            Ok(())
        }
        Command::Fuzz {
            target,
            flags,
            out,
            replay,
        } => {
            let config = flags.build().map_err(|e| Failure::Usage(e.to_string()))?;
            let t = load_target(&target, config.context_depth).map_err(Failure::Target)?;
            if let Some(repro_path) = replay {
                let text = std::fs::read_to_string(&repro_path).map_err(|e| {
                    Failure::Target(anyhow!("reading repro {}: {e}", repro_path.display()))
                })?;
                let repro = parse_repro(&text).map_err(|e| Failure::Usage(e.to_string()))?;
                let tr = t.execute(
                    &InputBytes::new(repro.input),
                    &repro.error_seq,
                    1_000_000,
                );
                return if tr.outcome == Outcome::Crash(repro.bug.clone()) {
                    println!("REPRODUCED {}", repro.bug);
                    Ok(())
                } else {
                    Err(Failure::Internal(anyhow!(
                        "expected CRASH({}), observed {:?}",
                        repro.bug,
                        tr.outcome
                    )))
                };
            }
            // With repeats > 1 each run gets a derived seed and its own
            // artifact directory.
            for repeat in 0..config.repeats {
                let mut run_config = config.clone();
                run_config.rng_seed = config.rng_seed.wrapping_add(repeat as u64);
                let run_dir = if config.repeats > 1 {
                    out.join(format!("r{repeat}"))
                } else {
                    out.clone()
                };
                let outcome = run_campaign(&t, &run_config).map_err(Failure::Internal)?;
                write_outputs(&run_dir, &outcome).map_err(Failure::Internal)?;
                println!(
                    "{} executions, {} branch edges, {} error sequences, {} bugs -> {}",
                    outcome.fuzz.executions,
                    outcome.fuzz.ledger.branch_edges.len(),
                    outcome.fuzz.ledger.error_sequences.len(),
                    outcome.fuzz.bugs.len(),
                    run_dir.display()
                );
            }
            Ok(())
        }
        Command::Generate {
            out,
            seed,
            targets,
            switch_dispatch,
            chain,
            deep_magic,
            diamond,
            density,
            bug_rate,
            deep_pad,
            magic_width,
            wrappers,
        } => {
            let spec = GeneratorSpec {
                rng_seed: seed,
                targets,
                motifs: MotifCounts {
                    switch_dispatch,
                    chain,
                    deep_magic,
                    diamond,
                },
                density,
                bug_rate,
                deep_pad,
                magic_width,
                wrappers,
            };
            let generated = generate_targets(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
            std::fs::create_dir_all(&out).map_err(|e| Failure::Internal(e.into()))?;
            for t in &generated {
                std::fs::write(out.join(format!("{}.ir", t.name)), &t.ir)
                    .map_err(|e| Failure::Internal(e.into()))?;
                std::fs::write(
                    out.join(format!("{}.truth.json", t.name)),
                    serde_json::to_string_pretty(&t.truth)
                        .map_err(|e| Failure::Internal(e.into()))?,
                )
                .map_err(|e| Failure::Internal(e.into()))?;
            }
            println!("wrote {} target(s) to {}", generated.len(), out.display());
            Ok(())
        }
        Command::Bench {
            targets,
            out,
            modes,
            sweep,
            flags,
        } => {
            let base = flags.build().map_err(|e| Failure::Usage(e.to_string()))?;
            let mode_list: Vec<Mode> = modes
                .split(',')
                .map(|m| m.trim().parse::<Mode>())
                .collect::<Result<_, String>>()
                .map_err(Failure::Usage)?;
            let sweep = match sweep {
                Some(s) => Some(parse_sweep(&s).map_err(|e| Failure::Usage(e.to_string()))?),
                None => None,
            };
            let target_files = list_targets(&targets).map_err(Failure::Target)?;
            if target_files.is_empty() {
                return Err(Failure::Target(anyhow!(
                    "no .ir targets under {}",
                    targets.display()
                )));
            }
            let plan = BenchPlan {
                targets: target_files,
                modes: mode_list,
                sweep,
                base,
            };
            let (cells, summary) = run_bench(&plan, &out).map_err(Failure::Internal)?;
            println!(
                "bench complete: {} cells, {} summary rows -> {}",
                cells.len(),
                summary.len(),
                out.display()
            );
            Ok(())
        }
        Command::Report { bench, out, plot } => {
            write_report(&bench, &out, plot.as_deref()).map_err(Failure::Target)?;
            println!("report -> {}", out.display());
            Ok(())
        }
    }
}

/// Graphviz-renderable overlay: error-point blocks filled per cluster,
/// common parents outlined, common paths bold.
fn cluster_overlay_dot(
    cfg: &huntfuzz_core::Cfg,
    set: &huntfuzz_core::ClusterSet,
    located: &[huntfuzz_core::extract::LocatedPoint],
) -> String {
    use std::fmt::Write as _;
    let palette = [
        "#a6cee3", "#b2df8a", "#fb9a99", "#fdbf6f", "#cab2d6", "#ffff99",
    ];
    let mut cluster_of = std::collections::HashMap::new();
    for c in &set.clusters {
        for m in &c.members {
            if let Some(p) = located.iter().find(|p| &p.label == m) {
                cluster_of.insert(p.block, c.id);
            }
        }
    }
    let parents: std::collections::BTreeSet<_> =
        set.clusters.iter().map(|c| c.common_parent).collect();
    let on_path: std::collections::BTreeSet<_> = set
        .clusters
        .iter()
        .flat_map(|c| c.common_path.blocks.windows(2).map(|w| (w[0], w[1])))
        .collect();
    let mut out = String::from("digraph clusters {\n  node [shape=box, fontname=\"monospace\"];\n");
    for b in cfg.blocks() {
        let mut attrs = format!("label=\"{}\"", cfg.name(b));
        if let Some(&cid) = cluster_of.get(&b) {
            let _ = write!(
                attrs,
                ", style=filled, fillcolor=\"{}\", xlabel=\"cluster {cid}\"",
                palette[cid as usize % palette.len()]
            );
        }
        if parents.contains(&b) {
            attrs.push_str(", penwidth=2.5");
        }
        if b == cfg.entry() {
            attrs.push_str(", shape=oval");
        }
        let _ = writeln!(out, "  n{} [{}];", b.0, attrs);
    }
    for e in cfg.edges() {
        let mut attrs = Vec::new();
        if let Some(p) = e.predicate() {
            attrs.push(format!("label=\"{}\"", p.id));
        }
        if on_path.contains(&(e.from, e.to)) {
            attrs.push("penwidth=2.5".to_string());
        }
        if attrs.is_empty() {
            let _ = writeln!(out, "  n{} -> n{};", e.from.0, e.to.0);
        } else {
            let _ = writeln!(out, "  n{} -> n{} [{}];", e.from.0, e.to.0, attrs.join(", "));
        }
    }
    out.push_str("}\n");
    out
}

fn emit(path: Option<&std::path::Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(p, text)?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn list_targets(path: &std::path::Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "ir"))
        .collect();
    files.sort();
    Ok(files)
}
