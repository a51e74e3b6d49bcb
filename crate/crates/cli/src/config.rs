//! Campaign configuration: defaults, the key=value config file, and budget
//! parsing. Command-line flags override file values field by field.

use anyhow::{anyhow, bail, Result};
use huntfuzz_core::fuzz::{Budget, DEFAULT_SOLVE_COST};
use huntfuzz_core::weight::DistanceTerm;
use huntfuzz_core::ClusterMode;
use serde::Serialize;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Huntfuzz,
    BaselineK0,
    NoConcolic,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "huntfuzz" => Ok(Mode::Huntfuzz),
            "baseline-k0" => Ok(Mode::BaselineK0),
            "no-concolic" => Ok(Mode::NoConcolic),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Huntfuzz => "huntfuzz",
            Mode::BaselineK0 => "baseline-k0",
            Mode::NoConcolic => "no-concolic",
        })
    }
}

/// Parses `<N>execs` or `<S>s`.
pub fn parse_budget(text: &str) -> Result<Budget> {
    if let Some(n) = text.strip_suffix("execs") {
        return Ok(Budget::Executions(n.parse()?));
    }
    if let Some(s) = text.strip_suffix('s') {
        let secs: u64 = s.parse()?;
        return Ok(Budget::WallMillis(secs * 1000));
    }
    bail!("budget must be `<N>execs` or `<S>s`, got `{text}`")
}

pub fn budget_to_string(b: Budget) -> String {
    match b {
        Budget::Executions(n) => format!("{n}execs"),
        Budget::WallMillis(ms) => format!("{}s", ms / 1000),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub mode: Mode,
    pub k: u32,
    pub w1: f64,
    pub w2: f64,
    pub mutate_threshold: u32,
    pub clustering_mode: ClusterMode,
    pub distance_term: DistanceTerm,
    pub budget: Budget,
    pub rng_seed: u64,
    pub repeats: u32,
    pub context_insensitive: bool,
    pub solve_cost: u64,
    pub context_depth: u32,
    pub sample_every: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            mode: Mode::Huntfuzz,
            k: 2,
            w1: 0.5,
            w2: 0.5,
            mutate_threshold: 10_000,
            clustering_mode: ClusterMode::Strict,
            distance_term: DistanceTerm::Proximity,
            budget: Budget::Executions(100_000),
            rng_seed: 0,
            repeats: 1,
            context_insensitive: false,
            solve_cost: DEFAULT_SOLVE_COST,
            context_depth: huntfuzz_core::derive::DEFAULT_CONTEXT_DEPTH,
            sample_every: huntfuzz_core::fuzz::DEFAULT_SAMPLE_EVERY,
        }
    }
}

impl CampaignConfig {
    /// Applies one `key = value` assignment (config-file format).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "mode" => self.mode = v.parse().map_err(|e: String| anyhow!(e))?,
            "k" => self.k = v.parse()?,
            "w1" => self.w1 = v.parse()?,
            "w2" => self.w2 = v.parse()?,
            "mutate-threshold" | "mutate_threshold" => self.mutate_threshold = v.parse()?,
            "clustering-mode" | "clustering_mode" => {
                self.clustering_mode = v.parse().map_err(|e: String| anyhow!(e))?
            }
            "distance-term" | "distance_term" => {
                self.distance_term = v.parse().map_err(|e: String| anyhow!(e))?
            }
            "budget" => self.budget = parse_budget(v)?,
            "seed" | "rng-seed" | "rng_seed" => self.rng_seed = v.parse()?,
            "repeats" => self.repeats = v.parse()?,
            "context-insensitive" | "context_insensitive" => {
                self.context_insensitive = v.parse()?
            }
            "solve-cost" | "solve_cost" => self.solve_cost = v.parse()?,
            "context-depth" | "context_depth" => self.context_depth = v.parse()?,
            "sample-every" | "sample_every" => self.sample_every = v.parse()?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    /// Loads a key=value file (`#` comments, blank lines ignored).
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
            self.set(key, value)
                .map_err(|e| anyhow!("line {}: {e}", lineno + 1))?;
        }
        self.validate()
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail validation
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 1 {
            bail!("repeats must be ≥ 1");
        }
        if matches!(self.budget, Budget::Executions(0) | Budget::WallMillis(0)) {
            bail!("budget must be positive");
        }
        if self.sample_every == 0 {
            bail!("sample-every must be ≥ 1");
        }
        if self.mutate_threshold < 1 {
            bail!("mutate-threshold must be ≥ 1");
        }
        if !(self.w1 >= 0.0) || !(self.w2 >= 0.0) || self.w1 + self.w2 <= 0.0 {
            bail!("w1/w2 must be non-negative with a positive sum");
        }
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        format!(
            "mode = {}\nk = {}\nw1 = {}\nw2 = {}\nmutate-threshold = {}\nclustering-mode = {}\ndistance-term = {}\nbudget = {}\nseed = {}\nrepeats = {}\ncontext-insensitive = {}\nsolve-cost = {}\ncontext-depth = {}\nsample-every = {}\n",
            self.mode,
            self.k,
            self.w1,
            self.w2,
            self.mutate_threshold,
            self.clustering_mode,
            self.distance_term,
            budget_to_string(self.budget),
            self.rng_seed,
            self.repeats,
            self.context_insensitive,
            self.solve_cost,
            self.context_depth,
            self.sample_every,
        )
    }
}
