//! Coverage-guided SFI fuzzing loop: mutates program inputs and error
//! sequences, tracks branch and error coverage, detects planted bugs, and
//! cooperates with the concolic scheduler.
//!
//! In execution-budget mode the loop is fully deterministic: one seeded RNG
//! drives every decision and ledger structures iterate in sorted order.

use crate::digest::DigestWriter;
use crate::sched::{SchedAction, SchedEvent, Scheduler};
use crate::vm::{ErrorSequence, ExecutionTrace, InputBytes, Outcome, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;
use thiserror::Error;

pub const DEFAULT_SAMPLE_EVERY: u64 = 100;
/// Executions charged per concolic solve in execution-budget mode, standing
/// in for the real cost of constraint solving.
pub const DEFAULT_SOLVE_COST: u64 = 250;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    Initial,
    Mutation,
    Concolic,
}

/// A retained test case: input bytes plus the error sequence it ran with.
#[derive(Debug, Clone)]
pub struct Seed {
    pub input: InputBytes,
    pub error_seq: ErrorSequence,
    pub provenance: Provenance,
    pub energy: u32,
    /// Encounter count from this seed's own execution; sizes child error
    /// sequences. Populated after the first run.
    enc_count: usize,
    /// Progress through the systematic single-fault phase.
    sys_next: usize,
    executed: bool,
}

impl Seed {
    pub fn initial(input: Vec<u8>) -> Seed {
        Seed {
            input: InputBytes::new(input),
            error_seq: ErrorSequence::empty(),
            provenance: Provenance::Initial,
            energy: 1,
            enc_count: 0,
            sys_next: 0,
            executed: false,
        }
    }

    fn concolic(input: Vec<u8>) -> Seed {
        Seed {
            input: InputBytes::new(input),
            error_seq: ErrorSequence::empty(),
            provenance: Provenance::Concolic,
            energy: 16,
            enc_count: 0,
            sys_next: 0,
            executed: false,
        }
    }

    fn mutation(input: InputBytes, error_seq: ErrorSequence, enc_count: usize) -> Seed {
        Seed {
            input,
            error_seq,
            provenance: Provenance::Mutation,
            energy: 4,
            enc_count,
            sys_next: 0,
            executed: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EpCoverage {
    pub seen: bool,
    pub fault_covered: bool,
}

/// Monotone coverage state of one campaign.
#[derive(Debug, Default, Clone)]
pub struct CoverageLedger {
    pub branch_edges: BTreeSet<(u32, u32)>,
    /// Canonical digests of context-qualified error sequences.
    pub error_sequences: BTreeSet<u128>,
    /// (error-point index, context hash) → coverage bits.
    pub per_ep: BTreeMap<(u32, u64), EpCoverage>,
}

impl CoverageLedger {
    /// Order-sensitive digest over (label, context, bit) triples; context
    /// collapses to 0 in context-insensitive mode.
    pub fn sequence_digest(trace: &ExecutionTrace, context_insensitive: bool) -> u128 {
        let mut w = DigestWriter::new();
        for e in &trace.encounters {
            w.u64(e.ep as u64);
            w.u64(if context_insensitive { 0 } else { e.ctx_hash });
            w.u8(e.injected as u8);
        }
        w.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BugReport {
    pub bug: String,
    pub input_hex: String,
    pub error_seq: String,
    pub trace_digest: String,
    pub crash_block: String,
}

impl BugReport {
    pub fn dedup_key(&self) -> (String, String) {
        (self.bug.clone(), self.crash_block.clone())
    }
}

/// One time-series sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SeriesRow {
    pub executions: u64,
    pub wall_ms: u64,
    pub branch_edges: u64,
    pub error_sequences: u64,
    pub bugs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Executions(u64),
    WallMillis(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzConfig {
    pub rng_seed: u64,
    pub max_len: usize,
    pub sample_every: u64,
    pub context_insensitive: bool,
    pub step_budget: u64,
    pub solve_cost: u64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            rng_seed: 0,
            max_len: crate::vm::MAX_INPUT_LEN,
            sample_every: DEFAULT_SAMPLE_EVERY,
            context_insensitive: false,
            step_budget: crate::vm::DEFAULT_STEP_BUDGET,
            solve_cost: DEFAULT_SOLVE_COST,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FuzzError {
    #[error("budget must be positive")]
    BadBudget,
    #[error("at least one initial seed is required")]
    NoSeeds,
}

#[derive(Debug)]
pub struct FuzzOutcome {
    pub ledger: CoverageLedger,
    pub bugs: Vec<BugReport>,
    pub series: Vec<SeriesRow>,
    pub executions: u64,
    /// Execution count at which each error-point label was first covered
    /// with an injected fault.
    pub first_fault_cover: BTreeMap<String, u64>,
}

/// Applies one input mutation: bit flip, byte set, byte delta, resize, or
/// splice with another queue entry.
pub fn mutate_input(
    parent: &InputBytes,
    rng: &mut ChaCha8Rng,
    queue: &[Seed],
    max_len: usize,
) -> InputBytes {
    let mut bytes = parent.as_slice().to_vec();
    match rng.gen_range(0..5u8) {
        0 => {
            // bit flip
            if bytes.is_empty() {
                bytes.push(rng.gen());
            } else {
                let i = rng.gen_range(0..bytes.len());
                bytes[i] ^= 1 << rng.gen_range(0..8);
            }
        }
        1 => {
            // byte set
            if bytes.is_empty() {
                bytes.push(rng.gen());
            } else {
                let i = rng.gen_range(0..bytes.len());
                bytes[i] = rng.gen();
            }
        }
        2 => {
            // byte delta ±1..35
            if bytes.is_empty() {
                bytes.push(rng.gen());
            } else {
                let i = rng.gen_range(0..bytes.len());
                let delta = rng.gen_range(1..=35u8);
                if rng.gen() {
                    bytes[i] = bytes[i].wrapping_add(delta);
                } else {
                    bytes[i] = bytes[i].wrapping_sub(delta);
                }
            }
        }
        3 => {
            // length resize
            if rng.gen() && !bytes.is_empty() {
                let drop = rng.gen_range(1..=bytes.len());
                bytes.truncate(bytes.len() - drop);
            } else {
                let grow = rng.gen_range(1..=16usize);
                for _ in 0..grow {
                    bytes.push(rng.gen());
                }
            }
        }
        _ => {
            // splice with a random queue seed
            if let Some(other) = queue.get(rng.gen_range(0..queue.len().max(1))) {
                let o = other.input.as_slice();
                if !o.is_empty() || !bytes.is_empty() {
                    let cut_a = if bytes.is_empty() {
                        0
                    } else {
                        rng.gen_range(0..=bytes.len())
                    };
                    let cut_b = if o.is_empty() { 0 } else { rng.gen_range(0..o.len()) };
                    bytes.truncate(cut_a);
                    bytes.extend_from_slice(&o[cut_b..]);
                }
            }
        }
    }
    bytes.truncate(max_len);
    InputBytes::new(bytes)
}

/// Mutates an error sequence against its parent trace: resizes to the
/// encounter count and flips 1..⌈len/4⌉ bits.
pub fn mutate_error_sequence(
    parent: &ErrorSequence,
    enc_count: usize,
    rng: &mut ChaCha8Rng,
) -> ErrorSequence {
    let mut bits = parent.decisions.clone();
    bits.resize(enc_count, false);
    if bits.is_empty() {
        return ErrorSequence::empty();
    }
    let max_flips = bits.len().div_ceil(4);
    let flips = rng.gen_range(1..=max_flips);
    let mut positions: Vec<usize> = Vec::with_capacity(flips);
    while positions.len() < flips {
        let i = rng.gen_range(0..bits.len());
        if !positions.contains(&i) {
            positions.push(i);
        }
    }
    for i in positions {
        bits[i] = !bits[i];
    }
    ErrorSequence::new(bits)
}

/// Runs one campaign loop. Every execution's trace is forwarded to the
/// scheduler (when attached); emitted concolic test cases enter the queue
/// with the highest energy.
pub fn fuzz_loop(
    target: &Target,
    initial: Vec<Seed>,
    budget: Budget,
    mut scheduler: Option<&mut Scheduler>,
    config: &FuzzConfig,
) -> Result<FuzzOutcome, FuzzError> {
    match budget {
        Budget::Executions(0) | Budget::WallMillis(0) => return Err(FuzzError::BadBudget),
        _ => {}
    }
    if initial.is_empty() {
        return Err(FuzzError::NoSeeds);
    }

    let started = Instant::now();
    let wall_mode = matches!(budget, Budget::WallMillis(_));
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut queue: Vec<Seed> = initial;
    let mut credits: Vec<u32> = queue.iter().map(|s| s.energy).collect();
    let mut cursor = 0usize;

    let mut ledger = CoverageLedger::default();
    let mut bugs: Vec<BugReport> = Vec::new();
    let mut bug_keys: BTreeSet<(String, String)> = BTreeSet::new();
    let mut series: Vec<SeriesRow> = Vec::new();
    let mut first_fault_cover: BTreeMap<String, u64> = BTreeMap::new();
    let mut executions: u64 = 0;
    let mut retry_queue: Vec<Seed> = Vec::new();

    let wall_ms = |started: &Instant| -> u64 {
        if wall_mode {
            started.elapsed().as_millis() as u64
        } else {
            0
        }
    };
    let exhausted = |executions: u64, started: &Instant| -> bool {
        match budget {
            Budget::Executions(n) => executions >= n,
            Budget::WallMillis(ms) => started.elapsed().as_millis() as u64 >= ms,
        }
    };

    // Campaign start: the scheduler solves its first target during
    // initialization, before the fuzzing clock starts; only reselection
    // solves are charged against the budget.
    if let Some(sched) = scheduler.as_deref_mut() {
        if let Ok(actions) = sched.step(SchedEvent::CampaignStart) {
            for a in actions {
                match a {
                    SchedAction::EmitTestCase(input) => {
                        queue.push(Seed::concolic(input));
                        credits.push(16);
                    }
                    SchedAction::CampaignComplete => scheduler = None,
                }
            }
        }
    }

    while !exhausted(executions, &started) {
        // Weighted round-robin: each seed gets `energy` turns per refill.
        if credits.iter().all(|&c| c == 0) {
            for (c, s) in credits.iter_mut().zip(queue.iter()) {
                *c = s.energy;
            }
        }
        while credits[cursor % credits.len()] == 0 {
            cursor += 1;
        }
        let idx = cursor % credits.len();
        credits[idx] -= 1;
        cursor += 1;

        // Derive the test case: first run as-is, then systematic single
        // faults, then random input/sequence mutations.
        let (input, es) = if !queue[idx].executed {
            queue[idx].executed = true;
            (queue[idx].input.clone(), queue[idx].error_seq.clone())
        } else if queue[idx].sys_next < queue[idx].enc_count {
            let es = ErrorSequence::single(queue[idx].sys_next);
            queue[idx].sys_next += 1;
            (queue[idx].input.clone(), es)
        } else if queue[idx].enc_count > 0 && rng.gen() {
            let es = mutate_error_sequence(&queue[idx].error_seq, queue[idx].enc_count, &mut rng);
            (queue[idx].input.clone(), es)
        } else {
            let input = mutate_input(&queue[idx].input, &mut rng, &queue, config.max_len);
            let es = queue[idx].error_seq.clone();
            (input, es)
        };

        let trace = target.execute(&input, &es, config.step_budget);
        executions += 1;

        // Ledger updates.
        let mut new_coverage = false;
        for (a, b) in trace.branch_edges() {
            new_coverage |= ledger.branch_edges.insert((a.0, b.0));
        }
        let digest = CoverageLedger::sequence_digest(&trace, config.context_insensitive);
        new_coverage |= ledger.error_sequences.insert(digest);
        for e in &trace.encounters {
            let ctx = if config.context_insensitive {
                0
            } else {
                e.ctx_hash
            };
            let entry = ledger.per_ep.entry((e.ep, ctx)).or_default();
            entry.seen = true;
            if e.injected {
                entry.fault_covered = true;
                first_fault_cover
                    .entry(target.ep_labels[e.ep as usize].clone())
                    .or_insert(executions);
            }
        }

        // Bug detection and the early-crash retry: clearing the consumed
        // faults lets later bits of the same sequence run next time.
        if let Outcome::Crash(bug) = &trace.outcome {
            let crash_block = trace
                .block_path
                .last()
                .map(|&b| target.cfg().name(b).to_string())
                .unwrap_or_default();
            let key = (bug.clone(), crash_block.clone());
            if bug_keys.insert(key) {
                bugs.push(BugReport {
                    bug: bug.clone(),
                    input_hex: hex_encode(input.as_slice()),
                    error_seq: es.bits_string(),
                    trace_digest: format!("{:032x}", trace.digest()),
                    crash_block,
                });
                let consumed = trace.encounters.len();
                if es.decisions.len() > consumed && es.decisions[consumed..].iter().any(|&b| b) {
                    let mut masked = es.decisions.clone();
                    for b in masked.iter_mut().take(consumed) {
                        *b = false;
                    }
                    retry_queue.push(Seed {
                        input: input.clone(),
                        error_seq: ErrorSequence::new(masked),
                        provenance: Provenance::Mutation,
                        energy: 1,
                        enc_count: 0,
                        sys_next: usize::MAX, // skip the systematic phase
                        executed: false,
                    });
                }
            }
        }

        // Retention.
        if new_coverage {
            queue.push(Seed::mutation(
                input.clone(),
                es.clone(),
                trace.encounters.len(),
            ));
            credits.push(4);
        }
        if queue[idx].enc_count == 0 && queue[idx].sys_next == 0 {
            queue[idx].enc_count = trace.encounters.len();
        }
        for s in retry_queue.drain(..) {
            credits.push(s.energy);
            queue.push(s);
        }

        // Forward to the scheduler.
        if let Some(sched) = scheduler.as_deref_mut() {
            let before = sched.solves;
            match sched.step(SchedEvent::FuzzerInput(&trace)) {
                Ok(actions) => {
                    executions += (sched.solves - before) * config.solve_cost;
                    for a in actions {
                        match a {
                            SchedAction::EmitTestCase(input) => {
                                queue.push(Seed::concolic(input));
                                credits.push(16);
                            }
                            SchedAction::CampaignComplete => scheduler = None,
                        }
                    }
                }
                Err(_) => scheduler = None,
            }
        }

        if executions.is_multiple_of(config.sample_every) {
            series.push(SeriesRow {
                executions,
                wall_ms: wall_ms(&started),
                branch_edges: ledger.branch_edges.len() as u64,
                error_sequences: ledger.error_sequences.len() as u64,
                bugs: bugs.len() as u64,
            });
        }
    }

    // Final sample so short runs still report.
    if series.last().map(|r| r.executions) != Some(executions) {
        series.push(SeriesRow {
            executions,
            wall_ms: wall_ms(&started),
            branch_edges: ledger.branch_edges.len() as u64,
            error_sequences: ledger.error_sequences.len() as u64,
            bugs: bugs.len() as u64,
        });
    }

    Ok(FuzzOutcome {
        ledger,
        bugs,
        series,
        executions,
        first_fault_cover,
    })
}

pub fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hex_decode(text: &str) -> Option<Vec<u8>> {
    if !text.len().is_multiple_of(2) {
        return None;
    }
    (0..text.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&text[i..i + 2], 16).ok())
        .collect()
}

/// Renders the time-series CSV (`executions,wall_ms,branch_edges,
/// error_sequences,bugs`).
pub fn series_csv(series: &[SeriesRow]) -> String {
    let mut out = String::from("executions,wall_ms,branch_edges,error_sequences,bugs\n");
    for r in series {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.executions, r.wall_ms, r.branch_edges, r.error_sequences, r.bugs
        ));
    }
    out
}
