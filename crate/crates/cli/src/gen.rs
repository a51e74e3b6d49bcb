//! Synthetic target generator: assembles programs from cluster motifs
//! (switch dispatch, sequential chains, deep magic-guarded regions,
//! diamonds) with planted bugs and emits ground truth alongside each target.
//!
//! Every planted bug is verified at generation time by executing the VM
//! over the motif's relevant bytes and the small error-sequence space, so
//! the truth file's witnesses always reproduce.

use anyhow::{bail, Result};
use huntfuzz_core::ir::load_program;
use huntfuzz_core::vm::{ErrorSequence, InputBytes, Outcome, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MotifCounts {
    pub switch_dispatch: u32,
    pub chain: u32,
    pub deep_magic: u32,
    pub diamond: u32,
}

impl MotifCounts {
    pub fn total(&self) -> u32 {
        self.switch_dispatch + self.chain + self.deep_magic + self.diamond
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub rng_seed: u64,
    pub targets: u32,
    pub motifs: MotifCounts,
    /// Scales fallible calls per motif region (0.0 → 1 arm, 1.0 → 3 arms).
    pub density: f64,
    /// Probability that a motif region carries a planted bug.
    pub bug_rate: f64,
    /// Pad-chain length ahead of each deep-magic region.
    pub deep_pad: u32,
    /// Guard width in bytes for deep-magic regions.
    pub magic_width: u32,
    /// Wrapper-call depth between the dispatcher and each motif body.
    pub wrappers: u32,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            rng_seed: 0,
            targets: 1,
            motifs: MotifCounts {
                switch_dispatch: 1,
                chain: 1,
                deep_magic: 1,
                diamond: 1,
            },
            density: 1.0,
            bug_rate: 0.5,
            deep_pad: 64,
            magic_width: 4,
            wrappers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBug {
    pub label: String,
    pub input_hex: String,
    pub error_seq: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntendedCluster {
    pub k: u32,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub error_points: Vec<String>,
    /// Points behind a magic guard (unreachable by black-box mutation).
    pub guarded_points: Vec<String>,
    pub bugs: Vec<PlantedBug>,
    pub clusters: Vec<IntendedCluster>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTarget {
    pub name: String,
    pub ir: String,
    pub truth: GroundTruth,
}

#[derive(Clone, Copy)]
enum MotifKind {
    Switch,
    Chain,
    DeepMagic,
    Diamond,
}

struct Emitter {
    main_blocks: String,
    funcs: String,
    truth: GroundTruth,
    next_ep: u32,
    next_bug: u32,
    next_byte: u16,
    /// Witness material per planted bug: (bug label, input bytes).
    witnesses: Vec<(String, Vec<u8>)>,
}

pub fn generate_targets(spec: &GeneratorSpec) -> Result<Vec<GeneratedTarget>> {
    if !(0.0..=1.0).contains(&spec.density) {
        bail!("density must be within [0, 1]");
    }
    if !(0.0..=1.0).contains(&spec.bug_rate) {
        bail!("bug-rate must be within [0, 1]");
    }
    if spec.targets == 0 {
        bail!("need at least one target");
    }
    if spec.motifs.total() > 200 {
        bail!("motif count exceeds the dispatch capacity");
    }
    if spec.wrappers > 2 {
        bail!("wrapper depth is capped at 2");
    }
    if spec.magic_width == 0 || spec.magic_width > 8 {
        bail!("magic width must be within 1..=8");
    }
    (0..spec.targets)
        .map(|idx| {
            let seed = spec
                .rng_seed
                .wrapping_add((idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            generate_one(spec, idx, seed)
        })
        .collect()
}

fn generate_one(spec: &GeneratorSpec, idx: u32, seed: u64) -> Result<GeneratedTarget> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arms = 1 + (spec.density * 2.0).round() as u32;
    let mut em = Emitter {
        main_blocks: String::new(),
        funcs: String::new(),
        truth: GroundTruth::default(),
        next_ep: 0,
        next_bug: 0,
        next_byte: 1, // byte 0 selects the motif
        witnesses: Vec::new(),
    };

    let mut kinds: Vec<MotifKind> = Vec::new();
    for _ in 0..spec.motifs.switch_dispatch {
        kinds.push(MotifKind::Switch);
    }
    for _ in 0..spec.motifs.chain {
        kinds.push(MotifKind::Chain);
    }
    for _ in 0..spec.motifs.deep_magic {
        kinds.push(MotifKind::DeepMagic);
    }
    for _ in 0..spec.motifs.diamond {
        kinds.push(MotifKind::Diamond);
    }
    if kinds.is_empty() && spec.bug_rate > 0.0 {
        // Nothing to plant bugs into; still a valid (empty) target.
    }

    let mut ir = String::new();
    let _ = writeln!(ir, "extern alloc0 ptr ok 1");
    let _ = writeln!(ir, "extern alloc1 ptr ok 1");
    let _ = writeln!(ir, "extern getdata int ok 5");

    // Main dispatcher.
    let mut dispatch = String::from("func main:\nblock entry:\n  r0 = in 0\n");
    if kinds.is_empty() {
        dispatch.push_str("  halt\n");
        let _ = writeln!(ir);
        ir.push_str(&dispatch);
        let program_ok = load_program(&ir).is_ok();
        if !program_ok {
            bail!("generated target failed to load");
        }
        return Ok(GeneratedTarget {
            name: format!("t{idx:03}"),
            ir,
            truth: em.truth,
        });
    }
    let case_list: Vec<String> = (0..kinds.len())
        .map(|m| format!("{m}:m{m}_p0"))
        .collect();
    let _ = writeln!(
        dispatch,
        "  switch r0 {} default:done",
        case_list.join(" ")
    );

    for (m, kind) in kinds.iter().enumerate() {
        emit_motif(spec, &mut em, &mut rng, m, *kind, arms)?;
    }

    let _ = writeln!(ir);
    ir.push_str(&dispatch);
    ir.push_str(&em.main_blocks);
    ir.push_str("block done:\n  halt\n");
    ir.push_str(&em.funcs);

    // Validate and confirm every planted bug with a concrete witness.
    let program = load_program(&ir).map_err(|e| anyhow::anyhow!("generated IR invalid: {e}"))?;
    let target = Target::new(program).map_err(|e| anyhow::anyhow!("derivation failed: {e}"))?;
    for (label, input) in std::mem::take(&mut em.witnesses) {
        let witness = find_bug_witness(&target, &label, &input)
            .ok_or_else(|| anyhow::anyhow!("planted bug {label} has no witness"))?;
        em.truth.bugs.push(witness);
    }

    Ok(GeneratedTarget {
        name: format!("t{idx:03}"),
        ir,
        truth: em.truth,
    })
}

/// Enumerates small error sequences on the witness input until the bug
/// label crashes.
fn find_bug_witness(target: &Target, label: &str, input: &[u8]) -> Option<PlantedBug> {
    let input = InputBytes::new(input.to_vec());
    for len in 1..=4usize {
        for bits in 0u32..(1 << len) {
            let decisions: Vec<bool> = (0..len).map(|i| bits & (1 << i) != 0).collect();
            let es = ErrorSequence::new(decisions);
            let tr = target.execute(&input, &es, 100_000);
            if tr.outcome == Outcome::Crash(label.to_string()) {
                return Some(PlantedBug {
                    label: label.to_string(),
                    input_hex: huntfuzz_core::fuzz::hex_encode(input.as_slice()),
                    error_seq: es.bits_string(),
                });
            }
        }
    }
    None
}

fn emit_motif(
    spec: &GeneratorSpec,
    em: &mut Emitter,
    rng: &mut ChaCha8Rng,
    m: usize,
    kind: MotifKind,
    arms: u32,
) -> Result<()> {
    // Pad chain in main, then a wrapper call chain into the motif body.
    let pad_len = match kind {
        MotifKind::DeepMagic => spec.deep_pad.max(3),
        _ => 3,
    };
    for p in 0..pad_len {
        let next = if p + 1 == pad_len {
            format!("m{m}_call")
        } else {
            format!("m{m}_p{}", p + 1)
        };
        let _ = writeln!(
            em.main_blocks,
            "block m{m}_p{p}:\n  r1 = {}\n  jmp {next}",
            p % 7
        );
    }
    let body_fn = format!("m{m}_body");
    let callee = if spec.wrappers == 0 {
        body_fn.clone()
    } else {
        format!("m{m}_w0")
    };
    let _ = writeln!(
        em.main_blocks,
        "block m{m}_call:\n  call {callee}\n  jmp done"
    );
    for w in 0..spec.wrappers {
        let next = if w + 1 == spec.wrappers {
            body_fn.clone()
        } else {
            format!("m{m}_w{}", w + 1)
        };
        let _ = writeln!(
            em.funcs,
            "\nfunc m{m}_w{w}:\nblock w:\n  call {next}\n  ret"
        );
    }

    // Witness prefix: byte 0 selects this motif.
    let mut witness_base = vec![0u8; 1];
    witness_base[0] = m as u8;

    match kind {
        MotifKind::Switch => {
            emit_dispatch_body(spec, em, rng, &body_fn, m, arms, &witness_base)?;
        }
        MotifKind::Chain => {
            emit_chain_body(spec, em, rng, &body_fn, m, arms, &witness_base)?;
        }
        MotifKind::Diamond => {
            emit_diamond_body(spec, em, rng, &body_fn, m, &witness_base)?;
        }
        MotifKind::DeepMagic => {
            // Magic guards ahead of an inner dispatch.
            let mut magics = Vec::new();
            let mut guards = String::new();
            let width = spec.magic_width;
            for g in 0..width {
                let byte = em.next_byte;
                em.next_byte += 1;
                let magic: u8 = rng.gen();
                magics.push((byte, magic));
                let next = if g + 1 == width {
                    format!("m{m}_disp")
                } else {
                    format!("m{m}_g{}", g + 1)
                };
                let _ = writeln!(
                    guards,
                    "block m{m}_g{g}:\n  r0 = in {byte}\n  r1 = r0 == {magic}\n  br r1 {next} m{m}_bail"
                );
            }
            let _ = writeln!(em.funcs, "\nfunc {body_fn}:");
            em.funcs.push_str(&guards);
            let mut witness = witness_base.clone();
            for &(byte, magic) in &magics {
                if witness.len() <= byte as usize {
                    witness.resize(byte as usize + 1, 0);
                }
                witness[byte as usize] = magic;
            }
            emit_inner_dispatch(spec, em, rng, m, arms, &witness, true)?;
            let _ = writeln!(em.funcs, "block m{m}_bail:\n  ret 0");
        }
    }
    Ok(())
}

/// Switch-dispatch motif: its own function with an inner dispatch.
fn emit_dispatch_body(
    spec: &GeneratorSpec,
    em: &mut Emitter,
    rng: &mut ChaCha8Rng,
    body_fn: &str,
    m: usize,
    arms: u32,
    witness_base: &[u8],
) -> Result<()> {
    let _ = writeln!(em.funcs, "\nfunc {body_fn}:");
    emit_inner_dispatch(spec, em, rng, m, arms, witness_base, false)?;
    let _ = writeln!(em.funcs, "block m{m}_bail:\n  ret 0");
    Ok(())
}

/// Inner dispatch over `arms` fallible arms; used by switch and deep-magic
/// motifs (the latter marks its points guarded).
fn emit_inner_dispatch(
    spec: &GeneratorSpec,
    em: &mut Emitter,
    rng: &mut ChaCha8Rng,
    m: usize,
    arms: u32,
    witness_base: &[u8],
    guarded: bool,
) -> Result<()> {
    let arm_byte = em.next_byte;
    em.next_byte += 1;
    let case_list: Vec<String> = (0..arms).map(|a| format!("{a}:m{m}_a{a}")).collect();
    let _ = writeln!(
        em.funcs,
        "block m{m}_disp:\n  r2 = in {arm_byte}\n  switch r2 {} default:m{m}_bail",
        case_list.join(" ")
    );
    let mut cluster = Vec::new();
    for a in 0..arms {
        let ep = format!("ep{}", em.next_ep);
        em.next_ep += 1;
        let ext = ["alloc0", "alloc1", "getdata"][(a as usize) % 3];
        let err_val = if ext == "getdata" { "-1" } else { "0" };
        let _ = writeln!(
            em.funcs,
            "block m{m}_a{a}:\n  fcall r3 = {ext} @{ep}\n  jmp m{m}_k{a}"
        );
        let mut check = format!("block m{m}_k{a}:\n  r4 = r3 == {err_val}\n");
        if rng.gen_bool(spec.bug_rate) {
            let bug = format!("bug{}", em.next_bug);
            em.next_bug += 1;
            let _ = writeln!(check, "  crash {bug} if r4");
            let mut witness = witness_base.to_vec();
            if witness.len() <= arm_byte as usize {
                witness.resize(arm_byte as usize + 1, 0);
            }
            witness[arm_byte as usize] = a as u8;
            em.witnesses.push((bug, witness));
        }
        let _ = writeln!(check, "  handler log\n  ret r3");
        em.funcs.push_str(&check);
        em.truth.error_points.push(ep.clone());
        if guarded {
            em.truth.guarded_points.push(ep.clone());
        }
        cluster.push(ep);
    }
    em.truth.clusters.push(IntendedCluster {
        k: 2,
        members: cluster,
    });
    Ok(())
}

/// Chain motif: consecutive fallible calls with the checks at the end;
/// bugs model mishandled pairs (first allocation survives, second fails).
fn emit_chain_body(
    spec: &GeneratorSpec,
    em: &mut Emitter,
    rng: &mut ChaCha8Rng,
    body_fn: &str,
    m: usize,
    arms: u32,
    witness_base: &[u8],
) -> Result<()> {
    let n = arms.max(2);
    let _ = writeln!(em.funcs, "\nfunc {body_fn}:");
    let mut labels = Vec::new();
    for c in 0..n {
        let ep = format!("ep{}", em.next_ep);
        em.next_ep += 1;
        let next = if c + 1 == n {
            format!("m{m}_chk")
        } else {
            format!("m{m}_c{}", c + 1)
        };
        let ext = ["alloc0", "alloc1"][(c as usize) % 2];
        let _ = writeln!(
            em.funcs,
            "block m{m}_c{c}:\n  fcall r{c} = {ext} @{ep}\n  jmp {next}"
        );
        labels.push(ep);
    }
    let mut chk = format!("block m{m}_chk:\n  r10 = r0 == 0\n  r11 = r1 == 0\n");
    if rng.gen_bool(spec.bug_rate) {
        // Wild-free shape: first call succeeded, second failed.
        let bug = format!("bug{}", em.next_bug);
        em.next_bug += 1;
        let _ = writeln!(chk, "  r12 = r0 != 0\n  r13 = r12 * r11\n  crash {bug} if r13");
        em.witnesses.push((bug, witness_base.to_vec()));
    }
    let _ = writeln!(chk, "  handler log\n  ret r0");
    em.funcs.push_str(&chk);
    em.truth.error_points.extend(labels.iter().cloned());
    em.truth.clusters.push(IntendedCluster {
        k: 2,
        members: labels,
    });
    Ok(())
}

/// Diamond motif: branch to two fallible sides that rejoin on a third.
fn emit_diamond_body(
    spec: &GeneratorSpec,
    em: &mut Emitter,
    rng: &mut ChaCha8Rng,
    body_fn: &str,
    m: usize,
    witness_base: &[u8],
) -> Result<()> {
    let byte = em.next_byte;
    em.next_byte += 1;
    let (l, r, mid) = (
        format!("ep{}", em.next_ep),
        format!("ep{}", em.next_ep + 1),
        format!("ep{}", em.next_ep + 2),
    );
    em.next_ep += 3;
    let _ = writeln!(
        em.funcs,
        "\nfunc {body_fn}:\nblock m{m}_b:\n  r0 = in {byte}\n  r1 = r0 < 128\n  br r1 m{m}_l m{m}_r\nblock m{m}_l:\n  fcall r2 = alloc0 @{l}\n  jmp m{m}_m\nblock m{m}_r:\n  fcall r2 = alloc1 @{r}\n  jmp m{m}_m\nblock m{m}_m:\n  fcall r3 = getdata @{mid}\n  jmp m{m}_chk"
    );
    let mut chk = format!("block m{m}_chk:\n  r4 = r2 == 0\n  r5 = r3 == -1\n");
    if rng.gen_bool(spec.bug_rate) {
        let bug = format!("bug{}", em.next_bug);
        em.next_bug += 1;
        let _ = writeln!(chk, "  crash {bug} if r5");
        em.witnesses.push((bug, witness_base.to_vec()));
    }
    let _ = writeln!(chk, "  handler log\n  ret r3");
    em.funcs.push_str(&chk);
    em.truth
        .error_points
        .extend([l.clone(), r.clone(), mid.clone()]);
    em.truth.clusters.push(IntendedCluster {
        k: 2,
        members: vec![l, r, mid],
    });
    Ok(())
}
