//! Golden tests pinning the worked four-point example: bbkSets, the strict
//! clustering partition, the shared path prefix, and its constraints.

use huntfuzz_core::cluster::{cluster_error_points, ClusterMode};
use huntfuzz_core::dot::{export_dot, import_dot};
use huntfuzz_core::extract::{extract_candidates, locate_points};
use huntfuzz_core::ir::load_program;
use huntfuzz_core::symbolic::path_constraints;
use huntfuzz_core::vm::{ErrorSequence, InputBytes, Outcome, Target};
use std::collections::BTreeSet;
use std::path::PathBuf;

fn fixture(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name);
    std::fs::read_to_string(p).expect("fixture readable")
}

fn fig2_target() -> Target {
    Target::new(load_program(&fixture("fig2.ir")).unwrap()).unwrap()
}

#[test]
fn bbk_sets_match_published_values() {
    let t = fig2_target();
    let cfg = t.cfg();
    let names = |set: &BTreeSet<huntfuzz_core::BlockId>| -> BTreeSet<String> {
        set.iter().map(|&b| cfg.name(b).to_string()).collect()
    };
    let strset = |items: &[&str]| -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    };
    let bbk = |label: &str| {
        let b = t.sg.canonical_ep_block(label).unwrap();
        names(&cfg.k_hop_ancestors(b, 2).unwrap())
    };
    assert_eq!(bbk("EP1"), strset(&["B", "A"]));
    assert_eq!(bbk("EP2"), strset(&["EP1", "B"]));
    assert_eq!(bbk("EP3"), strset(&["B", "A"]));
    assert_eq!(bbk("EP4"), strset(&["D", "A"]));
}

#[test]
fn strict_clustering_is_golden() {
    let t = fig2_target();
    let cfg = t.cfg();
    let eps = extract_candidates(&t.program);
    assert_eq!(eps.len(), 4);
    assert!(eps.iter().all(|e| e.realistic));
    let located = locate_points(&t.sg, &t.program, &eps);
    let set = cluster_error_points(&located, cfg, 2, ClusterMode::Strict, 0).unwrap();

    assert_eq!(set.clusters.len(), 2);
    let c1 = set.cluster_of("EP1").unwrap();
    let mut members = c1.members.clone();
    members.sort();
    assert_eq!(members, vec!["EP1", "EP2", "EP3"]);
    assert_eq!(cfg.name(c1.common_parent), "B");
    let path_names: Vec<&str> = c1.common_path.blocks.iter().map(|&b| cfg.name(b)).collect();
    assert_eq!(path_names, vec!["main", "A", "B"]);

    let c2 = set.cluster_of("EP4").unwrap();
    assert_eq!(c2.members, vec!["EP4"]);
    assert_eq!(cfg.name(c2.common_parent), "D");
}

#[test]
fn common_path_constraints_are_c1_and_c3() {
    let t = fig2_target();
    let cfg = t.cfg();
    let eps = extract_candidates(&t.program);
    let located = locate_points(&t.sg, &t.program, &eps);
    let set = cluster_error_points(&located, cfg, 2, ClusterMode::Strict, 0).unwrap();
    let c1 = set.cluster_of("EP1").unwrap();
    let ids: Vec<String> = c1
        .common_path
        .blocks
        .windows(2)
        .map(|w| {
            cfg.edge_between(w[0], w[1])
                .unwrap()
                .predicate()
                .unwrap()
                .id
                .clone()
        })
        .collect();
    assert_eq!(ids, vec!["c1", "c3"]);
    let constraint = path_constraints(cfg, &c1.common_path).unwrap();
    assert_eq!(constraint.to_string(), "b0 == 1 && b1 < 5");
}

#[test]
fn current_path_main_a_d_e_exists() {
    // Input off both guards: byte0 = 1 → A, byte1 ≥ 5 → D, byte3 ≠ 9 → E.
    let t = fig2_target();
    let tr = t.execute(
        &InputBytes::new(vec![1, 5, 0, 0]),
        &ErrorSequence::empty(),
        10_000,
    );
    let names: Vec<&str> = tr.block_path.iter().map(|&b| t.cfg().name(b)).collect();
    assert_eq!(names, vec!["main", "A", "D", "E"]);
    assert_eq!(tr.outcome, Outcome::Exit);
}

#[test]
fn dot_fixture_has_nine_blocks_and_roundtrips() {
    let text = fixture("fig2.dot");
    let cfg = import_dot(&text).unwrap();
    assert_eq!(cfg.len(), 9);
    let names: BTreeSet<&str> = cfg.blocks().map(|b| cfg.name(b)).collect();
    for want in ["main", "A", "B", "D", "E", "EP1", "EP2", "EP3", "EP4"] {
        assert!(names.contains(want), "missing block {want}");
    }
    let out = export_dot(&cfg);
    let again = import_dot(&out).unwrap();
    assert_eq!(export_dot(&again), out, "DOT round-trip is stable");
    // Distances pinned by the figure: A → B is one hop.
    let a = cfg.block_by_name("A").unwrap();
    let b = cfg.block_by_name("B").unwrap();
    assert_eq!(cfg.shortest_distance(a, b).unwrap(), Some(1));
}

#[test]
fn fig2_scheduler_emission_satisfies_c1_and_c3() {
    use huntfuzz_core::sched::{SchedAction, SchedEvent, Scheduler, SchedulerConfig};
    use std::sync::Arc;
    let target = Arc::new(fig2_target());
    let eps = extract_candidates(&target.program);
    let located = locate_points(&target.sg, &target.program, &eps);
    let clusters =
        cluster_error_points(&located, target.cfg(), 2, ClusterMode::Strict, 0).unwrap();
    let mut sched = Scheduler::new(Arc::clone(&target), clusters, SchedulerConfig::default());
    let actions = sched.step(SchedEvent::CampaignStart).unwrap();
    let SchedAction::EmitTestCase(input) = &actions[0] else {
        panic!("expected an emission");
    };
    let huntfuzz_core::sched::Phase::AwaitingCoverage(cid) = sched.phase() else {
        panic!("expected awaiting phase");
    };
    // The three-point cluster wins the weighting and its common-path
    // constraint must hold on the emitted bytes.
    assert_eq!(
        {
            let mut m = sched.clusters.clusters[cid as usize].members.clone();
            m.sort();
            m
        },
        vec!["EP1", "EP2", "EP3"]
    );
    let c = huntfuzz_core::constraint::parse_constraint("b0 == 1 && b1 < 5").unwrap();
    assert!(c.eval(input), "emitted input violates c1 ∧ c3: {input:?}");
}

#[test]
fn switch3_symbolic_trace_pins_the_dispatch_byte() {
    use huntfuzz_core::symbolic::symbolic_trace;
    let t = Target::new(load_program(&fixture("switch3.ir")).unwrap()).unwrap();
    let steps = symbolic_trace(&t, &InputBytes::new(vec![0]), 100_000);
    assert_eq!(steps.len(), 1, "one conditional edge: the dispatch");
    assert_eq!(steps[0].constraint.to_string(), "b0 == 0");
    assert!(!steps[0].concretized);
    let to_name = t.cfg().name(steps[0].to);
    assert_eq!(to_name, "case0");
}

#[test]
fn switch3_smoke() {
    let t = Target::new(load_program(&fixture("switch3.ir")).unwrap()).unwrap();
    let eps = extract_candidates(&t.program);
    assert_eq!(eps.len(), 3, "three labeled error points");
    assert!(eps.iter().all(|e| e.realistic));

    // Dispatch block with three error-point successors sharing the parent.
    let located = locate_points(&t.sg, &t.program, &eps);
    let cfg = t.cfg();
    let dispatch = cfg.block_by_name("dispatch").unwrap();
    for p in &located {
        assert_eq!(
            cfg.shortest_distance(dispatch, p.block).unwrap(),
            Some(1),
            "{} hangs directly off the dispatch",
            p.label
        );
    }
    let set = cluster_error_points(&located, cfg, 2, ClusterMode::Strict, 0).unwrap();
    assert_eq!(set.clusters.len(), 1, "one three-member cluster");
    assert_eq!(set.clusters[0].members.len(), 3);

    // Injecting at the first encounter of case 0 fires the planted bug.
    let tr = t.execute(
        &InputBytes::new(vec![0]),
        &ErrorSequence::new(vec![true]),
        10_000,
    );
    assert_eq!(tr.encounters.len(), 1);
    assert!(tr.encounters[0].injected);
    assert_eq!(tr.outcome, Outcome::Crash("bug-wildfree".into()));

    // Without injection the run completes.
    let tr = t.execute(&InputBytes::new(vec![0]), &ErrorSequence::empty(), 10_000);
    assert_eq!(tr.outcome, Outcome::Exit);
}
