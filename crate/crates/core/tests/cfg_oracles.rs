//! Oracle-equivalence and property tests for the graph queries, checked
//! against independent reimplementations (exhaustive reverse walks,
//! Floyd–Warshall, brute-force minima).

mod common;

use common::{floyd_warshall, gen_dag, gen_dag_with_predicates, reverse_walk_oracle};
use huntfuzz_core::cfg::{BlockId, PathSpec};
use huntfuzz_core::dot::{export_dot, import_dot};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn k_hop_matches_exhaustive_reverse_walks() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let n = rng.gen_range(1..=12);
        let cfg = gen_dag(&mut rng, n);
        for b in cfg.blocks() {
            for k in 0..=4 {
                let got = cfg.k_hop_ancestors(b, k).unwrap();
                let want = reverse_walk_oracle(&cfg, b, k);
                assert_eq!(got, want, "mismatch at block {b:?} k={k}");
            }
        }
    }
}

#[test]
fn k_hop_is_monotone_in_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let n = rng.gen_range(1..=20);
        let cfg = gen_dag(&mut rng, n);
        for b in cfg.blocks() {
            let mut prev = cfg.k_hop_ancestors(b, 0).unwrap();
            for k in 1..=5 {
                let cur = cfg.k_hop_ancestors(b, k).unwrap();
                assert!(prev.is_subset(&cur), "k-hop sets must grow with k");
                prev = cur;
            }
        }
    }
}

#[test]
fn shortest_distance_matches_floyd_warshall() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.gen_range(1..=14);
        let cfg = gen_dag(&mut rng, n);
        let oracle = floyd_warshall(&cfg);
        for a in cfg.blocks() {
            for b in cfg.blocks() {
                assert_eq!(
                    cfg.shortest_distance(a, b).unwrap(),
                    oracle[a.index()][b.index()],
                    "distance {a:?}->{b:?}"
                );
            }
        }
    }
}

#[test]
fn path_distance_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let n = rng.gen_range(2..=14);
        let cfg = gen_dag(&mut rng, n);
        let oracle = floyd_warshall(&cfg);
        // Random entry walk.
        let mut path = vec![cfg.entry()];
        loop {
            let succ: Vec<BlockId> = cfg.successors(*path.last().unwrap()).map(|e| e.to).collect();
            if succ.is_empty() || rng.gen_bool(0.3) {
                break;
            }
            path.push(succ[rng.gen_range(0..succ.len())]);
        }
        let spec = PathSpec::new(path.clone());
        for target in cfg.blocks() {
            let want = path
                .iter()
                .filter_map(|&p| oracle[p.index()][target.index()])
                .min();
            assert_eq!(cfg.path_distance(&spec, target).unwrap(), want);
            if path.contains(&target) {
                assert_eq!(cfg.path_distance(&spec, target).unwrap(), Some(0));
            }
        }
    }
}

#[test]
fn ancestry_iff_bounded_reverse_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let n = rng.gen_range(2..=12);
        let cfg = gen_dag(&mut rng, n);
        let oracle = floyd_warshall(&cfg);
        for b in cfg.blocks() {
            for k in 1..=4u32 {
                let anc = cfg.k_hop_ancestors(b, k).unwrap();
                for a in cfg.blocks() {
                    // Forward distance a→b is the reverse-walk distance b→a.
                    let d = oracle[a.index()][b.index()];
                    let expect = a != b && matches!(d, Some(x) if x >= 1 && x <= k);
                    assert_eq!(
                        anc.contains(&a),
                        expect,
                        "a={a:?} b={b:?} k={k} d={d:?}"
                    );
                }
            }
        }
    }
}

/// Canonical entry paths are shortest: length equals the BFS distance + 1.
#[test]
fn entry_path_length_matches_distance_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..150 {
        let n = rng.gen_range(1..=16);
        let cfg = gen_dag(&mut rng, n);
        let oracle = floyd_warshall(&cfg);
        for b in cfg.blocks() {
            let path = cfg.canonical_entry_path(b).unwrap().unwrap();
            let d = oracle[cfg.entry().index()][b.index()].unwrap();
            assert_eq!(path.blocks.len() as u32, d + 1);
            cfg.validate_path(&path).unwrap();
            assert_eq!(path.last(), Some(b));
        }
    }
}

#[test]
fn dot_roundtrip_on_generated_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let n = rng.gen_range(1..=20);
        let cfg = gen_dag_with_predicates(&mut rng, n);
        let text = export_dot(&cfg);
        let back = import_dot(&text).expect("exported DOT reimports");
        assert_eq!(export_dot(&back), text, "canonical form is a fixpoint");
        assert_eq!(back.len(), cfg.len());
        assert_eq!(back.entry(), cfg.entry());
        let key = |e: &huntfuzz_core::cfg::Edge| {
            (
                e.from,
                e.to,
                e.predicate().map(|p| (p.id.clone(), p.constraint.to_string())),
            )
        };
        let mut orig: Vec<_> = cfg.edges().iter().map(key).collect();
        let mut round: Vec<_> = back.edges().iter().map(key).collect();
        orig.sort();
        round.sort();
        assert_eq!(orig, round, "blocks/edges/predicates survive round-trip");
    }
}
