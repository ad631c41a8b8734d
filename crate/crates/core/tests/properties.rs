mod common;

use common::*;
use lastar::graph::{moralize, two_hop_neighbors, UndirectedGraph};
use lastar::sem::{analytic_covariance, analytic_precision, random_weights};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn equivalent_dags_score_equally(d in 2usize..=4, seed in any::<u64>()) {
        score_equivalence(d, seed)?;
    }

    #[test]
    fn cpdag_round_trips(d in 1usize..=12, k in 0.0f64..4.0, seed in any::<u64>()) {
        cpdag_round_trip(d, k, seed)?;
    }

    #[test]
    fn glasso_certificate(d in 2usize..=12, lambda in 0.02f64..0.6, seed in any::<u64>()) {
        glasso_kkt(d, lambda, seed)?;
    }

    #[test]
    fn shd_is_a_metric(d in 2usize..=9, a: u64, b: u64, c: u64, p: u64) {
        shd_axioms(d, (a, b, c), p)?;
    }

    #[test]
    fn parent_graph_pruning_is_sound(d in 2usize..=6, seed in any::<u64>(), forbid: u64) {
        pruning_sound(d, seed, forbid)?;
    }

    #[test]
    fn moral_graph_contains_skeleton(d in 1usize..=15, seed in any::<u64>()) {
        let dag = random_dag(d, 2.0, seed);
        let m = moralize(&dag);
        prop_assert!(dag.skeleton().is_subgraph_of(&m));
        for (a, _, b) in dag.v_structures() {
            prop_assert!(m.has_edge(a, b));
        }
    }

    #[test]
    fn two_hop_grows_with_the_graph(d in 2usize..=12, seed in any::<u64>(), extra in any::<u64>()) {
        let g = random_dag(d, 1.5, seed).skeleton();
        let mut bigger = g.clone();
        for i in 0..d {
            let j = (derive(extra, i) % d as u64) as usize;
            if i != j {
                bigger.add_edge(i, j);
            }
        }
        for i in 0..d {
            let small = two_hop_neighbors(&g, i).unwrap();
            let large = two_hop_neighbors(&bigger, i).unwrap();
            prop_assert!(!small.contains(&i));
            prop_assert!(small.iter().all(|v| large.contains(v)));
            for &j in g.neighbors(i) {
                prop_assert!(small.contains(&j));
            }
        }
    }

    #[test]
    fn analytic_precision_inverts_covariance(d in 1usize..=12, seed in any::<u64>()) {
        let dag = random_dag(d, 2.0, seed);
        let m = random_weights(&dag, seed ^ 0x5a5a);
        let prod = analytic_precision(&m).matrix() * analytic_covariance(&m);
        let eye = nalgebra::DMatrix::<f64>::identity(d, d);
        prop_assert!((prod - eye).amax() < 1e-9);
    }

    #[test]
    fn relabelling_preserves_skeleton_size(d in 2usize..=9, seed: u64, p: u64) {
        let g = random_cpdag(d, seed);
        let h = relabel(&g, &permutation(d, p));
        prop_assert_eq!(g.num_edges(), h.num_edges());
        prop_assert_eq!(g.directed_edges().len(), h.directed_edges().len());
    }
}

fn derive(seed: u64, i: usize) -> u64 {
    lastar::sem::derive_seed(seed, i as u64)
}

#[test]
fn isolated_vertex_has_no_two_hop_neighbors() {
    let g = UndirectedGraph::new(3);
    assert!(two_hop_neighbors(&g, 1).unwrap().is_empty());
}
