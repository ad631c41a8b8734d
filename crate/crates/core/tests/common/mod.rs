//! Property checks shared by the proptest suite and the acceptance run.

#![allow(dead_code)]

use std::collections::BTreeMap;

use lastar::glasso::{empirical_covariance, graphical_lasso, kkt_residual, GlassoConfig};
use lastar::graph::{consistent_extension, dag_to_cpdag, Cpdag, Dag};
use lastar::io::GraphJson;
use lastar::metrics::shd_cpdag;
use lastar::oracle::all_dags;
use lastar::score::{bic_local, total_score, ParentGraph, SearchConstraints};
use lastar::sem::{derive_seed, random_er_dag, random_weights, sample};
use lastar::varset;
use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type PropResult = Result<(), TestCaseError>;

/// Empirical covariance of `n` samples from a random degree-`k` model.
pub fn random_cov(d: usize, k: f64, n: usize, seed: u64) -> DMatrix<f64> {
    let dag = random_dag(d, k, derive_seed(seed, 0));
    let m = random_weights(&dag, derive_seed(seed, 1));
    empirical_covariance(&sample(&m, n, derive_seed(seed, 2)).unwrap()).unwrap()
}

/// Degree is capped so small graphs stay valid.
pub fn random_dag(d: usize, k: f64, seed: u64) -> Dag {
    random_er_dag(d, k.min(d.saturating_sub(1) as f64), seed).unwrap()
}

/// A random partially directed graph: a random DAG's CPDAG with some marks
/// flipped to undirected or reversed.
pub fn random_cpdag(d: usize, seed: u64) -> Cpdag {
    let mut g = dag_to_cpdag(&random_dag(d, 2.0, seed));
    let mut s = seed;
    for (a, b) in g.skeleton().edges() {
        s = derive_seed(s, 7);
        match s % 4 {
            0 => g.set_undirected(a, b),
            1 => g.set_directed(b, a),
            _ => {}
        }
    }
    g
}

/// Markov-equivalent DAGs score equally, over every DAG on `d ≤ 4` nodes.
pub fn score_equivalence(d: usize, seed: u64) -> PropResult {
    let cov = random_cov(d, 1.5, 200, seed);
    let mut by_class: BTreeMap<String, f64> = BTreeMap::new();
    for dag in all_dags(d).unwrap() {
        let key = serde_json::to_string(&GraphJson::from_cpdag(&dag_to_cpdag(&dag))).unwrap();
        let s = total_score(&cov, 200, &dag);
        let first = *by_class.entry(key).or_insert(s);
        prop_assert!(
            (s - first).abs() <= 1e-9 * first.abs().max(1.0),
            "equivalent DAGs scored {first} and {s}"
        );
    }
    Ok(())
}

/// DAG -> CPDAG -> extension -> CPDAG is the identity on classes, and the
/// JSON form round-trips.
pub fn cpdag_round_trip(d: usize, k: f64, seed: u64) -> PropResult {
    let dag = random_dag(d, k, seed);
    let cpdag = dag_to_cpdag(&dag);
    let ext = consistent_extension(&cpdag, &[]).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(ext.markov_equivalent(&dag));
    prop_assert_eq!(dag_to_cpdag(&ext), cpdag.clone());
    let json = serde_json::to_string(&GraphJson::from_cpdag(&cpdag)).unwrap();
    let back: GraphJson = serde_json::from_str(&json).unwrap();
    prop_assert_eq!(back.to_cpdag().unwrap(), cpdag);
    Ok(())
}

/// The solver's reported certificate matches a recomputation and is within
/// tolerance, and the estimate is symmetric positive definite.
pub fn glasso_kkt(d: usize, lambda: f64, seed: u64) -> PropResult {
    let s = random_cov(d, 2.0, 150, seed);
    let cfg = GlassoConfig {
        lambda,
        cov_threshold: None,
        ..GlassoConfig::default()
    };
    let r = graphical_lasso(&s, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(r.converged, "no convergence after {} iterations", r.iterations);
    let theta = r.theta_hat.matrix();
    let kkt = kkt_residual(&s, theta, &r.sigma_hat, lambda);
    prop_assert!(kkt <= 10.0 * cfg.convergence_tol, "KKT residual {kkt}");
    prop_assert!((kkt - r.kkt_residual).abs() <= 1e-12 + 1e-9 * kkt);
    prop_assert!((theta - theta.transpose()).amax() <= 1e-12);
    prop_assert!(theta.clone().cholesky().is_some());
    Ok(())
}

/// Identity of indiscernibles, symmetry, triangle inequality and invariance
/// under relabelling.
pub fn shd_axioms(d: usize, seeds: (u64, u64, u64), perm_seed: u64) -> PropResult {
    let a = random_cpdag(d, seeds.0);
    let b = random_cpdag(d, seeds.1);
    let c = random_cpdag(d, seeds.2);
    let shd = |x: &Cpdag, y: &Cpdag| shd_cpdag(x, y).unwrap();
    prop_assert_eq!(shd(&a, &a), 0);
    prop_assert_eq!(shd(&a, &b) == 0, a == b);
    prop_assert_eq!(shd(&a, &b), shd(&b, &a));
    prop_assert!(shd(&a, &c) <= shd(&a, &b) + shd(&b, &c));
    let perm = permutation(d, perm_seed);
    prop_assert_eq!(shd(&relabel(&a, &perm), &relabel(&b, &perm)), shd(&a, &b));
    Ok(())
}

pub fn permutation(d: usize, seed: u64) -> Vec<usize> {
    let mut keys: Vec<(u64, usize)> = (0..d).map(|i| (derive_seed(seed, i as u64), i)).collect();
    keys.sort();
    keys.into_iter().map(|(_, i)| i).collect()
}

pub fn relabel(g: &Cpdag, perm: &[usize]) -> Cpdag {
    let mut out = Cpdag::new(g.num_vars());
    for (a, b) in g.directed_edges() {
        out.set_directed(perm[a], perm[b]);
    }
    for (a, b) in g.undirected_edges() {
        out.set_undirected(perm[a], perm[b]);
    }
    out
}

/// The pruned parent graph answers every best-subset query exactly as
/// brute force over all subsets of the allowed set.
pub fn pruning_sound(d: usize, seed: u64, forbid: u64) -> PropResult {
    let cov = random_cov(d, 2.0, 100, seed);
    let scope: Vec<usize> = (0..d).collect();
    let target = (seed % d as u64) as usize;
    let forbidden: Vec<(usize, usize)> = (0..d)
        .filter(|&j| j != target && forbid & (1 << j) != 0)
        .map(|j| (j, target))
        .collect();
    let constraints = SearchConstraints::none(d)
        .with_forbidden_edges(&forbidden)
        .unwrap();
    let pg = ParentGraph::build(&cov, 100, &scope, target, &constraints, None)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let others = varset::full(d) & !varset::bit(target);
    for allowed in 0..=varset::full(d) {
        let allowed = allowed & others;
        let mut best = f64::NEG_INFINITY;
        for sub in 0..=allowed {
            if sub & !allowed != 0 || forbidden.iter().any(|&(j, _)| varset::contains(sub, j)) {
                continue;
            }
            best = best.max(bic_local(&cov, 100, target, &varset::to_vec(sub)));
        }
        let (got, set) = pg.best_score_and_set(allowed).expect("empty set is always available");
        prop_assert!(varset::is_subset(set, allowed));
        prop_assert!(
            (got - best).abs() <= 1e-9 * best.abs().max(1.0),
            "allowed {allowed:b}: pruned {got}, brute force {best}"
        );
    }
    Ok(())
}
