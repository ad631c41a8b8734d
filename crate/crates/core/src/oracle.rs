//! Brute-force reference implementations: exhaustive DAG enumeration, the
//! sparsest-permutation sweep and conditional-independence queries.

use itertools::Itertools;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{consistent_extension, dag_to_cpdag, Cpdag, Dag};
use crate::score::{bic_local, total_score};
use crate::varset;

/// Largest `d` accepted by exhaustive DAG enumeration.
pub const ENUMERATE_MAX_VARS: usize = 5;
/// Largest `d` accepted by the permutation sweep.
pub const SP_MAX_VARS: usize = 7;
/// Partial-correlation threshold for population queries.
pub const POPULATION_CI_TOL: f64 = 1e-8;

/// Two-sided standard normal quantile at α = 0.01.
const Z_995: f64 = 2.575_829_303_548_901;

fn acyclic_masks(parents: &[u64]) -> bool {
    let d = parents.len();
    let mut remaining = varset::full(d);
    while remaining != 0 {
        let Some(src) = varset::iter(remaining).find(|&i| parents[i] & remaining == 0) else {
            return false;
        };
        remaining &= !varset::bit(src);
    }
    true
}

/// Visits every labeled DAG on `d` nodes as a per-node parent bitmask vector.
fn for_each_dag(d: usize, mut f: impl FnMut(&[u64])) {
    let choices: Vec<Vec<u64>> = (0..d)
        .map(|i| {
            let others = varset::full(d) & !varset::bit(i);
            (0..(1u64 << d)).filter(|m| m & !others == 0).collect()
        })
        .collect();
    let mut cur = vec![0u64; d];
    fn rec(k: usize, choices: &[Vec<u64>], cur: &mut Vec<u64>, f: &mut dyn FnMut(&[u64])) {
        if k == choices.len() {
            if acyclic_masks(cur) {
                f(cur);
            }
            return;
        }
        for &m in &choices[k] {
            cur[k] = m;
            rec(k + 1, choices, cur, f);
        }
    }
    rec(0, &choices, &mut cur, &mut f);
}

fn dag_from_masks(parents: &[u64]) -> Dag {
    Dag::from_parents(parents.iter().map(|&m| varset::to_vec(m)).collect())
        .expect("enumerated masks are acyclic")
}

/// Every labeled DAG on `d ≤ 5` nodes.
pub fn all_dags(d: usize) -> Result<Vec<Dag>> {
    if d > ENUMERATE_MAX_VARS {
        return Err(Error::TooLarge {
            num_vars: d,
            limit: ENUMERATE_MAX_VARS,
        });
    }
    let mut out = Vec::new();
    for_each_dag(d, |p| out.push(dag_from_masks(p)));
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct OptimalDags {
    pub best_score: f64,
    /// Every DAG whose total score is within rounding of `best_score`.
    pub dags: Vec<Dag>,
}

/// Exhaustive maximum of total BIC over all DAGs on `d ≤ 5` variables.
///
/// Markov-equivalent DAGs have equal scores only up to floating-point
/// rounding, so DAGs within `1e-9 · max(1, |best|)` of the maximum are all
/// reported as optimal.
pub fn enumerate_optimal_dags(cov: &DMatrix<f64>, n: usize, d: usize) -> Result<OptimalDags> {
    if d > ENUMERATE_MAX_VARS {
        return Err(Error::TooLarge {
            num_vars: d,
            limit: ENUMERATE_MAX_VARS,
        });
    }
    if cov.nrows() != d || cov.ncols() != d {
        return Err(Error::InvalidArgument(format!(
            "covariance is {}x{}, expected {d}x{d}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    // local score cache indexed by (node, parent mask)
    let width = 1usize << d;
    let mut local = vec![f64::NEG_INFINITY; d * width];
    for i in 0..d {
        for m in 0..width as u64 {
            if !varset::contains(m, i) {
                local[i * width + m as usize] = bic_local(cov, n, i, &varset::to_vec(m));
            }
        }
    }
    let mut scored: Vec<(f64, Vec<u64>)> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for_each_dag(d, |p| {
        let s: f64 = p.iter().enumerate().map(|(i, &m)| local[i * width + m as usize]).sum();
        best = best.max(s);
        scored.push((s, p.to_vec()));
    });
    let tol = 1e-9 * best.abs().max(1.0);
    let dags = scored
        .into_iter()
        .filter(|(s, _)| *s >= best - tol)
        .map(|(_, p)| dag_from_masks(&p))
        .collect();
    Ok(OptimalDags {
        best_score: best,
        dags,
    })
}

/// Total score of a fixed representative of `dag`'s equivalence class.
///
/// Equivalent DAGs score equally in exact arithmetic; scoring the
/// representative makes the comparison exact in floating point too.
pub fn canonical_score(cov: &DMatrix<f64>, n: usize, dag: &Dag) -> f64 {
    let rep = consistent_extension(&dag_to_cpdag(dag), &[])
        .expect("a DAG's own CPDAG is always extendable");
    total_score(cov, n, &rep)
}

/// Conditional-independence queries from a covariance matrix.
#[derive(Debug, Clone)]
pub struct CiOracle {
    sigma: DMatrix<f64>,
    tol: f64,
    samples: Option<usize>,
}

impl CiOracle {
    /// Population oracle: independent iff the partial correlation is below
    /// `tol` in absolute value.
    pub fn new(sigma: DMatrix<f64>, tol: f64) -> Result<Self> {
        check_spd(&sigma)?;
        if !(tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be >= 0, got {tol}")));
        }
        Ok(CiOracle {
            sigma,
            tol,
            samples: None,
        })
    }

    /// Finite-sample oracle: Fisher z-test at level 0.01 on the empirical
    /// covariance of `n` samples.
    pub fn from_samples(s: DMatrix<f64>, n: usize) -> Result<Self> {
        check_spd(&s)?;
        Ok(CiOracle {
            sigma: s,
            tol: 0.0,
            samples: Some(n),
        })
    }

    pub fn num_vars(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn partial_correlation(&self, i: usize, j: usize, cond: &[usize]) -> Result<f64> {
        let d = self.num_vars();
        if let Some(&bad) = [i, j].iter().chain(cond).find(|&&k| k >= d) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                num_vars: d,
            });
        }
        if i == j {
            return Err(Error::InvalidArgument("i and j must differ".into()));
        }
        let mut idx = vec![i, j];
        idx.extend(cond.iter().copied().filter(|&k| k != i && k != j).sorted().dedup());
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.sigma[(idx[a], idx[b])]);
        let p = sub
            .cholesky()
            .ok_or(Error::SingularInput(i))?
            .inverse();
        Ok(-p[(0, 1)] / (p[(0, 0)] * p[(1, 1)]).sqrt())
    }
}

fn check_spd(sigma: &DMatrix<f64>) -> Result<()> {
    if !sigma.is_square() {
        return Err(Error::InvalidArgument("covariance must be square".into()));
    }
    let scale = sigma.amax().max(1.0);
    if (sigma - sigma.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidArgument("covariance must be symmetric".into()));
    }
    if sigma.clone().cholesky().is_none() {
        return Err(Error::InvalidArgument("covariance must be positive definite".into()));
    }
    Ok(())
}

/// Whether `X_i ⊥ X_j | X_cond` according to the oracle.
pub fn ci_query(o: &CiOracle, i: usize, j: usize, cond: &[usize]) -> Result<bool> {
    let rho = o.partial_correlation(i, j, cond)?;
    Ok(match o.samples {
        None => rho.abs() < o.tol,
        Some(n) => {
            let k = cond.iter().filter(|&&c| c != i && c != j).count();
            let dof = n as f64 - k as f64 - 3.0;
            if dof <= 0.0 {
                return Err(Error::NotEnoughSamples {
                    needed: k + 4,
                    got: n,
                });
            }
            let z = 0.5 * ((1.0 + rho) / (1.0 - rho)).ln();
            dof.sqrt() * z.abs() < Z_995
        }
    })
}

#[derive(Debug, Clone)]
pub struct SparsestPermutations {
    pub min_edges: usize,
    /// Minimal I-maps achieving `min_edges`, one per distinct DAG.
    pub dags: Vec<Dag>,
    /// Distinct equivalence classes of `dags`.
    pub mecs: Vec<Cpdag>,
}

/// Minimal I-map of `order`: `j -> i` for `j` before `i` unless
/// `X_j ⊥ X_i` given the other predecessors of `i`.
pub fn minimal_imap(o: &CiOracle, order: &[usize]) -> Result<Dag> {
    let d = o.num_vars();
    let mut parents = vec![Vec::new(); d];
    for (pos, &i) in order.iter().enumerate() {
        let preds = &order[..pos];
        for &j in preds {
            let cond: Vec<usize> = preds.iter().copied().filter(|&k| k != j).collect();
            if !ci_query(o, j, i, &cond)? {
                parents[i].push(j);
            }
        }
    }
    Dag::from_parents(parents)
}

/// Sweeps every permutation of `d ≤ 7` variables and keeps the sparsest
/// minimal I-maps.
pub fn sparsest_permutation(o: &CiOracle) -> Result<SparsestPermutations> {
    let d = o.num_vars();
    if d > SP_MAX_VARS {
        return Err(Error::TooLarge {
            num_vars: d,
            limit: SP_MAX_VARS,
        });
    }
    let mut min_edges = usize::MAX;
    let mut dags: Vec<Dag> = Vec::new();
    for order in (0..d).permutations(d) {
        let dag = minimal_imap(o, &order)?;
        let e = dag.num_edges();
        if e < min_edges {
            min_edges = e;
            dags.clear();
        }
        if e == min_edges && !dags.contains(&dag) {
            dags.push(dag);
        }
    }
    if d == 0 {
        min_edges = 0;
        dags.push(Dag::empty(0));
    }
    let mut mecs: Vec<Cpdag> = Vec::new();
    for dag in &dags {
        let c = dag_to_cpdag(dag);
        if !mecs.contains(&c) {
            mecs.push(c);
        }
    }
    Ok(SparsestPermutations {
        min_edges,
        dags,
        mecs,
    })
}

/// Whether the true DAG's equivalence class is the unique sparsest one.
pub fn smr_holds(o: &CiOracle, true_dag: &Dag) -> Result<bool> {
    if true_dag.num_vars() != o.num_vars() {
        return Err(Error::InvalidArgument("dimension mismatch".into()));
    }
    let sp = sparsest_permutation(o)?;
    Ok(sp.mecs.len() == 1 && sp.mecs[0] == dag_to_cpdag(true_dag))
}
