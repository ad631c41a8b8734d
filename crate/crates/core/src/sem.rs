//! Linear-Gaussian structural equation models: random generation, sampling
//! and the closed-form covariance / precision matrices.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dag, UndirectedGraph};

const WEIGHT_RANGE: (f64, f64) = (0.2, 0.8);
const NOISE_VAR_RANGE: (f64, f64) = (1.0, 2.0);

pub(crate) fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 step; maps `(base, stream)` to a well-mixed child seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A DAG with edge coefficients `B` (`B[(j, i)] != 0` iff `j -> i`) and
/// strictly positive noise variances.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDag {
    dag: Dag,
    weights: DMatrix<f64>,
    noise_vars: Vec<f64>,
}

impl WeightedDag {
    pub fn new(dag: Dag, weights: DMatrix<f64>, noise_vars: Vec<f64>) -> Result<Self> {
        let d = dag.num_vars();
        if weights.nrows() != d || weights.ncols() != d || noise_vars.len() != d {
            return Err(Error::InvalidArgument(format!(
                "weights {}x{} and {} noise variances do not match {d} variables",
                weights.nrows(),
                weights.ncols(),
                noise_vars.len()
            )));
        }
        for j in 0..d {
            for i in 0..d {
                if (weights[(j, i)] != 0.0) != dag.has_edge(j, i) {
                    return Err(Error::InvalidArgument(format!(
                        "weight support disagrees with the DAG at ({j}, {i})"
                    )));
                }
            }
        }
        if let Some(i) = noise_vars.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "noise variance of {i} must be positive"
            )));
        }
        Ok(WeightedDag {
            dag,
            weights,
            noise_vars,
        })
    }

    /// Derives the DAG from the nonzero pattern of `weights`.
    pub fn from_weights(weights: DMatrix<f64>, noise_vars: Vec<f64>) -> Result<Self> {
        let d = weights.nrows();
        let mut edges = Vec::new();
        for j in 0..d {
            for i in 0..weights.ncols() {
                if weights[(j, i)] != 0.0 {
                    edges.push((j, i));
                }
            }
        }
        let dag = Dag::from_edges(d, &edges)?;
        WeightedDag::new(dag, weights, noise_vars)
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn noise_vars(&self) -> &[f64] {
        &self.noise_vars
    }

    pub fn num_vars(&self) -> usize {
        self.dag.num_vars()
    }
}

/// `n x d` sample matrix; column `i` holds variable `X_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: DMatrix<f64>,
}

impl Dataset {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset has non-finite entries".into()));
        }
        Ok(Dataset { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// Symmetric positive-definite precision matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix {
    theta: DMatrix<f64>,
}

impl PrecisionMatrix {
    pub fn new(theta: DMatrix<f64>) -> Result<Self> {
        if !theta.is_square() {
            return Err(Error::InvalidArgument("precision matrix must be square".into()));
        }
        let scale = theta.amax().max(1.0);
        let d = theta.nrows();
        for i in 0..d {
            for j in i + 1..d {
                if (theta[(i, j)] - theta[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "precision matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if theta.clone().cholesky().is_none() {
            return Err(Error::InvalidArgument(
                "precision matrix is not positive definite".into(),
            ));
        }
        Ok(PrecisionMatrix { theta })
    }

    /// Skips validation; callers guarantee symmetry and definiteness.
    pub(crate) fn new_unchecked(theta: DMatrix<f64>) -> Self {
        PrecisionMatrix { theta }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn num_vars(&self) -> usize {
        self.theta.nrows()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.theta
    }
}

/// Erdős–Rényi DAG: each unordered pair is an edge with probability
/// `expected_degree / (d - 1)`, oriented along a uniformly random
/// permutation.
pub fn random_er_dag(d: usize, expected_degree: f64, seed: u64) -> Result<Dag> {
    if d == 0 {
        return Err(Error::InvalidArgument("need at least one variable".into()));
    }
    if !(expected_degree >= 0.0 && expected_degree < d as f64) {
        return Err(Error::InvalidArgument(format!(
            "expected degree {expected_degree} outside [0, {d})"
        )));
    }
    if d == 1 {
        return Ok(Dag::empty(1));
    }
    let p = (expected_degree / (d - 1) as f64).min(1.0);
    let mut rng = rng_from(seed);
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(&mut rng);
    let mut parents = vec![Vec::new(); d];
    // position a precedes position b in the causal order
    for b in 1..d {
        for a in 0..b {
            if rng.random::<f64>() < p {
                parents[perm[b]].push(perm[a]);
            }
        }
    }
    Dag::from_parents(parents)
}

/// Edge weights uniform on `[-0.8, -0.2] ∪ [0.2, 0.8]`, noise variances
/// uniform on `[1, 2]`.
pub fn random_weights(dag: &Dag, seed: u64) -> WeightedDag {
    let d = dag.num_vars();
    let mut rng = rng_from(seed);
    let mut weights = DMatrix::zeros(d, d);
    for (p, c) in dag.edges() {
        let magnitude = rng.random_range(WEIGHT_RANGE.0..=WEIGHT_RANGE.1);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        weights[(p, c)] = sign * magnitude;
    }
    let noise_vars = (0..d)
        .map(|_| rng.random_range(NOISE_VAR_RANGE.0..=NOISE_VAR_RANGE.1))
        .collect();
    WeightedDag {
        dag: dag.clone(),
        weights,
        noise_vars,
    }
}

/// Draws `n` i.i.d. rows of `X = Bᵀ X + N`, `N ~ N(0, diag(σ²))`.
pub fn sample(model: &WeightedDag, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
    }
    let d = model.num_vars();
    let order = model.dag.topological_order().ok_or(Error::Cyclic)?;
    let stds: Vec<f64> = model.noise_vars.iter().map(|s| s.sqrt()).collect();
    let mut rng = rng_from(seed);
    let mut values = DMatrix::zeros(n, d);
    let mut row = vec![0.0; d];
    for r in 0..n {
        for &i in &order {
            let noise: f64 = rng.sample(StandardNormal);
            let signal: f64 = model
                .dag
                .parents(i)
                .iter()
                .map(|&p| model.weights[(p, i)] * row[p])
                .sum();
            row[i] = signal + stds[i] * noise;
        }
        for i in 0..d {
            values[(r, i)] = row[i];
        }
    }
    Dataset::new(values)
}

/// `Σ = (I - Bᵀ)⁻¹ Ω (I - B)⁻¹`.
pub fn analytic_covariance(model: &WeightedDag) -> DMatrix<f64> {
    let d = model.num_vars();
    let i_minus_bt = DMatrix::identity(d, d) - model.weights.transpose();
    let mixing = i_minus_bt
        .try_inverse()
        .expect("I - Bᵀ is unit triangular up to permutation");
    let omega = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&model.noise_vars));
    let sigma = &mixing * omega * mixing.transpose();
    (&sigma + sigma.transpose()) * 0.5
}

/// Closed-form precision matrix, accumulated child by child:
/// `Θ_jk = -σ_j⁻² B_kj - σ_k⁻² B_jk + Σ_ℓ σ_ℓ⁻² B_jℓ B_kℓ` and
/// `Θ_jj = σ_j⁻² + Σ_ℓ σ_ℓ⁻² B_jℓ²`.
pub fn analytic_precision(model: &WeightedDag) -> PrecisionMatrix {
    let d = model.num_vars();
    let b = &model.weights;
    let mut theta = DMatrix::zeros(d, d);
    for child in 0..d {
        let w = 1.0 / model.noise_vars[child];
        theta[(child, child)] += w;
        let pa = model.dag.parents(child);
        for &p in pa {
            let v = w * b[(p, child)];
            theta[(p, child)] -= v;
            theta[(child, p)] -= v;
        }
        for &p in pa {
            for &q in pa {
                theta[(p, q)] += w * b[(p, child)] * b[(q, child)];
            }
        }
    }
    PrecisionMatrix::new_unchecked(theta)
}

/// Off-diagonal support of `theta`: edge `{i, j}` iff `|Θ_ij| > tol`.
pub fn support_graph(theta: &PrecisionMatrix, tol: f64) -> UndirectedGraph {
    let m = theta.matrix();
    let d = m.nrows();
    let mut g = UndirectedGraph::new(d);
    for i in 0..d {
        for j in i + 1..d {
            if m[(i, j)].abs() > tol || m[(j, i)].abs() > tol {
                g.add_edge(i, j);
            }
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColliderKind {
    Shielded,
    Unshielded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolatingPair {
    pub a: usize,
    pub b: usize,
    pub kind: ColliderKind,
    pub abs_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub sscf_holds: bool,
    pub sucf_holds: bool,
    pub violating_pairs: Vec<ViolatingPair>,
}

/// Collider-parent pairs `(a, b)` with `a < b`, split by whether the two
/// parents are adjacent.
fn spouse_pairs(dag: &Dag) -> (BTreeSet<(usize, usize)>, BTreeSet<(usize, usize)>) {
    let mut shielded = BTreeSet::new();
    let mut unshielded = BTreeSet::new();
    for pa in dag.parent_sets() {
        for (x, &a) in pa.iter().enumerate() {
            for &b in &pa[x + 1..] {
                if dag.adjacent(a, b) {
                    shielded.insert((a, b));
                } else {
                    unshielded.insert((a, b));
                }
            }
        }
    }
    (shielded, unshielded)
}

/// Population check of single shielded- and unshielded-collider
/// faithfulness through the entries of the analytic precision matrix.
pub fn check_sscf_sucf(model: &WeightedDag, tol: f64) -> AssumptionReport {
    let theta = analytic_precision(model);
    let m = theta.matrix();
    let (shielded, unshielded) = spouse_pairs(&model.dag);
    let mut violating_pairs = Vec::new();
    for (pairs, kind) in [
        (&shielded, ColliderKind::Shielded),
        (&unshielded, ColliderKind::Unshielded),
    ] {
        for &(a, b) in pairs {
            let abs_theta = m[(a, b)].abs();
            if abs_theta <= tol {
                violating_pairs.push(ViolatingPair {
                    a,
                    b,
                    kind,
                    abs_theta,
                });
            }
        }
    }
    AssumptionReport {
        sscf_holds: !violating_pairs
            .iter()
            .any(|v| v.kind == ColliderKind::Shielded),
        sucf_holds: !violating_pairs
            .iter()
            .any(|v| v.kind == ColliderKind::Unshielded),
        violating_pairs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinThetaSummary {
    /// Mean over reps of `min |Θ_ij|` across DAG neighbours; `None` when no
    /// rep had an edge.
    pub mean_min_neighbor_abs_theta: Option<f64>,
    /// Mean over reps of `min |Θ_ij|` across non-adjacent spouses; `None`
    /// when no rep had a v-structure.
    pub mean_min_spouse_abs_theta: Option<f64>,
    pub neighbor_reps: usize,
    pub spouse_reps: usize,
}

/// Per-rep minima of `|Θ_ij|` over neighbour pairs and over non-adjacent
/// spouse pairs of random ER models, averaged over reps.
pub fn min_theta_experiment(
    d: usize,
    expected_degree: f64,
    reps: usize,
    seed: u64,
) -> Result<MinThetaSummary> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    let mut neighbor_mins = Vec::new();
    let mut spouse_mins = Vec::new();
    for rep in 0..reps as u64 {
        let dag = random_er_dag(d, expected_degree, derive_seed(seed, 2 * rep))?;
        let model = random_weights(&dag, derive_seed(seed, 2 * rep + 1));
        let theta = analytic_precision(&model);
        let m = theta.matrix();
        let min_abs = |pairs: &mut dyn Iterator<Item = (usize, usize)>| {
            pairs.map(|(a, b)| m[(a, b)].abs()).reduce(f64::min)
        };
        if let Some(v) = min_abs(&mut dag.edges().into_iter()) {
            neighbor_mins.push(v);
        }
        let (_, unshielded) = spouse_pairs(&dag);
        if let Some(v) = min_abs(&mut unshielded.into_iter()) {
            spouse_mins.push(v);
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(MinThetaSummary {
        mean_min_neighbor_abs_theta: mean(&neighbor_mins),
        mean_min_spouse_abs_theta: mean(&spouse_mins),
        neighbor_reps: neighbor_mins.len(),
        spouse_reps: spouse_mins.len(),
    })
}

/// Four-variable path-cancellation SEM with unit noise:
/// `X = N_X, Y = X + N_Y, Z = Y + N_Z, W = -X + Z + N_W`, indexed
/// `X=0, Y=1, Z=2, W=3`. `X` and `W` are marginally independent even though
/// `X -> W` is an edge.
pub fn path_cancellation_model() -> WeightedDag {
    let mut b = DMatrix::zeros(4, 4);
    b[(0, 1)] = 1.0;
    b[(1, 2)] = 1.0;
    b[(2, 3)] = 1.0;
    b[(0, 3)] = -1.0;
    WeightedDag::from_weights(b, vec![1.0; 4]).expect("fixed model is valid")
}

/// Triangle `X -> Y -> Z`, `X -> Z` whose direct effect cancels the
/// mediated one, so `X ⊥ Z` marginally. The collider `X -> Y <- Z` is
/// Markov with one edge fewer, so the true class is not the sparsest.
pub fn triangle_cancellation_model() -> WeightedDag {
    let mut b = DMatrix::zeros(3, 3);
    b[(0, 1)] = 1.0;
    b[(1, 2)] = 1.0;
    b[(0, 2)] = -1.0;
    WeightedDag::from_weights(b, vec![1.0; 3]).expect("fixed model is valid")
}
