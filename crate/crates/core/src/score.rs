//! Gaussian BIC local scores and pruned parent graphs.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Dag, UndirectedGraph};
use crate::varset::{self, bit, MAX_VARS};

const REGRESSION_RIDGE: f64 = 1e-10;
/// Parent graphs tabulate `2^k` subsets of the free candidates.
pub const MAX_FREE_CANDIDATES: usize = 22;
/// Parent-set size cap for searches without a super-structure.
/// Residual variance, relative to the marginal one, treated as singular.
const SINGULAR_RESIDUAL: f64 = 1e-9;

pub const DEFAULT_MAX_PARENTS: usize = 8;

/// Local BIC of `i` given `parents`, from the covariance `cov` of `n`
/// centred samples:
/// `-(n/2) log σ̂² - (log n / 2)(|pa| + 1)` with
/// `σ̂² = S_ii - S_{i,pa} S_{pa,pa}⁻¹ S_{pa,i}`.
///
/// Returns `-∞` when the regression is numerically singular.
pub fn bic_local(cov: &DMatrix<f64>, n: usize, i: usize, parents: &[usize]) -> f64 {
    let residual = residual_variance(cov, i, parents);
    if !(residual > 0.0 && residual.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let nf = n as f64;
    -0.5 * nf * residual.ln() - 0.5 * nf.ln() * (parents.len() + 1) as f64
}

fn residual_variance(cov: &DMatrix<f64>, i: usize, parents: &[usize]) -> f64 {
    let k = parents.len();
    if k == 0 {
        return cov[(i, i)];
    }
    let gram = DMatrix::from_fn(k, k, |r, c| cov[(parents[r], parents[c])]);
    let cross = DVector::from_fn(k, |r, _| cov[(parents[r], i)]);
    let chol = match gram.clone().cholesky() {
        Some(c) => c,
        None => {
            let ridged = gram + DMatrix::identity(k, k) * REGRESSION_RIDGE;
            match ridged.cholesky() {
                Some(c) => c,
                None => return f64::NAN,
            }
        }
    };
    let coef = chol.solve(&cross);
    let residual = cov[(i, i)] - cross.dot(&coef);
    // an exact linear dependence leaves only rounding noise
    if residual <= SINGULAR_RESIDUAL * cov[(i, i)] {
        return f64::NAN;
    }
    residual
}

/// Sum of local scores over the families of `dag`, in variable order.
pub fn total_score(cov: &DMatrix<f64>, n: usize, dag: &Dag) -> f64 {
    (0..dag.num_vars())
        .map(|i| bic_local(cov, n, i, dag.parents(i)))
        .sum()
}

/// Restrictions on admissible parent sets, in global variable indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchConstraints {
    forbidden_parents: Vec<BTreeSet<usize>>,
    required_edges: BTreeSet<(usize, usize)>,
    forbidden_edges: BTreeSet<(usize, usize)>,
}

impl SearchConstraints {
    pub fn none(num_vars: usize) -> Self {
        SearchConstraints {
            forbidden_parents: vec![BTreeSet::new(); num_vars],
            required_edges: BTreeSet::new(),
            forbidden_edges: BTreeSet::new(),
        }
    }

    /// Parents of each variable restricted to its super-structure neighbours.
    pub fn from_superstructure(g: &UndirectedGraph) -> Self {
        let d = g.num_vars();
        let forbidden_parents = (0..d)
            .map(|i| {
                (0..d)
                    .filter(|&j| j != i && !g.has_edge(i, j))
                    .collect()
            })
            .collect();
        SearchConstraints {
            forbidden_parents,
            ..SearchConstraints::none(d)
        }
    }

    pub fn num_vars(&self) -> usize {
        self.forbidden_parents.len()
    }

    pub fn with_required_edges(mut self, edges: &[(usize, usize)]) -> Result<Self> {
        self.required_edges.extend(edges.iter().copied());
        self.validate()?;
        Ok(self)
    }

    pub fn with_forbidden_edges(mut self, edges: &[(usize, usize)]) -> Result<Self> {
        self.forbidden_edges.extend(edges.iter().copied());
        self.validate()?;
        Ok(self)
    }

    pub fn forbidden_parents(&self, i: usize) -> &BTreeSet<usize> {
        &self.forbidden_parents[i]
    }

    pub fn required_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.required_edges
    }

    pub fn forbidden_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.forbidden_edges
    }

    pub fn allows(&self, from: usize, to: usize) -> bool {
        from != to
            && !self.forbidden_parents[to].contains(&from)
            && !self.forbidden_edges.contains(&(from, to))
    }

    /// Required and forbidden edges are disjoint, every required edge is
    /// allowed, and the required edges are acyclic.
    pub fn validate(&self) -> Result<()> {
        let d = self.num_vars();
        for &(a, b) in self.required_edges.iter().chain(&self.forbidden_edges) {
            if a >= d || b >= d {
                return Err(Error::IndexOutOfRange {
                    index: a.max(b),
                    num_vars: d,
                });
            }
        }
        if let Some(e) = self.required_edges.intersection(&self.forbidden_edges).next() {
            return Err(Error::InvalidConstraints(format!(
                "edge {e:?} both required and forbidden"
            )));
        }
        if let Some(&(a, b)) = self.required_edges.iter().find(|&&(a, b)| !self.allows(a, b)) {
            return Err(Error::InvalidConstraints(format!(
                "required edge ({a}, {b}) is not an allowed parent relation"
            )));
        }
        let edges: Vec<(usize, usize)> = self.required_edges.iter().copied().collect();
        if Dag::from_edges(d, &edges).is_err() {
            return Err(Error::InvalidConstraints(
                "required edges contain a directed cycle".into(),
            ));
        }
        Ok(())
    }
}

/// Scores of the parent sets of one variable that survive pruning, in
/// problem-local indices.
///
/// An entry is kept only if it scores strictly better than every subset of
/// it, so the best admissible parent set within any allowed set `U` is the
/// first entry (in descending score order) that is contained in `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentGraph {
    variable: usize,
    candidates: u64,
    required: u64,
    entries: Vec<(u64, f64)>,
}

impl ParentGraph {
    /// Builds the parent graph of `scope[target]` over the variables of
    /// `scope`. Required edges whose parent lies outside `scope` are ignored.
    pub fn build(
        cov: &DMatrix<f64>,
        n: usize,
        scope: &[usize],
        target: usize,
        constraints: &SearchConstraints,
        max_parents: Option<usize>,
    ) -> Result<Self> {
        if scope.len() > MAX_VARS {
            return Err(Error::TooLarge {
                num_vars: scope.len(),
                limit: MAX_VARS,
            });
        }
        let global = scope[target];
        let mut candidates = 0u64;
        let mut required = 0u64;
        for (k, &g) in scope.iter().enumerate() {
            if k == target {
                continue;
            }
            let allowed = constraints.allows(g, global);
            let needed = constraints.required_edges.contains(&(g, global));
            if needed && !allowed {
                return Err(Error::InvalidConstraints(format!(
                    "required edge ({g}, {global}) is forbidden"
                )));
            }
            if allowed {
                candidates |= bit(k);
            }
            if needed {
                required |= bit(k);
            }
        }
        let free: Vec<usize> = varset::to_vec(candidates & !required);
        if free.len() > MAX_FREE_CANDIDATES {
            return Err(Error::TooLarge {
                num_vars: free.len(),
                limit: MAX_FREE_CANDIDATES,
            });
        }
        let max_free = max_parents
            .map(|m| m.saturating_sub(required.count_ones() as usize))
            .unwrap_or(free.len())
            .min(free.len());

        let size = 1usize << free.len();
        let mut best_sub = vec![f64::NEG_INFINITY; size];
        let mut entries = Vec::new();
        let mut members: Vec<usize> = Vec::with_capacity(scope.len());
        for mask in 0..size {
            if mask.count_ones() as usize > max_free {
                continue;
            }
            let local = required | expand(mask, &free);
            members.clear();
            members.extend(varset::iter(local).map(|k| scope[k]));
            let score = bic_local(cov, n, global, &members);
            let mut prior = f64::NEG_INFINITY;
            let mut rest = mask;
            while rest != 0 {
                let low = rest & rest.wrapping_neg();
                prior = prior.max(best_sub[mask ^ low]);
                rest ^= low;
            }
            if score.is_finite() && score > prior {
                entries.push((local, score));
            }
            best_sub[mask] = prior.max(score);
        }
        entries.sort_by(|a, b| entry_order(*a, *b));
        Ok(ParentGraph {
            variable: target,
            candidates,
            required,
            entries,
        })
    }

    pub fn variable(&self) -> usize {
        self.variable
    }

    pub fn candidates(&self) -> u64 {
        self.candidates
    }

    pub fn required(&self) -> u64 {
        self.required
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Best stored parent set contained in `allowed`, ties broken by smaller
    /// then lexicographically smaller set. `None` when a required parent is
    /// not allowed.
    pub fn best_score_and_set(&self, allowed: u64) -> Option<(f64, u64)> {
        self.entries
            .iter()
            .find(|(set, _)| varset::is_subset(*set, allowed))
            .map(|&(set, score)| (score, set))
    }
}

fn expand(mask: usize, free: &[usize]) -> u64 {
    varset::iter(mask as u64).fold(0, |acc, k| acc | bit(free[k]))
}

fn entry_order(a: (u64, f64), b: (u64, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then(a.0.count_ones().cmp(&b.0.count_ones()))
        .then(varset::lex_cmp(a.0, b.0))
}

/// Builds the parent graph of `i` over all variables of `cov`.
pub fn build_parent_graph(
    cov: &DMatrix<f64>,
    n: usize,
    i: usize,
    constraints: &SearchConstraints,
    max_parents: Option<usize>,
) -> Result<ParentGraph> {
    let scope: Vec<usize> = (0..cov.nrows()).collect();
    ParentGraph::build(cov, n, &scope, i, constraints, max_parents)
}

/// Free function form of [`ParentGraph::best_score_and_set`].
pub fn best_score_and_set(pg: &ParentGraph, allowed: u64) -> Option<(f64, u64)> {
    pg.best_score_and_set(allowed)
}

/// Parent graphs for every variable of a search problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    scope: Vec<usize>,
    parent_graphs: Vec<ParentGraph>,
}

impl ScoreTable {
    /// Parent graphs for the variables in `scope` (global indices), built in
    /// parallel.
    pub fn build(
        cov: &DMatrix<f64>,
        n: usize,
        scope: &[usize],
        constraints: &SearchConstraints,
        max_parents: Option<usize>,
    ) -> Result<Self> {
        if scope.len() > MAX_VARS {
            return Err(Error::TooLarge {
                num_vars: scope.len(),
                limit: MAX_VARS,
            });
        }
        let parent_graphs = (0..scope.len())
            .into_par_iter()
            .map(|t| ParentGraph::build(cov, n, scope, t, constraints, max_parents))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScoreTable {
            scope: scope.to_vec(),
            parent_graphs,
        })
    }

    /// All variables of `cov`.
    pub fn full(
        cov: &DMatrix<f64>,
        n: usize,
        constraints: &SearchConstraints,
        max_parents: Option<usize>,
    ) -> Result<Self> {
        let scope: Vec<usize> = (0..cov.nrows()).collect();
        ScoreTable::build(cov, n, &scope, constraints, max_parents)
    }

    pub fn from_parent_graphs(scope: Vec<usize>, parent_graphs: Vec<ParentGraph>) -> Self {
        assert_eq!(scope.len(), parent_graphs.len());
        ScoreTable {
            scope,
            parent_graphs,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.parent_graphs.len()
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn parent_graph(&self, i: usize) -> &ParentGraph {
        &self.parent_graphs[i]
    }

    pub fn parent_graphs(&self) -> &[ParentGraph] {
        &self.parent_graphs
    }

    /// Sum of the stored local scores of `dag` (local indices); `None` if
    /// some family is not stored.
    pub fn score_of(&self, dag: &Dag) -> Option<f64> {
        (0..self.num_vars())
            .map(|i| {
                let set = varset::from_indices(dag.parents(i).iter().copied());
                self.parent_graphs[i]
                    .entries
                    .iter()
                    .find(|(s, _)| *s == set)
                    .map(|&(_, v)| v)
            })
            .sum()
    }
}

/// Parent-set cap: unbounded with a super-structure, otherwise
/// `min(d - 1, 8)`.
pub fn default_max_parents(num_vars: usize, has_superstructure: bool) -> Option<usize> {
    if has_superstructure {
        None
    } else {
        Some(num_vars.saturating_sub(1).min(DEFAULT_MAX_PARENTS))
    }
}
