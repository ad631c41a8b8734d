//! Local A*: exact search on the two-hop cluster of every variable, smallest
//! cluster first, with the marks found so far held fixed.

use std::time::{Duration, Instant};

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{consistent_extension, dag_to_cpdag, two_hop_neighbors, Cpdag, Mark, UndirectedGraph};
use crate::score::{ScoreTable, SearchConstraints};
use crate::search::astar_with_deadline;

/// Two-hop clusters of a super-structure and the order they are searched in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPlan {
    clusters: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl ClusterPlan {
    /// `C_i` as an ascending list that contains `i`.
    pub fn cluster(&self, i: usize) -> &[usize] {
        &self.clusters[i]
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    /// Variables sorted by cluster size, ties by index.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn max_cluster_size(&self) -> usize {
        self.clusters.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Splits the order into maximal runs of consecutive targets whose
    /// clusters are pairwise disjoint. Targets in one wave neither read nor
    /// write each other's marks, so they can be searched concurrently.
    pub fn waves(&self) -> Vec<Vec<usize>> {
        let d = self.clusters.len();
        let mut waves: Vec<Vec<usize>> = Vec::new();
        let mut used = vec![false; d];
        let mut current: Vec<usize> = Vec::new();
        for &t in &self.order {
            if self.clusters[t].iter().any(|&v| used[v]) {
                for &s in &current {
                    for &v in &self.clusters[s] {
                        used[v] = false;
                    }
                }
                waves.push(std::mem::take(&mut current));
            }
            for &v in &self.clusters[t] {
                used[v] = true;
            }
            current.push(t);
        }
        if !current.is_empty() {
            waves.push(current);
        }
        waves
    }
}

pub fn plan_clusters(superstructure: &UndirectedGraph) -> ClusterPlan {
    let d = superstructure.num_vars();
    let clusters: Vec<Vec<usize>> = (0..d)
        .map(|i| {
            let mut c = two_hop_neighbors(superstructure, i).expect("index in range");
            c.push(i);
            c.sort_unstable();
            c
        })
        .collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by_key(|&i| (clusters[i].len(), i));
    ClusterPlan { clusters, order }
}

#[derive(Debug, Clone)]
pub struct LocalConfig {
    /// Largest cluster the inner exact search accepts.
    pub max_cluster: usize,
    /// Search the clusters of a wave concurrently.
    pub parallel: bool,
    /// Fail with `InconsistentMarks` instead of relaxing fixed edges.
    pub strict: bool,
    pub max_parents: Option<usize>,
    /// Wall-clock budget for the whole run.
    pub time_budget: Option<Duration>,
}

impl Default for LocalConfig {
    fn default() -> Self {
        LocalConfig {
            max_cluster: 20,
            parallel: true,
            strict: false,
            max_parents: None,
            time_budget: None,
        }
    }
}

/// A saved mark that disagreed with a later proposal for the same pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MarkConflict {
    pub target: usize,
    pub a: usize,
    pub b: usize,
    /// Mark of `a` to `b` already saved, and by which target.
    pub existing: String,
    pub existing_source: Option<usize>,
    pub proposed: String,
}

fn mark_str(m: Mark) -> String {
    match m {
        Mark::None => "none",
        Mark::Forward => "->",
        Mark::Backward => "<-",
        Mark::Undirected => "--",
    }
    .to_string()
}

/// The partially built result: saved marks, which target saved each pair,
/// and which targets are done.
#[derive(Debug, Clone)]
pub struct AccumulatedMec {
    marks: Cpdag,
    source: Vec<Option<usize>>,
    processed: Vec<bool>,
}

impl AccumulatedMec {
    pub fn new(num_vars: usize) -> Self {
        AccumulatedMec {
            marks: Cpdag::new(num_vars),
            source: vec![None; num_vars * num_vars],
            processed: vec![false; num_vars],
        }
    }

    pub fn marks(&self) -> &Cpdag {
        &self.marks
    }

    /// Target whose cluster saved the pair `{a, b}`.
    pub fn source(&self, a: usize, b: usize) -> Option<usize> {
        let d = self.marks.num_vars();
        self.source[a.min(b) * d + a.max(b)]
    }

    pub fn is_processed(&self, i: usize) -> bool {
        self.processed[i]
    }
}

/// Mark the target should save for the pair `(t, k)` of `local`: undirected
/// edges stay undirected, directed edges that belong to a v-structure
/// through `t` stay directed, other directed edges are saved as adjacencies.
fn saved_mark(local: &Cpdag, t: usize, k: usize) -> Mark {
    let m = local.mark(t, k);
    let d = local.num_vars();
    let in_v = |child: usize, parent: usize| {
        (0..d).any(|l| {
            l != parent && local.is_directed(l, child) && !local.adjacent(l, parent)
        })
    };
    match m {
        Mark::None => Mark::None,
        Mark::Undirected => Mark::Undirected,
        Mark::Backward if in_v(t, k) => Mark::Backward,
        Mark::Forward if in_v(k, t) => Mark::Forward,
        _ => Mark::Undirected,
    }
}

/// Saves the marks of `local_cpdag` (over `cluster`, ascending global
/// indices) that are incident to `target`. Pairs whose other endpoint is
/// already processed keep their saved mark; a disagreement is returned as a
/// conflict.
pub fn merge_marks(
    acc: &mut AccumulatedMec,
    local_cpdag: &Cpdag,
    cluster: &[usize],
    target: usize,
) -> Vec<MarkConflict> {
    let t = cluster
        .iter()
        .position(|&v| v == target)
        .expect("target belongs to its cluster");
    let d = acc.marks.num_vars();
    let mut conflicts = Vec::new();
    for (k, &g) in cluster.iter().enumerate() {
        if k == t {
            continue;
        }
        let proposed = saved_mark(local_cpdag, t, k);
        let pair = target.min(g) * d + target.max(g);
        let existing = acc.marks.mark(target, g);
        if acc.source[pair].is_some() || acc.processed[g] {
            if existing != proposed {
                conflicts.push(MarkConflict {
                    target,
                    a: target,
                    b: g,
                    existing: mark_str(existing),
                    existing_source: acc.source[pair],
                    proposed: mark_str(proposed),
                });
            }
            continue;
        }
        if proposed != Mark::None {
            acc.marks.set_mark(target, g, proposed);
            acc.source[pair] = Some(target);
        }
    }
    acc.processed[target] = true;
    conflicts
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterLog {
    pub target: usize,
    pub size: usize,
    pub fixed_edges: usize,
    pub expanded_nodes: usize,
    pub runtime_secs: f64,
    /// Fixed edges had to be relaxed because the saved marks did not extend.
    pub relaxed: bool,
}

#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub cpdag: Cpdag,
    pub clusters: Vec<ClusterLog>,
    pub conflicts: Vec<MarkConflict>,
    /// The saved marks did not extend to a DAG; `cpdag` is their Meek
    /// closure instead.
    pub unextendable: bool,
}

struct ClusterResult {
    local: Cpdag,
    log: ClusterLog,
}

/// Edges to impose on the search of `cluster`: the directed saved marks
/// inside the cluster, and the absence of unsaved pairs touching a processed
/// variable. Undirected saved marks are not imposed; fixing an arbitrary
/// orientation of them can force the search out of the right class.
///
/// The saved marks must admit a consistent extension; otherwise only the
/// marks incident to `target` are kept (or `InconsistentMarks` in strict
/// mode).
fn fixed_edges(
    acc: &AccumulatedMec,
    cluster: &[usize],
    ss_local: &UndirectedGraph,
    target: usize,
    strict: bool,
) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>, bool)> {
    let induced = acc.marks.induced(cluster);
    match consistent_extension(&induced, &[]) {
        Ok(_) => {}
        Err(Error::NotExtendable) if strict => return Err(Error::InconsistentMarks { target }),
        Err(Error::NotExtendable) => {
            let t = cluster.iter().position(|&v| v == target).unwrap();
            let mut only_target = Cpdag::new(cluster.len());
            for k in (0..cluster.len()).filter(|&k| k != t) {
                only_target.set_mark(t, k, induced.mark(t, k));
            }
            let required = match consistent_extension(&only_target, &[]) {
                Ok(_) => only_target.directed_edges(),
                Err(_) => Vec::new(),
            };
            return Ok((required, Vec::new(), true));
        }
        Err(e) => return Err(e),
    }
    let mut forbidden = Vec::new();
    for (a, b) in ss_local.edges() {
        let done = acc.processed[cluster[a]] || acc.processed[cluster[b]];
        if done && !induced.adjacent(a, b) {
            forbidden.push((a, b));
            forbidden.push((b, a));
        }
    }
    Ok((induced.directed_edges(), forbidden, false))
}

fn search_cluster(
    cov: &DMatrix<f64>,
    n: usize,
    superstructure: &UndirectedGraph,
    cluster: &[usize],
    target: usize,
    acc: &AccumulatedMec,
    cfg: &LocalConfig,
    deadline: Option<Instant>,
) -> Result<ClusterResult> {
    let start = Instant::now();
    let k = cluster.len();
    let sub_cov = DMatrix::from_fn(k, k, |a, b| cov[(cluster[a], cluster[b])]);
    let mut ss_local = UndirectedGraph::new(k);
    for a in 0..k {
        for b in a + 1..k {
            if superstructure.has_edge(cluster[a], cluster[b]) {
                ss_local.add_edge(a, b);
            }
        }
    }
    let (required, forbidden, relaxed) = fixed_edges(acc, cluster, &ss_local, target, cfg.strict)?;
    let constraints = SearchConstraints::from_superstructure(&ss_local)
        .with_required_edges(&required)?
        .with_forbidden_edges(&forbidden)?;
    let table = ScoreTable::full(&sub_cov, n, &constraints, cfg.max_parents)?;
    let result = astar_with_deadline(&table, deadline)?;
    Ok(ClusterResult {
        local: dag_to_cpdag(&result.dag),
        log: ClusterLog {
            target,
            size: k,
            fixed_edges: required.len(),
            expanded_nodes: result.expanded_nodes,
            runtime_secs: start.elapsed().as_secs_f64(),
            relaxed,
        },
    })
}

/// Runs Local A* on covariance `cov` of `n` samples, restricted to
/// `superstructure`.
pub fn local_astar(
    cov: &DMatrix<f64>,
    n: usize,
    superstructure: &UndirectedGraph,
    cfg: &LocalConfig,
) -> Result<LocalOutcome> {
    let d = superstructure.num_vars();
    if cov.nrows() != d || cov.ncols() != d {
        return Err(Error::InvalidArgument(format!(
            "covariance is {}x{}, super-structure has {d} variables",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let plan = plan_clusters(superstructure);
    if let Some(&t) = plan.order.iter().find(|&&t| plan.clusters[t].len() > cfg.max_cluster) {
        return Err(Error::ClusterTooLarge {
            target: t,
            size: plan.clusters[t].len(),
            limit: cfg.max_cluster,
        });
    }
    let deadline = cfg.time_budget.map(|b| Instant::now() + b);
    let mut acc = AccumulatedMec::new(d);
    let mut logs = Vec::with_capacity(d);
    let mut conflicts = Vec::new();

    for wave in plan.waves() {
        let run = |&t: &usize| {
            search_cluster(cov, n, superstructure, &plan.clusters[t], t, &acc, cfg, deadline)
        };
        let results: Vec<ClusterResult> = if cfg.parallel {
            wave.par_iter().map(run).collect::<Result<_>>()?
        } else {
            wave.iter().map(run).collect::<Result<_>>()?
        };
        for (&t, r) in wave.iter().zip(results) {
            let found = merge_marks(&mut acc, &r.local, &plan.clusters[t], t);
            for c in &found {
                warn!("target {t}: kept {} for ({}, {}), proposed {}", c.existing, c.a, c.b, c.proposed);
            }
            info!(
                "cluster of {t}: {} variables, {} fixed edges, {:.3}s",
                r.log.size, r.log.fixed_edges, r.log.runtime_secs
            );
            conflicts.extend(found);
            logs.push(r.log);
        }
    }

    let (cpdag, unextendable) = match consistent_extension(&acc.marks, &[]) {
        Ok(dag) => (dag_to_cpdag(&dag), false),
        Err(Error::NotExtendable) => {
            warn!("saved marks admit no consistent extension; returning their Meek closure");
            let mut m = acc.marks.clone();
            m.meek_closure();
            (m, true)
        }
        Err(e) => return Err(e),
    };
    Ok(LocalOutcome {
        cpdag,
        clusters: logs,
        conflicts,
        unextendable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{moralize, Dag};
    use crate::sem::{analytic_covariance, WeightedDag};

    fn path(d: usize) -> UndirectedGraph {
        let edges: Vec<(usize, usize)> = (0..d - 1).map(|i| (i, i + 1)).collect();
        UndirectedGraph::from_edges(d, &edges).unwrap()
    }

    #[test]
    fn plan_of_empty_graph() {
        let plan = plan_clusters(&UndirectedGraph::new(4));
        assert_eq!(plan.order(), &[0, 1, 2, 3]);
        for i in 0..4 {
            assert_eq!(plan.cluster(i), &[i]);
        }
        assert_eq!(plan.waves(), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn plan_of_path() {
        let plan = plan_clusters(&path(4));
        assert_eq!(plan.cluster(0), &[0, 1, 2]);
        assert_eq!(plan.cluster(1), &[0, 1, 2, 3]);
        assert_eq!(plan.cluster(2), &[0, 1, 2, 3]);
        assert_eq!(plan.cluster(3), &[1, 2, 3]);
        assert_eq!(plan.order(), &[0, 3, 1, 2]);
    }

    #[test]
    fn plan_of_star() {
        let edges: Vec<(usize, usize)> = (1..6).map(|i| (0, i)).collect();
        let plan = plan_clusters(&UndirectedGraph::from_edges(6, &edges).unwrap());
        for i in 0..6 {
            assert_eq!(plan.cluster(i).len(), 6);
        }
    }

    #[test]
    fn waves_are_disjoint_runs() {
        let plan = plan_clusters(&path(9));
        let waves = plan.waves();
        let flat: Vec<usize> = waves.concat();
        assert_eq!(flat, plan.order());
        for w in &waves {
            for (x, &a) in w.iter().enumerate() {
                for &b in &w[x + 1..] {
                    assert!(plan.cluster(a).iter().all(|v| !plan.cluster(b).contains(v)));
                }
            }
        }
        assert!(waves.iter().any(|w| w.len() > 1));
    }

    #[test]
    fn merge_unions_disjoint_pairs() {
        let mut acc = AccumulatedMec::new(4);
        let mut a = Cpdag::new(2);
        a.set_undirected(0, 1);
        assert!(merge_marks(&mut acc, &a, &[0, 1], 0).is_empty());
        let mut b = Cpdag::new(2);
        b.set_undirected(0, 1);
        assert!(merge_marks(&mut acc, &b, &[2, 3], 3).is_empty());
        assert!(acc.marks().is_undirected(0, 1) && acc.marks().is_undirected(2, 3));
        assert_eq!(acc.source(1, 0), Some(0));
    }

    #[test]
    fn merge_same_undirected_edge_twice() {
        let mut acc = AccumulatedMec::new(2);
        let mut a = Cpdag::new(2);
        a.set_undirected(0, 1);
        merge_marks(&mut acc, &a, &[0, 1], 0);
        assert!(merge_marks(&mut acc, &a, &[0, 1], 1).is_empty());
        assert!(acc.marks().is_undirected(0, 1));
    }

    #[test]
    fn merge_keeps_first_writer() {
        let mut acc = AccumulatedMec::new(3);
        // collider 0 -> 1 <- 2 seen from target 1
        let mut first = Cpdag::new(3);
        first.set_directed(0, 1);
        first.set_directed(2, 1);
        merge_marks(&mut acc, &first, &[0, 1, 2], 1);
        assert!(acc.marks().is_directed(0, 1));
        let mut second = Cpdag::new(3);
        second.set_undirected(0, 1);
        second.set_undirected(1, 2);
        let conflicts = merge_marks(&mut acc, &second, &[0, 1, 2], 0);
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].existing_source, Some(1));
        assert!(acc.marks().is_directed(0, 1));
    }

    #[test]
    fn meek_compelled_edges_are_saved_as_adjacencies() {
        // 0 -> 1 <- 2, 1 -> 3: target 3 sees 1 -> 3 compelled by R1 only
        let local = dag_to_cpdag(&Dag::from_edges(4, &[(0, 1), (2, 1), (1, 3)]).unwrap());
        let mut acc = AccumulatedMec::new(4);
        merge_marks(&mut acc, &local, &[0, 1, 2, 3], 3);
        assert!(acc.marks().is_undirected(1, 3));
        merge_marks(&mut acc, &local, &[0, 1, 2, 3], 1);
        assert!(acc.marks().is_directed(0, 1) && acc.marks().is_directed(2, 1));
    }

    #[test]
    fn isolated_vertices_give_empty_cpdag() {
        let cov = DMatrix::identity(5, 5);
        let out = local_astar(&cov, 100, &UndirectedGraph::new(5), &LocalConfig::default()).unwrap();
        assert_eq!(out.cpdag, Cpdag::new(5));
    }

    #[test]
    fn chain_recovered_from_population() {
        let mut b = DMatrix::zeros(4, 4);
        b[(0, 1)] = 0.6;
        b[(1, 2)] = -0.5;
        b[(2, 3)] = 0.7;
        let m = WeightedDag::from_weights(b, vec![1.0, 1.2, 1.5, 1.1]).unwrap();
        let cov = analytic_covariance(&m);
        let out = local_astar(&cov, 1_000_000, &moralize(m.dag()), &LocalConfig::default()).unwrap();
        assert_eq!(out.cpdag, dag_to_cpdag(m.dag()));
        assert!(out.conflicts.is_empty());
    }

    #[test]
    fn oversized_cluster_is_reported() {
        let cov = DMatrix::identity(5, 5);
        let cfg = LocalConfig {
            max_cluster: 3,
            ..LocalConfig::default()
        };
        let err = local_astar(&cov, 100, &UndirectedGraph::complete(5), &cfg).unwrap_err();
        assert!(matches!(err, Error::ClusterTooLarge { size: 5, limit: 3, .. }));
    }
}
