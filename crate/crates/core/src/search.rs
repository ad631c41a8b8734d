//! Exact structure search over the order graph.
//!
//! Nodes of the order graph are subsets `U` of variables; the arc
//! `U -> U ∪ {i}` costs the negated best local score of `i` with parents
//! drawn from `U`. A shortest path from `∅` to the full set is a
//! BIC-optimal DAG.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::time::{Duration, Instant};

use log::debug;

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::score::ScoreTable;
use crate::varset::{self, bit};

/// Largest problem the dynamic program accepts (`2^d` table).
pub const DP_MAX_VARS: usize = 25;

/// Relative resolution at which A* treats path costs as equal.
const TIE_QUANTUM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// DAG over the table's local indices.
    pub dag: Dag,
    pub total_score: f64,
    pub expanded_nodes: usize,
    pub runtime: Duration,
}

fn best_cost(table: &ScoreTable, i: usize, allowed: u64) -> Option<(f64, u64)> {
    table
        .parent_graph(i)
        .best_score_and_set(allowed)
        .map(|(score, set)| (-score, set))
}

/// Rebuilds the DAG from a sink ordering (last-added variable first).
fn dag_from_order(table: &ScoreTable, sinks_last_first: &[usize]) -> Result<(Dag, f64)> {
    let d = table.num_vars();
    let mut remaining = varset::full(d);
    let mut parents = vec![Vec::new(); d];
    for &v in sinks_last_first {
        remaining &= !bit(v);
        let (_, set) = best_cost(table, v, remaining).ok_or(Error::Infeasible)?;
        parents[v] = varset::to_vec(set);
    }
    let dag = Dag::from_parents(parents)?;
    let total = (0..d)
        .map(|i| {
            table
                .parent_graph(i)
                .best_score_and_set(varset::from_indices(dag.parents(i).iter().copied()))
                .map(|(s, _)| s)
                .unwrap_or(f64::NEG_INFINITY)
        })
        .sum();
    Ok((dag, total))
}

/// Dynamic programming over all `2^d` subsets:
/// `cost(U) = min_{i∈U} cost(U∖{i}) + best_cost(i, U∖{i})`.
pub fn dp_exact(table: &ScoreTable) -> Result<SearchResult> {
    let start = Instant::now();
    let d = table.num_vars();
    if d > DP_MAX_VARS {
        return Err(Error::TooLarge {
            num_vars: d,
            limit: DP_MAX_VARS,
        });
    }
    let size = 1usize << d;
    let mut cost = vec![f64::INFINITY; size];
    let mut choice = vec![u8::MAX; size];
    cost[0] = 0.0;
    for u in 1..size {
        let set = u as u64;
        for i in varset::iter(set) {
            let rest = set & !bit(i);
            let prev = cost[rest as usize];
            if !prev.is_finite() {
                continue;
            }
            if let Some((c, _)) = best_cost(table, i, rest) {
                let total = prev + c;
                if total < cost[u] {
                    cost[u] = total;
                    choice[u] = i as u8;
                }
            }
        }
    }
    if !cost[size - 1].is_finite() {
        return Err(Error::Infeasible);
    }
    let mut order = Vec::with_capacity(d);
    let mut u = size - 1;
    while u != 0 {
        let v = choice[u] as usize;
        order.push(v);
        u &= !(1usize << v);
    }
    let (dag, total_score) = dag_from_order(table, &order)?;
    Ok(SearchResult {
        dag,
        total_score,
        expanded_nodes: size,
        runtime: start.elapsed(),
    })
}

/// Per-variable cost with every other variable allowed as a parent.
fn unconstrained_costs(table: &ScoreTable) -> Vec<f64> {
    let d = table.num_vars();
    (0..d)
        .map(|i| {
            best_cost(table, i, varset::full(d) & !bit(i))
                .map(|(c, _)| c)
                .unwrap_or(f64::INFINITY)
        })
        .collect()
}

/// `h(U) = Σ_{i∉U}` best cost of `i` with all other variables allowed.
/// Admissible and consistent: every arc adding `i` costs at least that.
pub fn simple_heuristic(table: &ScoreTable, placed: u64) -> f64 {
    let costs = unconstrained_costs(table);
    heuristic_from(&costs, placed, table.num_vars())
}

fn heuristic_from(costs: &[f64], placed: u64, d: usize) -> f64 {
    varset::iter(varset::full(d) & !placed).map(|i| costs[i]).sum()
}

#[derive(Debug, Clone, Copy)]
struct OpenNode {
    /// `f` in units of the tie quantum.
    f_key: i64,
    f: f64,
    h: f64,
    set: u64,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenNode {}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenNode {
    // BinaryHeap is a max-heap: the "greatest" node has smallest f, then
    // smallest h, then smallest bitset.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f_key
            .cmp(&self.f_key)
            .then(other.h.total_cmp(&self.h))
            .then(other.set.cmp(&self.set))
    }
}

struct NodeState {
    g: f64,
    via: u8,
    closed: bool,
}

/// A* over the order graph with [`simple_heuristic`].
pub fn astar_exact(table: &ScoreTable) -> Result<SearchResult> {
    astar_with_deadline(table, None)
}

/// [`astar_exact`] that gives up with [`Error::Timeout`] once `deadline`
/// passes.
pub fn astar_with_deadline(table: &ScoreTable, deadline: Option<Instant>) -> Result<SearchResult> {
    let start = Instant::now();
    let d = table.num_vars();
    if d > varset::MAX_VARS {
        return Err(Error::TooLarge {
            num_vars: d,
            limit: varset::MAX_VARS,
        });
    }
    let goal = varset::full(d);
    let costs = unconstrained_costs(table);
    let h0 = heuristic_from(&costs, 0, d);
    // Paths whose costs differ only by rounding must tie, otherwise the
    // search fans out over equivalent orderings.
    let quantum = TIE_QUANTUM * h0.abs().max(1.0);
    let key = |f: f64| (f / quantum).round() as i64;

    let mut states: HashMap<u64, NodeState> = HashMap::new();
    let mut open = BinaryHeap::new();
    states.insert(
        0,
        NodeState {
            g: 0.0,
            via: u8::MAX,
            closed: false,
        },
    );
    open.push(OpenNode {
        f_key: key(h0),
        f: h0,
        h: h0,
        set: 0,
    });

    let mut expanded = 0usize;
    let mut max_f = f64::NEG_INFINITY;
    while let Some(node) = open.pop() {
        let state = states.get_mut(&node.set).expect("pushed nodes have state");
        if state.closed || node.f > state.g + node.h {
            continue;
        }
        if node.set == goal {
            break;
        }
        state.closed = true;
        let g = state.g;
        expanded += 1;
        max_f = max_f.max(node.f);
        if expanded.is_multiple_of(4096) {
            if let Some(t) = deadline {
                if Instant::now() > t {
                    return Err(Error::Timeout);
                }
            }
        }
        for i in varset::iter(goal & !node.set) {
            let Some((c, _)) = best_cost(table, i, node.set) else {
                continue;
            };
            let next = node.set | bit(i);
            let g_next = g + c;
            let h_next = heuristic_from(&costs, next, d);
            match states.entry(next) {
                Entry::Occupied(mut e) => {
                    let s = e.get_mut();
                    if s.closed || g_next >= s.g {
                        continue;
                    }
                    s.g = g_next;
                    s.via = i as u8;
                }
                Entry::Vacant(e) => {
                    e.insert(NodeState {
                        g: g_next,
                        via: i as u8,
                        closed: false,
                    });
                }
            }
            open.push(OpenNode {
                f_key: key(g_next + h_next),
                f: g_next + h_next,
                h: h_next,
                set: next,
            });
        }
    }

    let Some(goal_state) = states.get(&goal) else {
        return Err(Error::Infeasible);
    };
    let optimal = goal_state.g;
    // consistent heuristic: nothing expanded above the optimum
    let slack = quantum + 1e-9 * optimal.abs().max(1.0);
    debug!("A* expanded {expanded} nodes, max f {max_f}, optimum {optimal}");
    debug_assert!(max_f <= optimal + slack, "expanded f {max_f} > optimum {optimal}");

    let mut order = Vec::with_capacity(d);
    let mut u = goal;
    while u != 0 {
        let v = states[&u].via as usize;
        order.push(v);
        u &= !bit(v);
    }
    let (dag, total_score) = dag_from_order(table, &order)?;
    Ok(SearchResult {
        dag,
        total_score,
        expanded_nodes: expanded,
        runtime: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::UndirectedGraph;
    use crate::score::{bic_local, total_score, SearchConstraints};
    use crate::sem::{analytic_covariance, random_er_dag, random_weights};
    use nalgebra::DMatrix;

    fn instance(d: usize, seed: u64) -> DMatrix<f64> {
        analytic_covariance(&random_weights(&random_er_dag(d, 2.0, seed).unwrap(), seed + 50))
    }

    #[test]
    fn single_variable() {
        let cov = DMatrix::from_element(1, 1, 1.7);
        let table = ScoreTable::full(&cov, 100, &SearchConstraints::none(1), None).unwrap();
        for r in [dp_exact(&table).unwrap(), astar_exact(&table).unwrap()] {
            assert_eq!(r.dag, Dag::empty(1));
            assert_eq!(r.total_score, bic_local(&cov, 100, 0, &[]));
        }
    }

    #[test]
    fn forbidding_all_parents_gives_empty_dag() {
        let cov = instance(5, 1);
        let c = SearchConstraints::from_superstructure(&UndirectedGraph::new(5));
        let table = ScoreTable::full(&cov, 1000, &c, None).unwrap();
        assert_eq!(dp_exact(&table).unwrap().dag, Dag::empty(5));
        assert_eq!(astar_exact(&table).unwrap().dag, Dag::empty(5));
    }

    #[test]
    fn astar_matches_dp() {
        for seed in 0..50 {
            let d = 3 + (seed as usize % 6);
            let cov = instance(d, seed);
            let table = ScoreTable::full(&cov, 1000, &SearchConstraints::none(d), None).unwrap();
            let dp = dp_exact(&table).unwrap();
            let astar = astar_exact(&table).unwrap();
            let tol = 1e-9 * dp.total_score.abs();
            assert!((dp.total_score - astar.total_score).abs() <= tol, "seed {seed}");
            assert!(astar.expanded_nodes <= 1 << d);
            assert!((astar.total_score - total_score(&cov, 1000, &astar.dag)).abs() <= tol);
        }
    }

    #[test]
    fn heuristic_is_admissible_at_root_and_zero_at_goal() {
        for seed in 0..100 {
            let cov = instance(4, seed);
            let table = ScoreTable::full(&cov, 500, &SearchConstraints::none(4), None).unwrap();
            let optimal_cost = -dp_exact(&table).unwrap().total_score;
            let h = simple_heuristic(&table, 0);
            assert!(h <= optimal_cost + 1e-9 * optimal_cost.abs(), "seed {seed}");
            assert_eq!(simple_heuristic(&table, varset::full(4)), 0.0);
        }
    }

    #[test]
    fn heuristic_grows_when_parents_are_removed() {
        for seed in 0..20 {
            let d = 5;
            let cov = instance(d, seed);
            let loose = ScoreTable::full(&cov, 500, &SearchConstraints::none(d), None).unwrap();
            let tight_c = SearchConstraints::none(d).with_forbidden_edges(&[(0, 1), (2, 3)]).unwrap();
            let tight = ScoreTable::full(&cov, 500, &tight_c, None).unwrap();
            for u in 0..(1u64 << d) {
                assert!(simple_heuristic(&tight, u) >= simple_heuristic(&loose, u));
            }
        }
    }

    #[test]
    fn required_edge_is_kept() {
        let cov = instance(5, 3);
        // orient against whatever the data prefers
        let c = SearchConstraints::none(5).with_required_edges(&[(4, 0), (3, 0)]).unwrap();
        let table = ScoreTable::full(&cov, 1000, &c, None).unwrap();
        for r in [dp_exact(&table).unwrap(), astar_exact(&table).unwrap()] {
            assert!(r.dag.has_edge(4, 0) && r.dag.has_edge(3, 0));
        }
    }

    #[test]
    fn dp_refuses_large_problems() {
        let cov = DMatrix::identity(26, 26);
        let c = SearchConstraints::from_superstructure(&UndirectedGraph::new(26));
        let table = ScoreTable::full(&cov, 10, &c, None).unwrap();
        assert!(matches!(dp_exact(&table), Err(Error::TooLarge { .. })));
        assert_eq!(astar_exact(&table).unwrap().dag, Dag::empty(26));
    }
}
