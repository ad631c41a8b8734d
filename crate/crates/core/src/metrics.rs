//! Structure-recovery metrics on CPDAGs and super-structures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Cpdag, Dag, UndirectedGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub shd: usize,
    pub f1_directed: f64,
    pub f1_undirected: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub superstructure_tpr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub superstructure_fdr: Option<f64>,
}

fn same_size(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidArgument(format!(
            "graphs have {a} and {b} variables"
        )));
    }
    Ok(())
}

/// Number of unordered pairs whose marks differ. A missing, extra or
/// reversed edge and a directed/undirected mismatch each count once.
pub fn shd_cpdag(est: &Cpdag, truth: &Cpdag) -> Result<usize> {
    same_size(est.num_vars(), truth.num_vars())?;
    let d = est.num_vars();
    let mut n = 0;
    for i in 0..d {
        for j in i + 1..d {
            if est.mark(i, j) != truth.mark(i, j) {
                n += 1;
            }
        }
    }
    Ok(n)
}

fn f1(tp: usize, n_est: usize, n_true: usize) -> f64 {
    match (n_est, n_true) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ if tp == 0 => 0.0,
        _ => {
            let p = tp as f64 / n_est as f64;
            let r = tp as f64 / n_true as f64;
            2.0 * p * r / (p + r)
        }
    }
}

/// `(directed F1, undirected F1)`. A directed mark is a hit only with the
/// same direction; undirected marks are compared as unordered pairs.
pub fn f1_edges(est: &Cpdag, truth: &Cpdag) -> Result<(f64, f64)> {
    same_size(est.num_vars(), truth.num_vars())?;
    let est_dir = est.directed_edges();
    let true_dir = truth.directed_edges();
    let tp_dir = est_dir.iter().filter(|&&(a, b)| truth.is_directed(a, b)).count();
    let est_und = est.undirected_edges();
    let true_und = truth.undirected_edges();
    let tp_und = est_und.iter().filter(|&&(a, b)| truth.is_undirected(a, b)).count();
    Ok((
        f1(tp_dir, est_dir.len(), true_dir.len()),
        f1(tp_und, est_und.len(), true_und.len()),
    ))
}

/// Neighbor TPR and FDR of an estimated super-structure against the true
/// skeleton. Edges between spouses that are not adjacent count as false
/// discoveries.
pub fn superstructure_rates(est: &UndirectedGraph, true_dag: &Dag) -> Result<(f64, f64)> {
    same_size(est.num_vars(), true_dag.num_vars())?;
    let skel = true_dag.skeleton();
    let est_edges = est.edges();
    let hits = est_edges.iter().filter(|&&(a, b)| skel.has_edge(a, b)).count();
    let tpr = if skel.num_edges() == 0 {
        0.0
    } else {
        hits as f64 / skel.num_edges() as f64
    };
    let fdr = if est_edges.is_empty() {
        0.0
    } else {
        (est_edges.len() - hits) as f64 / est_edges.len() as f64
    };
    Ok((tpr, fdr))
}

/// All metrics of `est` against `truth`; super-structure rates when an
/// estimated super-structure and the true DAG are supplied.
pub fn evaluate(
    est: &Cpdag,
    truth: &Cpdag,
    superstructure: Option<(&UndirectedGraph, &Dag)>,
) -> Result<EvalReport> {
    let shd = shd_cpdag(est, truth)?;
    let (f1_directed, f1_undirected) = f1_edges(est, truth)?;
    let (superstructure_tpr, superstructure_fdr) = match superstructure {
        Some((ss, dag)) => {
            let (t, f) = superstructure_rates(ss, dag)?;
            (Some(t), Some(f))
        }
        None => (None, None),
    };
    Ok(EvalReport {
        shd,
        f1_directed,
        f1_undirected,
        superstructure_tpr,
        superstructure_fdr,
    })
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

/// `None` for an empty slice; the standard error of a single value is 0.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    let count = values.len();
    if count == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / count as f64;
    let std_err = if count > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
        (var / count as f64).sqrt()
    } else {
        0.0
    };
    Some(Summary {
        mean,
        std_err,
        count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub shd: Summary,
    pub f1_directed: Summary,
    pub f1_undirected: Summary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub superstructure_tpr: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub superstructure_fdr: Option<Summary>,
}

/// Per-metric summaries over a batch of reports; `None` when empty.
pub fn summarize_reports(reports: &[EvalReport]) -> Option<ReportSummary> {
    let col = |f: &dyn Fn(&EvalReport) -> f64| summarize(&reports.iter().map(f).collect::<Vec<_>>());
    let opt = |f: &dyn Fn(&EvalReport) -> Option<f64>| {
        summarize(&reports.iter().filter_map(f).collect::<Vec<_>>())
    };
    Some(ReportSummary {
        shd: col(&|r| r.shd as f64)?,
        f1_directed: col(&|r| r.f1_directed)?,
        f1_undirected: col(&|r| r.f1_undirected)?,
        superstructure_tpr: opt(&|r| r.superstructure_tpr),
        superstructure_fdr: opt(&|r| r.superstructure_fdr),
    })
}
