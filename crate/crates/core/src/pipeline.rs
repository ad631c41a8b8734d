//! Simulation sweeps: simulate, estimate, search and evaluate per seed, with
//! every artifact written to disk.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glasso::{empirical_covariance, estimate_superstructure, GlassoConfig};
use crate::graph::{dag_to_cpdag, Cpdag, UndirectedGraph};
use crate::io::{read_graph, write_dataset_file, write_json, GraphJson, ModelJson};
use crate::local::{local_astar, LocalConfig};
use crate::metrics::{evaluate, summarize_reports, EvalReport, ReportSummary};
use crate::score::{default_max_parents, ScoreTable, SearchConstraints};
use crate::search::{astar_with_deadline, dp_exact, SearchResult};
use crate::sem::{
    analytic_precision, derive_seed, min_theta_experiment, random_er_dag, random_weights, sample,
    support_graph, Dataset, WeightedDag,
};

/// Tolerance for reading a super-structure off the analytic precision.
pub const POPULATION_SUPPORT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dp,
    Astar,
    AstarSs,
    LocalAstar,
}

impl Method {
    pub fn needs_superstructure(self) -> bool {
        matches!(self, Method::AstarSs | Method::LocalAstar)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Dp => "dp",
            Method::Astar => "astar",
            Method::AstarSs => "astar-ss",
            Method::LocalAstar => "local-astar",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dp" => Ok(Method::Dp),
            "astar" => Ok(Method::Astar),
            "astar-ss" => Ok(Method::AstarSs),
            "local-astar" => Ok(Method::LocalAstar),
            _ => Err(Error::Parse(format!(
                "unknown method {s:?} (expected dp, astar, astar-ss or local-astar)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuperstructureSource {
    Glasso,
    TrueSupp,
    File(PathBuf),
}

/// GLasso settings; missing fields take the dimension-dependent defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlassoSection {
    pub lambda: Option<f64>,
    pub max_iters: Option<usize>,
    pub convergence_tol: Option<f64>,
    pub cov_threshold: Option<f64>,
    /// Disable the default covariance threshold.
    #[serde(default)]
    pub no_cov_threshold: bool,
}

impl GlassoSection {
    pub fn resolve(&self, d: usize) -> GlassoConfig {
        let mut cfg = GlassoConfig::for_dimension(d);
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(m) = self.max_iters {
            cfg.max_iters = m;
        }
        if let Some(t) = self.convergence_tol {
            cfg.convergence_tol = t;
        }
        if self.no_cov_threshold {
            cfg.cov_threshold = None;
        }
        if self.cov_threshold.is_some() {
            cfg.cov_threshold = self.cov_threshold;
        }
        cfg
    }
}

fn default_budget() -> f64 {
    3600.0
}

fn default_parallel() -> usize {
    1
}

fn default_max_cluster() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub expected_degree: f64,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub method: Method,
    #[serde(default)]
    pub superstructure: Option<SuperstructureSource>,
    #[serde(default)]
    pub glasso: GlassoSection,
    pub output_dir: PathBuf,
    /// Wall-clock budget per seed; runs over budget are marked timed out.
    #[serde(default = "default_budget")]
    pub time_budget_secs: f64,
    /// Seeds run concurrently.
    #[serde(default = "default_parallel")]
    pub parallel: usize,
    #[serde(default = "default_max_cluster")]
    pub max_cluster: usize,
    /// Also write each seed's samples as CSV.
    #[serde(default)]
    pub save_data: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ExperimentConfig::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument("d must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("seeds must not be empty".into()));
        }
        if self.n < 2 {
            return Err(Error::NotEnoughSamples {
                needed: 2,
                got: self.n,
            });
        }
        if self.method.needs_superstructure() && self.superstructure.is_none() {
            return Err(Error::InvalidArgument(format!(
                "method {} needs a superstructure source (glasso, true-supp or file)",
                self.method
            )));
        }
        if !(self.time_budget_secs > 0.0) {
            return Err(Error::InvalidArgument("time_budget_secs must be positive".into()));
        }
        if self.parallel == 0 {
            return Err(Error::InvalidArgument("parallel must be at least 1".into()));
        }
        self.glasso.resolve(self.d).validate()
    }
}

/// A simulated instance: model and samples drawn from `seed`.
pub fn simulate_instance(
    d: usize,
    expected_degree: f64,
    n: usize,
    seed: u64,
) -> Result<(WeightedDag, Dataset)> {
    let dag = random_er_dag(d, expected_degree, derive_seed(seed, 0))?;
    let model = random_weights(&dag, derive_seed(seed, 1));
    let data = sample(&model, n, derive_seed(seed, 2))?;
    Ok((model, data))
}

/// Exact search by `method` on covariance `cov` of `n` samples. Methods
/// without a super-structure ignore `superstructure`.
pub fn run_exact(
    method: Method,
    cov: &DMatrix<f64>,
    n: usize,
    superstructure: Option<&UndirectedGraph>,
    deadline: Option<Instant>,
) -> Result<SearchResult> {
    let d = cov.nrows();
    let (constraints, max_parents) = match (method, superstructure) {
        (Method::AstarSs, Some(ss)) => (SearchConstraints::from_superstructure(ss), None),
        (Method::AstarSs, None) => {
            return Err(Error::InvalidArgument("astar-ss needs a superstructure".into()))
        }
        (Method::LocalAstar, _) => {
            return Err(Error::InvalidArgument("local-astar is not an exact search".into()))
        }
        _ => (SearchConstraints::none(d), default_max_parents(d, false)),
    };
    let table = ScoreTable::full(cov, n, &constraints, max_parents)?;
    match method {
        Method::Dp => dp_exact(&table),
        _ => astar_with_deadline(&table, deadline),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    TimedOut,
    Failed,
}

/// Deterministic per-seed result; timings live in a separate file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub total_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub report: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub superstructure_edges: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_cluster_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mark_conflicts: Option<usize>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedResult>,
    pub completed: usize,
    pub timed_out: usize,
    pub failed: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aggregate: Option<ReportSummary>,
}

struct SeedOutput {
    cpdag: Cpdag,
    total_score: Option<f64>,
    superstructure: Option<UndirectedGraph>,
    max_cluster_size: Option<usize>,
    mark_conflicts: Option<usize>,
}

fn obtain_superstructure(
    cfg: &ExperimentConfig,
    model: &WeightedDag,
    data: &Dataset,
) -> Result<Option<UndirectedGraph>> {
    Ok(match &cfg.superstructure {
        None => None,
        Some(SuperstructureSource::TrueSupp) => Some(support_graph(
            &analytic_precision(model),
            POPULATION_SUPPORT_TOL,
        )),
        Some(SuperstructureSource::Glasso) => {
            Some(estimate_superstructure(data, &cfg.glasso.resolve(cfg.d))?.0)
        }
        Some(SuperstructureSource::File(p)) => {
            let g = read_graph(p)?.to_undirected()?;
            if g.num_vars() != cfg.d {
                return Err(Error::InvalidArgument(format!(
                    "superstructure file has {} variables, expected {}",
                    g.num_vars(),
                    cfg.d
                )));
            }
            Some(g)
        }
    })
}

fn run_seed_inner(
    cfg: &ExperimentConfig,
    model: &WeightedDag,
    data: &Dataset,
    deadline: Instant,
) -> Result<SeedOutput> {
    let ss = obtain_superstructure(cfg, model, data)?;
    let cov = empirical_covariance(data)?;
    match cfg.method {
        Method::LocalAstar => {
            let ss = ss.expect("validated");
            let local = LocalConfig {
                max_cluster: cfg.max_cluster,
                parallel: true,
                time_budget: Some(deadline.saturating_duration_since(Instant::now())),
                ..LocalConfig::default()
            };
            let plan_max = crate::local::plan_clusters(&ss).max_cluster_size();
            let out = local_astar(&cov, cfg.n, &ss, &local)?;
            Ok(SeedOutput {
                cpdag: out.cpdag,
                total_score: None,
                superstructure: Some(ss),
                max_cluster_size: Some(plan_max),
                mark_conflicts: Some(out.conflicts.len()),
            })
        }
        method => {
            let r = run_exact(method, &cov, cfg.n, ss.as_ref(), Some(deadline))?;
            Ok(SeedOutput {
                cpdag: dag_to_cpdag(&r.dag),
                total_score: Some(r.total_score),
                superstructure: ss,
                max_cluster_size: None,
                mark_conflicts: None,
            })
        }
    }
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<(SeedResult, f64)> {
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(cfg.time_budget_secs);
    let dir_name = format!("seed_{seed}");
    let dir = cfg.output_dir.join(&dir_name);
    fs::create_dir_all(&dir)?;
    let mut artifacts = Vec::new();

    let (model, data) = simulate_instance(cfg.d, cfg.expected_degree, cfg.n, seed)?;
    let truth = dag_to_cpdag(model.dag());
    save(&dir, &dir_name, &mut artifacts, "model.json", &ModelJson::from_model(&model))?;
    save(&dir, &dir_name, &mut artifacts, "true_cpdag.json", &GraphJson::from_cpdag(&truth))?;
    if cfg.save_data {
        write_dataset_file(&dir.join("data.csv"), &data)?;
        artifacts.push(format!("{dir_name}/data.csv"));
    }

    let mut result = SeedResult {
        seed,
        status: RunStatus::Ok,
        error: None,
        total_score: None,
        report: None,
        superstructure_edges: None,
        max_cluster_size: None,
        mark_conflicts: None,
        artifacts: Vec::new(),
    };
    match run_seed_inner(cfg, &model, &data, deadline) {
        Ok(out) => {
            let ss_eval = out.superstructure.as_ref().map(|g| (g, model.dag()));
            result.report = Some(evaluate(&out.cpdag, &truth, ss_eval)?);
            result.total_score = out.total_score;
            result.max_cluster_size = out.max_cluster_size;
            result.mark_conflicts = out.mark_conflicts;
            if let Some(ss) = &out.superstructure {
                result.superstructure_edges = Some(ss.num_edges());
                save(&dir, &dir_name, &mut artifacts, "superstructure.json", &GraphJson::from_undirected(ss))?;
            }
            save(&dir, &dir_name, &mut artifacts, "estimated_cpdag.json", &GraphJson::from_cpdag(&out.cpdag))?;
        }
        Err(Error::Timeout) => {
            warn!("seed {seed}: timed out");
            result.status = RunStatus::TimedOut;
            result.error = Some(Error::Timeout.to_string());
        }
        Err(e) => {
            warn!("seed {seed}: {e}");
            result.status = RunStatus::Failed;
            result.error = Some(e.to_string());
        }
    }
    artifacts.push(format!("{dir_name}/result.json"));
    result.artifacts = artifacts;
    write_json(&dir.join("result.json"), &result)?;
    let secs = start.elapsed().as_secs_f64();
    Ok((result, secs))
}

fn save<T: Serialize>(
    dir: &Path,
    dir_name: &str,
    artifacts: &mut Vec<String>,
    name: &str,
    value: &T,
) -> Result<()> {
    write_json(&dir.join(name), value)?;
    artifacts.push(format!("{dir_name}/{name}"));
    Ok(())
}

/// Runs every seed of `cfg`, writing `seed_<s>/` directories, a
/// `manifest.json`, an `aggregate.csv` and a `timings.json` under
/// `output_dir`. Per-seed failures are recorded, not propagated.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let outcomes: Vec<Result<(SeedResult, f64)>> =
        pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect());

    let mut seeds = Vec::with_capacity(outcomes.len());
    let mut timings = Vec::with_capacity(outcomes.len());
    for (outcome, &seed) in outcomes.into_iter().zip(&cfg.seeds) {
        match outcome {
            Ok((r, secs)) => {
                info!("seed {seed}: {:?} in {secs:.2}s", r.status);
                timings.push((seed, secs));
                seeds.push(r);
            }
            Err(e) => {
                warn!("seed {seed}: could not write artifacts: {e}");
                seeds.push(SeedResult {
                    seed,
                    status: RunStatus::Failed,
                    error: Some(e.to_string()),
                    total_score: None,
                    report: None,
                    superstructure_edges: None,
                    max_cluster_size: None,
                    mark_conflicts: None,
                    artifacts: Vec::new(),
                });
            }
        }
    }
    let count = |s: RunStatus| seeds.iter().filter(|r| r.status == s).count();
    let reports: Vec<EvalReport> = seeds.iter().filter_map(|r| r.report.clone()).collect();
    let manifest = Manifest {
        config: cfg.clone(),
        completed: count(RunStatus::Ok),
        timed_out: count(RunStatus::TimedOut),
        failed: count(RunStatus::Failed),
        aggregate: summarize_reports(&reports),
        seeds,
    };
    write_json(&cfg.output_dir.join("manifest.json"), &manifest)?;
    write_json(&cfg.output_dir.join("timings.json"), &timings)?;
    write_aggregate_csv(&cfg.output_dir.join("aggregate.csv"), manifest.aggregate.as_ref())?;
    Ok(manifest)
}

fn write_aggregate_csv(path: &Path, agg: Option<&ReportSummary>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "mean", "std_err", "count"])?;
    if let Some(a) = agg {
        let rows = [
            ("shd", Some(a.shd)),
            ("f1_directed", Some(a.f1_directed)),
            ("f1_undirected", Some(a.f1_undirected)),
            ("superstructure_tpr", a.superstructure_tpr),
            ("superstructure_fdr", a.superstructure_fdr),
        ];
        for (name, s) in rows {
            if let Some(s) = s {
                w.write_record([
                    name.to_string(),
                    s.mean.to_string(),
                    s.std_err.to_string(),
                    s.count.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinThetaRow {
    pub d: usize,
    pub expected_degree: f64,
    pub reps: usize,
    pub mean_min_neighbor_abs_theta: Option<f64>,
    pub mean_min_spouse_abs_theta: Option<f64>,
    pub neighbor_reps: usize,
    pub spouse_reps: usize,
}

/// One row per `(d, degree)` pair, computed in parallel.
pub fn mintheta(
    d_grid: &[usize],
    degrees: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<MinThetaRow>> {
    let cells: Vec<(usize, f64)> = d_grid
        .iter()
        .flat_map(|&d| degrees.iter().map(move |&k| (d, k)))
        .collect();
    cells
        .par_iter()
        .map(|&(d, k)| {
            let s = min_theta_experiment(d, k, reps, seed)?;
            Ok(MinThetaRow {
                d,
                expected_degree: k,
                reps,
                mean_min_neighbor_abs_theta: s.mean_min_neighbor_abs_theta,
                mean_min_spouse_abs_theta: s.mean_min_spouse_abs_theta,
                neighbor_reps: s.neighbor_reps,
                spouse_reps: s.spouse_reps,
            })
        })
        .collect()
}

/// Undefined means are written as empty fields.
pub fn write_mintheta_csv<W: Write>(rows: &[MinThetaRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    if rows.is_empty() {
        out.write_record([
            "d",
            "expected_degree",
            "reps",
            "mean_min_neighbor_abs_theta",
            "mean_min_spouse_abs_theta",
            "neighbor_reps",
            "spouse_reps",
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_toml(dir: &Path, method: &str, extra: &str) -> String {
        format!(
            "d = 5\nexpected_degree = 2.0\nn = 500\nseeds = [1, 2]\nmethod = \"{method}\"\noutput_dir = {:?}\n{extra}",
            dir.to_str().unwrap()
        )
    }

    #[test]
    fn config_validation() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ExperimentConfig::from_toml(&base_toml(dir.path(), "dp", "")).is_ok());
        assert!(ExperimentConfig::from_toml(&base_toml(dir.path(), "astar-ss", "")).is_err());
        assert!(ExperimentConfig::from_toml(&base_toml(
            dir.path(),
            "astar-ss",
            "superstructure = \"true-supp\""
        ))
        .is_ok());
        let file = base_toml(dir.path(), "local-astar", "superstructure = { file = \"ss.json\" }");
        let cfg = ExperimentConfig::from_toml(&file).unwrap();
        assert_eq!(cfg.superstructure, Some(SuperstructureSource::File("ss.json".into())));
        assert!(ExperimentConfig::from_toml(&base_toml(dir.path(), "bogus", "")).is_err());
        let empty = base_toml(dir.path(), "dp", "").replace("[1, 2]", "[]");
        assert!(ExperimentConfig::from_toml(&empty).is_err());
    }

    #[test]
    fn glasso_section_overrides() {
        let s = GlassoSection {
            lambda: Some(0.3),
            no_cov_threshold: true,
            ..GlassoSection::default()
        };
        let c = s.resolve(100);
        assert_eq!(c.lambda, 0.3);
        assert_eq!(c.cov_threshold, None);
        assert_eq!(GlassoSection::default().resolve(100).cov_threshold, Some(0.03));
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Dp, Method::Astar, Method::AstarSs, Method::LocalAstar] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn mintheta_without_edges() {
        let rows = mintheta(&[5], &[0.0], 3, 1).unwrap();
        assert_eq!(rows[0].mean_min_neighbor_abs_theta, None);
        assert_eq!(rows[0].mean_min_spouse_abs_theta, None);
        let mut buf = Vec::new();
        write_mintheta_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("5,0.0,3,,,0,0"));
    }
}
