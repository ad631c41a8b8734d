use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use lastar::glasso::{empirical_covariance, estimate_superstructure, GlassoConfig};
use lastar::graph::{dag_to_cpdag, Dag, UndirectedGraph};
use lastar::io::{
    read_dataset_file, read_graph, read_json, write_dataset_file, write_json, GraphJson, ModelJson,
};
use lastar::local::{local_astar, plan_clusters, LocalConfig};
use lastar::metrics::{evaluate, summarize_reports, EvalReport};
use lastar::oracle::{enumerate_optimal_dags, sparsest_permutation, CiOracle, POPULATION_CI_TOL};
use lastar::pipeline::{
    mintheta, run_exact, run_pipeline, simulate_instance, write_mintheta_csv, ExperimentConfig,
    Method,
};
use lastar::sem::analytic_covariance;
use lastar::{Error, Result};

#[derive(Parser)]
#[command(name = "lastar", version, about = "Exact and local A* structure learning for linear-Gaussian data")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random ER model and samples from it.
    Simulate(SimulateArgs),
    /// Estimate a super-structure with the graphical lasso.
    Superstructure(SuperstructureArgs),
    /// Learn a structure from data.
    Search(SearchArgs),
    /// Compare an estimated CPDAG with the truth.
    Evaluate(EvaluateArgs),
    /// Brute-force reference answers for small problems.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Minimum |precision| entries over neighbours and spouses of random models.
    Mintheta(MinthetaArgs),
    /// Run a simulation sweep described by a TOML file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 2.0)]
    degree: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for model.json, data.csv, true_dag.json and true_cpdag.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GlassoArgs {
    /// Penalty; defaults to 0.05 for d <= 20 and 0.2 otherwise.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Zero covariance entries below this before solving (default 0.03 when d > 40).
    #[arg(long)]
    cov_threshold: Option<f64>,
    #[arg(long, conflicts_with = "cov_threshold")]
    no_cov_threshold: bool,
}

impl GlassoArgs {
    fn resolve(&self, d: usize) -> GlassoConfig {
        let mut cfg = GlassoConfig::for_dimension(d);
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(m) = self.max_iters {
            cfg.max_iters = m;
        }
        if let Some(t) = self.tol {
            cfg.convergence_tol = t;
        }
        if self.no_cov_threshold {
            cfg.cov_threshold = None;
        } else if self.cov_threshold.is_some() {
            cfg.cov_threshold = self.cov_threshold;
        }
        cfg
    }
}

#[derive(Args)]
struct SuperstructureArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    glasso: GlassoArgs,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long)]
    data: PathBuf,
    /// Undirected graph JSON restricting candidate parents.
    #[arg(long)]
    superstructure: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    max_cluster: usize,
    /// Worker threads for concurrent cluster searches.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Fail instead of relaxing inconsistent fixed edges.
    #[arg(long)]
    strict: bool,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    time_budget: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct EvaluateArgs {
    /// Estimated graph JSON.
    #[arg(long, required_unless_present = "batch")]
    est: Option<PathBuf>,
    /// True CPDAG JSON.
    #[arg(long, required_unless_present = "batch")]
    truth: Option<PathBuf>,
    /// Estimated super-structure JSON (needs --truth-dag).
    #[arg(long, requires = "truth_dag")]
    superstructure: Option<PathBuf>,
    /// True DAG JSON, for super-structure rates.
    #[arg(long)]
    truth_dag: Option<PathBuf>,
    /// Directory of seed directories written by `pipeline`; reports mean and
    /// standard error.
    #[arg(long, conflicts_with_all = ["est", "truth"])]
    batch: Option<PathBuf>,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Sparsest-permutation sweep on a model's population covariance.
    SpSweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = POPULATION_CI_TOL)]
        tol: f64,
    },
    /// Exhaustive BIC optimum over all DAGs (d <= 5).
    ExhaustiveBic {
        /// Samples; the empirical covariance is scored.
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        data: Option<PathBuf>,
        /// Model; its population covariance is scored.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Sample size used in the penalty with --model.
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
    },
}

#[derive(Args)]
struct MinthetaArgs {
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', default_value = "10,20,50,100,200,500,1000")]
    d: Vec<usize>,
    /// Comma-separated expected degrees.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    degree: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            Ok(())
        }
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let (model, data) = simulate_instance(a.d, a.degree, a.n, a.seed)?;
    fs::create_dir_all(&a.out_dir)?;
    write_json(&a.out_dir.join("model.json"), &ModelJson::from_model(&model))?;
    write_dataset_file(&a.out_dir.join("data.csv"), &data)?;
    write_json(&a.out_dir.join("true_dag.json"), &GraphJson::from_dag(model.dag()))?;
    write_json(
        &a.out_dir.join("true_cpdag.json"),
        &GraphJson::from_cpdag(&dag_to_cpdag(model.dag())),
    )?;
    Ok(())
}

fn superstructure(a: &SuperstructureArgs) -> Result<()> {
    let data = read_dataset_file(&a.data)?;
    let cfg = a.glasso.resolve(data.d());
    cfg.validate()?;
    let (g, r) = estimate_superstructure(&data, &cfg)?;
    let graph = GraphJson::from_undirected(&g);
    let out = json!({
        "d": graph.d,
        "edges": graph.edges,
        "diagnostics": {
            "lambda": cfg.lambda,
            "cov_threshold": cfg.cov_threshold,
            "iterations": r.iterations,
            "converged": r.converged,
            "dual_gap": r.dual_gap,
            "kkt_residual": r.kkt_residual,
        }
    });
    emit(&out, a.out.as_deref())
}

fn read_superstructure(path: &Path, d: usize) -> Result<UndirectedGraph> {
    let g = read_graph(path)?.to_undirected()?;
    if g.num_vars() != d {
        return Err(Error::InvalidArgument(format!(
            "superstructure has {} variables, data has {d}",
            g.num_vars()
        )));
    }
    Ok(g)
}

fn search(a: &SearchArgs) -> Result<()> {
    let data = read_dataset_file(&a.data)?;
    let n = data.n();
    let cov = empirical_covariance(&data)?;
    let ss = a
        .superstructure
        .as_deref()
        .map(|p| read_superstructure(p, data.d()))
        .transpose()?;
    if a.method.needs_superstructure() && ss.is_none() {
        return Err(Error::InvalidArgument(format!(
            "--method {} needs --superstructure",
            a.method
        )));
    }
    let budget = a.time_budget.map(Duration::from_secs_f64);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.parallel.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let start = Instant::now();
    let out = match a.method {
        Method::LocalAstar => {
            let ss = ss.expect("checked above");
            let cfg = LocalConfig {
                max_cluster: a.max_cluster,
                parallel: a.parallel > 1,
                strict: a.strict,
                time_budget: budget,
                ..LocalConfig::default()
            };
            let r = pool.install(|| local_astar(&cov, n, &ss, &cfg))?;
            json!({
                "method": a.method.to_string(),
                "runtime_secs": start.elapsed().as_secs_f64(),
                "max_cluster_size": plan_clusters(&ss).max_cluster_size(),
                "cpdag": GraphJson::from_cpdag(&r.cpdag),
                "clusters": r.clusters,
                "conflicts": r.conflicts,
                "unextendable": r.unextendable,
            })
        }
        method => {
            let deadline = budget.map(|b| start + b);
            let r = pool.install(|| run_exact(method, &cov, n, ss.as_ref(), deadline))?;
            json!({
                "method": method.to_string(),
                "total_score": r.total_score,
                "expanded_nodes": r.expanded_nodes,
                "runtime_secs": r.runtime.as_secs_f64(),
                "dag": GraphJson::from_dag(&r.dag),
                "cpdag": GraphJson::from_cpdag(&dag_to_cpdag(&r.dag)),
            })
        }
    };
    emit(&out, a.out.as_deref())
}

fn evaluate_pair(
    est: &Path,
    truth: &Path,
    ss: Option<&Path>,
    truth_dag: Option<&Path>,
) -> Result<EvalReport> {
    let est = read_graph(est)?.to_cpdag()?;
    let truth = read_graph(truth)?.to_cpdag()?;
    let ss = ss.map(|p| read_graph(p)?.to_undirected()).transpose()?;
    let dag: Option<Dag> = truth_dag.map(|p| read_graph(p)?.to_dag()).transpose()?;
    let pair = match (&ss, &dag) {
        (Some(s), Some(d)) => Some((s, d)),
        _ => None,
    };
    evaluate(&est, &truth, pair)
}

fn evaluate_batch(dir: &Path) -> Result<serde_json::Value> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("estimated_cpdag.json").is_file() && p.join("true_cpdag.json").is_file())
        .collect();
    entries.sort();
    let mut reports = Vec::new();
    let mut per_seed = Vec::new();
    for p in &entries {
        let ss = p.join("superstructure.json");
        let truth_dag = match p.join("model.json") {
            m if m.is_file() => Some(read_json::<ModelJson>(&m)?.to_model()?.dag().clone()),
            _ => None,
        };
        let est = read_graph(&p.join("estimated_cpdag.json"))?.to_cpdag()?;
        let truth = read_graph(&p.join("true_cpdag.json"))?.to_cpdag()?;
        let ss = ss.is_file().then(|| read_graph(&ss)?.to_undirected()).transpose()?;
        let pair = ss.as_ref().zip(truth_dag.as_ref());
        let r = evaluate(&est, &truth, pair)?;
        per_seed.push(json!({"dir": p.file_name().map(|s| s.to_string_lossy().into_owned()), "report": r}));
        reports.push(r);
    }
    if reports.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no directories with estimated_cpdag.json and true_cpdag.json under {}",
            dir.display()
        )));
    }
    Ok(json!({"runs": per_seed, "summary": summarize_reports(&reports)}))
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let out = match &a.batch {
        Some(dir) => evaluate_batch(dir)?,
        None => serde_json::to_value(evaluate_pair(
            a.est.as_deref().expect("required by clap"),
            a.truth.as_deref().expect("required by clap"),
            a.superstructure.as_deref(),
            a.truth_dag.as_deref(),
        )?)?,
    };
    emit(&out, None)
}

fn oracle(cmd: &OracleCommand) -> Result<()> {
    let out = match cmd {
        OracleCommand::SpSweep { model, tol } => {
            let m = read_json::<ModelJson>(model)?.to_model()?;
            let o = CiOracle::new(analytic_covariance(&m), *tol)?;
            let sp = sparsest_permutation(&o)?;
            let truth = dag_to_cpdag(m.dag());
            json!({
                "min_edges": sp.min_edges,
                "num_sparsest_dags": sp.dags.len(),
                "mecs": sp.mecs.iter().map(GraphJson::from_cpdag).collect::<Vec<_>>(),
                "smr_holds": sp.mecs.len() == 1 && sp.mecs[0] == truth,
            })
        }
        OracleCommand::ExhaustiveBic { data, model, n } => {
            let (cov, n) = match (data, model) {
                (Some(p), _) => {
                    let d = read_dataset_file(p)?;
                    (empirical_covariance(&d)?, d.n())
                }
                (None, Some(p)) => (analytic_covariance(&read_json::<ModelJson>(p)?.to_model()?), *n),
                (None, None) => unreachable!("required by clap"),
            };
            let r = enumerate_optimal_dags(&cov, n, cov.nrows())?;
            let mut mecs = Vec::new();
            for dag in &r.dags {
                let c = dag_to_cpdag(dag);
                if !mecs.contains(&c) {
                    mecs.push(c);
                }
            }
            json!({
                "best_score": r.best_score,
                "optimal_dags": r.dags.iter().map(GraphJson::from_dag).collect::<Vec<_>>(),
                "mecs": mecs.iter().map(GraphJson::from_cpdag).collect::<Vec<_>>(),
            })
        }
    };
    emit(&out, None)
}

fn mintheta_cmd(a: &MinthetaArgs) -> Result<()> {
    let rows = mintheta(&a.d, &a.degree, a.reps, a.seed)?;
    match &a.out {
        Some(p) => write_mintheta_csv(&rows, BufWriter::new(File::create(p)?)),
        None => write_mintheta_csv(&rows, io::stdout().lock()),
    }
}

fn pipeline(a: &PipelineArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let m = run_pipeline(&cfg)?;
    emit(
        &json!({
            "output_dir": cfg.output_dir,
            "completed": m.completed,
            "timed_out": m.timed_out,
            "failed": m.failed,
            "aggregate": m.aggregate,
        }),
        None,
    )
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Superstructure(a) => superstructure(a),
        Command::Search(a) => search(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Oracle(c) => oracle(c),
        Command::Mintheta(a) => mintheta_cmd(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = json!({"error": e.kind(), "message": e.to_string()});
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
