//! Structure learning for linear-Gaussian Bayesian networks.
//!
//! The crate covers the whole pipeline: synthetic model generation
//! ([`sem`]), super-structure estimation with the graphical lasso
//! ([`glasso`]), BIC scoring with pruned parent graphs ([`score`]), exact
//! order-graph search by dynamic programming and A* ([`search`]), the
//! cluster-by-cluster Local A* procedure ([`local`]), brute-force reference
//! implementations ([`oracle`]) and CPDAG-level evaluation ([`metrics`]).

pub mod error;
pub mod glasso;
pub mod graph;
pub mod io;
pub mod local;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod score;
pub mod search;
pub mod sem;
pub mod varset;

pub use error::{Error, Result};
pub use glasso::{GlassoConfig, GlassoResult};
pub use graph::{Cpdag, Dag, Mark, UndirectedGraph};
pub use local::{ClusterPlan, LocalConfig, LocalOutcome};
pub use metrics::EvalReport;
pub use score::{ParentGraph, ScoreTable, SearchConstraints};
pub use search::SearchResult;
pub use sem::{Dataset, PrecisionMatrix, WeightedDag};
