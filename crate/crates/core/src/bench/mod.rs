//! Experiment harness: nested cross-validation over datasets, learners and
//! fairness processors, with aggregation and reporting.

mod analysis;
pub mod config;
mod report;
mod run;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{
    aggregate_gains, pareto_frontier, pareto_indices, rank_correlation, spearman,
    CorrelationMatrix, Gain,
};
pub use config::{ExperimentConfig, LearnerId, ProcessorId, Stage, Violation, SELF_LEARNER};
pub use report::{
    emit_report, frontiers_by_dataset, is_frontier_csv, read_frontier_csv, read_records_csv,
    read_records_json, write_frontier_csv, write_records_csv, Report, Summary, SCHEMA_VERSION,
};
pub use run::{
    derive_seed, expected_cells, run_experiment, run_experiment_with_jobs, splitmix64, RunOutput,
};

use crate::data::DataError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("invalid config:\n  {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<Violation>),
    #[error("dataset `{id}`: {source}")]
    Dataset {
        id: String,
        #[source]
        source: DataError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no unconstrained record for dataset `{dataset}`, fold {fold}")]
    MissingBaseline { dataset: String, fold: usize },
    #[error("dataset `{dataset}` has {count} usable records, need at least 3")]
    TooFewRecords { dataset: String, count: usize },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Evaluation metrics of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auc,
    ProfitRaw,
    ProfitNormalized,
    AcceptanceRate,
    Ind,
    Sp,
    Sf,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Auc,
        Metric::ProfitRaw,
        Metric::ProfitNormalized,
        Metric::AcceptanceRate,
        Metric::Ind,
        Metric::Sp,
        Metric::Sf,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Auc => "auc",
            Metric::ProfitRaw => "profit_raw",
            Metric::ProfitNormalized => "profit_normalized",
            Metric::AcceptanceRate => "acceptance_rate",
            Metric::Ind => "ind",
            Metric::Sp => "sp",
            Metric::Sf => "sf",
        }
    }

    /// Lower is better for the fairness criteria.
    pub fn is_fairness(&self) -> bool {
        matches!(self, Metric::Ind | Metric::Sp | Metric::Sf)
    }

    /// `+1` for higher-is-better metrics, `−1` for fairness criteria.
    pub fn sign(&self) -> f64 {
        if self.is_fairness() {
            -1.0
        } else {
            1.0
        }
    }

    pub fn value(&self, r: &ResultRecord) -> Option<f64> {
        let m = &r.metrics;
        match self {
            Metric::Auc => m.auc,
            Metric::ProfitRaw => m.profit_raw,
            Metric::ProfitNormalized => m.profit_normalized,
            Metric::AcceptanceRate => m.acceptance_rate,
            Metric::Ind => m.ind,
            Metric::Sp => m.sp,
            Metric::Sf => m.sf,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// Test-set metrics; `None` marks a metric undefined on that cell (e.g. no
/// accepted applicant in a group).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: Option<f64>,
    pub profit_raw: Option<f64>,
    pub profit_normalized: Option<f64>,
    pub acceptance_rate: Option<f64>,
    pub ind: Option<f64>,
    pub sp: Option<f64>,
    pub sf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub dataset: String,
    pub processor: ProcessorId,
    pub learner: String,
    pub fold: usize,
    pub seed: u64,
    /// Selected meta-parameters.
    pub setting: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// A cell that could not be completed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellError {
    pub dataset: String,
    pub processor: ProcessorId,
    pub learner: String,
    pub fold: usize,
    pub message: String,
}
