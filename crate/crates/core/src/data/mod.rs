//! Tabular credit data: ingestion, the sensitive attribute, and
//! deterministic train/test splits and cross-validation folds.

mod ingest;
mod split;
pub mod synthetic;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{load_csv, ColumnKind, ColumnSpec, IngestConfig, SensitiveSpec, UnlistedColumns};
pub use split::{make_folds, split_train_test, FoldPlan, SplitPlan};

/// Age threshold separating the unprivileged (younger) group.
pub const DEFAULT_AGE_THRESHOLD: f64 = 25.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: target value `{value}` does not map to 0 or 1")]
    TargetOutOfRange { row: usize, value: String },
    #[error("row {row}: sensitive value `{value}` is not 0 or 1")]
    SensitiveOutOfRange { row: usize, value: String },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("age at position {index} is not finite ({value})")]
    InvalidAge { index: usize, value: f64 },
    #[error(
        "stratum (label={label}, sensitive={sensitive}) has {size} member(s), need at least 2"
    )]
    DegenerateStratum {
        label: u8,
        sensitive: u8,
        size: usize,
    },
    #[error("cannot make {k} folds from {n} rows")]
    TooManyFolds { k: usize, n: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("train fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

/// How a source column became feature columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transform", rename_all = "snake_case")]
pub enum Transform {
    /// Passed through unchanged.
    Numeric { column: usize },
    /// Missing entries replaced by the column median; indicator column added.
    Imputed {
        column: usize,
        indicator: usize,
        median: f64,
        missing: usize,
    },
    /// One-hot encoded, `dropped` level omitted.
    OneHot {
        columns: Vec<usize>,
        levels: Vec<String>,
        dropped: String,
    },
    /// Mapped to the label vector.
    Target {
        mapping: Vec<(String, u8)>,
        dropped_rows: usize,
    },
    /// Mapped to the sensitive vector.
    Sensitive {
        rule: String,
        threshold: f64,
        kept_as_feature: bool,
    },
    /// Not used.
    Dropped,
    /// Generated in memory rather than read from a file.
    Generated { column: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEncoding {
    pub source: String,
    #[serde(flatten)]
    pub transform: Transform,
}

/// Record of every transformation applied during ingestion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodingReport {
    pub columns: Vec<ColumnEncoding>,
}

impl EncodingReport {
    /// Feature columns that carry raw numeric values (not one-hot or
    /// missingness indicators).
    pub fn numeric_columns(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .columns
            .iter()
            .filter_map(|c| match c.transform {
                Transform::Numeric { column }
                | Transform::Imputed { column, .. }
                | Transform::Generated { column } => Some(column),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out
    }
}

/// Features, labels (1 = repaid), sensitive group (1 = unprivileged) and
/// per-row weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<u8>,
    sensitive: Vec<u8>,
    weights: Vec<f64>,
    feature_names: Vec<String>,
    encoding: EncodingReport,
}

impl Dataset {
    /// Builds a dataset with unit weights and generated feature names.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<u8>,
        sensitive: Vec<u8>,
    ) -> Result<Self, DataError> {
        let k = features.ncols();
        let n = features.nrows();
        let names = (0..k).map(|j| format!("x{j}")).collect();
        let encoding = EncodingReport {
            columns: (0..k)
                .map(|j| ColumnEncoding {
                    source: format!("x{j}"),
                    transform: Transform::Generated { column: j },
                })
                .collect(),
        };
        Self::from_parts(features, labels, sensitive, vec![1.0; n], names, encoding)
    }

    pub fn from_parts(
        features: Array2<f64>,
        labels: Vec<u8>,
        sensitive: Vec<u8>,
        weights: Vec<f64>,
        feature_names: Vec<String>,
        encoding: EncodingReport,
    ) -> Result<Self, DataError> {
        let (n, k) = features.dim();
        if n == 0 {
            return Err(DataError::Invalid("no rows".into()));
        }
        if k == 0 {
            return Err(DataError::Invalid("no feature columns".into()));
        }
        if labels.len() != n || sensitive.len() != n || weights.len() != n {
            return Err(DataError::Invalid(format!(
                "length mismatch: {n} feature rows, {} labels, {} sensitive, {} weights",
                labels.len(),
                sensitive.len(),
                weights.len()
            )));
        }
        if feature_names.len() != k {
            return Err(DataError::Invalid(format!(
                "{} names for {k} columns",
                feature_names.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&v| v > 1) {
            return Err(DataError::Invalid(format!("label at row {i} is not 0/1")));
        }
        if let Some(i) = sensitive.iter().position(|&v| v > 1) {
            return Err(DataError::Invalid(format!(
                "sensitive value at row {i} is not 0/1"
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(DataError::Invalid(format!(
                "weight at row {i} is not positive and finite"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            sensitive,
            weights,
            feature_names,
            encoding,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn encoding_report(&self) -> &EncodingReport {
        &self.encoding
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Share of rows with label 0.
    pub fn default_rate(&self) -> f64 {
        self.labels.iter().filter(|&&y| y == 0).count() as f64 / self.n_rows() as f64
    }

    /// Share of rows in the unprivileged group.
    pub fn sensitive_rate(&self) -> f64 {
        self.sensitive.iter().filter(|&&a| a == 1).count() as f64 / self.n_rows() as f64
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&0) && self.labels.contains(&1)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            sensitive: indices.iter().map(|&i| self.sensitive[i]).collect(),
            weights: indices.iter().map(|&i| self.weights[i]).collect(),
            feature_names: self.feature_names.clone(),
            encoding: self.encoding.clone(),
        }
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Dataset, DataError> {
        Self::from_parts(
            self.features.clone(),
            self.labels.clone(),
            self.sensitive.clone(),
            weights,
            self.feature_names.clone(),
            self.encoding.clone(),
        )
    }

    pub fn with_features(&self, features: Array2<f64>) -> Result<Dataset, DataError> {
        if features.ncols() != self.n_features() {
            return Err(DataError::Invalid(
                "replacement features change the column count".into(),
            ));
        }
        Self::from_parts(
            features,
            self.labels.clone(),
            self.sensitive.clone(),
            self.weights.clone(),
            self.feature_names.clone(),
            self.encoding.clone(),
        )
    }

    /// Joint (label, sensitive) cell id in `0..4`.
    pub fn strata(&self) -> Vec<usize> {
        self.labels
            .iter()
            .zip(&self.sensitive)
            .map(|(&y, &a)| 2 * y as usize + a as usize)
            .collect()
    }
}

/// How a raw column value becomes group membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SensitiveRule {
    /// `value < threshold` is unprivileged.
    #[default]
    Below,
    /// `value <= threshold` is unprivileged.
    AtOrBelow,
    /// The column already holds 0/1.
    Binary,
}

impl SensitiveRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            SensitiveRule::Below => "below",
            SensitiveRule::AtOrBelow => "at_or_below",
            SensitiveRule::Binary => "binary",
        }
    }
}

/// 1 where the age is strictly below `psi`. Age equal to `psi` is privileged.
pub fn derive_sensitive(ages: &[f64], psi: f64) -> Result<Vec<u8>, DataError> {
    derive_sensitive_with(ages, psi, SensitiveRule::Below)
}

pub fn derive_sensitive_with(
    ages: &[f64],
    psi: f64,
    rule: SensitiveRule,
) -> Result<Vec<u8>, DataError> {
    ages.iter()
        .enumerate()
        .map(|(index, &age)| {
            if !age.is_finite() {
                return Err(DataError::InvalidAge { index, value: age });
            }
            Ok(match rule {
                SensitiveRule::Below => u8::from(age < psi),
                SensitiveRule::AtOrBelow => u8::from(age <= psi),
                SensitiveRule::Binary if age == 0.0 || age == 1.0 => age as u8,
                SensitiveRule::Binary => return Err(DataError::InvalidAge { index, value: age }),
            })
        })
        .collect()
}
