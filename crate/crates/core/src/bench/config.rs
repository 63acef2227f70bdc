//! Experiment configuration.
//!
//! A TOML file; every section has defaults, so an empty file runs the
//! bundled synthetic benchmark with the full tuning grids.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use super::BenchError;
use crate::data::synthetic::{generate, SyntheticSpec};
use crate::data::{load_csv, IngestConfig};
use crate::data::{DataError, Dataset};
use crate::fairmetrics::Criterion;
use crate::inproc::{AdversarialSpec, FairnessBound, MetaFairSpec, PrejudiceSpec};
use crate::preproc::RepairLevel;
use crate::profit::CostModel;

/// A list that may also be written as a single value.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Grid<T>(pub Vec<T>);

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Grid<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany<T> {
            One(T),
            Many(Vec<T>),
        }
        Ok(match OneOrMany::deserialize(d)? {
            OneOrMany::One(v) => Grid(vec![v]),
            OneOrMany::Many(v) => Grid(v),
        })
    }
}

impl<T> Grid<T> {
    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessorId {
    Unconstrained,
    Reweighing,
    DiRemover,
    PrejudiceRemover,
    MetaFair,
    Adversarial,
    RejectOption,
    EqualizedOdds,
    Platt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Baseline,
    Pre,
    In,
    Post,
}

impl ProcessorId {
    pub const PROCESSORS: [ProcessorId; 8] = [
        ProcessorId::Reweighing,
        ProcessorId::DiRemover,
        ProcessorId::PrejudiceRemover,
        ProcessorId::MetaFair,
        ProcessorId::Adversarial,
        ProcessorId::RejectOption,
        ProcessorId::EqualizedOdds,
        ProcessorId::Platt,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProcessorId::Unconstrained => "unconstrained",
            ProcessorId::Reweighing => "reweighing",
            ProcessorId::DiRemover => "di_remover",
            ProcessorId::PrejudiceRemover => "prejudice_remover",
            ProcessorId::MetaFair => "meta_fair",
            ProcessorId::Adversarial => "adversarial",
            ProcessorId::RejectOption => "reject_option",
            ProcessorId::EqualizedOdds => "equalized_odds",
            ProcessorId::Platt => "platt",
        }
    }

    pub fn stage(&self) -> Stage {
        match self {
            ProcessorId::Unconstrained => Stage::Baseline,
            ProcessorId::Reweighing | ProcessorId::DiRemover => Stage::Pre,
            ProcessorId::PrejudiceRemover | ProcessorId::MetaFair | ProcessorId::Adversarial => {
                Stage::In
            }
            ProcessorId::RejectOption | ProcessorId::EqualizedOdds | ProcessorId::Platt => {
                Stage::Post
            }
        }
    }
}

impl fmt::Display for ProcessorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProcessorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        std::iter::once(ProcessorId::Unconstrained)
            .chain(ProcessorId::PROCESSORS)
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown processor `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerId {
    Logistic,
    Network,
}

impl LearnerId {
    pub fn as_str(&self) -> &'static str {
        match self {
            LearnerId::Logistic => "logistic",
            LearnerId::Network => "network",
        }
    }
}

/// Learner id written in records of in-processors, which are their own model.
pub const SELF_LEARNER: &str = "self";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub id: String,
    /// Generated data; used when `csv` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Ingest schema file for `csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
}

impl DatasetConfig {
    pub fn load(&self, base: &Path) -> Result<Dataset, DataError> {
        match &self.csv {
            Some(csv) => {
                let schema_path = self.schema.as_ref().ok_or_else(|| {
                    DataError::Invalid(format!("dataset `{}` has csv but no schema", self.id))
                })?;
                let schema = IngestConfig::from_file(base.join(schema_path))?;
                load_csv(base.join(csv), &schema)
            }
            None => generate(&self.synthetic.clone().unwrap_or_default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticConfig {
    pub max_iterations: usize,
    pub learning_rate: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        let s = crate::learners::LearnerSpec::logistic();
        Self {
            max_iterations: s.max_iterations,
            learning_rate: s.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: Grid<usize>,
    pub decay: Grid<f64>,
    pub max_iterations: usize,
    pub learning_rate: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: Grid(vec![5, 10, 15]),
            decay: Grid(vec![0.1, 0.5, 1.0, 1.5, 2.0]),
            max_iterations: 1000,
            learning_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnersConfig {
    pub enabled: Vec<LearnerId>,
    pub logistic: LogisticConfig,
    pub network: NetworkConfig,
}

impl Default for LearnersConfig {
    fn default() -> Self {
        Self {
            enabled: vec![LearnerId::Logistic, LearnerId::Network],
            logistic: LogisticConfig::default(),
            network: NetworkConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiConfig {
    pub lambda: Grid<f64>,
}

impl Default for DiConfig {
    fn default() -> Self {
        Self {
            lambda: Grid(RepairLevel::GRID.to_vec()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocConfig {
    pub di: DiConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrejudiceConfig {
    pub eta: Grid<f64>,
}

impl Default for PrejudiceConfig {
    fn default() -> Self {
        Self {
            eta: Grid(PrejudiceSpec::GRID.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversarialConfig {
    pub alpha: Grid<f64>,
    pub epochs: usize,
    pub hidden: usize,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        let s = AdversarialSpec::new(0.0);
        Self {
            alpha: Grid(AdversarialSpec::GRID.to_vec()),
            epochs: s.epochs,
            hidden: s.hidden_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaFairConfig {
    pub criterion: FairnessBound,
    /// Required group ratio; the default is `1 − slack` over the slack grid.
    pub sigma: Grid<f64>,
    pub stages: usize,
}

impl Default for MetaFairConfig {
    fn default() -> Self {
        Self {
            criterion: FairnessBound::Sufficiency,
            sigma: Grid(MetaFairSpec::SLACK_GRID.iter().map(|s| 1.0 - s).collect()),
            stages: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InprocConfig {
    pub prejudice: PrejudiceConfig,
    pub adversarial: AdversarialConfig,
    pub metafair: MetaFairConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RejectOptionConfig {
    pub bounds: Vec<[f64; 2]>,
    pub thresholds: usize,
    pub criterion: Criterion,
}

impl Default for RejectOptionConfig {
    fn default() -> Self {
        Self {
            bounds: vec![[-0.1, 0.1], [-0.2, 0.2], [-0.3, 0.3]],
            thresholds: 100,
            criterion: Criterion::Independence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EqualizedOddsConfig {
    pub epsilon: f64,
}

impl Default for EqualizedOddsConfig {
    fn default() -> Self {
        Self {
            epsilon: crate::postproc::EQODDS_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PostprocConfig {
    pub reject_option: RejectOptionConfig,
    pub equalized_odds: EqualizedOddsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub train_fraction: f64,
    pub folds: usize,
    pub inner_folds: usize,
    pub processors: Vec<ProcessorId>,
    pub datasets: Vec<DatasetConfig>,
    pub cost: CostModel<f64>,
    pub learners: LearnersConfig,
    pub preproc: PreprocConfig,
    pub inproc: InprocConfig,
    pub postproc: PostprocConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2021,
            output_dir: PathBuf::from("fairscore-out"),
            train_fraction: 0.6,
            folds: 5,
            inner_folds: 4,
            processors: ProcessorId::PROCESSORS.to_vec(),
            datasets: vec![DatasetConfig {
                id: "synthetic".into(),
                synthetic: Some(SyntheticSpec::default()),
                csv: None,
                schema: None,
            }],
            cost: CostModel::default(),
            learners: LearnersConfig::default(),
            preproc: PreprocConfig::default(),
            inproc: InprocConfig::default(),
            postproc: PostprocConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// A problem found by [`ExperimentConfig::violations`], with its key path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

/// Sets `key` (dotted, array elements by index) in a TOML table. The value is
/// parsed as TOML and taken as a plain string if that fails.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), String> {
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("malformed key `{key}`"));
    }
    let mut root = toml::Value::Table(std::mem::take(table));
    let result = set_path(&mut root, &parts, value, key);
    if let toml::Value::Table(t) = root {
        *table = t;
    }
    result
}

fn set_path(
    node: &mut toml::Value,
    parts: &[&str],
    value: toml::Value,
    key: &str,
) -> Result<(), String> {
    let Some((head, rest)) = parts.split_first() else {
        *node = value;
        return Ok(());
    };
    let child = match node {
        toml::Value::Table(t) => t
            .entry(head.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new())),
        toml::Value::Array(items) => {
            let idx: usize = head
                .parse()
                .map_err(|_| format!("`{head}` in `{key}` is not an array index"))?;
            items
                .get_mut(idx)
                .ok_or_else(|| format!("index {idx} out of range in `{key}`"))?
        }
        _ => {
            return Err(format!(
                "cannot descend into a scalar at `{head}` in `{key}`"
            ))
        }
    };
    set_path(child, rest, value, key)
}

impl ExperimentConfig {
    /// Parses TOML text after applying `overrides` (`key=value`).
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, BenchError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| BenchError::Config(e.to_string()))?;
        for ov in overrides {
            let (k, v) = ov
                .split_once('=')
                .ok_or_else(|| BenchError::Config(format!("override `{ov}` is not key=value")))?;
            apply_override(&mut table, k.trim(), v.trim()).map_err(BenchError::Config)?;
        }
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| BenchError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg = Self::from_toml_str(&text, overrides)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if cfg.base_dir.as_os_str().is_empty() {
            cfg.base_dir = PathBuf::from(".");
        }
        Ok(cfg)
    }

    /// Effective configuration with defaults filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn output_path(&self) -> PathBuf {
        self.base_dir.join(&self.output_dir)
    }

    pub fn has_stage(&self, stage: Stage) -> bool {
        self.processors.iter().any(|p| p.stage() == stage)
    }

    /// Schema and grid checks. Dataset files are checked for existence.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |key: &str, message: String| {
            out.push(Violation {
                key: key.to_string(),
                message,
            })
        };
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            bad(
                "train_fraction",
                format!("{} out of (0,1)", self.train_fraction),
            );
        }
        if self.folds < 2 {
            bad("folds", format!("{} is below 2", self.folds));
        }
        if self.inner_folds < 2 {
            bad("inner_folds", format!("{} is below 2", self.inner_folds));
        }
        if let Err(e) = self.cost.validate() {
            bad("cost", e.to_string());
        }
        if self.datasets.is_empty() {
            bad("datasets", "no dataset configured".into());
        }
        let mut ids = BTreeSet::new();
        for (i, d) in self.datasets.iter().enumerate() {
            let key = format!("datasets.{i}");
            if !ids.insert(d.id.as_str()) {
                bad(&format!("{key}.id"), format!("duplicate id `{}`", d.id));
            }
            if d.id.is_empty() || d.id.contains(',') {
                bad(
                    &format!("{key}.id"),
                    "must be non-empty and contain no comma".into(),
                );
            }
            match (&d.csv, &d.schema) {
                (Some(csv), Some(schema)) => {
                    if d.synthetic.is_some() {
                        bad(
                            &format!("{key}.synthetic"),
                            "give either synthetic or csv, not both".into(),
                        );
                    }
                    for (name, p) in [("csv", csv), ("schema", schema)] {
                        let full = self.base_dir.join(p);
                        if !full.is_file() {
                            bad(
                                &format!("{key}.{name}"),
                                format!("cannot read {}", full.display()),
                            );
                        }
                    }
                }
                (Some(_), None) => bad(&format!("{key}.schema"), "required with csv".into()),
                (None, Some(_)) => bad(&format!("{key}.csv"), "schema given without csv".into()),
                (None, None) => {
                    if let Err(e) = d.synthetic.clone().unwrap_or_default().validate() {
                        bad(&format!("{key}.synthetic"), e.to_string());
                    }
                }
            }
        }
        if self.processors.is_empty() {
            bad("processors", "no processor enabled".into());
        }
        if self.processors.contains(&ProcessorId::Unconstrained) {
            bad(
                "processors",
                "the unconstrained baseline is always run; do not list it".into(),
            );
        }
        let needs_learner = self.has_stage(Stage::Pre) || self.has_stage(Stage::Post);
        if self.learners.enabled.is_empty() && needs_learner {
            bad(
                "learners.enabled",
                "pre- and post-processors need at least one learner".into(),
            );
        }
        let net = &self.learners.network;
        if net.hidden.0.is_empty() || net.hidden.iter().any(|&h| h == 0) {
            bad(
                "learners.network.hidden",
                "grid must be non-empty and positive".into(),
            );
        }
        if net.decay.0.is_empty() || net.decay.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
            bad(
                "learners.network.decay",
                "grid must be non-empty and non-negative".into(),
            );
        }
        for (key, lr) in [
            ("learners.network.learning_rate", net.learning_rate),
            (
                "learners.logistic.learning_rate",
                self.learners.logistic.learning_rate,
            ),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                bad(key, format!("{lr} must be positive"));
            }
        }
        let lambda = &self.preproc.di.lambda;
        if lambda.0.is_empty() {
            bad("preproc.di.lambda", "grid is empty".into());
        }
        for &l in lambda.iter() {
            if RepairLevel::new(l).is_err() {
                bad("preproc.di.lambda", format!("{l} out of [0,1]"));
            }
        }
        let eta = &self.inproc.prejudice.eta;
        if eta.0.is_empty() || eta.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            bad(
                "inproc.prejudice.eta",
                "grid must be non-empty and non-negative".into(),
            );
        }
        let adv = &self.inproc.adversarial;
        if adv.alpha.0.is_empty() || adv.alpha.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
            bad(
                "inproc.adversarial.alpha",
                "grid must be non-empty and non-negative".into(),
            );
        }
        if adv.epochs == 0 || adv.hidden == 0 {
            bad(
                "inproc.adversarial",
                "epochs and hidden must be positive".into(),
            );
        }
        let mf = &self.inproc.metafair;
        if mf.sigma.0.is_empty() {
            bad("inproc.metafair.sigma", "grid is empty".into());
        }
        for &s in mf.sigma.iter() {
            if !(0.0..=1.0).contains(&s) {
                bad("inproc.metafair.sigma", format!("{s} out of [0,1]"));
            }
        }
        let ro = &self.postproc.reject_option;
        if ro.bounds.is_empty() {
            bad("postproc.reject_option.bounds", "grid is empty".into());
        }
        for b in &ro.bounds {
            if !(b[0] <= b[1]) {
                bad(
                    "postproc.reject_option.bounds",
                    format!("[{}, {}] is reversed", b[0], b[1]),
                );
            }
        }
        if ro.thresholds == 0 {
            bad(
                "postproc.reject_option.thresholds",
                "must be positive".into(),
            );
        }
        let eps = self.postproc.equalized_odds.epsilon;
        if !(eps > 0.0 && eps < 1.0) {
            bad(
                "postproc.equalized_odds.epsilon",
                format!("{eps} out of (0,1)"),
            );
        }
        out
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(BenchError::Invalid(v))
        }
    }
}
