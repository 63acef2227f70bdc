use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, LearnerId, ProcessorId, Stage, SELF_LEARNER};
use super::{BenchError, CellError, Metrics, ResultRecord};
use crate::data::{make_folds, split_train_test, Dataset, FoldPlan};
use crate::fairmetrics::{acceptance_rate, auc, independence, separation, sufficiency, ScoreSet};
use crate::inproc::{
    train_adversarial, train_meta_fair, train_prejudice_remover, AdversarialSpec, MetaFairSpec,
    PrejudiceSpec,
};
use crate::learners::{predict, train, LearnerSpec, TrainedModel};
use crate::postproc::{
    equalized_odds_apply, equalized_odds_fit, platt_apply, platt_fit, reject_option_apply,
    reject_option_tune, CriticalRegion, RejectOptionFit,
};
use crate::preproc::{reweigh, DiRepairer, RepairLevel};
use crate::profit::{expected_profit, profit_per_eur, CostModel};

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a position in the experiment grid.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

const TAG_SPLIT: u64 = 1;
const TAG_FOLDS: u64 = 2;
const TAG_INNER: u64 = 3;
const TAG_COIN: u64 = 4;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub records: Vec<ResultRecord>,
    pub errors: Vec<CellError>,
    pub expected_cells: usize,
}

/// Cells per dataset: baseline and pre/post-processors once per learner,
/// in-processors once.
pub fn expected_cells(cfg: &ExperimentConfig) -> usize {
    let learners = cfg.learners.enabled.len();
    let per_fold: usize = std::iter::once(ProcessorId::Unconstrained)
        .chain(cfg.processors.iter().copied())
        .map(|p| if p.stage() == Stage::In { 1 } else { learners })
        .sum();
    cfg.datasets.len() * cfg.folds * per_fold
}

struct Prepared {
    id: String,
    train: Dataset,
    test: Dataset,
    folds: FoldPlan,
}

#[derive(Clone, Copy)]
enum Task {
    Learner {
        d: usize,
        fold: usize,
        learner: LearnerId,
    },
    In {
        d: usize,
        fold: usize,
        processor: ProcessorId,
    },
}

type Outcome = Result<ResultRecord, CellError>;

/// Runs on the global rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, BenchError> {
    cfg.validate()?;
    let mut datasets = Vec::with_capacity(cfg.datasets.len());
    for d in &cfg.datasets {
        let ds = d
            .load(&cfg.base_dir)
            .map_err(|source| BenchError::Dataset {
                id: d.id.clone(),
                source,
            })?;
        datasets.push(ds);
    }
    let prepared: Vec<Result<Prepared, String>> = datasets
        .iter()
        .enumerate()
        .map(|(i, ds)| {
            let id = cfg.datasets[i].id.clone();
            let split = split_train_test(
                ds,
                cfg.train_fraction,
                derive_seed(cfg.seed, &[i as u64, TAG_SPLIT]),
            )
            .map_err(|e| e.to_string())?;
            let train = ds.subset(&split.train_indices);
            let test = ds.subset(&split.test_indices);
            let folds = make_folds(
                train.n_rows(),
                cfg.folds,
                &train.strata(),
                derive_seed(cfg.seed, &[i as u64, TAG_FOLDS]),
            )
            .map_err(|e| e.to_string())?;
            Ok(Prepared {
                id,
                train,
                test,
                folds,
            })
        })
        .collect();

    let mut tasks = Vec::new();
    for d in 0..prepared.len() {
        for fold in 0..cfg.folds {
            for &learner in &cfg.learners.enabled {
                tasks.push(Task::Learner { d, fold, learner });
            }
            for &p in cfg.processors.iter().filter(|p| p.stage() == Stage::In) {
                tasks.push(Task::In {
                    d,
                    fold,
                    processor: p,
                });
            }
        }
    }
    let outcomes: Vec<Vec<Outcome>> = tasks
        .par_iter()
        .map(|t| run_task(cfg, &prepared, *t))
        .collect();

    let mut out = RunOutput {
        expected_cells: expected_cells(cfg),
        ..Default::default()
    };
    for o in outcomes.into_iter().flatten() {
        match o {
            Ok(r) => out.records.push(r),
            Err(e) => out.errors.push(e),
        }
    }
    let order = |id: &str| {
        cfg.datasets
            .iter()
            .position(|d| d.id == id)
            .unwrap_or(usize::MAX)
    };
    out.records.sort_by(|a, b| {
        (order(&a.dataset), a.processor, &a.learner, a.fold).cmp(&(
            order(&b.dataset),
            b.processor,
            &b.learner,
            b.fold,
        ))
    });
    out.errors.sort_by(|a, b| {
        (order(&a.dataset), a.processor, &a.learner, a.fold).cmp(&(
            order(&b.dataset),
            b.processor,
            &b.learner,
            b.fold,
        ))
    });
    Ok(out)
}

/// Runs on a dedicated pool of `jobs` threads.
pub fn run_experiment_with_jobs(
    cfg: &ExperimentConfig,
    jobs: usize,
) -> Result<RunOutput, BenchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    pool.install(|| run_experiment(cfg))
}

fn run_task(
    cfg: &ExperimentConfig,
    prepared: &[Result<Prepared, String>],
    task: Task,
) -> Vec<Outcome> {
    let (d, fold) = match task {
        Task::Learner { d, fold, .. } | Task::In { d, fold, .. } => (d, fold),
    };
    let (learner, processors): (&str, Vec<ProcessorId>) = match task {
        Task::Learner { learner, .. } => (
            learner.as_str(),
            std::iter::once(ProcessorId::Unconstrained)
                .chain(
                    cfg.processors
                        .iter()
                        .copied()
                        .filter(|p| p.stage() != Stage::In),
                )
                .collect(),
        ),
        Task::In { processor, .. } => (SELF_LEARNER, vec![processor]),
    };
    let fail_all = |id: &str, message: &str| -> Vec<Outcome> {
        processors
            .iter()
            .map(|&p| {
                Err(CellError {
                    dataset: id.to_string(),
                    processor: p,
                    learner: learner.to_string(),
                    fold,
                    message: message.to_string(),
                })
            })
            .collect()
    };
    let prep = match &prepared[d] {
        Ok(p) => p,
        Err(message) => return fail_all(&cfg.datasets[d].id, message),
    };
    let cell = Cell {
        cfg,
        dataset: &prep.id,
        fold_train: prep.train.subset(&prep.folds.training_positions(fold)),
        validation: prep.train.subset(&prep.folds.validation_positions(fold)),
        test: &prep.test,
        fold,
    };
    match task {
        Task::Learner { learner, .. } => {
            let seed = derive_seed(cfg.seed, &[d as u64, fold as u64, 100 + learner as u64]);
            match cell.learner_cells(learner, &processors, seed) {
                Ok(v) => v,
                Err(message) => fail_all(&prep.id, &message),
            }
        }
        Task::In { processor, .. } => {
            let seed = derive_seed(cfg.seed, &[d as u64, fold as u64, 200 + processor as u64]);
            vec![cell.in_cell(processor, seed)]
        }
    }
}

struct Cell<'a> {
    cfg: &'a ExperimentConfig,
    dataset: &'a str,
    fold_train: Dataset,
    validation: Dataset,
    test: &'a Dataset,
    fold: usize,
}

fn score_set(scores: Vec<f64>, ds: &Dataset) -> Result<ScoreSet<f64>, String> {
    ScoreSet::new(scores, ds.labels().to_vec(), ds.sensitive().to_vec()).map_err(|e| e.to_string())
}

fn scores_of(m: &TrainedModel, ds: &Dataset) -> Result<ScoreSet<f64>, String> {
    score_set(
        predict(m, ds.features().view()).map_err(|e| e.to_string())?,
        ds,
    )
}

fn emp(s: &ScoreSet<f64>, cm: &CostModel<f64>) -> Result<f64, String> {
    expected_profit(s, cm)
        .map(|p| p.value)
        .map_err(|e| e.to_string())
}

/// Test-set metrics at the operating cutoff.
pub(crate) fn evaluate(s: &ScoreSet<f64>, cm: &CostModel<f64>) -> Metrics {
    let tau = cm.operating_cutoff();
    let ppe = profit_per_eur(s, cm).ok();
    Metrics {
        auc: auc(s).ok(),
        profit_raw: ppe.map(|p| p.raw),
        profit_normalized: ppe.and_then(|p| p.normalized),
        acceptance_rate: acceptance_rate(s, tau).ok().map(|r| r.overall),
        ind: independence(s, tau).ok(),
        sp: separation(s, tau).ok(),
        sf: sufficiency(s, tau).ok(),
    }
}

/// Keeps the first candidate with the highest validation profit.
fn select<T>(candidates: impl IntoIterator<Item = Result<(f64, T), String>>) -> Result<T, String> {
    let mut best: Option<(f64, T)> = None;
    let mut last_err = None;
    for c in candidates {
        match c {
            Ok((v, t)) => {
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, t));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.map(|(_, t)| t)
        .ok_or_else(|| last_err.unwrap_or_else(|| "empty grid".into()))
}

impl Cell<'_> {
    fn record(
        &self,
        processor: ProcessorId,
        learner: &str,
        seed: u64,
        setting: String,
        s: &ScoreSet<f64>,
    ) -> ResultRecord {
        ResultRecord {
            dataset: self.dataset.to_string(),
            processor,
            learner: learner.to_string(),
            fold: self.fold,
            seed,
            setting,
            metrics: evaluate(s, &self.cfg.cost),
        }
    }

    fn error(&self, processor: ProcessorId, learner: &str, message: String) -> CellError {
        CellError {
            dataset: self.dataset.to_string(),
            processor,
            learner: learner.to_string(),
            fold: self.fold,
            message,
        }
    }

    fn candidates(&self, learner: LearnerId, seed: u64) -> Vec<(String, LearnerSpec)> {
        let lc = &self.cfg.learners;
        match learner {
            LearnerId::Logistic => vec![(
                "-".into(),
                LearnerSpec {
                    max_iterations: lc.logistic.max_iterations,
                    learning_rate: lc.logistic.learning_rate,
                    ..LearnerSpec::logistic()
                },
            )],
            LearnerId::Network => {
                let mut v = Vec::new();
                for &h in lc.network.hidden.iter() {
                    for &decay in lc.network.decay.iter() {
                        v.push((
                            format!("hidden={h};decay={decay}"),
                            LearnerSpec {
                                max_iterations: lc.network.max_iterations,
                                learning_rate: lc.network.learning_rate,
                                seed,
                                ..LearnerSpec::network(h, decay)
                            },
                        ));
                    }
                }
                v
            }
        }
    }

    /// Nested cross-validation on the fold's training rows, maximizing the
    /// mean validation EMP.
    fn tune(&self, learner: LearnerId, seed: u64) -> Result<(String, LearnerSpec), String> {
        let mut cands = self.candidates(learner, seed);
        if cands.len() == 1 {
            return Ok(cands.remove(0));
        }
        let k = self.cfg.inner_folds;
        let inner = make_folds(
            self.fold_train.n_rows(),
            k,
            &self.fold_train.strata(),
            derive_seed(seed, &[TAG_INNER]),
        )
        .map_err(|e| e.to_string())?;
        let parts: Vec<(Dataset, Dataset)> = (0..k)
            .map(|f| {
                (
                    self.fold_train.subset(&inner.training_positions(f)),
                    self.fold_train.subset(&inner.validation_positions(f)),
                )
            })
            .collect();
        select(cands.into_iter().map(|(setting, spec)| {
            let mut total = 0.0;
            for (tr, va) in &parts {
                let m = train(tr, &spec).map_err(|e| e.to_string())?;
                total += emp(&scores_of(&m, va)?, &self.cfg.cost)?;
            }
            Ok((total / k as f64, (setting, spec)))
        }))
    }

    fn learner_cells(
        &self,
        learner: LearnerId,
        processors: &[ProcessorId],
        seed: u64,
    ) -> Result<Vec<Outcome>, String> {
        let lid = learner.as_str();
        let (setting, spec) = self.tune(learner, seed)?;
        let base = train(&self.fold_train, &spec).map_err(|e| e.to_string())?;
        let test_scores = scores_of(&base, self.test)?;
        let val_scores = scores_of(&base, &self.validation)?;
        let cm = &self.cfg.cost;
        let mut out = Vec::with_capacity(processors.len());
        for &p in processors {
            let cell = || -> Result<ResultRecord, String> {
                let (note, scores) = match p {
                    ProcessorId::Unconstrained => (String::new(), test_scores.clone()),
                    ProcessorId::Reweighing => {
                        let w =
                            reweigh::<f64>(self.fold_train.labels(), self.fold_train.sensitive())
                                .map_err(|e| e.to_string())?;
                        let ds = self.fold_train.with_weights(w).map_err(|e| e.to_string())?;
                        let m = train(&ds, &spec).map_err(|e| e.to_string())?;
                        (String::new(), scores_of(&m, self.test)?)
                    }
                    ProcessorId::DiRemover => {
                        let rep =
                            DiRepairer::fit(&self.fold_train, None).map_err(|e| e.to_string())?;
                        let (lambda, m) = select(self.cfg.preproc.di.lambda.iter().map(|&l| {
                            let level = RepairLevel::new(l).map_err(|e| e.to_string())?;
                            let tr = rep
                                .transform(&self.fold_train, level)
                                .map_err(|e| e.to_string())?;
                            let va = rep
                                .transform(&self.validation, level)
                                .map_err(|e| e.to_string())?;
                            let m = train(&tr, &spec).map_err(|e| e.to_string())?;
                            Ok((emp(&scores_of(&m, &va)?, cm)?, (level, m)))
                        }))?;
                        let te = rep
                            .transform(self.test, lambda)
                            .map_err(|e| e.to_string())?;
                        (format!("lambda={}", lambda.value()), scores_of(&m, &te)?)
                    }
                    ProcessorId::RejectOption => {
                        let ro = &self.cfg.postproc.reject_option;
                        let fits: Vec<([f64; 2], RejectOptionFit)> = ro
                            .bounds
                            .iter()
                            .map(|&b| {
                                reject_option_tune(
                                    &val_scores,
                                    (b[0], b[1]),
                                    ro.criterion,
                                    cm,
                                    ro.thresholds,
                                )
                                .map(|f| (b, f))
                                .map_err(|e| e.to_string())
                            })
                            .collect::<Result<_, _>>()?;
                        // bounds that are met win over ones that are not
                        let any_met = fits.iter().any(|(_, f)| f.satisfied);
                        let (bound, fit) = select(
                            fits.into_iter()
                                .filter(|(_, f)| f.satisfied || !any_met)
                                .map(|(b, f)| Ok((f.expected_profit, (b, f)))),
                        )?;
                        let region = CriticalRegion::new(fit.theta).map_err(|e| e.to_string())?;
                        (
                            format!("bound=[{};{}];theta={}", bound[0], bound[1], fit.theta),
                            reject_option_apply(&test_scores, region),
                        )
                    }
                    ProcessorId::EqualizedOdds => {
                        let eps = self.cfg.postproc.equalized_odds.epsilon;
                        let rule = equalized_odds_fit(&val_scores, cm, eps, seed)
                            .map_err(|e| e.to_string())?;
                        let d = equalized_odds_apply(
                            &rule,
                            &test_scores,
                            derive_seed(seed, &[TAG_COIN]),
                        )
                        .map_err(|e| e.to_string())?;
                        let s = d.into_iter().map(f64::from).collect();
                        (format!("epsilon={eps}"), score_set(s, self.test)?)
                    }
                    ProcessorId::Platt => {
                        let map = platt_fit(&val_scores).map_err(|e| e.to_string())?;
                        (
                            String::new(),
                            platt_apply(&map, &test_scores).map_err(|e| e.to_string())?,
                        )
                    }
                    other => return Err(format!("{other} is not run per learner")),
                };
                let setting = match (setting.as_str(), note.is_empty()) {
                    ("-", true) => "-".to_string(),
                    ("-", false) => note,
                    (s, true) => s.to_string(),
                    (s, false) => format!("{s};{note}"),
                };
                Ok(self.record(p, lid, seed, setting, &scores))
            };
            out.push(cell().map_err(|m| self.error(p, lid, m)));
        }
        Ok(out)
    }

    fn in_cell(&self, p: ProcessorId, seed: u64) -> Outcome {
        let cfg = self.cfg;
        let cm = &cfg.cost;
        let base = LearnerSpec {
            max_iterations: cfg.learners.logistic.max_iterations,
            learning_rate: cfg.learners.logistic.learning_rate,
            ..LearnerSpec::logistic()
        };
        let fit_one = |setting: String,
                       m: Result<TrainedModel, String>|
         -> Result<(f64, (String, TrainedModel)), String> {
            let m = m?;
            Ok((emp(&scores_of(&m, &self.validation)?, cm)?, (setting, m)))
        };
        let chosen = match p {
            ProcessorId::PrejudiceRemover => select(cfg.inproc.prejudice.eta.iter().map(|&eta| {
                let spec = PrejudiceSpec {
                    eta,
                    base: base.clone(),
                };
                fit_one(
                    format!("eta={eta}"),
                    train_prejudice_remover(&self.fold_train, &spec).map_err(|e| e.to_string()),
                )
            })),
            ProcessorId::MetaFair => select(cfg.inproc.metafair.sigma.iter().map(|&sigma| {
                let spec = MetaFairSpec {
                    stages: cfg.inproc.metafair.stages,
                    cutoff: cm.operating_cutoff(),
                    base: base.clone(),
                    ..MetaFairSpec::new(cfg.inproc.metafair.criterion, sigma)
                };
                fit_one(
                    format!("sigma={sigma}"),
                    train_meta_fair(&self.fold_train, &spec)
                        .map(|m| m.model)
                        .map_err(|e| e.to_string()),
                )
            })),
            ProcessorId::Adversarial => select(cfg.inproc.adversarial.alpha.iter().map(|&alpha| {
                let spec = AdversarialSpec {
                    epochs: cfg.inproc.adversarial.epochs,
                    hidden_size: cfg.inproc.adversarial.hidden,
                    seed,
                    ..AdversarialSpec::new(alpha)
                };
                fit_one(
                    format!("alpha={alpha}"),
                    train_adversarial(&self.fold_train, &spec).map_err(|e| e.to_string()),
                )
            })),
            other => Err(format!("{other} is not an in-processor")),
        };
        chosen
            .and_then(|(setting, m)| {
                Ok(self.record(p, SELF_LEARNER, seed, setting, &scores_of(&m, self.test)?))
            })
            .map_err(|m| self.error(p, SELF_LEARNER, m))
    }
}
