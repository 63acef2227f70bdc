//! Penalty-method trainer for a bound on the ratio of a group fairness
//! measure: `min(FM₀, FM₁) / max(FM₀, FM₁) ≥ σ`.
//!
//! Group measures are smoothed with a sigmoid acceptance
//! `t = 1 / (1 + exp(−(s − τ*) / T))` so the penalty
//! `μ·max(0, σ − ratio)²` has a gradient. Training starts from the plain
//! logistic optimum and runs one warm-started stage per penalty weight.

use serde::{Deserialize, Serialize};

use super::InprocError;
use crate::data::Dataset;
use crate::fairmetrics::Criterion;
use crate::learners::objective::{Decay, Objective, ScorePenalty};
use crate::learners::{
    finish, full_batch_descent, predict, prepare, train_logistic, Architecture, LearnerKind,
    LearnerSpec, TrainedModel,
};
use crate::profit::CostModel;

/// Group statistics the bound applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessBound {
    /// Acceptance rate.
    Independence,
    /// `1 − (FPR + FNR) / 2`.
    Separation,
    /// Positive predictive value.
    Sufficiency,
}

impl From<Criterion> for FairnessBound {
    fn from(c: Criterion) -> Self {
        match c {
            Criterion::Independence => FairnessBound::Independence,
            Criterion::Separation => FairnessBound::Separation,
            Criterion::Sufficiency => FairnessBound::Sufficiency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFairSpec {
    pub criterion: FairnessBound,
    /// Required ratio in [0, 1].
    pub sigma: f64,
    /// Penalty weight of the first stage; each later stage doubles it.
    pub mu: f64,
    pub stages: usize,
    pub temperature: f64,
    /// Cutoff at which acceptance is measured.
    pub cutoff: f64,
    pub base: LearnerSpec,
}

impl MetaFairSpec {
    /// Tuning grid of the slack `1 − σ`.
    pub const SLACK_GRID: [f64; 6] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30];

    pub fn new(criterion: FairnessBound, sigma: f64) -> Self {
        Self {
            criterion,
            sigma,
            mu: 1.0,
            stages: 5,
            temperature: 0.05,
            cutoff: CostModel::<f64>::default().operating_cutoff(),
            base: LearnerSpec::logistic(),
        }
    }

    /// Bound from a slack value of the tuning grid: `σ = 1 − slack`.
    pub fn from_slack(criterion: FairnessBound, slack: f64) -> Self {
        Self::new(criterion, 1.0 - slack)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaFairModel {
    pub model: TrainedModel,
    /// Hard-decision ratio on the training rows.
    pub hard_ratio: f64,
    /// Hard ratio after the plain fit and after each penalty stage.
    pub stage_ratios: Vec<f64>,
    /// Penalty weight of each stage that ran (skipped stages are absent).
    pub stage_weights: Vec<f64>,
}

/// Per-group statistics from acceptance weights `t` (hard: 0/1, soft: sigmoid).
fn group_measures(
    bound: FairnessBound,
    t: &[f64],
    labels: &[u8],
    sensitive: &[u8],
) -> [Option<f64>; 2] {
    let mut out = [None, None];
    for (g, slot) in out.iter_mut().enumerate() {
        let mut acc = [0.0; 2]; // accepted mass per label
        let mut n = [0.0; 2];
        for ((&ti, &y), &a) in t.iter().zip(labels).zip(sensitive) {
            if a as usize == g {
                acc[y as usize] += ti;
                n[y as usize] += 1.0;
            }
        }
        *slot = match bound {
            FairnessBound::Independence => {
                let total = n[0] + n[1];
                (total > 0.0).then(|| (acc[0] + acc[1]) / total)
            }
            FairnessBound::Separation => (n[0] > 0.0 && n[1] > 0.0)
                .then(|| 1.0 - 0.5 * (acc[0] / n[0] + (n[1] - acc[1]) / n[1])),
            FairnessBound::Sufficiency => {
                let accepted = acc[0] + acc[1];
                (accepted > 0.0).then(|| acc[1] / accepted)
            }
        };
    }
    out
}

fn ratio_of(fm: [f64; 2]) -> f64 {
    let (lo, hi) = (fm[0].min(fm[1]), fm[0].max(fm[1]));
    if hi <= 0.0 {
        1.0
    } else {
        lo / hi
    }
}

/// Ratio of the hard group measures at `cutoff`. Groups without a defined
/// measure count as 0; two zero measures count as equal.
pub fn hard_ratio(
    bound: FairnessBound,
    scores: &[f64],
    labels: &[u8],
    sensitive: &[u8],
    cutoff: f64,
) -> f64 {
    let t: Vec<f64> = scores
        .iter()
        .map(|&s| f64::from(u8::from(s > cutoff)))
        .collect();
    let fm = group_measures(bound, &t, labels, sensitive);
    ratio_of([fm[0].unwrap_or(0.0), fm[1].unwrap_or(0.0)])
}

struct RatioPenalty<'a> {
    bound: FairnessBound,
    sigma: f64,
    mu: f64,
    temperature: f64,
    cutoff: f64,
    labels: &'a [u8],
    sensitive: &'a [u8],
}

impl RatioPenalty<'_> {
    fn soft(&self, scores: &[f64]) -> Vec<f64> {
        scores
            .iter()
            .map(|&s| crate::learners::sigmoid((s - self.cutoff) / self.temperature))
            .collect()
    }
}

impl ScorePenalty for RatioPenalty<'_> {
    fn evaluate(&self, scores: &[f64]) -> (f64, Vec<f64>) {
        let t = self.soft(scores);
        let mut grad = vec![0.0; scores.len()];
        let fm = group_measures(self.bound, &t, self.labels, self.sensitive);
        let (Some(f0), Some(f1)) = (fm[0], fm[1]) else {
            return (0.0, grad);
        };
        let hi = f0.max(f1);
        if hi <= 1e-12 {
            return (0.0, grad);
        }
        let ratio = f0.min(f1) / hi;
        let gap = self.sigma - ratio;
        if gap <= 0.0 {
            return (0.0, grad);
        }
        // d ratio / d FM_g
        let d_fm = if f0 <= f1 {
            [1.0 / f1, -f0 / (f1 * f1)]
        } else {
            [-f1 / (f0 * f0), 1.0 / f0]
        };
        let outer = -2.0 * self.mu * gap;
        // per-group counts for d FM / d t
        let mut n = [[0.0; 2]; 2];
        let mut acc = [[0.0; 2]; 2];
        for ((&ti, &y), &a) in t.iter().zip(self.labels).zip(self.sensitive) {
            n[a as usize][y as usize] += 1.0;
            acc[a as usize][y as usize] += ti;
        }
        for (i, ((&ti, &y), &a)) in t.iter().zip(self.labels).zip(self.sensitive).enumerate() {
            let (g, y) = (a as usize, y as usize);
            let dfm_dt = match self.bound {
                FairnessBound::Independence => 1.0 / (n[g][0] + n[g][1]),
                FairnessBound::Separation => {
                    if y == 0 {
                        -0.5 / n[g][0]
                    } else {
                        0.5 / n[g][1]
                    }
                }
                FairnessBound::Sufficiency => {
                    let accepted = acc[g][0] + acc[g][1];
                    (if y == 1 { 1.0 } else { 0.0 } - acc[g][1] / accepted) / accepted
                }
            };
            let dt_ds = ti * (1.0 - ti) / self.temperature;
            grad[i] = outer * d_fm[g] * dfm_dt * dt_ds;
        }
        (self.mu * gap * gap, grad)
    }
}

fn check_measurable(bound: FairnessBound, ds: &Dataset) -> Result<(), InprocError> {
    let mut n = [[0usize; 2]; 2];
    for (&y, &a) in ds.labels().iter().zip(ds.sensitive()) {
        n[a as usize][y as usize] += 1;
    }
    for g in 0..2 {
        if n[g][0] + n[g][1] == 0 {
            return Err(InprocError::DegenerateFM(format!("group {g} is empty")));
        }
        if bound == FairnessBound::Separation && (n[g][0] == 0 || n[g][1] == 0) {
            return Err(InprocError::DegenerateFM(format!(
                "group {g} lacks one of the classes"
            )));
        }
    }
    Ok(())
}

/// Logistic regression under a soft bound on the group-measure ratio.
///
/// A stage is kept only if it does not lower the hard ratio on the training
/// rows, so the reported ratios never decrease across stages.
pub fn train_meta_fair(ds: &Dataset, spec: &MetaFairSpec) -> Result<MetaFairModel, InprocError> {
    if !(0.0..=1.0).contains(&spec.sigma) {
        return Err(InprocError::InvalidSpec(format!(
            "sigma {} outside [0, 1]",
            spec.sigma
        )));
    }
    if !(spec.temperature > 0.0) || !(spec.mu > 0.0) {
        return Err(InprocError::InvalidSpec(
            "temperature and mu must be positive".into(),
        ));
    }
    if spec.base.kind != LearnerKind::Logistic {
        return Err(InprocError::InvalidSpec(
            "meta-fair trains a logistic model".into(),
        ));
    }
    check_measurable(spec.criterion, ds)?;
    let label = format!("meta_fair({:?}, sigma={})", spec.criterion, spec.sigma).to_lowercase();
    let mut model = train_logistic(ds, &spec.base)?;
    model.label = label.clone();
    let ratio_on_train = |m: &TrainedModel| -> Result<f64, InprocError> {
        let s = predict(m, ds.features().view())?;
        Ok(hard_ratio(
            spec.criterion,
            &s,
            ds.labels(),
            ds.sensitive(),
            spec.cutoff,
        ))
    };
    let mut current = ratio_on_train(&model)?;
    let mut stage_ratios = vec![current];
    let mut stage_weights = Vec::new();
    if spec.sigma == 0.0 {
        return Ok(MetaFairModel {
            model,
            hard_ratio: current,
            stage_ratios,
            stage_weights,
        });
    }

    let (st, data) = prepare(ds, spec.base.standardize);
    let arch = Architecture::Logistic {
        inputs: ds.n_features(),
    };
    let mut mu = spec.mu;
    for _ in 0..spec.stages {
        let penalty = RatioPenalty {
            bound: spec.criterion,
            sigma: spec.sigma,
            mu,
            temperature: spec.temperature,
            cutoff: spec.cutoff,
            labels: ds.labels(),
            sensitive: ds.sensitive(),
        };
        let obj = Objective::new(arch, &data, Decay::Half(spec.base.l2_decay)).with_extra(&penalty);
        let scores = crate::learners::objective::scores(&arch, &model.parameters, data.x.view());
        if penalty.evaluate(&scores).0 > 0.0 {
            let (theta, diagnostics) = full_batch_descent(
                &obj,
                model.parameters.clone(),
                spec.base.learning_rate,
                spec.base.max_iterations,
            )?;
            let candidate = finish(
                &spec.base,
                LearnerKind::Logistic,
                arch,
                theta,
                st.clone(),
                diagnostics,
                &data,
                label.clone(),
            );
            let r = ratio_on_train(&candidate)?;
            stage_weights.push(mu);
            if r >= current {
                model = candidate;
                current = r;
            }
        }
        stage_ratios.push(current);
        mu *= 2.0;
    }
    Ok(MetaFairModel {
        model,
        hard_ratio: current,
        stage_ratios,
        stage_weights,
    })
}

/// The smoothed penalty as a training term, for gradient checks.
pub fn ratio_penalty<'a>(
    spec: &MetaFairSpec,
    mu: f64,
    labels: &'a [u8],
    sensitive: &'a [u8],
) -> impl ScorePenalty + 'a {
    RatioPenalty {
        bound: spec.criterion,
        sigma: spec.sigma,
        mu,
        temperature: spec.temperature,
        cutoff: spec.cutoff,
        labels,
        sensitive,
    }
}
