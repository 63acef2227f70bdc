use serde::{Deserialize, Serialize};

use super::{logit, xlogx_over, InprocError};
use crate::data::Dataset;
use crate::learners::objective::ScorePenalty;
use crate::learners::{train_logistic_with, LearnerKind, LearnerSpec, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrejudiceSpec {
    pub eta: f64,
    pub base: LearnerSpec,
}

impl PrejudiceSpec {
    pub const GRID: [f64; 8] = [1.0, 5.0, 15.0, 30.0, 50.0, 70.0, 100.0, 150.0];

    pub fn new(eta: f64) -> Self {
        Self {
            eta,
            base: LearnerSpec::logistic(),
        }
    }
}

/// Mutual information between group and decision, in nats, from per-group
/// acceptance masses `m_a` (mean score or acceptance rate) and group sizes.
fn mutual_information(m: [f64; 2], n: [f64; 2]) -> f64 {
    let total = n[0] + n[1];
    let p = (n[0] * m[0] + n[1] * m[1]) / total;
    (0..2)
        .map(|a| {
            let pa = n[a] / total;
            pa * (xlogx_over(m[a], p) + xlogx_over(1.0 - m[a], 1.0 - p))
        })
        .sum()
}

fn group_sums(values: &[f64], sensitive: &[u8]) -> Result<([f64; 2], [f64; 2]), InprocError> {
    let mut sum = [0.0; 2];
    let mut n = [0.0; 2];
    for (&v, &a) in values.iter().zip(sensitive) {
        sum[a as usize] += v;
        n[a as usize] += 1.0;
    }
    for g in 0..2u8 {
        if n[g as usize] == 0.0 {
            return Err(InprocError::EmptyGroup(g));
        }
    }
    Ok(([sum[0] / n[0], sum[1] / n[1]], n))
}

/// Prejudice index on model scores: `P(ŷ=1, a) = P(a)·mean score in a`.
pub fn prejudice_index(scores: &[f64], sensitive: &[u8]) -> Result<f64, InprocError> {
    let (m, n) = group_sums(scores, sensitive)?;
    Ok(mutual_information(m, n))
}

/// Prejudice index on hard decisions `score > tau`.
pub fn prejudice_index_hard(
    scores: &[f64],
    sensitive: &[u8],
    tau: f64,
) -> Result<f64, InprocError> {
    let hard: Vec<f64> = scores
        .iter()
        .map(|&s| f64::from(u8::from(s > tau)))
        .collect();
    prejudice_index(&hard, sensitive)
}

/// `η·PI` as a training term.
pub struct PiPenalty {
    pub eta: f64,
    pub sensitive: Vec<u8>,
}

impl ScorePenalty for PiPenalty {
    fn evaluate(&self, scores: &[f64]) -> (f64, Vec<f64>) {
        let (m, n) = group_sums(scores, &self.sensitive).expect("both groups present");
        let total = n[0] + n[1];
        let p = (n[0] * m[0] + n[1] * m[1]) / total;
        let value = self.eta * mutual_information(m, n);
        let slope = [
            self.eta * (logit(m[0]) - logit(p)) / total,
            self.eta * (logit(m[1]) - logit(p)) / total,
        ];
        (
            value,
            self.sensitive.iter().map(|&a| slope[a as usize]).collect(),
        )
    }
}

/// Logistic regression with the prejudice index added to the objective.
pub fn train_prejudice_remover(
    ds: &Dataset,
    spec: &PrejudiceSpec,
) -> Result<TrainedModel, InprocError> {
    if !(spec.eta >= 0.0 && spec.eta.is_finite()) {
        return Err(InprocError::InvalidSpec(format!("eta {}", spec.eta)));
    }
    if spec.base.kind != LearnerKind::Logistic {
        return Err(InprocError::InvalidSpec(
            "prejudice remover trains a logistic model".into(),
        ));
    }
    group_sums(&vec![0.0; ds.n_rows()], ds.sensitive())?;
    let label = format!("prejudice_remover(eta={})", spec.eta);
    if spec.eta == 0.0 {
        return Ok(train_logistic_with(ds, &spec.base, None, label)?);
    }
    let penalty = PiPenalty {
        eta: spec.eta,
        sensitive: ds.sensitive().to_vec(),
    };
    Ok(train_logistic_with(ds, &spec.base, Some(&penalty), label)?)
}
