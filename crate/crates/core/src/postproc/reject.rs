use serde::{Deserialize, Serialize};

use super::PostprocError;
use crate::fairmetrics::{Criterion, ScoreSet};
use crate::profit::{expected_profit, CostModel};

/// Score band `[1 − θ, θ]` of uncertain decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRegion {
    pub theta: f64,
}

impl CriticalRegion {
    pub fn new(theta: f64) -> Result<Self, PostprocError> {
        if theta > 0.5 && theta < 1.0 {
            Ok(Self { theta })
        } else {
            Err(PostprocError::InvalidTheta(theta))
        }
    }

    pub fn contains(&self, score: f64) -> bool {
        score.max(1.0 - score) <= self.theta
    }
}

/// Inside the critical region the unprivileged group is accepted (score 1)
/// and the privileged group rejected (score 0). Other scores are unchanged.
pub fn reject_option_apply(s: &ScoreSet<f64>, region: CriticalRegion) -> ScoreSet<f64> {
    let scores = s
        .scores()
        .iter()
        .zip(s.sensitive())
        .map(|(&v, &a)| {
            if region.contains(v) {
                if a == 1 {
                    1.0
                } else {
                    0.0
                }
            } else {
                v
            }
        })
        .collect();
    s.with_scores(scores).expect("scores stay in [0, 1]")
}

/// `n` equally spaced values strictly inside (0.5, 1).
pub fn theta_grid(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 + 0.5 * i as f64 / (n + 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectOptionFit {
    pub theta: f64,
    /// Signed criterion statistic after adjustment at the operating cutoff.
    pub statistic: f64,
    pub expected_profit: f64,
    /// False when no θ met the bound and the closest one was taken.
    pub satisfied: bool,
}

/// Picks θ from the grid: the most profitable θ whose adjusted signed
/// statistic lies in `[lower, upper]`, else the θ whose statistic is nearest
/// the bound. Ties go to the smaller θ.
pub fn reject_option_tune(
    validation: &ScoreSet<f64>,
    bound: (f64, f64),
    criterion: Criterion,
    cm: &CostModel<f64>,
    n_thetas: usize,
) -> Result<RejectOptionFit, PostprocError> {
    if validation.is_empty() {
        return Err(PostprocError::EmptyValidation);
    }
    if !(bound.0 <= bound.1) || n_thetas == 0 {
        return Err(PostprocError::InvalidSpec(format!(
            "bound [{}, {}] with {n_thetas} thresholds",
            bound.0, bound.1
        )));
    }
    let tau = cm.operating_cutoff();
    let mut best: Option<RejectOptionFit> = None;
    let mut nearest: Option<(f64, RejectOptionFit)> = None;
    for theta in theta_grid(n_thetas) {
        let adjusted = reject_option_apply(validation, CriticalRegion { theta });
        // an undefined statistic (e.g. a group with no acceptances) cannot
        // satisfy the bound
        let Ok(stat) = criterion.signed(&adjusted, tau) else {
            continue;
        };
        let profit = expected_profit(&adjusted, cm)?.value;
        let fit = RejectOptionFit {
            theta,
            statistic: stat,
            expected_profit: profit,
            satisfied: true,
        };
        if stat >= bound.0 && stat <= bound.1 {
            if best.as_ref().is_none_or(|b| profit > b.expected_profit) {
                best = Some(fit);
            }
        } else {
            let distance = (bound.0 - stat).max(stat - bound.1);
            if nearest.as_ref().is_none_or(|(d, _)| distance < *d) {
                nearest = Some((distance, fit));
            }
        }
    }
    match (best, nearest) {
        (Some(fit), _) => Ok(fit),
        (None, Some((_, mut fit))) => {
            fit.satisfied = false;
            Ok(fit)
        }
        (None, None) => Err(PostprocError::InvalidSpec(format!(
            "{} is undefined for every θ on this validation set",
            criterion.as_str()
        ))),
    }
}
