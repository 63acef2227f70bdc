//! Post-processors acting on validation scores of a trained model.
//!
//! Decisions made by a post-processor are returned as scores of 0 or 1 so
//! every downstream metric sees one consistent input.

mod eqodds;
mod platt;
mod reject;

use thiserror::Error;

use crate::fairmetrics::MetricError;
use crate::profit::ProfitError;
pub use eqodds::{
    equalized_odds_apply, equalized_odds_fit, expected_group_rates, read_rule, write_rule,
    GroupDecisionRule, GroupRule, EQODDS_EPSILON,
};
pub use platt::{platt_apply, platt_fit, CalibrationMap};
pub use reject::{
    reject_option_apply, reject_option_tune, theta_grid, CriticalRegion, RejectOptionFit,
};

#[derive(Debug, Error)]
pub enum PostprocError {
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("group {group} has no instances with label {label}")]
    EmptyGroupClass { group: u8, label: u8 },
    #[error("group {0} is not covered by the fitted rule")]
    UnknownGroup(u8),
    #[error("no operating point is reachable by both groups")]
    InfeasibleTarget,
    #[error("critical region needs 0.5 < theta < 1, got {0}")]
    InvalidTheta(f64),
    #[error("invalid setting: {0}")]
    InvalidSpec(String),
    #[error("rule file: {0}")]
    Format(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Profit(#[from] ProfitError),
}

/// Label counts per group, `[group][label]`.
fn class_counts(labels: &[u8], sensitive: &[u8]) -> [[usize; 2]; 2] {
    let mut n = [[0usize; 2]; 2];
    for (&y, &a) in labels.iter().zip(sensitive) {
        n[a as usize][y as usize] += 1;
    }
    n
}

fn require_group_classes(
    labels: &[u8],
    sensitive: &[u8],
) -> Result<[[usize; 2]; 2], PostprocError> {
    let n = class_counts(labels, sensitive);
    for g in 0..2 {
        for y in 0..2 {
            if n[g][y] == 0 {
                return Err(PostprocError::EmptyGroupClass {
                    group: g as u8,
                    label: y as u8,
                });
            }
        }
    }
    Ok(n)
}
