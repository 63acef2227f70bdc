//! In-processors: fairness enters the training objective.

mod adversarial;
mod metafair;
mod prejudice;

use thiserror::Error;

use crate::learners::LearnerError;
pub use adversarial::{train_adversarial, train_adversary, AdversarialSpec, AdversaryFit};
pub use metafair::{
    hard_ratio, ratio_penalty, train_meta_fair, FairnessBound, MetaFairModel, MetaFairSpec,
};
pub use prejudice::{
    prejudice_index, prejudice_index_hard, train_prejudice_remover, PiPenalty, PrejudiceSpec,
};

#[derive(Debug, Error)]
pub enum InprocError {
    #[error("group {0} is empty")]
    EmptyGroup(u8),
    #[error("degenerate fairness measure: {0}")]
    DegenerateFM(String),
    #[error("invalid setting: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

/// `x ln(x / y)` with the convention `0 ln 0 = 0`.
fn xlogx_over(x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}
