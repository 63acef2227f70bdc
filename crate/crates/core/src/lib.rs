//! Fairness-aware credit scoring.
//!
//! Scorecards (logistic regression and a small feed-forward network),
//! eight fairness processors across the pre-, in- and post-processing
//! stages, and evaluation on profit and three group fairness criteria:
//! independence, separation and sufficiency.

pub mod bench;
pub mod data;
pub mod fairmetrics;
pub mod inproc;
pub mod learners;
pub mod postproc;
pub mod preproc;
pub mod profit;
mod scalar;

pub use scalar::Scalar;

/// Scalar used by the learners, processors and the experiment harness.
pub type Real = f64;
pub type ScoreSet = fairmetrics::ScoreSet<Real>;
pub type CostModel = profit::CostModel<Real>;
