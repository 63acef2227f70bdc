//! Base classifiers trained from scratch: weighted logistic regression and a
//! one-hidden-layer network.

mod io;
pub mod model;
pub mod objective;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
pub use io::{load_model, read_model, save_model, write_model};
pub use model::{sigmoid, softplus, Architecture, Standardizer};
use objective::{Decay, Objective, TrainingData};

pub const DEFAULT_MAX_ITERATIONS: usize = 1000;
pub const BATCH_SIZE: usize = 128;
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("training data contains a single class")]
    OneClassOnly,
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("expected {expected} feature columns, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid learner setting: {0}")]
    InvalidSpec(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Logistic,
    Network,
}

impl LearnerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LearnerKind::Logistic => "logistic",
            LearnerKind::Network => "network",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub l2_decay: f64,
    /// Network only.
    pub hidden_size: usize,
    /// Gradient steps for the logistic model, epochs for the network.
    pub max_iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub standardize: bool,
}

impl LearnerSpec {
    pub fn logistic() -> Self {
        Self {
            kind: LearnerKind::Logistic,
            l2_decay: 0.0,
            hidden_size: 0,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            learning_rate: 1.0,
            seed: 0,
            standardize: true,
        }
    }

    pub fn network(hidden_size: usize, decay: f64) -> Self {
        Self {
            kind: LearnerKind::Network,
            l2_decay: decay,
            hidden_size,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            learning_rate: 0.5,
            seed: 0,
            standardize: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        if !(self.l2_decay >= 0.0 && self.l2_decay.is_finite()) {
            return Err(LearnerError::InvalidSpec(format!(
                "l2_decay {}",
                self.l2_decay
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LearnerError::InvalidSpec(format!(
                "learning_rate {}",
                self.learning_rate
            )));
        }
        if self.kind == LearnerKind::Network && self.hidden_size == 0 {
            return Err(LearnerError::InvalidSpec(
                "hidden_size must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn architecture(&self, inputs: usize) -> Architecture {
        match self.kind {
            LearnerKind::Logistic => Architecture::Logistic { inputs },
            LearnerKind::Network => Architecture::Network {
                inputs,
                hidden: self.hidden_size,
            },
        }
    }

    pub fn decay(&self) -> Decay {
        match self.kind {
            LearnerKind::Logistic => Decay::Half(self.l2_decay),
            LearnerKind::Network => Decay::Full(self.l2_decay),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Penalized training objective at the returned parameters.
    pub final_loss: f64,
    /// Weighted log-loss on the training rows, without penalties.
    pub data_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each iteration (logistic) or epoch (network).
    #[serde(skip)]
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: LearnerKind,
    pub architecture: Architecture,
    pub parameters: Vec<f64>,
    pub standardizer: Standardizer,
    pub diagnostics: Diagnostics,
    pub seed: u64,
    /// Short description of how the model was fitted.
    pub label: String,
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        self.architecture.inputs()
    }
}

/// Standardizes the design matrix and collects labels and weights.
pub fn prepare(ds: &Dataset, standardize: bool) -> (Standardizer, TrainingData) {
    let x = ds.features().view();
    let st = if standardize {
        Standardizer::fit(x)
    } else {
        Standardizer::identity(ds.n_features())
    };
    let data = TrainingData {
        x: st.transform(x),
        y: ds.labels().iter().map(|&y| f64::from(y)).collect(),
        w: ds.weights().to_vec(),
    };
    (st, data)
}

fn check_classes(ds: &Dataset) -> Result<(), LearnerError> {
    if ds.has_both_classes() {
        Ok(())
    } else {
        Err(LearnerError::OneClassOnly)
    }
}

pub fn train(ds: &Dataset, spec: &LearnerSpec) -> Result<TrainedModel, LearnerError> {
    match spec.kind {
        LearnerKind::Logistic => train_logistic(ds, spec),
        LearnerKind::Network => train_network(ds, spec),
    }
}

pub fn train_logistic(ds: &Dataset, spec: &LearnerSpec) -> Result<TrainedModel, LearnerError> {
    train_logistic_with(ds, spec, None, "logistic".into())
}

/// Logistic training with an optional score-dependent term in the objective.
pub fn train_logistic_with(
    ds: &Dataset,
    spec: &LearnerSpec,
    extra: Option<&dyn objective::ScorePenalty>,
    label: String,
) -> Result<TrainedModel, LearnerError> {
    spec.validate()?;
    check_classes(ds)?;
    let (st, data) = prepare(ds, spec.standardize);
    let arch = Architecture::Logistic {
        inputs: ds.n_features(),
    };
    let mut obj = Objective::new(arch, &data, Decay::Half(spec.l2_decay));
    if let Some(e) = extra {
        obj = obj.with_extra(e);
    }
    let theta0 = vec![0.0; arch.n_params()];
    let (theta, diagnostics) =
        full_batch_descent(&obj, theta0, spec.learning_rate, spec.max_iterations)?;
    Ok(finish(
        spec,
        LearnerKind::Logistic,
        arch,
        theta,
        st,
        diagnostics,
        &data,
        label,
    ))
}

/// Gradient descent with a fixed step that is halved whenever a step would
/// increase the objective. Stops when `‖∇‖∞ < 1e-6`.
///
/// The quadratic weight penalty is applied as an exact shrinkage after the
/// loss step, so heavy decay does not force tiny steps.
pub fn full_batch_descent(
    obj: &Objective<'_>,
    mut theta: Vec<f64>,
    learning_rate: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, Diagnostics), LearnerError> {
    let (mut loss, mut grad) = obj.value_and_grad(&theta);
    if !loss.is_finite() {
        return Err(LearnerError::NonFiniteLoss { iteration: 0 });
    }
    let mut step = learning_rate;
    let mut history = vec![loss];
    let mut converged = false;
    let mut iterations = 0;
    let (curv, mask) = obj.penalty_curvature();
    while iterations < max_iterations {
        if grad.iter().all(|g| g.abs() < GRADIENT_TOLERANCE) {
            converged = true;
            break;
        }
        iterations += 1;
        loop {
            let candidate: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .zip(&mask)
                .map(|((&t, &g), &m)| {
                    if m {
                        (t - step * (g - curv * t)) / (1.0 + step * curv)
                    } else {
                        t - step * g
                    }
                })
                .collect();
            let (l, g) = obj.value_and_grad(&candidate);
            if l.is_finite() && l <= loss {
                theta = candidate;
                loss = l;
                grad = g;
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                // No descent possible at machine precision.
                converged = true;
                break;
            }
        }
        history.push(loss);
        if converged {
            break;
        }
    }
    if !converged && grad.iter().all(|g| g.abs() < GRADIENT_TOLERANCE) {
        converged = true;
    }
    Ok((
        theta,
        Diagnostics {
            final_loss: loss,
            data_loss: 0.0,
            iterations,
            converged,
            loss_history: history,
        },
    ))
}

pub fn train_network(ds: &Dataset, spec: &LearnerSpec) -> Result<TrainedModel, LearnerError> {
    spec.validate()?;
    if spec.kind != LearnerKind::Network {
        return Err(LearnerError::InvalidSpec(
            "train_network needs a network spec".into(),
        ));
    }
    check_classes(ds)?;
    let (st, data) = prepare(ds, spec.standardize);
    let arch = spec.architecture(ds.n_features());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let theta0 = init_network(&arch, &mut rng);
    let (theta, diagnostics) = minibatch_descent(
        arch,
        &data,
        spec.decay(),
        theta0,
        spec,
        &mut rng,
        |_, _, _, _| Ok(()),
    )?;
    Ok(finish(
        spec,
        LearnerKind::Network,
        arch,
        theta,
        st,
        diagnostics,
        &data,
        "network".into(),
    ))
}

/// Uniform `±1/√fan_in` draws for every weight and bias.
pub fn init_network(arch: &Architecture, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let Architecture::Network { inputs, hidden } = *arch else {
        return vec![0.0; arch.n_params()];
    };
    let r1 = 1.0 / (inputs.max(1) as f64).sqrt();
    let r2 = 1.0 / (hidden as f64).sqrt();
    let mut theta = Vec::with_capacity(arch.n_params());
    for _ in 0..hidden * inputs + hidden {
        theta.push(rng.random_range(-r1..=r1));
    }
    for _ in 0..hidden + 1 {
        theta.push(rng.random_range(-r2..=r2));
    }
    theta
}

/// Epoch-wise mini-batch descent. `adjust` sees each batch (row ids and rows), the current
/// parameters and the batch gradient, and may change the gradient before the
/// step is taken (used by adversarial training).
pub fn minibatch_descent(
    arch: Architecture,
    data: &TrainingData,
    decay: Decay,
    mut theta: Vec<f64>,
    spec: &LearnerSpec,
    rng: &mut ChaCha8Rng,
    mut adjust: impl FnMut(&[usize], &TrainingData, &[f64], &mut Vec<f64>) -> Result<(), LearnerError>,
) -> Result<(Vec<f64>, Diagnostics), LearnerError> {
    let total = data.total_weight();
    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    let mut history = Vec::with_capacity(spec.max_iterations);
    for epoch in 0..spec.max_iterations {
        order.shuffle(rng);
        for chunk in order.chunks(BATCH_SIZE) {
            let batch = data.rows(chunk);
            let mut obj = Objective::new(arch, &batch, decay);
            obj.penalty_share = batch.total_weight() / total;
            let (loss, mut grad) = obj.value_and_grad(&theta);
            if !loss.is_finite() {
                return Err(LearnerError::NonFiniteLoss { iteration: epoch });
            }
            adjust(chunk, &batch, &theta, &mut grad)?;
            for (t, g) in theta.iter_mut().zip(&grad) {
                *t -= spec.learning_rate * g;
            }
        }
        let loss = Objective::new(arch, data, decay).value(&theta);
        if !loss.is_finite() {
            return Err(LearnerError::NonFiniteLoss { iteration: epoch });
        }
        history.push(loss);
    }
    let final_loss = Objective::new(arch, data, decay).value(&theta);
    Ok((
        theta,
        Diagnostics {
            final_loss,
            data_loss: 0.0,
            iterations: spec.max_iterations,
            converged: false,
            loss_history: history,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
pub fn finish(
    spec: &LearnerSpec,
    kind: LearnerKind,
    arch: Architecture,
    theta: Vec<f64>,
    standardizer: Standardizer,
    mut diagnostics: Diagnostics,
    data: &TrainingData,
    label: String,
) -> TrainedModel {
    let s = objective::scores(&arch, &theta, data.x.view());
    diagnostics.data_loss = objective::log_loss(&s, &data.y, &data.w);
    TrainedModel {
        kind,
        architecture: arch,
        parameters: theta,
        standardizer,
        diagnostics,
        seed: spec.seed,
        label,
    }
}

/// Scores in (0, 1) for raw (unstandardized) feature rows.
pub fn predict(m: &TrainedModel, features: ArrayView2<f64>) -> Result<Vec<f64>, LearnerError> {
    if features.ncols() != m.n_features() {
        return Err(LearnerError::DimensionMismatch {
            expected: m.n_features(),
            found: features.ncols(),
        });
    }
    let x: Array2<f64> = m.standardizer.transform(features);
    let lo = f64::EPSILON;
    Ok(objective::scores(&m.architecture, &m.parameters, x.view())
        .into_iter()
        .map(|s| s.clamp(lo, 1.0 - lo))
        .collect())
}
