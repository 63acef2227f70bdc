//! Training objectives shared by the learners and the in-processors.
//!
//! All objectives are normalized by the total instance weight:
//! `[Σ vᵢ ℓ(zᵢ, yᵢ) + penalty(θ)] / Σ vᵢ`, plus an optional term that
//! depends on the predicted scores only.

use ndarray::{Array2, ArrayView2};

use super::model::{sigmoid, softplus, Architecture};

/// Standardized design matrix with labels and instance weights.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl TrainingData {
    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    /// Rows `idx` as a new block (used for mini-batches).
    pub fn rows(&self, idx: &[usize]) -> TrainingData {
        TrainingData {
            x: self.x.select(ndarray::Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            w: idx.iter().map(|&i| self.w[i]).collect(),
        }
    }
}

/// A term of the objective that depends on the scores `s = σ(z)` alone.
pub trait ScorePenalty: Sync {
    /// Value and gradient with respect to each row's score.
    fn evaluate(&self, scores: &[f64]) -> (f64, Vec<f64>);
}

/// How the parameter penalty is weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay {
    /// `(λ/2)‖w‖²`
    Half(f64),
    /// `λ‖w‖²`
    Full(f64),
}

impl Decay {
    fn coefficient(self) -> f64 {
        match self {
            Decay::Half(l) => 0.5 * l,
            Decay::Full(l) => l,
        }
    }
}

pub struct Objective<'a> {
    pub arch: Architecture,
    pub data: &'a TrainingData,
    pub decay: Decay,
    /// Scale applied to the parameter penalty before normalization; the
    /// mini-batch trainer uses it to spread one penalty over an epoch.
    pub penalty_share: f64,
    /// Divisor of the loss; defaults to the block's total weight.
    pub normalizer: f64,
    pub extra: Option<&'a dyn ScorePenalty>,
}

impl<'a> Objective<'a> {
    pub fn new(arch: Architecture, data: &'a TrainingData, decay: Decay) -> Self {
        Self {
            arch,
            data,
            decay,
            penalty_share: 1.0,
            normalizer: data.total_weight(),
            extra: None,
        }
    }

    pub fn with_extra(mut self, extra: &'a dyn ScorePenalty) -> Self {
        self.extra = Some(extra);
        self
    }

    /// Curvature of the parameter penalty per decayed coordinate, after
    /// normalization, together with the mask of decayed coordinates.
    pub fn penalty_curvature(&self) -> (f64, Vec<bool>) {
        (
            2.0 * self.decay.coefficient() * self.penalty_share / self.normalizer,
            self.arch.decayed(),
        )
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.evaluate(theta, false).0
    }

    pub fn value_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        self.evaluate(theta, true)
    }

    fn evaluate(&self, theta: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let d = self.data;
        let fwd = self.arch.forward(theta, d.x.view());
        let norm = self.normalizer;
        let coef = self.decay.coefficient() * self.penalty_share;
        let mask = self.arch.decayed();

        let mut loss = 0.0;
        for ((&z, &y), &w) in fwd.logits.iter().zip(&d.y).zip(&d.w) {
            loss += w * (softplus(z) - y * z);
        }
        let sq: f64 = theta
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(t, _)| t * t)
            .sum();
        loss = (loss + coef * sq) / norm;

        let scores: Vec<f64> = fwd.logits.iter().map(|&z| sigmoid(z)).collect();
        let extra = self.extra.map(|p| p.evaluate(&scores));
        if let Some((v, _)) = &extra {
            loss += v;
        }
        if !want_grad {
            return (loss, Vec::new());
        }

        let mut dz: Vec<f64> = scores
            .iter()
            .zip(&d.y)
            .zip(&d.w)
            .map(|((s, y), w)| w * (s - y) / norm)
            .collect();
        if let Some((_, ds)) = &extra {
            for ((g, s), e) in dz.iter_mut().zip(&scores).zip(ds) {
                *g += e * s * (1.0 - s);
            }
        }
        let mut grad = vec![0.0; theta.len()];
        self.arch.backward(theta, d.x.view(), &fwd, &dz, &mut grad);
        for ((g, t), &m) in grad.iter_mut().zip(theta).zip(&mask) {
            if m {
                *g += 2.0 * coef * t / norm;
            }
        }
        (loss, grad)
    }
}

/// Weighted mean log-loss of scores against labels, without penalties.
pub fn log_loss(scores: &[f64], labels: &[f64], weights: &[f64]) -> f64 {
    let eps = 1e-15;
    let (mut total, mut wsum) = (0.0, 0.0);
    for ((&s, &y), &w) in scores.iter().zip(labels).zip(weights) {
        let s = s.clamp(eps, 1.0 - eps);
        total -= w * (y * s.ln() + (1.0 - y) * (1.0 - s).ln());
        wsum += w;
    }
    total / wsum
}

/// Scores for standardized rows.
pub fn scores(arch: &Architecture, theta: &[f64], x: ArrayView2<f64>) -> Vec<f64> {
    arch.forward(theta, x)
        .logits
        .into_iter()
        .map(sigmoid)
        .collect()
}

/// Central finite-difference gradient, for checking analytic gradients.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], step: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = t[i];
            t[i] = orig + step;
            let up = f(&t);
            t[i] = orig - step;
            let down = f(&t);
            t[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}
