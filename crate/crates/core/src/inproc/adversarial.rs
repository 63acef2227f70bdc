use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::InprocError;
use crate::data::Dataset;
use crate::learners::{
    finish, init_network, minibatch_descent, prepare, sigmoid, train_network, LearnerError,
    LearnerKind, LearnerSpec, TrainedModel, BATCH_SIZE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSpec {
    pub alpha: f64,
    pub epochs: usize,
    pub hidden_size: usize,
    pub l2_decay: f64,
    pub learning_rate: f64,
    pub adversary_learning_rate: f64,
    pub seed: u64,
}

impl AdversarialSpec {
    pub const GRID: [f64; 3] = [0.1, 0.01, 0.001];

    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            epochs: 50,
            hidden_size: 16,
            l2_decay: 0.0,
            learning_rate: 0.5,
            adversary_learning_rate: 0.5,
            seed: 0,
        }
    }

    /// The network spec the predictor is trained with.
    pub fn predictor_spec(&self) -> LearnerSpec {
        LearnerSpec {
            max_iterations: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.seed,
            ..LearnerSpec::network(self.hidden_size, self.l2_decay)
        }
    }
}

/// Logistic adversary `q = u₀·ŷ + u₁·y + c` predicting the group.
/// Returns the mean log-loss, its gradient in `(u₀, u₁, c)` and in each `ŷ`.
fn adversary_loss(
    params: &[f64; 3],
    yhat: &[f64],
    y: &[f64],
    a: &[f64],
) -> (f64, [f64; 3], Vec<f64>) {
    let n = yhat.len() as f64;
    let mut loss = 0.0;
    let mut grad = [0.0; 3];
    let mut dyhat = Vec::with_capacity(yhat.len());
    for ((&p, &yy), &aa) in yhat.iter().zip(y).zip(a) {
        let q = params[0] * p + params[1] * yy + params[2];
        let r = sigmoid(q);
        loss += crate::learners::softplus(q) - aa * q;
        let d = (r - aa) / n;
        grad[0] += d * p;
        grad[1] += d * yy;
        grad[2] += d;
        dyhat.push(d * params[0]);
    }
    (loss / n, grad, dyhat)
}

/// Predictor network trained against an adversary that sees its output and
/// the true label. The predictor step is `∇L_P − α∇L_A`.
pub fn train_adversarial(
    ds: &Dataset,
    spec: &AdversarialSpec,
) -> Result<TrainedModel, InprocError> {
    if !(spec.alpha >= 0.0 && spec.alpha.is_finite()) {
        return Err(InprocError::InvalidSpec(format!("alpha {}", spec.alpha)));
    }
    let pspec = spec.predictor_spec();
    let label = format!("adversarial(alpha={})", spec.alpha);
    if spec.alpha == 0.0 {
        let mut m = train_network(ds, &pspec)?;
        m.label = label;
        return Ok(m);
    }
    pspec.validate()?;
    if !ds.has_both_classes() {
        return Err(LearnerError::OneClassOnly.into());
    }
    let (st, data) = prepare(ds, pspec.standardize);
    let arch = pspec.architecture(ds.n_features());
    let mut rng = ChaCha8Rng::seed_from_u64(pspec.seed);
    let theta0 = init_network(&arch, &mut rng);
    let groups: Vec<f64> = ds.sensitive().iter().map(|&a| f64::from(a)).collect();
    let mut adversary = [0.0; 3];
    let (theta, diagnostics) = minibatch_descent(
        arch,
        &data,
        pspec.decay(),
        theta0,
        &pspec,
        &mut rng,
        |rows, batch, theta, grad| {
            let fwd = arch.forward(theta, batch.x.view());
            let yhat: Vec<f64> = fwd.logits.iter().map(|&z| sigmoid(z)).collect();
            let a: Vec<f64> = rows.iter().map(|&i| groups[i]).collect();
            let (_, g_adv, _) = adversary_loss(&adversary, &yhat, &batch.y, &a);
            for (p, g) in adversary.iter_mut().zip(g_adv) {
                *p -= spec.adversary_learning_rate * g;
            }
            let (loss, _, dyhat) = adversary_loss(&adversary, &yhat, &batch.y, &a);
            if !loss.is_finite() {
                return Err(LearnerError::NonFiniteLoss { iteration: 0 });
            }
            let dz: Vec<f64> = dyhat
                .iter()
                .zip(&yhat)
                .map(|(d, p)| d * p * (1.0 - p))
                .collect();
            let mut g_a = vec![0.0; grad.len()];
            arch.backward(theta, batch.x.view(), &fwd, &dz, &mut g_a);
            for (g, ga) in grad.iter_mut().zip(&g_a) {
                *g -= spec.alpha * ga;
            }
            Ok(())
        },
    )?;
    Ok(finish(
        &pspec,
        LearnerKind::Network,
        arch,
        theta,
        st,
        diagnostics,
        &data,
        label,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryFit {
    pub params: [f64; 3],
    /// Mean log-loss on all rows after each epoch.
    pub epoch_losses: Vec<f64>,
    /// Share of rows whose group is predicted correctly at 0.5.
    pub accuracy: f64,
    /// AUC of the adversary's output for the group (0.5 = no information).
    pub auc: f64,
}

/// Trains the adversary alone against fixed predictor scores.
pub fn train_adversary(
    scores: &[f64],
    labels: &[u8],
    sensitive: &[u8],
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> AdversaryFit {
    let y: Vec<f64> = labels.iter().map(|&v| f64::from(v)).collect();
    let a: Vec<f64> = sensitive.iter().map(|&v| f64::from(v)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let mut params = [0.0; 3];
    let mut epoch_losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(BATCH_SIZE) {
            let pick = |v: &[f64]| chunk.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let (_, g, _) = adversary_loss(&params, &pick(scores), &pick(&y), &pick(&a));
            for (p, gi) in params.iter_mut().zip(g) {
                *p -= learning_rate * gi;
            }
        }
        epoch_losses.push(adversary_loss(&params, scores, &y, &a).0);
    }
    let q: Vec<f64> = scores
        .iter()
        .zip(&y)
        .map(|(&p, &yy)| params[0] * p + params[1] * yy + params[2])
        .collect();
    let correct = q
        .iter()
        .zip(&a)
        .filter(|(&qi, &aa)| (qi > 0.0) == (aa == 1.0))
        .count();
    AdversaryFit {
        params,
        epoch_losses,
        accuracy: correct as f64 / scores.len() as f64,
        auc: crate::fairmetrics::auc_of(&q, sensitive).unwrap_or(0.5),
    }
}
