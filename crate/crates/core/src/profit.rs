//! Profit model for scorecards.
//!
//! Accepting a good risk earns `C` (the return on investment), rejecting one
//! forgoes `C`, and accepting a bad risk loses the fraction `B` of the
//! principal. `B` is 0 with probability `p0`, 1 with probability `p1` and
//! uniform on (0, 1) otherwise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fairmetrics::{MetricError, ScoreSet};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfitError {
    #[error("invalid cost model: {0}")]
    InvalidCostModel(String),
    #[error("loss fraction b must lie in [0, 1]")]
    InvalidLoss,
    #[error("labels contain only one class")]
    OneClassOnly,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel<T> {
    /// Return on investment `C`.
    pub roi: T,
    /// Probability of no loss on a default.
    pub p0: T,
    /// Probability of a full loss on a default.
    pub p1: T,
    /// Trapezoid nodes over the uniform part of `B`.
    pub quadrature_points: usize,
}

impl<T: Scalar> Default for CostModel<T> {
    fn default() -> Self {
        Self {
            roi: T::of(0.2664),
            p0: T::of(0.55),
            p1: T::of(0.10),
            quadrature_points: 1001,
        }
    }
}

impl<T: Scalar> CostModel<T> {
    pub fn validate(&self) -> Result<(), ProfitError> {
        let invalid = |m: &str| Err(ProfitError::InvalidCostModel(m.into()));
        if !(self.roi.is_finite() && self.roi > T::zero()) {
            return invalid("roi must be positive");
        }
        if !(self.p0 >= T::zero() && self.p1 >= T::zero()) {
            return invalid("p0 and p1 must be non-negative");
        }
        if self.p0 + self.p1 > T::one() {
            return invalid("p0 + p1 must not exceed 1");
        }
        if self.quadrature_points < 2 {
            return invalid("quadrature_points must be at least 2");
        }
        Ok(())
    }

    /// `E[B] = p1 + (1 − p0 − p1) / 2`.
    pub fn expected_loss(&self) -> T {
        self.p1 + (T::one() - self.p0 - self.p1) * T::half()
    }

    /// Score above which accepting beats rejecting in expectation:
    /// `E[B] / (2C + E[B])`.
    pub fn operating_cutoff(&self) -> T {
        let eb = self.expected_loss();
        eb / (T::of(2.0) * self.roi + eb)
    }
}

/// Free-function form of [`CostModel::operating_cutoff`].
pub fn operating_cutoff<T: Scalar>(cm: &CostModel<T>) -> T {
    cm.operating_cutoff()
}

/// Class priors and acceptance shares at a cutoff.
#[derive(Debug, Clone, Copy)]
struct Acceptance<T> {
    /// `π₁ (1 − F₁(τ))`: share of all rows that are accepted goods.
    good: T,
    /// `π₀ (1 − F₀(τ))`: share of all rows that are accepted bads.
    bad: T,
    pi1: T,
}

impl<T: Scalar> Acceptance<T> {
    fn profit(&self, roi: T, b: T) -> T {
        // C·(π₁(1−F₁) − π₁F₁) − b·π₀(1−F₀), with π₁F₁ = π₁ − good.
        roi * (self.good - (self.pi1 - self.good)) - b * self.bad
    }
}

fn acceptance_at<T: Scalar>(s: &ScoreSet<T>, tau: T) -> Acceptance<T> {
    let n = T::count(s.len());
    let (mut good, mut bad, mut pos) = (0usize, 0usize, 0usize);
    for (&score, &y) in s.scores().iter().zip(s.labels()) {
        pos += y as usize;
        if score > tau {
            if y == 1 {
                good += 1;
            } else {
                bad += 1;
            }
        }
    }
    Acceptance {
        good: T::count(good) / n,
        bad: T::count(bad) / n,
        pi1: T::count(pos) / n,
    }
}

/// Profit per unit of principal at cutoff `tau` for a fixed loss fraction `b`.
pub fn profit_at<T: Scalar>(
    s: &ScoreSet<T>,
    tau: T,
    b: T,
    cm: &CostModel<T>,
) -> Result<T, ProfitError> {
    if !(b >= T::zero() && b <= T::one()) {
        return Err(ProfitError::InvalidLoss);
    }
    Ok(acceptance_at(s, tau).profit(cm.roi, b))
}

/// Result of integrating the per-`B` optimal profit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedProfit<T> {
    pub value: T,
    /// Optimal cutoff at `B = 0`.
    pub cutoff_at_zero: T,
    /// Optimal cutoff at `B = 1`.
    pub cutoff_at_one: T,
    /// Optimal cutoff at each trapezoid node `b_j = j / (m − 1)`.
    pub node_cutoffs: Vec<T>,
}

/// Candidate cutoffs: 0, 1 and midpoints between adjacent distinct scores.
pub fn candidate_cutoffs<T: Scalar>(scores: &[T]) -> Vec<T> {
    let mut sorted: Vec<T> = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(T::zero());
    out.extend(sorted.windows(2).map(|w| (w[0] + w[1]) * T::half()));
    out.push(T::one());
    out.dedup();
    out
}

/// Profit integrated over the distribution of `B`, maximising over the
/// cutoff separately for every realisation of `B`. Among equally profitable
/// cutoffs the largest is reported.
///
/// Point masses at 0 and 1 are evaluated exactly; the uniform part uses the
/// composite trapezoid rule on `quadrature_points` nodes.
pub fn expected_profit<T: Scalar>(
    s: &ScoreSet<T>,
    cm: &CostModel<T>,
) -> Result<ExpectedProfit<T>, ProfitError> {
    cm.validate()?;
    let (neg, pos) = s.class_counts();
    if neg == 0 || pos == 0 {
        return Err(ProfitError::OneClassOnly);
    }
    let cutoffs = candidate_cutoffs(s.scores());
    let lines = acceptance_curve(s, &cutoffs);
    let best = |b: T| -> (T, T) {
        let mut best_value = lines[0].profit(cm.roi, b);
        let mut best_cut = cutoffs[0];
        for (line, &tau) in lines.iter().zip(&cutoffs).skip(1) {
            let v = line.profit(cm.roi, b);
            // Ties go to the larger (more conservative) cutoff.
            if v >= best_value {
                best_value = v;
                best_cut = tau;
            }
        }
        (best_value, best_cut)
    };
    let m = cm.quadrature_points;
    let h = T::one() / T::count(m - 1);
    let mut integral = T::zero();
    let mut node_cutoffs = Vec::with_capacity(m);
    let mut at_zero = (T::zero(), T::zero());
    let mut at_one = (T::zero(), T::zero());
    for j in 0..m {
        let b = if j == m - 1 {
            T::one()
        } else {
            T::count(j) * h
        };
        let (v, tau) = best(b);
        let w = if j == 0 || j == m - 1 {
            T::half()
        } else {
            T::one()
        };
        integral = integral + w * v;
        node_cutoffs.push(tau);
        if j == 0 {
            at_zero = (v, tau);
        }
        if j == m - 1 {
            at_one = (v, tau);
        }
    }
    integral = integral * h;
    let uniform = T::one() - cm.p0 - cm.p1;
    Ok(ExpectedProfit {
        value: cm.p0 * at_zero.0 + cm.p1 * at_one.0 + uniform * integral,
        cutoff_at_zero: at_zero.1,
        cutoff_at_one: at_one.1,
        node_cutoffs,
    })
}

/// Profit of a fixed cutoff integrated over the same distribution of `B`.
/// The integrand is linear in `B`, so this equals `profit_at` at `E[B]`.
pub fn expected_profit_fixed<T: Scalar>(
    s: &ScoreSet<T>,
    tau: T,
    cm: &CostModel<T>,
) -> Result<T, ProfitError> {
    cm.validate()?;
    profit_at(s, tau, cm.expected_loss(), cm)
}

/// Acceptance shares for ascending cutoffs in one pass over sorted scores.
fn acceptance_curve<T: Scalar>(s: &ScoreSet<T>, cutoffs: &[T]) -> Vec<Acceptance<T>> {
    let n = s.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        s.scores()[a]
            .partial_cmp(&s.scores()[b])
            .expect("finite scores")
    });
    let (_, pos_total) = s.class_counts();
    let neg_total = n - pos_total;
    let nf = T::count(n);
    let pi1 = T::count(pos_total) / nf;
    let mut out = Vec::with_capacity(cutoffs.len());
    let (mut rejected_pos, mut rejected_neg) = (0usize, 0usize);
    let mut next = 0;
    for &tau in cutoffs {
        while next < n && s.scores()[order[next]] <= tau {
            if s.labels()[order[next]] == 1 {
                rejected_pos += 1;
            } else {
                rejected_neg += 1;
            }
            next += 1;
        }
        out.push(Acceptance {
            good: T::count(pos_total - rejected_pos) / nf,
            bad: T::count(neg_total - rejected_neg) / nf,
            pi1,
        });
    }
    out
}

/// Profit per unit issued at the operating cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfitPerEur<T> {
    /// Profit at the operating cutoff with `B` at its expectation.
    pub raw: T,
    pub acceptance_rate: T,
    /// `raw / acceptance_rate`; `None` when nothing is accepted.
    pub normalized: Option<T>,
}

pub fn profit_per_eur<T: Scalar>(
    s: &ScoreSet<T>,
    cm: &CostModel<T>,
) -> Result<ProfitPerEur<T>, ProfitError> {
    let tau = cm.operating_cutoff();
    let raw = expected_profit_fixed(s, tau, cm)?;
    let accepted = s.scores().iter().filter(|&&v| v > tau).count();
    let acceptance_rate = T::count(accepted) / T::count(s.len());
    Ok(ProfitPerEur {
        raw,
        acceptance_rate,
        normalized: (accepted > 0).then(|| raw / acceptance_rate),
    })
}
