//! Group fairness criteria, AUC and acceptance rates for a set of scores.
//!
//! An applicant is accepted when `score > tau`; a score equal to the cutoff
//! is a rejection. Group 0 is the privileged group, group 1 unprivileged.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("scores, labels and sensitive have different lengths ({0}, {1}, {2})")]
    LengthMismatch(usize, usize, usize),
    #[error("score set is empty")]
    Empty,
    #[error("score at index {index} is outside [0, 1] or not finite")]
    ScoreOutOfRange { index: usize },
    #[error("label or sensitive value at index {index} is not 0/1")]
    NotBinary { index: usize },
    #[error("cutoff must lie in [0, 1]")]
    InvalidCutoff,
    #[error("sensitive group {0} is empty")]
    EmptyGroup(u8),
    #[error("sensitive group {group} has no instances with label {label}")]
    EmptyGroupClass { group: u8, label: u8 },
    #[error("sensitive group {0} has no accepted instances")]
    NoAccepted(u8),
    #[error("labels contain only one class")]
    OneClassOnly,
}

/// Scores in `[0, 1]` aligned with labels and group membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet<T> {
    scores: Vec<T>,
    labels: Vec<u8>,
    sensitive: Vec<u8>,
}

impl<T: Scalar> ScoreSet<T> {
    pub fn new(scores: Vec<T>, labels: Vec<u8>, sensitive: Vec<u8>) -> Result<Self, MetricError> {
        if scores.len() != labels.len() || scores.len() != sensitive.len() {
            return Err(MetricError::LengthMismatch(
                scores.len(),
                labels.len(),
                sensitive.len(),
            ));
        }
        if scores.is_empty() {
            return Err(MetricError::Empty);
        }
        if let Some(index) = scores
            .iter()
            .position(|s| !(s.is_finite() && *s >= T::zero() && *s <= T::one()))
        {
            return Err(MetricError::ScoreOutOfRange { index });
        }
        if let Some(index) = labels
            .iter()
            .zip(&sensitive)
            .position(|(&y, &a)| y > 1 || a > 1)
        {
            return Err(MetricError::NotBinary { index });
        }
        Ok(Self {
            scores,
            labels,
            sensitive,
        })
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Same labels and groups, new scores.
    pub fn with_scores(&self, scores: Vec<T>) -> Result<Self, MetricError> {
        Self::new(scores, self.labels.clone(), self.sensitive.clone())
    }

    /// Rows belonging to group `g`.
    pub fn group(&self, g: u8) -> Result<Self, MetricError> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.sensitive[i] == g)
            .collect();
        if idx.is_empty() {
            return Err(MetricError::EmptyGroup(g));
        }
        Ok(Self {
            scores: idx.iter().map(|&i| self.scores[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            sensitive: idx.iter().map(|&i| self.sensitive[i]).collect(),
        })
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        (self.len() - pos, pos)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio<T: Scalar>(num: usize, den: usize) -> Option<T> {
    (den > 0).then(|| T::count(num) / T::count(den))
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accepted(&self) -> usize {
        self.tp + self.fp
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.fp + self.tn
    }

    pub fn fpr<T: Scalar>(&self) -> Option<T> {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn fnr<T: Scalar>(&self) -> Option<T> {
        ratio(self.fn_, self.tp + self.fn_)
    }

    pub fn tpr<T: Scalar>(&self) -> Option<T> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn ppv<T: Scalar>(&self) -> Option<T> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn acceptance<T: Scalar>(&self) -> Option<T> {
        ratio(self.accepted(), self.total())
    }
}

/// Confusion counts for group 0 (privileged) and group 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub groups: [Confusion; 2],
}

impl GroupConfusion {
    pub fn group(&self, g: u8) -> &Confusion {
        &self.groups[g as usize]
    }

    pub fn overall(&self) -> Confusion {
        let [a, b] = self.groups;
        Confusion {
            tp: a.tp + b.tp,
            fp: a.fp + b.fp,
            tn: a.tn + b.tn,
            fn_: a.fn_ + b.fn_,
        }
    }

    fn require_class(&self, g: u8, label: u8) -> Result<(), MetricError> {
        let c = self.group(g);
        let n = if label == 1 {
            c.positives()
        } else {
            c.negatives()
        };
        if n == 0 {
            Err(MetricError::EmptyGroupClass { group: g, label })
        } else {
            Ok(())
        }
    }
}

fn check_cutoff<T: Scalar>(tau: T) -> Result<(), MetricError> {
    if tau >= T::zero() && tau <= T::one() {
        Ok(())
    } else {
        Err(MetricError::InvalidCutoff)
    }
}

/// Per-group confusion counts at cutoff `tau`.
pub fn confusion<T: Scalar>(s: &ScoreSet<T>, tau: T) -> Result<GroupConfusion, MetricError> {
    check_cutoff(tau)?;
    let mut groups = [Confusion::default(); 2];
    for ((&score, &y), &a) in s.scores.iter().zip(&s.labels).zip(&s.sensitive) {
        let c = &mut groups[a as usize];
        match (score > tau, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    for g in 0..2u8 {
        if groups[g as usize].total() == 0 {
            return Err(MetricError::EmptyGroup(g));
        }
    }
    Ok(GroupConfusion { groups })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates<T> {
    pub privileged: T,
    pub unprivileged: T,
    pub overall: T,
}

pub fn acceptance_rate<T: Scalar>(
    s: &ScoreSet<T>,
    tau: T,
) -> Result<AcceptanceRates<T>, MetricError> {
    let c = confusion(s, tau)?;
    let rate = |conf: &Confusion| conf.acceptance::<T>().ok_or(MetricError::Empty);
    Ok(AcceptanceRates {
        privileged: rate(c.group(0))?,
        unprivileged: rate(c.group(1))?,
        overall: rate(&c.overall())?,
    })
}

/// Absolute gap in group acceptance rates.
pub fn independence<T: Scalar>(s: &ScoreSet<T>, tau: T) -> Result<T, MetricError> {
    let r = acceptance_rate(s, tau)?;
    Ok((r.privileged - r.unprivileged).abs())
}

/// `(FPR₁ − FPR₀, FNR₁ − FNR₀)`.
pub fn separation_components<T: Scalar>(s: &ScoreSet<T>, tau: T) -> Result<(T, T), MetricError> {
    let c = confusion(s, tau)?;
    for g in 0..2 {
        c.require_class(g, 0)?;
        c.require_class(g, 1)?;
    }
    let fpr = |g| c.group(g).fpr::<T>().expect("class present");
    let fnr = |g| c.group(g).fnr::<T>().expect("class present");
    Ok((fpr(1) - fpr(0), fnr(1) - fnr(0)))
}

/// `½ |(FPR₁ − FPR₀) + (FNR₁ − FNR₀)|`.
///
/// The two gaps are summed before taking the absolute value, so gaps of
/// opposite sign cancel. Use [`separation_components`] to see them apart.
pub fn separation<T: Scalar>(s: &ScoreSet<T>, tau: T) -> Result<T, MetricError> {
    let (dfpr, dfnr) = separation_components(s, tau)?;
    Ok(T::half() * (dfpr + dfnr).abs())
}

fn group_ppv<T: Scalar>(c: &GroupConfusion, g: u8) -> Result<T, MetricError> {
    c.group(g).ppv::<T>().ok_or(MetricError::NoAccepted(g))
}

/// Absolute gap in group positive predictive values.
pub fn sufficiency<T: Scalar>(s: &ScoreSet<T>, tau: T) -> Result<T, MetricError> {
    let c = confusion(s, tau)?;
    Ok((group_ppv::<T>(&c, 0)? - group_ppv::<T>(&c, 1)?).abs())
}

/// Area under the ROC curve; tied positive/negative pairs count one half.
pub fn auc<T: Scalar>(s: &ScoreSet<T>) -> Result<T, MetricError> {
    auc_of(&s.scores, &s.labels)
}

pub(crate) fn auc_of<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<T, MetricError> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let (mut neg_below, mut twice_wins) = (0u64, 0u64);
    let (mut n_pos, mut n_neg) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_wins += 2 * neg_below * pos + pos * neg;
        neg_below += neg;
        n_pos += pos;
        n_neg += neg;
        i = j;
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::OneClassOnly);
    }
    let num = T::from_u64(twice_wins).expect("count");
    let den = T::from_u64(2 * n_pos * n_neg).expect("count");
    Ok(num / den)
}

/// Which fairness criterion a processor targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Independence,
    Separation,
    Sufficiency,
}

impl Criterion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::Independence => "independence",
            Criterion::Separation => "separation",
            Criterion::Sufficiency => "sufficiency",
        }
    }

    /// Unsigned criterion value (IND, SP or SF).
    pub fn evaluate<T: Scalar>(&self, s: &ScoreSet<T>, tau: T) -> Result<T, MetricError> {
        match self {
            Criterion::Independence => independence(s, tau),
            Criterion::Separation => separation(s, tau),
            Criterion::Sufficiency => sufficiency(s, tau),
        }
    }

    /// Signed statistic; positive values favour the privileged group.
    ///
    /// Independence: `acc₀ − acc₁`. Separation: `½[(FPR₁ − FPR₀) + (FNR₁ − FNR₀)]`.
    /// Sufficiency: `PPV₀ − PPV₁`.
    pub fn signed<T: Scalar>(&self, s: &ScoreSet<T>, tau: T) -> Result<T, MetricError> {
        match self {
            Criterion::Independence => {
                let r = acceptance_rate(s, tau)?;
                Ok(r.privileged - r.unprivileged)
            }
            Criterion::Separation => {
                let (dfpr, dfnr) = separation_components(s, tau)?;
                Ok(T::half() * (dfpr + dfnr))
            }
            Criterion::Sufficiency => {
                let c = confusion(s, tau)?;
                Ok(group_ppv::<T>(&c, 0)? - group_ppv::<T>(&c, 1)?)
            }
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "independence" | "ind" => Ok(Criterion::Independence),
            "separation" | "sp" => Ok(Criterion::Separation),
            "sufficiency" | "sf" => Ok(Criterion::Sufficiency),
            other => Err(format!("unknown criterion `{other}`")),
        }
    }
}

/// Expected calibration error with `bins` equal-width bins over `[0, 1]`.
pub fn expected_calibration_error<T: Scalar>(scores: &[T], labels: &[u8], bins: usize) -> T {
    let mut count = vec![0usize; bins];
    let mut score_sum = vec![T::zero(); bins];
    let mut label_sum = vec![T::zero(); bins];
    for (&s, &y) in scores.iter().zip(labels) {
        let b = (s * T::count(bins))
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(bins - 1);
        count[b] += 1;
        score_sum[b] = score_sum[b] + s;
        label_sum[b] = label_sum[b] + T::count(y as usize);
    }
    let n = T::count(scores.len());
    (0..bins)
        .filter(|&b| count[b] > 0)
        .fold(T::zero(), |acc, b| {
            let c = T::count(count[b]);
            acc + c / n * ((label_sum[b] - score_sum[b]) / c).abs()
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(scores: &[f64], labels: &[u8], sensitive: &[u8]) -> ScoreSet<f64> {
        ScoreSet::new(scores.to_vec(), labels.to_vec(), sensitive.to_vec()).unwrap()
    }

    #[test]
    fn confusion_per_group() {
        let s = set(&[0.9, 0.2], &[1, 0], &[0, 1]);
        let c = confusion(&s, 0.5).unwrap();
        assert_eq!(c.group(0).tp, 1);
        assert_eq!(c.group(1).tn, 1);
    }

    #[test]
    fn score_at_cutoff_is_rejected() {
        let s = set(&[0.5, 0.7], &[1, 1], &[0, 1]);
        let c = confusion(&s, 0.5).unwrap();
        assert_eq!(c.group(0).fn_, 1);
        assert_eq!(c.group(1).tp, 1);
    }

    #[test]
    fn empty_group_is_an_error() {
        let s = set(&[0.9, 0.2], &[1, 0], &[0, 0]);
        assert_eq!(confusion(&s, 0.5), Err(MetricError::EmptyGroup(1)));
        assert_eq!(confusion(&s, 1.5), Err(MetricError::InvalidCutoff));
    }

    #[test]
    fn independence_examples() {
        let s = set(&[1.0; 4], &[1, 0, 1, 0], &[0, 0, 1, 1]);
        assert_eq!(independence(&s, 0.5).unwrap(), 0.0);
        let s = set(&[0.9, 0.8, 0.3, 0.6], &[1, 1, 0, 1], &[0, 0, 1, 1]);
        assert_eq!(independence(&s, 0.5).unwrap(), 0.5);
        let s = set(
            &[0.9, 0.9, 0.9, 0.9, 0.1, 0.9, 0.9, 0.1, 0.1, 0.1],
            &[1; 10],
            &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1],
        );
        assert!((independence(&s, 0.5).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn separation_examples() {
        // FPR0 = 1, FNR0 = 0, FPR1 = 0, FNR1 = 0.
        let s = set(&[0.9, 0.6, 0.9, 0.2], &[1, 0, 1, 0], &[0, 0, 1, 1]);
        assert_eq!(separation(&s, 0.5).unwrap(), 0.5);
        // FPR1 = FNR1 = 0.5: the gaps cancel.
        let s = set(
            &[0.9, 0.6, 0.7, 0.4, 0.3, 0.8],
            &[1, 0, 1, 0, 1, 0],
            &[0, 0, 1, 1, 1, 1],
        );
        assert_eq!(separation(&s, 0.5).unwrap(), 0.0);
        assert_eq!(separation_components(&s, 0.5).unwrap(), (-0.5, 0.5));
    }

    #[test]
    fn separation_needs_both_classes() {
        let s = set(&[0.9, 0.6, 0.9], &[1, 0, 1], &[0, 0, 1]);
        assert_eq!(
            separation(&s, 0.5),
            Err(MetricError::EmptyGroupClass { group: 1, label: 0 })
        );
    }

    #[test]
    fn sufficiency_examples() {
        let s = set(&[0.9, 0.8, 0.7, 0.2], &[1, 0, 1, 0], &[0, 0, 1, 1]);
        assert_eq!(sufficiency(&s, 0.5).unwrap(), 0.5);
        let s = set(&[0.9, 0.8, 0.3, 0.2], &[1, 0, 1, 0], &[0, 0, 1, 1]);
        assert_eq!(sufficiency(&s, 0.5), Err(MetricError::NoAccepted(1)));
        let s = set(&[0.9, 0.8], &[1, 1], &[0, 1]);
        assert_eq!(sufficiency(&s, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn auc_examples() {
        let s = set(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0], &[0, 1, 0, 1]);
        assert_eq!(auc(&s).unwrap(), 1.0);
        let s = set(&[0.1, 0.2, 0.8, 0.9], &[1, 1, 0, 0], &[0, 1, 0, 1]);
        assert_eq!(auc(&s).unwrap(), 0.0);
        let s = set(&[0.8, 0.8, 0.2], &[1, 0, 0], &[0, 1, 0]);
        assert_eq!(auc(&s).unwrap(), 0.75);
        let s = set(&[0.8, 0.2], &[1, 1], &[0, 1]);
        assert_eq!(auc(&s), Err(MetricError::OneClassOnly));
    }

    #[test]
    fn acceptance_examples() {
        let s = set(&[0.9, 0.8, 0.7, 0.6], &[1, 0, 1, 0], &[0, 0, 1, 1]);
        assert_eq!(acceptance_rate(&s, 0.5).unwrap().overall, 1.0);
        assert_eq!(acceptance_rate(&s, 0.95).unwrap().overall, 0.0);
        let s = set(
            &[0.9, 0.8, 0.7, 0.1, 0.2, 0.3, 0.4, 0.0],
            &[1, 0, 1, 0, 1, 0, 1, 0],
            &[0, 1, 0, 1, 0, 1, 0, 1],
        );
        assert_eq!(acceptance_rate(&s, 0.5).unwrap().overall, 0.375);
    }

    #[test]
    fn works_in_single_precision() {
        let s = ScoreSet::<f32>::new(vec![0.9, 0.8, 0.3, 0.6], vec![1, 1, 0, 1], vec![0, 0, 1, 1])
            .unwrap();
        assert_eq!(independence(&s, 0.5f32).unwrap(), 0.5f32);
    }

    #[test]
    fn rejects_out_of_range_scores() {
        assert_eq!(
            ScoreSet::new(vec![0.5, 1.2], vec![0, 1], vec![0, 1]),
            Err(MetricError::ScoreOutOfRange { index: 1 })
        );
        assert_eq!(
            ScoreSet::new(vec![0.5, f64::NAN], vec![0, 1], vec![0, 1]),
            Err(MetricError::ScoreOutOfRange { index: 1 })
        );
    }

    #[test]
    fn ece_of_calibrated_bins_is_zero() {
        let scores = [0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75];
        let labels = [1, 0, 0, 0, 1, 1, 1, 0];
        assert_eq!(expected_calibration_error(&scores, &labels, 10), 0.0);
    }
}
