//! Synthetic credit data with group-dependent repayment rates.
//!
//! Rows carry an age column from which the sensitive attribute is derived,
//! so a scorecard trained on the features picks up the group difference
//! through age the same way it would on real applications.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ColumnEncoding, DataError, Dataset, EncodingReport, Transform, DEFAULT_AGE_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub rows: usize,
    /// Features whose mean shifts with the label.
    pub informative: usize,
    /// Label-driven mean shift of each informative feature, in noise units.
    pub signal: f64,
    /// Share of applicants younger than the age threshold.
    pub unprivileged_share: f64,
    /// Repayment rate of the privileged group.
    pub privileged_repay_rate: f64,
    /// Privileged minus unprivileged repayment rate.
    pub base_rate_gap: f64,
    /// Include the 0/1 group indicator itself as a feature.
    pub sensitive_as_feature: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            rows: 2000,
            informative: 4,
            signal: 0.6,
            unprivileged_share: 0.3,
            privileged_repay_rate: 0.75,
            base_rate_gap: 0.25,
            sensitive_as_feature: false,
            seed: 2021,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let p1 = self.privileged_repay_rate - self.base_rate_gap;
        if self.rows < 8 {
            return Err(DataError::Invalid(
                "synthetic data needs at least 8 rows".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.privileged_repay_rate) || !(0.0..=1.0).contains(&p1) {
            return Err(DataError::Invalid(
                "repayment rates must lie in [0, 1]".into(),
            ));
        }
        if !(self.unprivileged_share > 0.0 && self.unprivileged_share < 1.0) {
            return Err(DataError::Invalid(
                "unprivileged_share must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Draws a dataset. Columns: `x1..x{informative}`, `age`, `noise`, and
/// optionally `group`.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.rows;
    let k = spec.informative + 2 + usize::from(spec.sensitive_as_feature);
    let mut x = Array2::zeros((n, k));
    let mut labels = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    for i in 0..n {
        let a = u8::from(rng.random::<f64>() < spec.unprivileged_share);
        let repay = spec.privileged_repay_rate - spec.base_rate_gap * f64::from(a);
        let y = u8::from(rng.random::<f64>() < repay);
        let sign = if y == 1 { 1.0 } else { -1.0 };
        for j in 0..spec.informative {
            let z: f64 = rng.sample(StandardNormal);
            x[[i, j]] = sign * spec.signal + z;
        }
        let u: f64 = rng.random();
        let age = if a == 1 {
            19.0 + u * (DEFAULT_AGE_THRESHOLD - 19.0)
        } else {
            DEFAULT_AGE_THRESHOLD + u * 45.0
        };
        x[[i, spec.informative]] = age.floor();
        x[[i, spec.informative + 1]] = rng.sample(StandardNormal);
        if spec.sensitive_as_feature {
            x[[i, spec.informative + 2]] = f64::from(a);
        }
        labels.push(y);
        sensitive.push(a);
    }
    let mut names: Vec<String> = (1..=spec.informative).map(|j| format!("x{j}")).collect();
    names.push("age".into());
    names.push("noise".into());
    if spec.sensitive_as_feature {
        names.push("group".into());
    }
    let columns = names
        .iter()
        .enumerate()
        .map(|(j, name)| ColumnEncoding {
            source: name.clone(),
            transform: if name == "group" {
                Transform::OneHot {
                    columns: vec![j],
                    levels: vec!["1".into()],
                    dropped: "0".into(),
                }
            } else {
                Transform::Generated { column: j }
            },
        })
        .collect();
    Dataset::from_parts(
        x,
        labels,
        sensitive,
        vec![1.0; n],
        names,
        EncodingReport { columns },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_follow_the_spec() {
        let ds = generate(&SyntheticSpec {
            rows: 20_000,
            ..Default::default()
        })
        .unwrap();
        let group_rate = |g: u8| {
            let (mut n, mut pos) = (0.0, 0.0);
            for (&y, &a) in ds.labels().iter().zip(ds.sensitive()) {
                if a == g {
                    n += 1.0;
                    pos += f64::from(y);
                }
            }
            pos / n
        };
        assert!((group_rate(0) - 0.75).abs() < 0.02);
        assert!((group_rate(1) - 0.50).abs() < 0.03);
        assert!((ds.sensitive_rate() - 0.3).abs() < 0.02);
        let age = ds.features().column(4);
        for (i, &a) in ds.sensitive().iter().enumerate() {
            assert_eq!(a == 1, age[i] < 25.0);
        }
    }

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec {
            rows: 100,
            ..Default::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }
}
