//! Disparate impact remover.
//!
//! Each repaired feature value moves toward the median of the group quantile
//! functions, evaluated at the value's quantile level within its own group.
//! Quantile levels use midpoint plotting positions `(rank - 0.5) / n_group`
//! (tied values share their average position) with linear interpolation in
//! between.

use serde::{Deserialize, Serialize};

use super::PreprocError;
use crate::data::Dataset;

/// Repair level λ in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RepairLevel(f64);

impl RepairLevel {
    pub const GRID: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

    pub fn new(lambda: f64) -> Result<Self, PreprocError> {
        if (0.0..=1.0).contains(&lambda) {
            Ok(Self(lambda))
        } else {
            Err(PreprocError::InvalidLevel(lambda))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for RepairLevel {
    type Error = PreprocError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<RepairLevel> for f64 {
    fn from(l: RepairLevel) -> f64 {
        l.0
    }
}

/// Empirical quantile function of one group for one feature.
#[derive(Debug, Clone, PartialEq)]
struct GroupQuantiles {
    /// Distinct values, ascending.
    values: Vec<f64>,
    /// Plotting position of each distinct value.
    positions: Vec<f64>,
}

impl GroupQuantiles {
    fn new(mut raw: Vec<f64>) -> Self {
        raw.sort_by(f64::total_cmp);
        let n = raw.len() as f64;
        let mut values = Vec::new();
        let mut positions = Vec::new();
        let mut i = 0;
        while i < raw.len() {
            let mut j = i;
            while j + 1 < raw.len() && raw[j + 1] == raw[i] {
                j += 1;
            }
            // ranks i+1 ..= j+1, average rank (i + j)/2 + 1
            let rank = (i + j) as f64 / 2.0 + 1.0;
            values.push(raw[i]);
            positions.push((rank - 0.5) / n);
            i = j + 1;
        }
        Self { values, positions }
    }

    fn quantile(&self, u: f64) -> f64 {
        interpolate(&self.positions, &self.values, u)
    }

    fn level(&self, v: f64) -> f64 {
        interpolate(&self.values, &self.positions, v)
    }
}

/// Piecewise-linear interpolation through `(xs, ys)`, constant beyond the ends.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    let hi = xs.partition_point(|&p| p <= x);
    let lo = hi - 1;
    if xs[lo] == x {
        return ys[lo];
    }
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Group quantile functions fitted on training rows, reusable on other rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DiRepairer {
    columns: Vec<usize>,
    /// Per repaired column, one quantile function per group (0, 1).
    groups: Vec<[GroupQuantiles; 2]>,
}

impl DiRepairer {
    /// `columns = None` repairs the numeric columns of the encoding report.
    pub fn fit(ds: &Dataset, columns: Option<&[usize]>) -> Result<Self, PreprocError> {
        let columns = columns
            .map(<[usize]>::to_vec)
            .unwrap_or_else(|| ds.encoding_report().numeric_columns());
        let width = ds.n_features();
        if let Some(&column) = columns.iter().find(|&&c| c >= width) {
            return Err(PreprocError::InvalidColumn { column, width });
        }
        for g in 0..2u8 {
            let size = ds.sensitive().iter().filter(|&&a| a == g).count();
            if size < 2 {
                return Err(PreprocError::GroupTooSmall { group: g, size });
            }
        }
        let x = ds.features();
        let groups = columns
            .iter()
            .map(|&c| {
                let col = x.column(c);
                let of = |g: u8| {
                    GroupQuantiles::new(
                        col.iter()
                            .zip(ds.sensitive())
                            .filter(|(_, &a)| a == g)
                            .map(|(&v, _)| v)
                            .collect(),
                    )
                };
                [of(0), of(1)]
            })
            .collect();
        Ok(Self { columns, groups })
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// Target of a value at quantile level `u`: the median of the group
    /// quantile functions at `u`.
    fn target(&self, slot: usize, u: f64) -> f64 {
        median(self.groups[slot].iter().map(|q| q.quantile(u)).collect())
    }

    pub fn transform(&self, ds: &Dataset, level: RepairLevel) -> Result<Dataset, PreprocError> {
        if let Some(&column) = self.columns.iter().find(|&&c| c >= ds.n_features()) {
            return Err(PreprocError::InvalidColumn {
                column,
                width: ds.n_features(),
            });
        }
        let lambda = level.value();
        if lambda == 0.0 {
            return Ok(ds.clone());
        }
        let mut x = ds.features().clone();
        for (slot, &c) in self.columns.iter().enumerate() {
            for (i, &a) in ds.sensitive().iter().enumerate() {
                let v = x[[i, c]];
                let u = self.groups[slot][a as usize].level(v);
                let repaired = self.target(slot, u);
                x[[i, c]] = if lambda == 1.0 {
                    repaired
                } else {
                    (1.0 - lambda) * v + lambda * repaired
                };
            }
        }
        Ok(ds.with_features(x)?)
    }

    /// Largest change of the repair target across one cell between
    /// neighbouring plotting positions of a group (end cells included): the
    /// resolution to which the repaired group distributions can agree.
    pub fn resolution(&self, slot: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for q in &self.groups[slot] {
            let mut knots = vec![0.0];
            knots.extend_from_slice(&q.positions);
            knots.push(1.0);
            for w in knots.windows(2) {
                worst = worst.max((self.target(slot, w[1]) - self.target(slot, w[0])).abs());
            }
        }
        worst
    }
}

/// Repairs `columns` (default: numeric columns) of `ds` at level λ, fitting
/// the group distributions on `ds` itself.
pub fn di_remove(
    ds: &Dataset,
    level: RepairLevel,
    columns: Option<&[usize]>,
) -> Result<Dataset, PreprocError> {
    DiRepairer::fit(ds, columns)?.transform(ds, level)
}
