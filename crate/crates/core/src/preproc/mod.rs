//! Pre-processors: reweighing, weighted resampling and the disparate impact
//! remover.

mod di;

use num_traits::{FromPrimitive, Num};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{DataError, Dataset};
pub use di::{di_remove, DiRepairer, RepairLevel};

#[derive(Debug, Error)]
pub enum PreprocError {
    #[error("no rows with sensitive={sensitive} and label={label}")]
    EmptyCell { sensitive: u8, label: u8 },
    #[error("group {group} has {size} row(s); repair needs at least 2")]
    GroupTooSmall { group: u8, size: usize },
    #[error("repair level must lie in [0, 1], got {0}")]
    InvalidLevel(f64),
    #[error("column {column} is out of range for {width} features")]
    InvalidColumn { column: usize, width: usize },
    #[error("sampling weights must be positive and finite")]
    InvalidWeights,
    #[error("labels and sensitive values differ in length")]
    LengthMismatch,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Reweighing weights `W(a, y) = P(a)·P(y) / P(a, y)`, one per row.
///
/// Generic so it can run in exact rational arithmetic.
pub fn reweigh<T>(labels: &[u8], sensitive: &[u8]) -> Result<Vec<T>, PreprocError>
where
    T: Num + Clone + FromPrimitive,
{
    if labels.len() != sensitive.len() {
        return Err(PreprocError::LengthMismatch);
    }
    let mut cell = [[0usize; 2]; 2];
    for (&y, &a) in labels.iter().zip(sensitive) {
        cell[a as usize][y as usize] += 1;
    }
    for a in 0..2 {
        for y in 0..2 {
            if cell[a][y] == 0 {
                return Err(PreprocError::EmptyCell {
                    sensitive: a as u8,
                    label: y as u8,
                });
            }
        }
    }
    let n = labels.len();
    let count = |c: usize| T::from_usize(c).expect("count fits the scalar type");
    let weight = |a: usize, y: usize| {
        let n_a = cell[a][0] + cell[a][1];
        let n_y = cell[0][y] + cell[1][y];
        // (n_a/n)(n_y/n) / (n_ay/n)
        (count(n_a) * count(n_y)) / (count(n) * count(cell[a][y]))
    };
    let table = [[weight(0, 0), weight(0, 1)], [weight(1, 0), weight(1, 1)]];
    Ok(labels
        .iter()
        .zip(sensitive)
        .map(|(&y, &a)| table[a as usize][y as usize].clone())
        .collect())
}

/// Draws `n` rows with replacement, row `i` with probability proportional
/// to `weights[i]`. The result has unit weights.
pub fn resample(ds: &Dataset, weights: &[f64], seed: u64) -> Result<Dataset, PreprocError> {
    if weights.len() != ds.n_rows() || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(PreprocError::InvalidWeights);
    }
    let dist = WeightedIndex::new(weights).map_err(|_| PreprocError::InvalidWeights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<usize> = (0..ds.n_rows()).map(|_| dist.sample(&mut rng)).collect();
    let drawn = ds.subset(&idx);
    Ok(drawn.with_weights(vec![1.0; idx.len()])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_cells_get_unit_weights() {
        let labels = [0, 1, 0, 1];
        let sensitive = [0, 0, 1, 1];
        assert_eq!(reweigh::<f64>(&labels, &sensitive).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn empty_cell() {
        assert!(matches!(
            reweigh::<f64>(&[1, 1, 0], &[0, 1, 0]),
            Err(PreprocError::EmptyCell {
                sensitive: 1,
                label: 0
            })
        ));
    }
}
