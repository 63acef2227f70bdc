use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    /// Ascending.
    pub train_indices: Vec<usize>,
    /// Ascending.
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub train_fraction: f64,
}

/// Stratified train/test split over the joint (label, sensitive) cells.
///
/// Each cell contributes `round(fraction * cell_size)` rows to training.
pub fn split_train_test(ds: &Dataset, fraction: f64, seed: u64) -> Result<SplitPlan, DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::InvalidFraction(fraction));
    }
    let mut cells: [Vec<usize>; 4] = Default::default();
    for (i, s) in ds.strata().into_iter().enumerate() {
        cells[s].push(i);
    }
    for (s, members) in cells.iter().enumerate() {
        if members.len() < 2 {
            return Err(DataError::DegenerateStratum {
                label: (s / 2) as u8,
                sensitive: (s % 2) as u8,
                size: members.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut members in cells {
        members.shuffle(&mut rng);
        let take = (fraction * members.len() as f64).round() as usize;
        train.extend_from_slice(&members[..take]);
        test.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan {
        train_indices: train,
        test_indices: test,
        seed,
        train_fraction: fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold id of each training position.
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// Positions held out in fold `f`.
    pub fn validation_positions(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == f)
            .collect()
    }

    /// Positions used for training when fold `f` is held out.
    pub fn training_positions(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != f)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified k-fold assignment.
///
/// Members of each stratum are shuffled and dealt round-robin; the dealing
/// position carries over between strata so overall fold sizes also differ by
/// at most one.
pub fn make_folds(
    n_train: usize,
    k: usize,
    strata: &[usize],
    seed: u64,
) -> Result<FoldPlan, DataError> {
    if k < 2 {
        return Err(DataError::InvalidFoldCount(k));
    }
    if k > n_train {
        return Err(DataError::TooManyFolds { k, n: n_train });
    }
    if strata.len() != n_train {
        return Err(DataError::Invalid(format!(
            "{} strata labels for {n_train} rows",
            strata.len()
        )));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in strata.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; n_train];
    let mut next = 0;
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignments[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn dataset(cells: [usize; 4]) -> Dataset {
        let mut labels = Vec::new();
        let mut sensitive = Vec::new();
        for (s, &count) in cells.iter().enumerate() {
            for _ in 0..count {
                labels.push((s / 2) as u8);
                sensitive.push((s % 2) as u8);
            }
        }
        let n = labels.len();
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        Dataset::new(x, labels, sensitive).unwrap()
    }

    fn cell_counts(ds: &Dataset, idx: &[usize]) -> [usize; 4] {
        let strata = ds.strata();
        let mut c = [0; 4];
        for &i in idx {
            c[strata[i]] += 1;
        }
        c
    }

    #[test]
    fn balanced_split_counts() {
        let ds = dataset([3, 2, 3, 2]);
        let plan = split_train_test(&ds, 0.6, 7).unwrap();
        assert_eq!(plan.train_indices.len() + plan.test_indices.len(), 10);
        assert_eq!(split_train_test(&ds, 0.6, 7).unwrap(), plan);
    }

    #[test]
    fn per_cell_rounding() {
        let ds = dataset([40, 30, 20, 10]);
        let plan = split_train_test(&ds, 0.6, 1).unwrap();
        assert_eq!(cell_counts(&ds, &plan.train_indices), [24, 18, 12, 6]);
        assert_eq!(cell_counts(&ds, &plan.test_indices), [16, 12, 8, 4]);
    }

    #[test]
    fn degenerate_stratum() {
        let ds = dataset([5, 1, 5, 5]);
        assert!(matches!(
            split_train_test(&ds, 0.6, 1),
            Err(DataError::DegenerateStratum {
                label: 0,
                sensitive: 1,
                size: 1
            })
        ));
        assert!(matches!(
            split_train_test(&ds, 1.0, 1),
            Err(DataError::InvalidFraction(_))
        ));
    }

    #[test]
    fn fold_sizes() {
        let plan = make_folds(10, 5, &[0; 10], 3).unwrap();
        assert_eq!(plan.fold_sizes(), vec![2; 5]);
        let mut sizes = make_folds(11, 5, &[0; 11], 3).unwrap().fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
    }

    #[test]
    fn stratified_folds_deal_each_stratum() {
        let strata: Vec<usize> = (0..12).map(|i| usize::from(i >= 8)).collect();
        let plan = make_folds(12, 4, &strata, 9).unwrap();
        for f in 0..4 {
            let members = plan.validation_positions(f);
            let a = members.iter().filter(|&&i| strata[i] == 0).count();
            let b = members.iter().filter(|&&i| strata[i] == 1).count();
            assert_eq!((a, b), (2, 1));
        }
    }

    #[test]
    fn too_many_folds() {
        assert!(matches!(
            make_folds(3, 5, &[0; 3], 0),
            Err(DataError::TooManyFolds { k: 5, n: 3 })
        ));
        assert!(matches!(
            make_folds(3, 1, &[0; 3], 0),
            Err(DataError::InvalidFoldCount(1))
        ));
    }
}
