use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ProcessorId, SELF_LEARNER};
use super::{BenchError, Metric, ResultRecord};

/// Baselines smaller than this in magnitude give absolute, not relative, gains.
const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    pub processor: ProcessorId,
    pub metric: Metric,
    /// Mean gain over cells; positive means improvement. `None` when no cell
    /// had both values defined.
    pub gain: Option<f64>,
    pub cells: usize,
    /// Cells reported as absolute differences (near-zero baseline).
    pub absolute_cells: usize,
    /// Cells skipped because a value was undefined.
    pub excluded: usize,
}

/// Mean relative change of each processor against the unconstrained model of
/// the same dataset, learner and fold. In-processors are compared with the
/// mean over learners of the baseline. Signs of IND, SP and SF are flipped
/// so positive values always mean improvement.
pub fn aggregate_gains(records: &[ResultRecord]) -> Result<Vec<Gain>, BenchError> {
    let mut baseline: BTreeMap<(&str, &str, usize), &ResultRecord> = BTreeMap::new();
    let mut by_fold: BTreeMap<(&str, usize), Vec<&ResultRecord>> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.processor == ProcessorId::Unconstrained)
    {
        baseline.insert((&r.dataset, &r.learner, r.fold), r);
        by_fold.entry((&r.dataset, r.fold)).or_default().push(r);
    }
    let missing = |r: &ResultRecord| BenchError::MissingBaseline {
        dataset: r.dataset.clone(),
        fold: r.fold,
    };
    let mut acc: BTreeMap<(ProcessorId, Metric), (f64, usize, usize, usize)> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.processor != ProcessorId::Unconstrained)
    {
        for metric in Metric::ALL {
            let b = if r.learner == SELF_LEARNER {
                let rows = by_fold
                    .get(&(r.dataset.as_str(), r.fold))
                    .ok_or_else(|| missing(r))?;
                let vals: Vec<f64> = rows.iter().filter_map(|b| metric.value(b)).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            } else {
                let b = baseline
                    .get(&(r.dataset.as_str(), r.learner.as_str(), r.fold))
                    .ok_or_else(|| missing(r))?;
                metric.value(b)
            };
            let e = acc.entry((r.processor, metric)).or_insert((0.0, 0, 0, 0));
            match (metric.value(r), b) {
                (Some(p), Some(b)) => {
                    let diff = metric.sign() * (p - b);
                    if b.abs() < RELATIVE_FLOOR {
                        e.0 += diff;
                        e.2 += 1;
                    } else {
                        e.0 += diff / b.abs();
                    }
                    e.1 += 1;
                }
                _ => e.3 += 1,
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(
            |((processor, metric), (sum, cells, absolute_cells, excluded))| Gain {
                processor,
                metric,
                gain: (cells > 0).then(|| sum / cells as f64),
                cells,
                absolute_cells,
                excluded,
            },
        )
        .collect())
}

/// Ranks starting at 1; tied values share the mean of their positions.
fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of midranks. `None` when either
/// side is constant or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (midranks(x), midranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub metrics: Vec<Metric>,
    /// Row-major, `values[i][j]` for `metrics[i]` and `metrics[j]`.
    pub values: Vec<Vec<Option<f64>>>,
    pub datasets: usize,
}

impl CorrelationMatrix {
    pub fn get(&self, a: Metric, b: Metric) -> Option<f64> {
        let i = self.metrics.iter().position(|&m| m == a)?;
        let j = self.metrics.iter().position(|&m| m == b)?;
        self.values[i][j]
    }
}

/// Spearman correlations between metrics, computed per dataset over its
/// records and averaged across datasets. Each fairness metric contributes a
/// sign flip, so improvements move in the same direction.
pub fn rank_correlation(
    records: &[ResultRecord],
    metrics: &[Metric],
) -> Result<CorrelationMatrix, BenchError> {
    let mut datasets: Vec<&str> = Vec::new();
    for r in records {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    let groups: Vec<Vec<&ResultRecord>> = datasets
        .iter()
        .map(|d| records.iter().filter(|r| r.dataset == *d).collect())
        .collect();
    for (d, g) in datasets.iter().zip(&groups) {
        if g.len() < 3 {
            return Err(BenchError::TooFewRecords {
                dataset: d.to_string(),
                count: g.len(),
            });
        }
    }
    if datasets.is_empty() {
        return Err(BenchError::TooFewRecords {
            dataset: String::new(),
            count: 0,
        });
    }
    let k = metrics.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in 0..k {
            let (a, b) = (metrics[i], metrics[j]);
            let per: Vec<f64> = groups
                .iter()
                .filter_map(|g| {
                    let (x, y): (Vec<f64>, Vec<f64>) = g
                        .iter()
                        .filter_map(|r| Some((a.value(r)?, b.value(r)?)))
                        .unzip();
                    if x.len() < 3 {
                        return None;
                    }
                    spearman(&x, &y)
                })
                .collect();
            if !per.is_empty() {
                values[i][j] =
                    Some(a.sign() * b.sign() * per.iter().sum::<f64>() / per.len() as f64);
            }
        }
    }
    Ok(CorrelationMatrix {
        metrics: metrics.to_vec(),
        values,
        datasets: datasets.len(),
    })
}

/// Indices of the points not dominated in (profit up, sp down), ordered by
/// profit descending, then sp ascending, then index. A point dominates
/// another if it is at least as good in both and strictly better in one.
pub fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .0
            .total_cmp(&points[a].0)
            .then(points[a].1.total_cmp(&points[b].1))
            .then(a.cmp(&b))
    });
    let mut out = Vec::new();
    // lowest sp among points with strictly higher profit
    let mut best_sp = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        let profit = points[order[i]].0;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == profit {
            j += 1;
        }
        let group_min = points[order[i]].1;
        if group_min < best_sp {
            out.extend(
                order[i..j]
                    .iter()
                    .copied()
                    .filter(|&k| points[k].1 == group_min),
            );
        }
        best_sp = best_sp.min(group_min);
        i = j;
    }
    out
}

/// Non-dominated records in (profit_raw max, sp min). Records lacking either
/// value are ignored.
pub fn pareto_frontier(records: &[ResultRecord]) -> Vec<ResultRecord> {
    let usable: Vec<&ResultRecord> = records
        .iter()
        .filter(|r| r.metrics.profit_raw.is_some() && r.metrics.sp.is_some())
        .collect();
    let points: Vec<(f64, f64)> = usable
        .iter()
        .map(|r| {
            (
                r.metrics.profit_raw.unwrap_or_default(),
                r.metrics.sp.unwrap_or_default(),
            )
        })
        .collect();
    pareto_indices(&points)
        .into_iter()
        .map(|i| usable[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[1.0, 2.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(midranks(&[3.0, 3.0, 3.0]), vec![2.0; 3]);
    }

    #[test]
    fn frontier_example() {
        let pts = [(0.05, 0.10), (0.04, 0.05), (0.03, 0.20)];
        assert_eq!(pareto_indices(&pts), vec![0, 1]);
        assert_eq!(pareto_indices(&[(0.1, 0.2)]), vec![0]);
        // equal points do not dominate each other
        assert_eq!(pareto_indices(&[(0.1, 0.2), (0.1, 0.2)]), vec![0, 1]);
    }
}
