//! Group-wise Platt scaling.

use serde::{Deserialize, Serialize};

use super::{require_group_classes, PostprocError};
use crate::fairmetrics::ScoreSet;
use crate::learners::{sigmoid, softplus};

const MAX_ITERATIONS: usize = 100;
const RIDGE: f64 = 1e-6;

/// Per-group map `p = 1 / (1 + exp(a·s + b))`, indexed by group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMap {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl CalibrationMap {
    pub fn calibrate(&self, group: u8, score: f64) -> Result<f64, PostprocError> {
        let g = group as usize;
        if g > 1 {
            return Err(PostprocError::UnknownGroup(group));
        }
        Ok(sigmoid(-(self.a[g] * score + self.b[g])))
    }
}

fn objective(a: f64, b: f64, s: &[f64], y: &[u8]) -> f64 {
    let n = s.len() as f64;
    let data: f64 = s
        .iter()
        .zip(y)
        .map(|(&v, &t)| {
            let z = -(a * v + b);
            softplus(z) - f64::from(t) * z
        })
        .sum();
    data / n + 0.5 * RIDGE * (a * a + b * b)
}

/// Damped Newton on the mean log-loss with a small ridge.
fn fit_group(s: &[f64], y: &[u8]) -> (f64, f64) {
    let pos = y.iter().filter(|&&t| t == 1).count() as f64;
    let neg = y.len() as f64 - pos;
    let n = y.len() as f64;
    let (mut a, mut b) = (0.0, ((neg + 1.0) / (pos + 1.0)).ln());
    let mut f = objective(a, b, s, y);
    for _ in 0..MAX_ITERATIONS {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&v, &t) in s.iter().zip(y) {
            let p = sigmoid(-(a * v + b));
            let r = f64::from(t) - p;
            let w = p * (1.0 - p);
            ga += r * v;
            gb += r;
            haa += w * v * v;
            hab += w * v;
            hbb += w;
        }
        ga = ga / n + RIDGE * a;
        gb = gb / n + RIDGE * b;
        haa = haa / n + RIDGE;
        hab /= n;
        hbb = hbb / n + RIDGE;
        if ga.abs().max(gb.abs()) < 1e-12 {
            break;
        }
        let det = haa * hbb - hab * hab;
        let da = -(hbb * ga - hab * gb) / det;
        let db = -(haa * gb - hab * ga) / det;
        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb, s, y);
            if nf.is_finite() && nf < f + 1e-4 * step * (ga * da + gb * db) {
                a = na;
                b = nb;
                f = nf;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (a, b)
}

/// Fits one map per group on validation scores and labels.
pub fn platt_fit(validation: &ScoreSet<f64>) -> Result<CalibrationMap, PostprocError> {
    if validation.is_empty() {
        return Err(PostprocError::EmptyValidation);
    }
    require_group_classes(validation.labels(), validation.sensitive())?;
    let mut map = CalibrationMap {
        a: [0.0; 2],
        b: [0.0; 2],
    };
    for g in 0..2u8 {
        let part = validation.group(g)?;
        let (a, b) = fit_group(part.scores(), part.labels());
        map.a[g as usize] = a;
        map.b[g as usize] = b;
    }
    Ok(map)
}

pub fn platt_apply(
    map: &CalibrationMap,
    s: &ScoreSet<f64>,
) -> Result<ScoreSet<f64>, PostprocError> {
    let scores = s
        .scores()
        .iter()
        .zip(s.sensitive())
        .map(|(&v, &g)| map.calibrate(g, v))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(s.with_scores(scores)?)
}
