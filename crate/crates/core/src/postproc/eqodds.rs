//! Equalized odds by group-specific randomized cutoffs.
//!
//! Each group's achievable (FPR, TPR) pairs are the chords between points of
//! its ROC curve. The fit searches target points reachable by both groups
//! and keeps the one with the lowest expected misclassification cost
//! `Σ_g N⁻_g·FPR·E[B] + N⁺_g·FNR·C`.

use std::io::{BufRead, BufReader, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{class_counts, require_group_classes, PostprocError};
use crate::fairmetrics::ScoreSet;
use crate::profit::CostModel;

pub const EQODDS_EPSILON: f64 = 0.02;
const GRID: usize = 100;
const MAX_SUPPORT: usize = 64;

/// Accept when `score > upper`, reject when `score <= lower`, otherwise
/// accept with probability `mix`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRule {
    pub lower: f64,
    pub upper: f64,
    pub mix: f64,
}

impl GroupRule {
    fn pure(cutoff: f64) -> Self {
        Self {
            lower: cutoff,
            upper: cutoff,
            mix: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDecisionRule {
    pub groups: [GroupRule; 2],
    pub seed: u64,
    pub epsilon: f64,
    /// Target (FPR, TPR).
    pub target: (f64, f64),
    /// Expected (FPR, TPR) of each group on the fitting data.
    pub realized: [(f64, f64); 2],
    /// Expected misclassification cost on the fitting data.
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RocPoint {
    cutoff: f64,
    fpr: f64,
    tpr: f64,
}

/// ROC points for `accept if s > c`, ordered from accept-all (cutoff −1) to
/// accept-none (the largest score).
fn roc_points(scores: &[f64], labels: &[u8]) -> Vec<RocPoint> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let (mut fp, mut tp) = (neg, pos);
    let mut out = vec![RocPoint {
        cutoff: -1.0,
        fpr: 1.0,
        tpr: 1.0,
    }];
    let mut i = 0;
    while i < order.len() {
        let v = scores[order[i]];
        while i < order.len() && scores[order[i]] == v {
            if labels[order[i]] == 1 {
                tp -= 1.0;
            } else {
                fp -= 1.0;
            }
            i += 1;
        }
        out.push(RocPoint {
            cutoff: v,
            fpr: fp / neg,
            tpr: tp / pos,
        });
    }
    out
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Upper (`upper = true`) or lower convex hull of the points, by ascending FPR.
fn hull(points: &[RocPoint], upper: bool) -> Vec<RocPoint> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(a.tpr.total_cmp(&b.tpr)));
    let mut h: Vec<RocPoint> = Vec::new();
    for p in pts {
        while h.len() >= 2 {
            let c = cross(
                (h[h.len() - 2].fpr, h[h.len() - 2].tpr),
                (h[h.len() - 1].fpr, h[h.len() - 1].tpr),
                (p.fpr, p.tpr),
            );
            if (upper && c >= 0.0) || (!upper && c <= 0.0) {
                h.pop();
            } else {
                break;
            }
        }
        h.push(p);
    }
    if upper {
        // keep the highest TPR at equal FPR
        h.dedup_by(|b, a| {
            a.fpr == b.fpr && {
                a.tpr = a.tpr.max(b.tpr);
                true
            }
        });
    } else {
        h.dedup_by(|b, a| {
            a.fpr == b.fpr && {
                a.tpr = a.tpr.min(b.tpr);
                true
            }
        });
    }
    h
}

fn hull_at(h: &[RocPoint], f: f64) -> f64 {
    if f <= h[0].fpr {
        return h[0].tpr;
    }
    for w in h.windows(2) {
        if f <= w[1].fpr {
            let t = (f - w[0].fpr) / (w[1].fpr - w[0].fpr);
            return w[0].tpr + t * (w[1].tpr - w[0].tpr);
        }
    }
    h[h.len() - 1].tpr
}

struct GroupGeometry {
    support: Vec<RocPoint>,
    upper: Vec<RocPoint>,
    lower: Vec<RocPoint>,
    neg: f64,
    pos: f64,
}

impl GroupGeometry {
    fn new(scores: &[f64], labels: &[u8]) -> Self {
        let roc = roc_points(scores, labels);
        let upper = hull(&roc, true);
        let lower = hull(&roc, false);
        let mut support: Vec<RocPoint> = if roc.len() <= MAX_SUPPORT {
            roc.clone()
        } else {
            (0..MAX_SUPPORT)
                .map(|k| roc[k * (roc.len() - 1) / (MAX_SUPPORT - 1)])
                .collect()
        };
        support.extend(upper.iter().chain(&lower).copied());
        support.sort_by(|a, b| a.cutoff.total_cmp(&b.cutoff));
        support.dedup_by(|a, b| a.cutoff == b.cutoff);
        let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
        Self {
            support,
            upper,
            lower,
            neg: labels.len() as f64 - pos,
            pos,
        }
    }

    fn admits(&self, f: f64, t: f64) -> bool {
        const TOL: f64 = 1e-12;
        t <= hull_at(&self.upper, f) + TOL && t >= hull_at(&self.lower, f) - TOL
    }

    /// Closest realizable rule to `target` in the max-norm. Pure cutoffs
    /// win ties.
    fn realize(&self, target: (f64, f64)) -> (GroupRule, (f64, f64), f64) {
        let dist = |f: f64, t: f64| (f - target.0).abs().max((t - target.1).abs());
        let mut best = (
            GroupRule::pure(self.support[0].cutoff),
            (1.0, 1.0),
            f64::INFINITY,
        );
        for p in &self.support {
            let d = dist(p.fpr, p.tpr);
            if d < best.2 {
                best = (GroupRule::pure(p.cutoff), (p.fpr, p.tpr), d);
            }
        }
        // support is sorted by cutoff: index i has the lower cutoff
        for (i, lo) in self.support.iter().enumerate() {
            for hi in &self.support[i + 1..] {
                let a = (hi.fpr - target.0, hi.tpr - target.1);
                let b = (lo.fpr - hi.fpr, lo.tpr - hi.tpr);
                let mut cands = vec![0.0, 1.0];
                if b.0 != 0.0 {
                    cands.push(-a.0 / b.0);
                }
                if b.1 != 0.0 {
                    cands.push(-a.1 / b.1);
                }
                if b.0 != b.1 {
                    cands.push((a.1 - a.0) / (b.0 - b.1));
                }
                if b.0 != -b.1 {
                    cands.push(-(a.0 + a.1) / (b.0 + b.1));
                }
                for p in cands {
                    let p = p.clamp(0.0, 1.0);
                    let (f, t) = (hi.fpr + p * b.0, hi.tpr + p * b.1);
                    let d = dist(f, t);
                    if d < best.2 {
                        best = (
                            GroupRule {
                                lower: lo.cutoff,
                                upper: hi.cutoff,
                                mix: p,
                            },
                            (f, t),
                            d,
                        );
                    }
                }
            }
        }
        best
    }
}

fn cost(geo: &[GroupGeometry; 2], rates: [(f64, f64); 2], cm: &CostModel<f64>) -> f64 {
    let eb = cm.expected_loss();
    geo.iter()
        .zip(rates)
        .map(|(g, (f, t))| g.neg * f * eb + g.pos * (1.0 - t) * cm.roi)
        .sum()
}

/// Fits group rules whose expected rates on `validation` differ by at most
/// `epsilon` in both FPR and TPR.
pub fn equalized_odds_fit(
    validation: &ScoreSet<f64>,
    cm: &CostModel<f64>,
    epsilon: f64,
    seed: u64,
) -> Result<GroupDecisionRule, PostprocError> {
    if validation.is_empty() {
        return Err(PostprocError::EmptyValidation);
    }
    if !(epsilon > 0.0) {
        return Err(PostprocError::InvalidSpec(format!("epsilon {epsilon}")));
    }
    require_group_classes(validation.labels(), validation.sensitive())?;
    let geo = [0u8, 1].map(|g| {
        let part = validation.group(g).expect("group checked");
        GroupGeometry::new(part.scores(), part.labels())
    });

    let step = 1.0 / (GRID - 1) as f64;
    let mut targets: Vec<(f64, f64)> = Vec::with_capacity(GRID * GRID + 2 * GRID);
    for i in 0..GRID {
        let f = i as f64 * step;
        for j in 0..GRID {
            targets.push((f, j as f64 * step));
        }
        targets.push((f, hull_at(&geo[0].upper, f).min(hull_at(&geo[1].upper, f))));
    }
    for g in &geo {
        targets.extend(g.upper.iter().map(|p| (p.fpr, p.tpr)));
    }
    targets.retain(|&(f, t)| geo.iter().all(|g| g.admits(f, t)));
    let half = 0.5 * epsilon;
    let mut scored: Vec<(f64, (f64, f64))> = targets
        .into_iter()
        .map(|tg| (cost(&geo, [tg, tg], cm), tg))
        .collect();
    scored.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1 .0.total_cmp(&b.1 .0))
            .then(a.1 .1.total_cmp(&b.1 .1))
    });
    for (_, target) in scored {
        let (r0, p0, d0) = geo[0].realize(target);
        if d0 > half {
            continue;
        }
        let (r1, p1, d1) = geo[1].realize(target);
        if d1 > half {
            continue;
        }
        return Ok(GroupDecisionRule {
            groups: [r0, r1],
            seed,
            epsilon,
            target,
            realized: [p0, p1],
            cost: cost(&geo, [p0, p1], cm),
        });
    }
    Err(PostprocError::InfeasibleTarget)
}

/// Accept/reject decisions; scores strictly between a group's cutoffs are
/// decided by a seeded coin, drawn in row order.
pub fn equalized_odds_apply(
    rule: &GroupDecisionRule,
    s: &ScoreSet<f64>,
    seed: u64,
) -> Result<Vec<u8>, PostprocError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    s.scores()
        .iter()
        .zip(s.sensitive())
        .map(|(&v, &a)| {
            let r = rule
                .groups
                .get(a as usize)
                .ok_or(PostprocError::UnknownGroup(a))?;
            Ok(if v > r.upper {
                1
            } else if v <= r.lower {
                0
            } else {
                u8::from(rng.random::<f64>() < r.mix)
            })
        })
        .collect()
}

/// Probability-weighted (FPR, TPR) of each group under the rule.
pub fn expected_group_rates(
    rule: &GroupDecisionRule,
    s: &ScoreSet<f64>,
) -> Result<[(f64, f64); 2], PostprocError> {
    let n = class_counts(s.labels(), s.sensitive());
    let mut accepted = [[0.0; 2]; 2];
    for ((&v, &y), &a) in s.scores().iter().zip(s.labels()).zip(s.sensitive()) {
        let r = rule.groups[a as usize];
        let p = if v > r.upper {
            1.0
        } else if v <= r.lower {
            0.0
        } else {
            r.mix
        };
        accepted[a as usize][y as usize] += p;
    }
    let mut out = [(0.0, 0.0); 2];
    for g in 0..2 {
        if n[g][0] == 0 || n[g][1] == 0 {
            return Err(PostprocError::EmptyGroupClass {
                group: g as u8,
                label: if n[g][0] == 0 { 0 } else { 1 },
            });
        }
        out[g] = (
            accepted[g][0] / n[g][0] as f64,
            accepted[g][1] / n[g][1] as f64,
        );
    }
    Ok(out)
}

const MAGIC: &str = "fairscore-eqodds 1";

/// Writes the rule as text; floats round-trip exactly.
pub fn write_rule(rule: &GroupDecisionRule, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "seed {}", rule.seed)?;
    writeln!(out, "epsilon {:?}", rule.epsilon)?;
    writeln!(out, "target {:?} {:?}", rule.target.0, rule.target.1)?;
    writeln!(out, "cost {:?}", rule.cost)?;
    for (g, (r, p)) in rule.groups.iter().zip(&rule.realized).enumerate() {
        writeln!(
            out,
            "group {g} {:?} {:?} {:?} {:?} {:?}",
            r.lower, r.upper, r.mix, p.0, p.1
        )?;
    }
    Ok(())
}

pub fn read_rule(input: impl Read) -> Result<GroupDecisionRule, PostprocError> {
    let bad = |m: &str| PostprocError::Format(m.to_string());
    let lines: Vec<String> = BufReader::new(input)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| bad(&e.to_string()))?;
    if lines.first().map(String::as_str) != Some(MAGIC) {
        return Err(bad(
            "not an equalized-odds rule file (or unsupported version)",
        ));
    }
    let field = |key: &str| -> Result<Vec<&str>, PostprocError> {
        lines
            .iter()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
            .map(|r| r.split_whitespace().collect())
            .ok_or_else(|| bad(&format!("missing `{key}`")))
    };
    let num = |s: &str| s.parse::<f64>().map_err(|e| bad(&format!("`{s}`: {e}")));
    let seed = field("seed")?
        .first()
        .ok_or_else(|| bad("empty seed"))?
        .parse::<u64>()
        .map_err(|e| bad(&e.to_string()))?;
    let epsilon = num(field("epsilon")?
        .first()
        .ok_or_else(|| bad("empty epsilon"))?)?;
    let t = field("target")?;
    if t.len() != 2 {
        return Err(bad("target needs two values"));
    }
    let target = (num(t[0])?, num(t[1])?);
    let cost = num(field("cost")?.first().ok_or_else(|| bad("empty cost"))?)?;
    let mut groups = [GroupRule::pure(0.0); 2];
    let mut realized = [(0.0, 0.0); 2];
    for g in 0..2u8 {
        let v = field(&format!("group {g}")).map_err(|_| PostprocError::UnknownGroup(g))?;
        if v.len() != 5 {
            return Err(bad("group line needs five values"));
        }
        groups[g as usize] = GroupRule {
            lower: num(v[0])?,
            upper: num(v[1])?,
            mix: num(v[2])?,
        };
        realized[g as usize] = (num(v[3])?, num(v[4])?);
    }
    Ok(GroupDecisionRule {
        groups,
        seed,
        epsilon,
        target,
        realized,
        cost,
    })
}
