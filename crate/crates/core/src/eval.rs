//! KNN classification from pairwise distances, and the evaluation metrics: ROC/AUC,
//! Youden's optimal operating point and the paired t-test.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// A labeled training entity at some distance from the query.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub entity: String,
    pub distance: f64,
    pub label: String,
}

/// The `k` nearest neighbors, ascending by `(distance, entity)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub neighbors: Vec<Neighbor>,
}

fn by_distance_then_id(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance.total_cmp(&b.distance).then_with(|| a.entity.cmp(&b.entity))
}

pub fn check_k(k: usize) -> Result<()> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::Config(format!("k must be a positive odd integer, got {k}")));
    }
    Ok(())
}

/// Selects the `k` nearest candidates. Ties at equal distance fall back to entity id.
pub fn nearest_neighbors(candidates: &[Neighbor], k: usize) -> Result<NeighborSet> {
    check_k(k)?;
    if k > candidates.len() {
        return Err(Error::Precondition(format!(
            "k = {k} exceeds the {} labeled entities",
            candidates.len()
        )));
    }
    let mut sorted: Vec<&Neighbor> = candidates.iter().collect();
    if k < sorted.len() {
        sorted.select_nth_unstable_by(k - 1, |a, b| by_distance_then_id(a, b));
        sorted.truncate(k);
    }
    sorted.sort_by(|a, b| by_distance_then_id(a, b));
    Ok(NeighborSet {
        neighbors: sorted.into_iter().cloned().collect(),
    })
}

/// Fraction of the `k` nearest neighbors in each of `classes`. Classes without a
/// neighbor get probability 0.
pub fn knn_posterior(candidates: &[Neighbor], k: usize, classes: &[&str]) -> Result<BTreeMap<String, f64>> {
    let set = nearest_neighbors(candidates, k)?;
    let mut counts: BTreeMap<String, usize> = classes.iter().map(|c| (c.to_string(), 0)).collect();
    for n in &set.neighbors {
        *counts.entry(n.label.clone()).or_insert(0) += 1;
    }
    Ok(counts.into_iter().map(|(c, n)| (c, n as f64 / k as f64)).collect())
}

/// Odd `k` from 1 up to `round(sqrt(n))`, rounding half up.
pub fn k_values(n_total: usize) -> Vec<usize> {
    let mut r = (n_total as f64).sqrt() as usize;
    while r * r > n_total {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n_total {
        r += 1;
    }
    // sqrt(n) >= r + 1/2  <=>  n >= r^2 + r + 1/4  <=>  n > r^2 + r
    if n_total > r * r + r {
        r += 1;
    }
    (1..=r.max(1)).step_by(2).collect()
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let p = labels.iter().filter(|&&l| l).count();
    (p, labels.len() - p)
}

fn check_scored(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Arity {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Precondition("NaN score".into()));
    }
    let (p, n) = class_counts(labels);
    if p == 0 || n == 0 {
        return Err(Error::Precondition(format!(
            "ROC needs both classes ({p} positive, {n} negative)"
        )));
    }
    Ok((p, n))
}

/// Area under the ROC curve as the Mann-Whitney statistic with midranks, i.e. the
/// fraction of (positive, negative) pairs ranked correctly, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (p, n) = check_scored(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps midranks integral.
    let mut twice_rank_sum = 0u128;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u128;
        twice_rank_sum += twice_mid * order[i..=j].iter().filter(|&&e| labels[e]).count() as u128;
        i = j + 1;
    }
    let (p, n) = (p as u128, n as u128);
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Confusion {
    tp: usize,
    tn: usize,
}

/// Confusion counts for the rule `score >= threshold`, one entry per distinct score,
/// descending.
fn sweep(scores: &[f64], labels: &[bool]) -> Vec<(f64, Confusion)> {
    let (_, n) = class_counts(labels);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let thr = scores[order[i]];
        while i < order.len() && scores[order[i]] == thr {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((thr, Confusion { tp, tn: n - fp }));
    }
    out
}

/// ROC curve starting at `(+inf, 0, 1)` and descending through every distinct score.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    let (p, n) = check_scored(scores, labels)?;
    let mut curve = vec![RocPoint {
        threshold: f64::INFINITY,
        sensitivity: 0.0,
        specificity: 1.0,
    }];
    curve.extend(sweep(scores, labels).into_iter().map(|(thr, c)| RocPoint {
        threshold: thr,
        sensitivity: c.tp as f64 / p as f64,
        specificity: c.tn as f64 / n as f64,
    }));
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoudenPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub j: f64,
}

/// Maximizes `J = sensitivity + specificity - 1` over the distinct scores used as
/// thresholds for `score >= threshold`. Ties prefer higher sensitivity, then the lower
/// threshold.
pub fn youden_optimal(scores: &[f64], labels: &[bool]) -> Result<YoudenPoint> {
    let (p, n) = check_scored(scores, labels)?;
    // J * p * n, exact in integers.
    let scaled = |c: &Confusion| (c.tp * n + c.tn * p) as i128 - (p * n) as i128;
    let mut best: Option<(f64, Confusion)> = None;
    for (thr, c) in sweep(scores, labels) {
        let better = match &best {
            None => true,
            Some((bthr, b)) => match (scaled(&c), c.tp).cmp(&(scaled(b), b.tp)) {
                Ordering::Greater => true,
                Ordering::Equal => thr < *bthr,
                Ordering::Less => false,
            },
        };
        if better {
            best = Some((thr, c));
        }
    }
    let (threshold, c) = best.expect("at least one score");
    let sensitivity = c.tp as f64 / p as f64;
    let specificity = c.tn as f64 / n as f64;
    Ok(YoudenPoint {
        threshold,
        sensitivity,
        specificity,
        j: scaled(&c) as f64 / (p * n) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    /// Differences were constant and nonzero: `t` is infinite and `p` the limit 0.
    pub degenerate: bool,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Arity {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Precondition(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let df = n - 1;
    let mean = d.iter().sum::<f64>() / n as f64;
    let ss: f64 = d.iter().map(|x| (x - mean) * (x - mean)).sum();
    let first = d[0];
    if d.iter().all(|&x| x == first) {
        return Ok(if first == 0.0 {
            TTest { t: 0.0, p: 1.0, df, degenerate: false }
        } else {
            TTest {
                t: f64::INFINITY.copysign(first),
                p: 0.0,
                df,
                degenerate: true,
            }
        });
    }
    let se = (ss / df as f64 / n as f64).sqrt();
    let t = mean / se;
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Precondition(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { t, p, df, degenerate: false })
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance (divide by `n - 1`); 0 for fewer than two values.
pub fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}
