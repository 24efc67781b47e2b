//! Stratified k-fold cross-validation of KNN over the warping distance.

use std::time::{Duration as WallTime, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{mean, nearest_neighbors, roc_auc, youden_optimal, Neighbor};
use crate::imatch::{cross_distances, pairwise_distances};
use crate::temporal::DenseSeries;

use super::cohort::Cohort;
use super::grid::MatchConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldMetrics {
    pub auc: f64,
    pub youden_j: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config_id: usize,
    /// `None` for a test fold holding a single class.
    pub folds: Vec<Option<FoldMetrics>>,
    pub mean_auc: f64,
    pub mean_sensitivity: f64,
    pub mean_specificity: f64,
    pub wall_time: WallTime,
}

impl PartialEq for ExperimentResult {
    /// Wall time is not part of a result's identity.
    fn eq(&self, other: &Self) -> bool {
        let bits = |v: f64| v.to_bits();
        self.config_id == other.config_id
            && self.folds == other.folds
            && bits(self.mean_auc) == bits(other.mean_auc)
            && bits(self.mean_sensitivity) == bits(other.mean_sensitivity)
            && bits(self.mean_specificity) == bits(other.mean_specificity)
    }
}

impl ExperimentResult {
    pub fn from_folds(config_id: usize, folds: Vec<Option<FoldMetrics>>, wall_time: WallTime) -> Self {
        let present: Vec<&FoldMetrics> = folds.iter().flatten().collect();
        let avg = |f: fn(&FoldMetrics) -> f64| mean(&present.iter().map(|m| f(m)).collect::<Vec<_>>());
        ExperimentResult {
            config_id,
            mean_auc: avg(|m| m.auc),
            mean_sensitivity: avg(|m| m.sensitivity),
            mean_specificity: avg(|m| m.specificity),
            folds,
            wall_time,
        }
    }

    pub fn fold_aucs(&self) -> Vec<Option<f64>> {
        self.folds.iter().map(|f| f.map(|m| m.auc)).collect()
    }
}

/// Fold index per item. Each class is shuffled with the seeded generator and dealt
/// round-robin, continuing where the previous class stopped, so fold sizes differ by
/// at most one overall and within every class.
pub fn stratified_folds(classes: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; classes.len()];
    let n_classes = classes.iter().max().map_or(0, |m| m + 1);
    let mut dealt = 0;
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == class).collect();
        members.shuffle(&mut rng);
        for m in members {
            assignment[m] = dealt % folds;
            dealt += 1;
        }
    }
    assignment
}

/// Train/test index lists per fold, both in cohort order.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub folds: Vec<(Vec<usize>, Vec<usize>)>,
}

impl FoldPlan {
    pub fn new(cohort: &Cohort, folds: usize, seed: u64) -> Result<FoldPlan> {
        let classes: Vec<usize> = (0..cohort.len()).map(|i| usize::from(cohort.is_positive(i))).collect();
        for class in &cohort.classes {
            let count = cohort.entities.iter().filter(|e| &e.label == class).count();
            if count < folds {
                return Err(Error::Precondition(format!(
                    "class `{class}` has {count} entities after exclusions, fewer than {folds} folds"
                )));
            }
        }
        let assignment = stratified_folds(&classes, folds, seed);
        let plan = (0..folds)
            .map(|f| {
                let (test, train): (Vec<usize>, Vec<usize>) = (0..cohort.len()).partition(|&i| assignment[i] == f);
                (train, test)
            })
            .collect();
        Ok(FoldPlan { folds: plan })
    }

    pub fn max_k(&self) -> usize {
        self.folds.iter().map(|(train, _)| train.len()).min().unwrap_or(0)
    }
}

fn same_group(a: &MatchConfig, b: &MatchConfig) -> bool {
    a.concepts == b.concepts
        && a.representations == b.representations
        && a.interpolation == b.interpolation
        && a.duration_delegate == b.duration_delegate
        && a.band == b.band
        && a.timeline == b.timeline
        && a.granularity == b.granularity
}

/// Test × train distances for every fold. Abstract representations do not depend on
/// the training set, so one all-pairs matrix serves every fold; raw ones are
/// normalized with statistics fit on each training fold.
fn fold_distances(cohort: &Cohort, config: &MatchConfig, plan: &FoldPlan) -> Result<Vec<Vec<Vec<f64>>>> {
    let all: Vec<usize> = (0..cohort.len()).collect();
    let band = cohort.band_for(config)?;
    if !config.is_raw() {
        let series = all
            .par_iter()
            .map(|&i| cohort.series(i, config, None))
            .collect::<Result<Vec<DenseSeries>>>()?;
        let dm = pairwise_distances(&series, band)?;
        return Ok(plan
            .folds
            .iter()
            .map(|(train, test)| test.iter().map(|&t| train.iter().map(|&r| dm.get(t, r)).collect()).collect())
            .collect());
    }
    plan.folds
        .iter()
        .map(|(train, test)| {
            let stats = cohort.fit_stats(train, &config.concepts)?;
            let series = all
                .par_iter()
                .map(|&i| cohort.series(i, config, Some(&stats)))
                .collect::<Result<Vec<DenseSeries>>>()?;
            let q: Vec<&DenseSeries> = test.iter().map(|&i| &series[i]).collect();
            let r: Vec<&DenseSeries> = train.iter().map(|&i| &series[i]).collect();
            cross_distances(&q, &r, band)
        })
        .collect()
}

/// Runs cross-validation for configs that differ only in `k`, sharing their distances.
pub fn evaluate_group(cohort: &Cohort, configs: &[&MatchConfig], plan: &FoldPlan) -> Result<Vec<ExperimentResult>> {
    let Some(first) = configs.first() else {
        return Ok(Vec::new());
    };
    if let Some(odd) = configs.iter().find(|c| !same_group(first, c)) {
        return Err(Error::Precondition(format!("config {odd} does not share distances with {first}")));
    }
    let k_max = configs.iter().map(|c| c.k).max().unwrap_or(1);
    if k_max > plan.max_k() {
        return Err(Error::Precondition(format!(
            "k = {k_max} exceeds the smallest training fold ({})",
            plan.max_k()
        )));
    }
    for (f, (train, _)) in plan.folds.iter().enumerate() {
        let pos = train.iter().filter(|&&i| cohort.is_positive(i)).count();
        if pos == 0 || pos == train.len() {
            return Err(Error::Precondition(format!("training fold {} holds a single class", f + 1)));
        }
    }
    let started = Instant::now();
    let distances = fold_distances(cohort, first, plan)?;

    // Positive-neighbour prefix counts per fold and test entity, up to k_max.
    let prefixes: Vec<Vec<Vec<usize>>> = plan
        .folds
        .iter()
        .zip(&distances)
        .map(|((train, test), rows)| {
            test.iter()
                .zip(rows)
                .map(|(_, row)| {
                    let candidates: Vec<Neighbor> = train
                        .iter()
                        .zip(row)
                        .map(|(&r, &d)| Neighbor {
                            entity: cohort.entities[r].id.clone(),
                            distance: d,
                            label: cohort.entities[r].label.clone(),
                        })
                        .collect();
                    let set = nearest_neighbors(&candidates, k_max)?;
                    Ok(set
                        .neighbors
                        .iter()
                        .scan(0, |acc, n| {
                            *acc += usize::from(n.label == cohort.positive);
                            Some(*acc)
                        })
                        .collect())
                })
                .collect::<Result<Vec<Vec<usize>>>>()
        })
        .collect::<Result<_>>()?;

    let per_config = started.elapsed() / configs.len() as u32;
    configs
        .iter()
        .map(|cfg| {
            let folds = plan
                .folds
                .iter()
                .zip(&prefixes)
                .enumerate()
                .map(|(f, ((_, test), pre))| {
                    let scores: Vec<f64> = pre.iter().map(|p| p[cfg.k - 1] as f64 / cfg.k as f64).collect();
                    let labels: Vec<bool> = test.iter().map(|&i| cohort.is_positive(i)).collect();
                    score_fold(cfg.id, f, &scores, &labels)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ExperimentResult::from_folds(cfg.id, folds, per_config))
        })
        .collect()
}

fn score_fold(config_id: usize, fold: usize, scores: &[f64], labels: &[bool]) -> Result<Option<FoldMetrics>> {
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        log::warn!(
            "config {config_id}: test fold {} holds a single class; AUC undefined, fold skipped",
            fold + 1
        );
        return Ok(None);
    }
    let y = youden_optimal(scores, labels)?;
    Ok(Some(FoldMetrics {
        auc: roc_auc(scores, labels)?,
        youden_j: y.j,
        sensitivity: y.sensitivity,
        specificity: y.specificity,
        threshold: y.threshold,
    }))
}

/// Cross-validates a single config.
pub fn run_cv(cohort: &Cohort, config: &MatchConfig, folds: usize, seed: u64) -> Result<ExperimentResult> {
    let plan = FoldPlan::new(cohort, folds, seed)?;
    Ok(evaluate_group(cohort, &[config], &plan)?.remove(0))
}
