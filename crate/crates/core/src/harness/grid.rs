//! The experiment grid: concept subsets × representation assignments × interpolation ×
//! aggregation × band × k.

use std::fmt;

use crate::abstraction::Representation;
use crate::error::{Error, Result};
use crate::gbr::InterpolationMethod;
use crate::imatch::BandPolicy;
use crate::kb::DurationDelegate;
use crate::scoping::TimelineSpec;
use crate::temporal::Granularity;

use super::config::ExperimentConfig;

/// One point of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    pub id: usize,
    /// Configs differing only in `k` share a group and therefore their distances.
    pub group: usize,
    pub concepts: Vec<String>,
    /// One per concept; either all raw or all abstract.
    pub representations: Vec<Representation>,
    pub interpolation: InterpolationMethod,
    pub duration_delegate: DurationDelegate,
    pub band: BandPolicy,
    pub k: usize,
    pub timeline: TimelineSpec,
    pub granularity: Granularity,
}

impl MatchConfig {
    pub fn is_raw(&self) -> bool {
        self.representations.iter().all(|r| r.is_raw())
    }

    /// `WBC:S+HGB:G`.
    pub fn assignment(&self) -> String {
        self.concepts
            .iter()
            .zip(&self.representations)
            .map(|(c, r)| format!("{c}:{r}"))
            .collect::<Vec<_>>()
            .join("+")
    }
}

impl fmt::Display for MatchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "#{} {} interp={} agg={} band={} k={}",
            self.id,
            self.assignment(),
            self.interpolation,
            self.duration_delegate,
            self.band,
            self.k
        )
    }
}

/// Grid dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub concepts: Vec<String>,
    pub max_concepts: usize,
    pub interpolations: Vec<InterpolationMethod>,
    pub aggregations: Vec<DurationDelegate>,
    pub bands: Vec<BandPolicy>,
    pub ks: Vec<usize>,
    pub timeline: TimelineSpec,
    pub granularity: Granularity,
}

fn choose(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Closed-form grid size: `(sum_k C(c, k) (3^k + 1)) * i * a * w * n`.
pub fn experiment_count(c: usize, max_concepts: usize, i: usize, a: usize, w: usize, n: usize) -> u64 {
    let assignments: u64 = (1..=max_concepts.min(c) as u64)
        .map(|k| choose(c as u64, k) * (3u64.pow(k as u32) + 1))
        .sum();
    assignments * (i * a * w * n) as u64
}

/// Index subsets of `0..n` of size `k`, lexicographic.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < n - k + p) else {
            return out;
        };
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// All-raw first, then every abstract assignment with the first concept varying slowest.
fn assignments(k: usize) -> Vec<Vec<Representation>> {
    let mut out = vec![vec![Representation::Raw; k]];
    let total = 3usize.pow(k as u32);
    for code in 0..total {
        let mut rest = code;
        let mut reps = vec![Representation::State; k];
        for slot in (0..k).rev() {
            reps[slot] = Representation::ABSTRACT[rest % 3];
            rest /= 3;
        }
        out.push(reps);
    }
    out
}

impl GridSpec {
    pub fn from_experiment(cfg: &ExperimentConfig, n_entities: usize) -> GridSpec {
        GridSpec {
            concepts: cfg.concepts.clone(),
            max_concepts: cfg.max_concepts,
            interpolations: cfg.interpolations.clone(),
            aggregations: cfg.aggregations.clone(),
            bands: cfg.bands.clone(),
            ks: cfg.k.resolve(n_entities),
            timeline: cfg.timeline.clone(),
            granularity: cfg.granularity,
        }
    }

    pub fn count(&self) -> u64 {
        experiment_count(
            self.concepts.len(),
            self.max_concepts,
            self.interpolations.len(),
            self.aggregations.len(),
            self.bands.len(),
            self.ks.len(),
        )
    }

    /// Materializes every config; `k` varies fastest, so a group is a run of
    /// `ks.len()` consecutive ids.
    pub fn enumerate(&self) -> Vec<MatchConfig> {
        let mut out = Vec::with_capacity(self.count() as usize);
        for size in 1..=self.max_concepts.min(self.concepts.len()) {
            for subset in combinations(self.concepts.len(), size) {
                let concepts: Vec<String> = subset.iter().map(|&i| self.concepts[i].clone()).collect();
                for reps in assignments(size) {
                    for &interpolation in &self.interpolations {
                        for &duration_delegate in &self.aggregations {
                            for &band in &self.bands {
                                let group = out.len() / self.ks.len().max(1);
                                for &k in &self.ks {
                                    out.push(MatchConfig {
                                        id: out.len(),
                                        group,
                                        concepts: concepts.clone(),
                                        representations: reps.clone(),
                                        interpolation,
                                        duration_delegate,
                                        band,
                                        k,
                                        timeline: self.timeline.clone(),
                                        granularity: self.granularity,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Enumerates a grid over `c` placeholder concepts with the first `i` interpolation
/// methods, `a` duration delegates, `w` bands and the first `n` odd `k` values.
pub fn enumerate_experiments(
    c: usize,
    max_concepts: usize,
    i: usize,
    a: usize,
    w: usize,
    n: usize,
) -> Result<Vec<MatchConfig>> {
    const METHODS: [InterpolationMethod; 4] = [
        InterpolationMethod::NearestNeighbor,
        InterpolationMethod::Linear,
        InterpolationMethod::Average,
        InterpolationMethod::Ibap,
    ];
    if max_concepts > c {
        return Err(Error::Precondition(format!("max_concepts {max_concepts} exceeds {c} concepts")));
    }
    if i > METHODS.len() || a > 2 {
        return Err(Error::Precondition(format!(
            "at most {} interpolation methods and 2 aggregations exist",
            METHODS.len()
        )));
    }
    let mut bands = vec![BandPolicy::SakoeChibaPercent(10.0), BandPolicy::Unconstrained];
    bands.extend((0..w.saturating_sub(2)).map(BandPolicy::KbBand));
    bands.truncate(w);
    let spec = GridSpec {
        concepts: (1..=c).map(|j| format!("C{j}")).collect(),
        max_concepts,
        interpolations: METHODS[..i].to_vec(),
        aggregations: [DurationDelegate::Li, DurationDelegate::Mtt][..a].to_vec(),
        bands,
        ks: (0..n).map(|j| 2 * j + 1).collect(),
        timeline: TimelineSpec::Absolute { start: 0, end: 1 },
        granularity: Granularity::DAY,
    };
    Ok(spec.enumerate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn published_grid_sizes() {
        assert_eq!(experiment_count(5, 3, 3, 2, 2, 7), 33_600);
        assert_eq!(experiment_count(5, 3, 3, 2, 2, 6), 28_800);
        assert_eq!(experiment_count(4, 3, 3, 2, 2, 6), 13_536);
        assert_eq!(enumerate_experiments(5, 3, 3, 2, 2, 7).unwrap().len(), 33_600);
        assert_eq!(enumerate_experiments(4, 3, 3, 2, 2, 6).unwrap().len(), 13_536);
    }

    #[test]
    fn configs_never_mix_raw_and_abstract() {
        for cfg in enumerate_experiments(4, 3, 1, 1, 1, 1).unwrap() {
            let raw = cfg.representations.iter().filter(|r| r.is_raw()).count();
            assert!(raw == 0 || raw == cfg.representations.len(), "{cfg}");
        }
    }

    #[test]
    fn groups_are_k_runs() {
        let configs = enumerate_experiments(3, 2, 2, 2, 2, 3).unwrap();
        for (i, c) in configs.iter().enumerate() {
            assert_eq!(c.id, i);
            assert_eq!(c.group, i / 3);
            assert_eq!(c.k, [1, 3, 5][i % 3]);
        }
        let first = &configs[0];
        assert_eq!(first.assignment(), "C1:R");
        assert_eq!(configs[3].interpolation, InterpolationMethod::NearestNeighbor);
        assert_eq!(configs[3].duration_delegate, DurationDelegate::Li);
        assert_eq!(configs[3].band, BandPolicy::Unconstrained);
    }

    #[test]
    fn assignment_order() {
        let a = assignments(2);
        assert_eq!(a.len(), 10);
        assert_eq!(a[0], vec![Representation::Raw; 2]);
        assert_eq!(a[1], vec![Representation::State, Representation::State]);
        assert_eq!(a[2], vec![Representation::State, Representation::Gradient]);
        assert_eq!(a[9], vec![Representation::StateAndGradient; 2]);
    }

    #[test]
    fn bad_arguments() {
        assert!(enumerate_experiments(2, 3, 1, 1, 1, 1).is_err());
        assert!(enumerate_experiments(2, 1, 5, 1, 1, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn closed_form_matches_enumeration(
            c in 1usize..=6, m in 1usize..=6, i in 1usize..=4, a in 1usize..=2, w in 1usize..=3, n in 1usize..=2
        ) {
            let m = m.min(c);
            let listed = enumerate_experiments(c, m, i, a, w, n).unwrap();
            prop_assert_eq!(listed.len() as u64, experiment_count(c, m, i, a, w, n));
            let mut keys: Vec<String> = listed.iter().map(|c| c.to_string()).collect();
            keys.iter_mut().for_each(|k| *k = k.split_once(' ').unwrap().1.to_string());
            keys.sort();
            keys.dedup();
            prop_assert_eq!(keys.len(), listed.len());
        }
    }
}
