//! Raw samples to normalized interval sequences.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kb::{ConceptDef, StateDef, ValueType};
use crate::temporal::{Interval, IntervalTag, Sample, SampleValue, UnivariateESequence};

/// How one base concept is presented to the matcher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Representation {
    Raw,
    State,
    Gradient,
    StateAndGradient,
}

impl Representation {
    pub const ABSTRACT: [Representation; 3] = [
        Representation::State,
        Representation::Gradient,
        Representation::StateAndGradient,
    ];

    /// Feature rows this representation expands to, in row order.
    pub fn kinds(self) -> &'static [AbstractionKind] {
        match self {
            Representation::Raw => &[AbstractionKind::Raw],
            Representation::State => &[AbstractionKind::State],
            Representation::Gradient => &[AbstractionKind::Gradient],
            Representation::StateAndGradient => &[AbstractionKind::State, AbstractionKind::Gradient],
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Representation::Raw => "R",
            Representation::State => "S",
            Representation::Gradient => "G",
            Representation::StateAndGradient => "SG",
        }
    }

    pub fn is_raw(self) -> bool {
        self == Representation::Raw
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "R" | "RAW" => Ok(Representation::Raw),
            "S" | "STATE" => Ok(Representation::State),
            "G" | "GRADIENT" => Ok(Representation::Gradient),
            "SG" | "GS" | "STATE+GRADIENT" => Ok(Representation::StateAndGradient),
            other => Err(Error::Config(format!("unknown representation `{other}`"))),
        }
    }
}

/// The kind of a single feature row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AbstractionKind {
    Raw,
    State,
    Gradient,
}

impl AbstractionKind {
    pub fn suffix(self) -> &'static str {
        match self {
            AbstractionKind::Raw => "raw",
            AbstractionKind::State => "state",
            AbstractionKind::Gradient => "gradient",
        }
    }

    pub fn feature_name(self, concept: &str) -> String {
        format!("{concept}.{}", self.suffix())
    }
}

/// Direction of change between two consecutive samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trend {
    Decreasing,
    Same,
    Increasing,
}

impl Trend {
    pub fn label(self) -> &'static str {
        match self {
            Trend::Decreasing => "DECREASING",
            Trend::Same => "SAME",
            Trend::Increasing => "INCREASING",
        }
    }

    /// Min-max scaled ordinal position among the three trend values.
    pub fn normalized(self) -> f64 {
        match self {
            Trend::Decreasing => 0.0,
            Trend::Same => 0.5,
            Trend::Increasing => 1.0,
        }
    }

    pub fn classify(from: f64, to: f64, concept: &ConceptDef) -> Trend {
        let delta = to - from;
        let threshold = concept.variation.threshold_at(from);
        if delta > 0.0 && delta >= threshold {
            Trend::Increasing
        } else if delta < 0.0 && -delta >= threshold {
            Trend::Decreasing
        } else {
            Trend::Same
        }
    }
}

/// Min-max scaling of a state's ordinal position to `[0, 1]`.
pub fn normalize_symbolic(state: &StateDef, concept: &ConceptDef) -> Result<f64> {
    let n = concept.states.len();
    if n < 2 {
        return Err(Error::Precondition(format!(
            "concept `{}` has a single state; its scale is undefined",
            concept.name
        )));
    }
    if concept.states.get(state.ordinal.wrapping_sub(1)) != Some(state) {
        return Err(Error::Precondition(format!(
            "state `{}` does not belong to concept `{}`",
            state.label, concept.name
        )));
    }
    Ok((state.ordinal - 1) as f64 / (n - 1) as f64)
}

fn sample_error(concept: &ConceptDef, index: usize, reason: impl fmt::Display) -> Error {
    Error::Sample {
        entity: String::new(),
        concept: concept.name.clone(),
        index,
        reason: reason.to_string(),
    }
}

fn classify_sample<'c>(sample: &Sample, index: usize, concept: &'c ConceptDef) -> Result<&'c StateDef> {
    match &sample.value {
        SampleValue::Numeric(v) => concept
            .state_for_value(*v)
            .map_err(|e| sample_error(concept, index, format!("at t={}: {e}", sample.time))),
        SampleValue::Symbol(s) => concept
            .state_by_label(s)
            .ok_or_else(|| sample_error(concept, index, format!("unknown state label `{s}`"))),
    }
}

/// Numeric reading of a sample; symbols map to their state's ordinal code.
fn numeric_value(sample: &Sample, index: usize, concept: &ConceptDef) -> Result<f64> {
    match &sample.value {
        SampleValue::Numeric(v) => Ok(*v),
        SampleValue::Symbol(_) => classify_sample(sample, index, concept).map(|s| s.ordinal as f64),
    }
}

fn check_order(samples: &[Sample], concept: &ConceptDef) -> Result<()> {
    match samples.windows(2).position(|w| w[0].time >= w[1].time) {
        Some(i) => Err(sample_error(concept, i + 1, "timestamps are not strictly increasing")),
        None => Ok(()),
    }
}

/// Merges consecutive intervals with the same tag whose spans touch or overlap.
pub fn merge_adjacent(intervals: Vec<Interval>) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match out.last_mut() {
            Some(last) if last.tag == iv.tag && last.end >= iv.start => {
                last.end = last.end.max(iv.end);
            }
            _ => out.push(iv),
        }
    }
    out
}

/// State abstraction. Each classified sample is extended by the concept's persistence.
/// Equal states whose extensions meet are merged; conflicting extensions are cut at the
/// midpoint of their overlap.
pub fn abstract_state(samples: &[Sample], concept: &ConceptDef) -> Result<UnivariateESequence> {
    check_order(samples, concept)?;
    let gb = concept.good_before.minutes();
    let ga = concept.good_after.minutes();
    let mut out: Vec<Interval> = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let state = classify_sample(sample, i, concept)?;
        let value = match concept.value_type {
            ValueType::Numeric if concept.states.len() == 1 => 0.5,
            _ => normalize_symbolic(state, concept)?,
        };
        let mut next = Interval::new(
            sample.time - gb,
            sample.time + ga,
            value,
            IntervalTag::Symbol(state.label.clone()),
        );
        if let Some(last) = out.last_mut() {
            if last.tag == next.tag && last.end >= next.start {
                last.end = last.end.max(next.end);
                continue;
            }
            if last.end > next.start {
                // Starts and ends of successive extensions are both increasing, so only
                // the previous interval can conflict and the cut stays inside both.
                let cut = (last.end + next.start).div_euclid(2);
                last.end = cut;
                next.start = cut;
            }
        }
        out.push(next);
    }
    Ok(UnivariateESequence::new(concept.name.clone(), merge_adjacent(out)))
}

/// Gradient abstraction over consecutive sample pairs; each pair spans `[t_i, t_{i+1}]`.
/// Fewer than two samples give an empty sequence.
pub fn abstract_gradient(samples: &[Sample], concept: &ConceptDef) -> Result<UnivariateESequence> {
    check_order(samples, concept)?;
    if samples.len() < 2 {
        log::warn!(
            "concept `{}`: {} sample(s), no gradient can be derived",
            concept.name,
            samples.len()
        );
        return Ok(UnivariateESequence::new(concept.name.clone(), Vec::new()));
    }
    let values = samples
        .iter()
        .enumerate()
        .map(|(i, s)| numeric_value(s, i, concept))
        .collect::<Result<Vec<_>>>()?;
    let intervals = samples
        .windows(2)
        .zip(values.windows(2))
        .map(|(s, v)| {
            let trend = Trend::classify(v[0], v[1], concept);
            Interval::new(
                s[0].time,
                s[1].time,
                trend.normalized(),
                IntervalTag::Symbol(trend.label().to_string()),
            )
        })
        .collect();
    Ok(UnivariateESequence::new(concept.name.clone(), merge_adjacent(intervals)))
}

/// Z-score parameters of one concept over a cohort, plus the range of the cohort's
/// z-values used for min-max scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConceptStats {
    pub mean: f64,
    /// Population standard deviation (divide by N).
    pub sd: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl ConceptStats {
    pub fn fit(values: &[f64]) -> ConceptStats {
        if values.is_empty() {
            return ConceptStats { mean: 0.0, sd: 0.0, z_min: 0.0, z_max: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut stats = ConceptStats { mean, sd, z_min: 0.0, z_max: 0.0 };
        if sd > 0.0 {
            let (lo, hi) = values
                .iter()
                .map(|&v| stats.z(v))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| (lo.min(z), hi.max(z)));
            stats.z_min = lo;
            stats.z_max = hi;
        }
        stats
    }

    fn z(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }

    /// Z-score then min-max to `[0, 1]`, clipped. A degenerate scale maps to 0.5.
    pub fn normalize(&self, v: f64) -> f64 {
        if !(self.sd > 0.0) || !(self.z_max > self.z_min) {
            return 0.5;
        }
        ((self.z(v) - self.z_min) / (self.z_max - self.z_min)).clamp(0.0, 1.0)
    }
}

/// Per-concept normalization parameters fit on a training population.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PopulationStats {
    pub concepts: BTreeMap<String, ConceptStats>,
}

impl PopulationStats {
    pub fn get(&self, concept: &str) -> Result<&ConceptStats> {
        self.concepts
            .get(concept)
            .ok_or_else(|| Error::Precondition(format!("no population statistics for `{concept}`")))
    }
}

/// Fits z-score parameters on a cohort's values for one concept and returns them with
/// the cohort normalized. Zero variance maps every value to 0.5.
pub fn normalize_raw(cohort: &[Vec<f64>]) -> (ConceptStats, Vec<Vec<f64>>) {
    let pooled: Vec<f64> = cohort.iter().flatten().copied().collect();
    let stats = ConceptStats::fit(&pooled);
    let normalized = cohort
        .iter()
        .map(|vs| vs.iter().map(|&v| stats.normalize(v)).collect())
        .collect();
    (stats, normalized)
}

/// Numeric values of a sample list, as used for population statistics.
pub fn raw_values(samples: &[Sample], concept: &ConceptDef) -> Result<Vec<f64>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| numeric_value(s, i, concept))
        .collect()
}

/// Raw samples as normalized point intervals. Numeric concepts use the population
/// statistics; symbolic concepts use their ordinal scale.
pub fn abstract_raw(
    samples: &[Sample],
    concept: &ConceptDef,
    stats: Option<&ConceptStats>,
) -> Result<UnivariateESequence> {
    check_order(samples, concept)?;
    let intervals = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (value, raw) = match (&s.value, concept.value_type) {
                (SampleValue::Numeric(v), ValueType::Numeric) => {
                    let stats = stats.ok_or_else(|| {
                        Error::Precondition(format!("raw `{}` needs population statistics", concept.name))
                    })?;
                    (stats.normalize(*v), *v)
                }
                _ => {
                    let state = classify_sample(s, i, concept)?;
                    (normalize_symbolic(state, concept)?, state.ordinal as f64)
                }
            };
            Ok(Interval::new(s.time, s.time, value, IntervalTag::Raw(raw)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UnivariateESequence::new(concept.name.clone(), intervals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::bundled;
    use crate::temporal::time::DAY;
    use proptest::prelude::*;

    fn hgb() -> ConceptDef {
        bundled::oncology().concept("HGB").unwrap().clone()
    }

    fn days(points: &[(i64, f64)]) -> Vec<Sample> {
        points.iter().map(|&(d, v)| Sample::numeric(d * DAY, v)).collect()
    }

    fn spans(seq: &UnivariateESequence) -> Vec<(i64, i64, String)> {
        seq.intervals
            .iter()
            .map(|i| (i.start, i.end, i.tag.to_string()))
            .collect()
    }

    #[test]
    fn touching_extensions_merge() {
        let seq = abstract_state(&days(&[(1, 10.0), (2, 10.5)]), &hgb()).unwrap();
        assert_eq!(spans(&seq), vec![(0, 3 * DAY, "MODERATELY LOW".into())]);
        assert_eq!(seq.intervals[0].value, 0.5);
    }

    #[test]
    fn single_sample_is_centered() {
        let seq = abstract_state(&days(&[(5, 13.0)]), &hgb()).unwrap();
        assert_eq!(spans(&seq), vec![(4 * DAY, 6 * DAY, "NORMAL".into())]);
    }

    #[test]
    fn distant_samples_stay_apart() {
        let seq = abstract_state(&days(&[(1, 10.0), (10, 10.0)]), &hgb()).unwrap();
        assert_eq!(
            spans(&seq),
            vec![
                (0, 2 * DAY, "MODERATELY LOW".into()),
                (9 * DAY, 11 * DAY, "MODERATELY LOW".into())
            ]
        );
    }

    #[test]
    fn conflicting_states_cut_at_overlap_midpoint() {
        // [0d, 2d] NORMAL vs [0.5d, 2.5d] LOW overlap on [0.5d, 2d]; cut at 1.25d.
        let samples = vec![Sample::numeric(DAY, 13.0), Sample::numeric(DAY + DAY / 2, 8.0)];
        let seq = abstract_state(&samples, &hgb()).unwrap();
        let cut = (2 * DAY + DAY / 2) / 2;
        assert_eq!(
            spans(&seq),
            vec![(0, cut, "NORMAL".into()), (cut, 5 * DAY / 2, "LOW".into())]
        );
        assert!(seq.is_well_formed());
    }

    #[test]
    fn out_of_range_sample_reports_location() {
        let kb = bundled::diabetes();
        let alb = kb.concept("ALBUMINURIA_U24H/MALE").unwrap();
        let err = abstract_state(&days(&[(1, 10.0), (2, -3.0)]), alb).unwrap_err();
        assert!(matches!(err, Error::Sample { index: 1, .. }), "{err}");
    }

    #[test]
    fn gradient_labels() {
        let c = hgb();
        let up = abstract_gradient(&days(&[(0, 10.0), (1, 11.0)]), &c).unwrap();
        assert_eq!(spans(&up), vec![(0, DAY, "INCREASING".into())]);
        let same = abstract_gradient(&days(&[(0, 10.0), (1, 10.5)]), &c).unwrap();
        assert_eq!(same.intervals[0].tag.to_string(), "SAME");
        assert_eq!(same.intervals[0].value, 0.5);

        let kb = bundled::hepatitis();
        let alp = kb.concept("ALP").unwrap();
        let up = abstract_gradient(&days(&[(0, 100.0), (3, 130.0)]), alp).unwrap();
        assert_eq!(up.intervals[0].tag.to_string(), "INCREASING");
        let same = abstract_gradient(&days(&[(0, 100.0), (3, 115.0)]), alp).unwrap();
        assert_eq!(same.intervals[0].tag.to_string(), "SAME");
    }

    #[test]
    fn gradient_merges_runs_and_tolerates_short_input() {
        let c = hgb();
        let seq = abstract_gradient(&days(&[(0, 10.0), (1, 11.0), (2, 12.0), (4, 12.1)]), &c).unwrap();
        assert_eq!(
            spans(&seq),
            vec![(0, 2 * DAY, "INCREASING".into()), (2 * DAY, 4 * DAY, "SAME".into())]
        );
        assert!(abstract_gradient(&days(&[(0, 10.0)]), &c).unwrap().is_empty());
        assert!(abstract_gradient(&[], &c).unwrap().is_empty());
    }

    #[test]
    fn symbolic_normalization() {
        let kb = KnowledgeBaseFixture::three_state();
        let c = kb.concept("X").unwrap();
        assert_eq!(normalize_symbolic(&c.states[1], c).unwrap(), 0.5);
        let kb = KnowledgeBaseFixture::boolean();
        let b = kb.concept("B").unwrap();
        assert_eq!(normalize_symbolic(b.state_by_label("TRUE").unwrap(), b).unwrap(), 1.0);
        assert_eq!(normalize_symbolic(b.state_by_label("FALSE").unwrap(), b).unwrap(), 0.0);
        let wbc = bundled::oncology().concept("WBC").unwrap().clone();
        let normal = wbc.state_by_label("NORMAL").unwrap();
        assert_eq!(normal.ordinal, 4);
        assert!((normalize_symbolic(normal, &wbc).unwrap() - 0.6).abs() < 1e-15);
        let single = crate::kb::KnowledgeBase::parse(
            "[concept S]\ntype=numeric\nstate=ALL,-inf,inf\nvariation=absolute,1\n",
        )
        .unwrap();
        let s = single.concept("S").unwrap();
        assert!(normalize_symbolic(&s.states[0], s).is_err());
    }

    struct KnowledgeBaseFixture;

    impl KnowledgeBaseFixture {
        fn three_state() -> crate::kb::KnowledgeBase {
            crate::kb::KnowledgeBase::parse("[concept X]\ntype=ordinal\nstate=LOW\nstate=MID\nstate=HIGH\n").unwrap()
        }

        fn boolean() -> crate::kb::KnowledgeBase {
            crate::kb::KnowledgeBase::parse("[concept B]\ntype=boolean\nstate=FALSE\nstate=TRUE\n").unwrap()
        }
    }

    #[test]
    fn raw_normalization() {
        // mean 0, population sd sqrt(2/3): z-values are a scaled {-1, 0, 1}.
        let (_, out) = normalize_raw(&[vec![-1.0, 0.0, 1.0]]);
        assert_eq!(out, vec![vec![0.0, 0.5, 1.0]]);

        // Hand computation: mean 11, population sd 1, z = {-1, 1}, min-max -> {0, 1}.
        let (stats, out) = normalize_raw(&[vec![10.0], vec![12.0]]);
        assert_eq!((stats.mean, stats.sd, stats.z_min, stats.z_max), (11.0, 1.0, -1.0, 1.0));
        assert_eq!(out, vec![vec![0.0], vec![1.0]]);
        assert_eq!(stats.normalize(5.0), 0.0);
        assert_eq!(stats.normalize(50.0), 1.0);

        let (flat, out) = normalize_raw(&[vec![3.0, 3.0]]);
        assert_eq!(flat.sd, 0.0);
        assert_eq!(out, vec![vec![0.5, 0.5]]);
    }

    #[test]
    fn raw_points() {
        let c = hgb();
        let samples = days(&[(0, 10.0), (2, 12.0)]);
        let stats = ConceptStats::fit(&raw_values(&samples, &c).unwrap());
        let seq = abstract_raw(&samples, &c, Some(&stats)).unwrap();
        assert!(seq.intervals.iter().all(Interval::is_point));
        assert_eq!(seq.intervals[1].value, 1.0);
        assert!(abstract_raw(&samples, &c, None).is_err());
    }

    fn sample_strategy() -> impl Strategy<Value = Vec<Sample>> {
        prop::collection::vec((1i64..3 * DAY, 0.0f64..25.0), 1..12).prop_map(|steps| {
            let mut t = 0;
            steps
                .into_iter()
                .map(|(dt, v)| {
                    t += dt;
                    Sample::numeric(t, v)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn state_sequences_are_well_formed(samples in sample_strategy()) {
            let seq = abstract_state(&samples, &hgb()).unwrap();
            prop_assert!(seq.is_well_formed());
            prop_assert!(seq.intervals.iter().all(|i| (0.0..=1.0).contains(&i.value)));
            prop_assert_eq!(merge_adjacent(seq.intervals.clone()), seq.intervals.clone());
            for s in &samples {
                prop_assert!(seq.intervals.iter().any(|i| i.start <= s.time && s.time <= i.end));
            }
        }

        #[test]
        fn state_depends_only_on_range_membership(samples in sample_strategy()) {
            // Move each value to its state's lower bound: same state, different raw value.
            let c = hgb();
            let moved: Vec<Sample> = samples.iter().map(|s| {
                let st = c.state_for_value(s.value.as_f64().unwrap()).unwrap();
                let v = if st.low.is_finite() { st.low } else { st.high - 1.0 };
                Sample::numeric(s.time, v)
            }).collect();
            prop_assert_eq!(abstract_state(&samples, &c).unwrap(), abstract_state(&moved, &c).unwrap());
        }

        #[test]
        fn gradient_is_antisymmetric_under_time_reversal(samples in sample_strategy()) {
            let c = hgb();
            // Absolute thresholds make the pairwise labels exactly antisymmetric.
            let fwd = abstract_gradient(&samples, &c).unwrap();
            let rev: Vec<Sample> = samples.iter().rev().map(|s| Sample { time: -s.time, value: s.value.clone() }).collect();
            let bwd = abstract_gradient(&rev, &c).unwrap();
            prop_assert_eq!(fwd.intervals.len(), bwd.intervals.len());
            for (f, b) in fwd.intervals.iter().zip(bwd.intervals.iter().rev()) {
                prop_assert_eq!((f.start, f.end), (-b.end, -b.start));
                prop_assert_eq!(f.value, 1.0 - b.value);
            }
        }

        #[test]
        fn gradient_merge_is_idempotent(samples in sample_strategy()) {
            let seq = abstract_gradient(&samples, &hgb()).unwrap();
            prop_assert!(seq.is_well_formed());
            prop_assert_eq!(merge_adjacent(seq.intervals.clone()), seq.intervals);
        }
    }
}
