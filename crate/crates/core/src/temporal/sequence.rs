use std::collections::BTreeMap;
use std::fmt;

use super::time::Timestamp;

/// A measured value: numeric, or a symbol for ordinal and boolean concepts.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleValue {
    Numeric(f64),
    Symbol(String),
}

impl SampleValue {
    /// Numbers parse as numeric; anything else is kept as a symbol.
    pub fn parse(s: &str) -> SampleValue {
        let s = s.trim();
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => SampleValue::Numeric(v),
            _ => SampleValue::Symbol(s.to_string()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            SampleValue::Numeric(v) => Some(*v),
            SampleValue::Symbol(_) => None,
        }
    }
}

impl fmt::Display for SampleValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleValue::Numeric(v) => write!(f, "{v}"),
            SampleValue::Symbol(s) => f.write_str(s),
        }
    }
}

/// One time-stamped raw measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: Timestamp,
    pub value: SampleValue,
}

impl Sample {
    pub fn numeric(time: Timestamp, value: f64) -> Self {
        Sample {
            time,
            value: SampleValue::Numeric(value),
        }
    }
}

/// What an interval's normalized value was derived from.
#[derive(Debug, Clone, PartialEq)]
pub enum IntervalTag {
    /// A state or gradient label.
    Symbol(String),
    /// A raw measurement before normalization.
    Raw(f64),
}

impl fmt::Display for IntervalTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntervalTag::Symbol(s) => f.write_str(s),
            IntervalTag::Raw(v) => write!(f, "{v}"),
        }
    }
}

/// A closed time interval `[start, end]` carrying a normalized value in `[0, 1]`.
/// Point intervals (`start == end`) are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub start: Timestamp,
    pub end: Timestamp,
    pub value: f64,
    pub tag: IntervalTag,
}

impl Interval {
    pub fn new(start: Timestamp, end: Timestamp, value: f64, tag: IntervalTag) -> Self {
        debug_assert!(start <= end);
        debug_assert!((0.0..=1.0).contains(&value), "value {value} outside [0, 1]");
        Interval {
            start,
            end,
            value,
            tag,
        }
    }

    pub fn len(&self) -> i64 {
        self.end - self.start
    }

    pub fn is_point(&self) -> bool {
        self.start == self.end
    }
}

/// Ordered, non-overlapping intervals of one feature for one entity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnivariateESequence {
    pub concept: String,
    pub intervals: Vec<Interval>,
}

impl UnivariateESequence {
    pub fn new(concept: impl Into<String>, intervals: Vec<Interval>) -> Self {
        UnivariateESequence {
            concept: concept.into(),
            intervals,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Sorted by start, and consecutive intervals share at most an endpoint.
    pub fn is_well_formed(&self) -> bool {
        self.intervals.iter().all(|i| i.start <= i.end)
            && self
                .intervals
                .windows(2)
                .all(|w| w[0].start <= w[1].start && w[0].end <= w[1].start)
    }
}

impl fmt::Display for UnivariateESequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for iv in &self.intervals {
            writeln!(
                f,
                "{},{},{},{},{}",
                self.concept, iv.start, iv.end, iv.tag, iv.value
            )?;
        }
        Ok(())
    }
}

/// All feature sequences of one entity, keyed by feature name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultivariateESequence {
    pub entity: String,
    pub sequences: BTreeMap<String, UnivariateESequence>,
}

impl MultivariateESequence {
    pub fn new(entity: impl Into<String>) -> Self {
        MultivariateESequence {
            entity: entity.into(),
            sequences: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, seq: UnivariateESequence) {
        self.sequences.insert(seq.concept.clone(), seq);
    }
}
