//! Temporal matching scope: an absolute window, or a window placed around a reference
//! event of each entity.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::temporal::{Duration, Timestamp, UnivariateESequence};

/// A reference-event instance, e.g. a procedure with a start and end time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub name: String,
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Event {
    pub fn at(name: impl Into<String>, time: Timestamp) -> Self {
        Event {
            name: name.into(),
            start: time,
            end: time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aspect {
    Start,
    End,
}

/// Which instance of the reference event anchors the timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selection {
    First,
    Last,
    /// 1-based.
    Nth(usize),
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "first" => Ok(Selection::First),
            "last" => Ok(Selection::Last),
            _ => lower
                .strip_prefix("nth")
                .map(|n| n.trim_matches(|c: char| c == '(' || c == ')' || c == ':' || c.is_whitespace()))
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .map(Selection::Nth)
                .ok_or_else(|| Error::Config(format!("invalid selection `{s}`"))),
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selection::First => f.write_str("first"),
            Selection::Last => f.write_str("last"),
            Selection::Nth(n) => write!(f, "nth({n})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TimelineSpec {
    Absolute {
        start: Timestamp,
        end: Timestamp,
    },
    Relative {
        reference: String,
        aspect: Aspect,
        selection: Selection,
        /// Magnitude subtracted from the reference point.
        before: Duration,
        after: Duration,
    },
}

impl TimelineSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            TimelineSpec::Absolute { start, end } if start >= end => Err(Error::Config(format!(
                "absolute timeline start {start} must precede end {end}"
            ))),
            TimelineSpec::Relative { before, after, .. } if before.minutes() < 0 || after.minutes() < 0 => Err(
                Error::Config("before/after periods must be non-negative".into()),
            ),
            TimelineSpec::Relative {
                selection: Selection::Nth(0),
                ..
            } => Err(Error::Config("nth selection is 1-based".into())),
            _ => Ok(()),
        }
    }

    pub fn reference(&self) -> Option<&str> {
        match self {
            TimelineSpec::Relative { reference, .. } => Some(reference),
            TimelineSpec::Absolute { .. } => None,
        }
    }
}

/// Closed matching window `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tms {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Tms {
    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Picks the anchoring instance of `reference` among an entity's events. An entity
/// without a matching instance is reported as excluded.
pub fn resolve_reference_point(
    entity: &str,
    events: &[Event],
    reference: &str,
    aspect: Aspect,
    selection: Selection,
) -> Result<Timestamp> {
    let mut instances: Vec<&Event> = events.iter().filter(|e| e.name == reference).collect();
    instances.sort_by_key(|e| (e.start, e.end));
    let excluded = |reason: String| Error::Excluded {
        entity: entity.to_string(),
        reason,
    };
    let chosen = match selection {
        Selection::First => instances.first(),
        Selection::Last => instances.last(),
        Selection::Nth(n) => instances.get(n.wrapping_sub(1)),
    }
    .ok_or_else(|| {
        excluded(format!(
            "{} instance(s) of `{reference}`, selection {selection} cannot resolve",
            instances.len()
        ))
    })?;
    Ok(match aspect {
        Aspect::Start => chosen.start,
        Aspect::End => chosen.end,
    })
}

pub fn compute_tms(spec: &TimelineSpec, reference: Option<Timestamp>) -> Result<Tms> {
    let tms = match spec {
        TimelineSpec::Absolute { start, end } => Tms {
            start: *start,
            end: *end,
        },
        TimelineSpec::Relative { before, after, .. } => {
            let r = reference
                .ok_or_else(|| Error::Config("relative timeline needs a resolved reference point".into()))?;
            Tms {
                start: r - before.minutes(),
                end: r + after.minutes(),
            }
        }
    };
    if tms.start >= tms.end {
        return Err(Error::Config(format!(
            "empty matching scope [{}, {}]",
            tms.start, tms.end
        )));
    }
    Ok(tms)
}

/// Resolves the reference (if any) and computes the entity's scope.
pub fn entity_tms(entity: &str, spec: &TimelineSpec, events: &[Event]) -> Result<Tms> {
    let reference = match spec {
        TimelineSpec::Absolute { .. } => None,
        TimelineSpec::Relative {
            reference,
            aspect,
            selection,
            ..
        } => Some(resolve_reference_point(entity, events, reference, *aspect, *selection)?),
    };
    compute_tms(spec, reference)
}

/// Retention rule for an interval: it starts in scope, ends in scope, or spans it.
pub fn retained(start: Timestamp, end: Timestamp, tms: &Tms) -> bool {
    tms.contains(start) || tms.contains(end) || (start < tms.start && end > tms.end)
}

/// Keeps the intervals the retention rule admits, clipped to the scope.
pub fn restrict(seq: &UnivariateESequence, tms: &Tms) -> UnivariateESequence {
    let intervals = seq
        .intervals
        .iter()
        .filter(|iv| retained(iv.start, iv.end, tms))
        .map(|iv| {
            let mut iv = iv.clone();
            iv.start = iv.start.max(tms.start);
            iv.end = iv.end.min(tms.end);
            iv
        })
        .collect();
    UnivariateESequence::new(seq.concept.clone(), intervals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::time::{DAY, MONTH, YEAR};
    use crate::temporal::{Interval, IntervalTag};

    fn bmt() -> Vec<Event> {
        vec![Event::at("BMT", 400 * DAY), Event::at("BMT", 100 * DAY), Event::at("ADMIT", 0)]
    }

    #[test]
    fn reference_selection() {
        let ev = bmt();
        assert_eq!(resolve_reference_point("p", &ev, "BMT", Aspect::Start, Selection::First).unwrap(), 100 * DAY);
        assert_eq!(resolve_reference_point("p", &ev, "BMT", Aspect::Start, Selection::Last).unwrap(), 400 * DAY);
        assert_eq!(resolve_reference_point("p", &ev, "BMT", Aspect::End, Selection::Nth(2)).unwrap(), 400 * DAY);
        let err = resolve_reference_point("p", &ev, "BMT", Aspect::Start, Selection::Nth(3)).unwrap_err();
        assert!(matches!(err, Error::Excluded { .. }));
        assert!(resolve_reference_point("p", &ev, "SURGERY", Aspect::Start, Selection::First).is_err());
    }

    #[test]
    fn end_aspect() {
        let ev = vec![Event { name: "STAY".into(), start: 10, end: 50 }];
        assert_eq!(resolve_reference_point("p", &ev, "STAY", Aspect::End, Selection::First).unwrap(), 50);
    }

    #[test]
    fn relative_scope() {
        let spec = TimelineSpec::Relative {
            reference: "BMT".into(),
            aspect: Aspect::Start,
            selection: Selection::First,
            before: Duration(MONTH),
            after: Duration(2 * YEAR),
        };
        let tms = compute_tms(&spec, Some(100 * DAY)).unwrap();
        assert_eq!(tms, Tms { start: 70 * DAY, end: 830 * DAY });
        assert_eq!(entity_tms("p", &spec, &bmt()).unwrap(), tms);

        let empty = TimelineSpec::Relative {
            reference: "BMT".into(),
            aspect: Aspect::Start,
            selection: Selection::First,
            before: Duration::ZERO,
            after: Duration::ZERO,
        };
        assert!(matches!(compute_tms(&empty, Some(5)), Err(Error::Config(_))));
        assert!(compute_tms(&spec, None).is_err());
    }

    #[test]
    fn absolute_scope() {
        let spec = TimelineSpec::Absolute { start: 0, end: 30 * DAY };
        assert_eq!(compute_tms(&spec, None).unwrap(), Tms { start: 0, end: 30 * DAY });
        assert!(TimelineSpec::Absolute { start: 5, end: 5 }.validate().is_err());
    }

    #[test]
    fn selection_parsing() {
        assert_eq!("First".parse::<Selection>().unwrap(), Selection::First);
        assert_eq!("nth(3)".parse::<Selection>().unwrap(), Selection::Nth(3));
        assert_eq!("nth 2".parse::<Selection>().unwrap(), Selection::Nth(2));
        assert!("nth(0)".parse::<Selection>().is_err());
    }

    fn seq(spans: &[(i64, i64)]) -> UnivariateESequence {
        UnivariateESequence::new(
            "X",
            spans
                .iter()
                .map(|&(s, e)| Interval::new(s, e, 0.5, IntervalTag::Symbol("A".into())))
                .collect(),
        )
    }

    #[test]
    fn restrict_examples() {
        let tms = Tms { start: 10, end: 20 };
        let out = restrict(&seq(&[(5, 12), (5, 25), (21, 30), (0, 9), (15, 15)]), &tms);
        let spans: Vec<_> = out.intervals.iter().map(|i| (i.start, i.end)).collect();
        assert_eq!(spans, vec![(10, 12), (10, 20), (15, 15)]);
        assert_eq!(restrict(&out, &tms), out);
    }
}
