//! Granularity-based representation. Scoped interval sequences are cut into fixed time
//! granules, each reduced to one delegate value; empty granules are interpolated.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scoping::Tms;
use crate::temporal::{
    duration_in_granules, EventTable, Granularity, Interval, Timestamp, UnivariateESequence,
};

pub use crate::kb::{DurationDelegate, ValueDelegate};

/// Part of one interval that falls inside one granule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub value: f64,
    /// Covered minutes; point samples count as one.
    pub duration: i64,
    /// Index of the source interval in its sequence.
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GranuleBucket {
    pub segments: Vec<Segment>,
}

impl GranuleBucket {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn covered(&self) -> i64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct AggregationConfig {
    pub value_delegate: ValueDelegate,
    pub duration_delegate: DurationDelegate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InterpolationMethod {
    NearestNeighbor,
    Linear,
    Average,
    /// Interval-based adjacent proportional: split a gap between the two neighbouring
    /// values in proportion to the durations of the intervals they came from.
    Ibap,
}

impl InterpolationMethod {
    pub const STANDARD: [InterpolationMethod; 3] = [
        InterpolationMethod::NearestNeighbor,
        InterpolationMethod::Linear,
        InterpolationMethod::Average,
    ];
}

impl fmt::Display for InterpolationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterpolationMethod::NearestNeighbor => "nearest",
            InterpolationMethod::Linear => "linear",
            InterpolationMethod::Average => "average",
            InterpolationMethod::Ibap => "ibap",
        })
    }
}

impl FromStr for InterpolationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nearest" | "nn" | "nearest-neighbor" | "nearestneighbor" => Ok(InterpolationMethod::NearestNeighbor),
            "linear" => Ok(InterpolationMethod::Linear),
            "average" | "avg" => Ok(InterpolationMethod::Average),
            "ibap" => Ok(InterpolationMethod::Ibap),
            other => Err(Error::Config(format!("unknown interpolation `{other}`"))),
        }
    }
}

/// Splits one sequence over `column_count` granules starting at `origin`. Every
/// interval contributes to each granule it overlaps with the overlap length.
pub fn segment_sequence(
    seq: &UnivariateESequence,
    origin: Timestamp,
    granularity: Granularity,
    column_count: usize,
) -> Vec<GranuleBucket> {
    let g = granularity.minutes();
    let mut buckets = vec![GranuleBucket::default(); column_count];
    if column_count == 0 {
        return buckets;
    }
    let horizon = origin + g * column_count as i64;
    let column_of = |t: Timestamp| ((t - origin).div_euclid(g) as usize).min(column_count - 1);
    for (source, iv) in seq.intervals.iter().enumerate() {
        let (start, end) = (iv.start.max(origin), iv.end.min(horizon));
        if iv.is_point() {
            if (origin..=horizon).contains(&iv.start) {
                buckets[column_of(iv.start)].segments.push(Segment {
                    value: iv.value,
                    duration: 1,
                    source,
                });
            }
            continue;
        }
        if start >= end {
            continue;
        }
        for col in column_of(start)..=column_of(end - 1) {
            let col_start = origin + g * col as i64;
            let covered = end.min(col_start + g) - start.max(col_start);
            if covered > 0 {
                buckets[col].segments.push(Segment {
                    value: iv.value,
                    duration: covered,
                    source,
                });
            }
        }
    }
    buckets
}

/// Features × granules buckets for one entity before aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedTable {
    pub entity: String,
    pub granularity: Granularity,
    pub origin: Timestamp,
    pub column_count: usize,
    pub features: Vec<String>,
    pub rows: Vec<Vec<GranuleBucket>>,
}

/// Segments scoped sequences onto the scope's granule grid; column count is the
/// scope length in granules.
pub fn segment(
    entity: &str,
    rows: &[(String, &UnivariateESequence)],
    tms: &Tms,
    granularity: Granularity,
) -> SegmentedTable {
    let column_count = duration_in_granules(tms.start, tms.end, granularity);
    SegmentedTable {
        entity: entity.to_string(),
        granularity,
        origin: tms.start,
        column_count,
        features: rows.iter().map(|(name, _)| name.clone()).collect(),
        rows: rows
            .iter()
            .map(|(_, seq)| segment_sequence(seq, tms.start, granularity, column_count))
            .collect(),
    }
}

/// Delegate value of a granule, or `None` when it is empty. Equal segment durations
/// use the value delegate; otherwise the duration delegate decides.
pub fn aggregate(bucket: &GranuleBucket, cfg: &AggregationConfig) -> Option<f64> {
    let segs = &bucket.segments;
    let first = segs.first()?;
    if segs.iter().all(|s| s.duration == first.duration) {
        let values: Vec<f64> = segs.iter().map(|s| s.value).collect();
        return Some(match cfg.value_delegate {
            // Offset from the first value so a constant bucket returns it exactly.
            ValueDelegate::Mean => {
                let base = values[0];
                base + values.iter().map(|v| v - base).sum::<f64>() / values.len() as f64
            }
            ValueDelegate::Median => {
                let mut sorted = values;
                sorted.sort_by(f64::total_cmp);
                // Lower median for an even count.
                sorted[(sorted.len() - 1) / 2]
            }
            ValueDelegate::Mode => mode(&values),
        });
    }
    Some(match cfg.duration_delegate {
        DurationDelegate::Mtt => {
            let mut totals: Vec<(f64, i64)> = Vec::new();
            for s in segs {
                match totals.iter_mut().find(|(v, _)| *v == s.value) {
                    Some((_, d)) => *d += s.duration,
                    None => totals.push((s.value, s.duration)),
                }
            }
            totals
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(a.0.total_cmp(&b.0)))
                .expect("non-empty")
                .0
        }
        DurationDelegate::Li => {
            // Earliest segment wins ties.
            segs.iter()
                .fold(first, |best, s| if s.duration > best.duration { s } else { best })
                .value
        }
    })
}

/// Most frequent value; ties go to the value seen first.
fn mode(values: &[f64]) -> f64 {
    let mut counts: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        match counts.iter_mut().find(|(x, _)| *x == v) {
            Some((_, c)) => *c += 1,
            None => counts.push((v, 1)),
        }
    }
    counts
        .iter()
        .fold(counts[0], |best, &c| if c.1 > best.1 { c } else { best })
        .0
}

/// Source intervals of a row, needed to size IBAP gap partitions.
#[derive(Debug, Clone, Copy)]
pub struct IbapContext<'a> {
    pub intervals: &'a [Interval],
    pub origin: Timestamp,
    pub granularity: Granularity,
}

impl IbapContext<'_> {
    fn weight(iv: &Interval) -> i64 {
        iv.len().max(1)
    }

    /// Duration of the interval reaching into column `col` from the left, and of the
    /// one starting the next filled column `next`.
    fn neighbour_durations(&self, col: usize, next: usize) -> (i64, i64) {
        let g = self.granularity.minutes();
        let left_edge = self.origin + g * (col as i64 + 1);
        let right_edge = self.origin + g * next as i64;
        let left = self
            .intervals
            .iter()
            .rfind(|iv| iv.start < left_edge)
            .map_or(1, Self::weight);
        let right = self
            .intervals
            .iter()
            .find(|iv| iv.start >= left_edge && iv.end >= right_edge)
            .map_or(1, Self::weight);
        (left, right)
    }
}

/// Fills every empty cell of a row. Leading and trailing gaps copy their single
/// neighbour under every method.
pub fn interpolate_row(
    row: &[Option<f64>],
    method: InterpolationMethod,
    ibap: Option<&IbapContext<'_>>,
) -> Result<Vec<f64>> {
    let filled: Vec<usize> = (0..row.len()).filter(|&i| row[i].is_some()).collect();
    let (Some(&first), Some(&last)) = (filled.first(), filled.last()) else {
        return Err(Error::Precondition("row has no filled cell".into()));
    };
    if method == InterpolationMethod::Ibap && ibap.is_none() {
        return Err(Error::Precondition("IBAP interpolation needs the source intervals".into()));
    }
    let mut out: Vec<f64> = row.iter().map(|c| c.unwrap_or(f64::NAN)).collect();
    let lead = out[first];
    out[..first].fill(lead);
    let trail = out[last];
    out[last + 1..].fill(trail);
    for pair in filled.windows(2) {
        let (l, r) = (pair[0], pair[1]);
        if r == l + 1 {
            continue;
        }
        let (vl, vr) = (out[l], out[r]);
        match method {
            InterpolationMethod::NearestNeighbor => {
                for c in l + 1..r {
                    out[c] = if c - l <= r - c { vl } else { vr };
                }
            }
            InterpolationMethod::Linear => {
                let span = (r - l) as f64;
                for c in l + 1..r {
                    let w = (c - l) as f64 / span;
                    out[c] = vl + (vr - vl) * w;
                }
            }
            InterpolationMethod::Average => out[l + 1..r].fill((vl + vr) / 2.0),
            InterpolationMethod::Ibap => {
                let gap = (r - l - 1) as i64;
                let (dl, dr) = ibap.expect("checked above").neighbour_durations(l, r);
                let left_share = ibap_left_share(gap, dl, dr) as usize;
                out[l + 1..l + 1 + left_share].fill(vl);
                out[l + 1 + left_share..r].fill(vr);
            }
        }
    }
    Ok(out)
}

/// Granules of a `gap` that take the left value: `gap * dl / (dl + dr)` rounded half up.
pub fn ibap_left_share(gap: i64, dl: i64, dr: i64) -> i64 {
    let total = dl + dr;
    (2 * gap * dl + total).div_euclid(2 * total)
}

/// Aggregates and interpolates a segmented table into a complete event table.
/// `aggregation[i]` applies to row `i`; `sources[i]` are that row's intervals (for IBAP).
pub fn fill(
    table: &SegmentedTable,
    aggregation: &[AggregationConfig],
    method: InterpolationMethod,
    sources: &[&[Interval]],
) -> Result<EventTable> {
    let mut out = EventTable::empty(
        table.entity.clone(),
        table.granularity,
        table.origin,
        table.column_count,
    );
    for (i, (name, buckets)) in table.features.iter().zip(&table.rows).enumerate() {
        let cells: Vec<Option<f64>> = buckets.iter().map(|b| aggregate(b, &aggregation[i])).collect();
        let ctx = IbapContext {
            intervals: sources.get(i).copied().unwrap_or(&[]),
            origin: table.origin,
            granularity: table.granularity,
        };
        let full = interpolate_row(&cells, method, Some(&ctx)).map_err(|_| Error::EmptyRow {
            entity: table.entity.clone(),
            feature: name.clone(),
        })?;
        out.push_row(name.clone(), full.into_iter().map(Some).collect());
    }
    Ok(out)
}

/// Scoped sequences to a complete event table in one step.
pub fn represent(
    entity: &str,
    rows: &[(String, &UnivariateESequence, AggregationConfig)],
    tms: &Tms,
    granularity: Granularity,
    method: InterpolationMethod,
) -> Result<EventTable> {
    let named: Vec<(String, &UnivariateESequence)> =
        rows.iter().map(|(n, s, _)| (n.clone(), *s)).collect();
    let seg = segment(entity, &named, tms, granularity);
    let aggs: Vec<AggregationConfig> = rows.iter().map(|r| r.2).collect();
    let sources: Vec<&[Interval]> = rows.iter().map(|r| r.1.intervals.as_slice()).collect();
    fill(&seg, &aggs, method, &sources)
}
