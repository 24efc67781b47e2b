//! Multivariate dynamic time warping between complete event tables.
//!
//! The local cost between two time points is the squared Euclidean distance over all
//! feature values. Accumulated cost follows the plain recurrence
//! `R(i, j) = d(i, j) + min(R(i-1, j), R(i, j-1), R(i-1, j-1))` with no step weights
//! and no path-length normalization.
//!
//! Warping bands are Sakoe-Chiba bands laid around the diagonal scaled to the two
//! lengths. Along the longer series index `p`, the admissible positions on the shorter
//! series are `floor(c(p)) - r ..= ceil(c(p)) + r` with `c(p) = p (s - 1) / (l - 1)`.
//! For equal lengths this is `|i - j| <= r`; for any `r >= 0` the corners are inside
//! and a monotone path always exists.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kb::ConceptDef;
use crate::temporal::{DenseSeries, Granularity};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandPolicy {
    Unconstrained,
    /// Radius as a percentage of the longer series.
    SakoeChibaPercent(f64),
    /// Fixed radius in granules, typically the longest concept half-life.
    KbBand(usize),
    /// Longest half-life of the matched concepts; see [`BandPolicy::resolve`].
    Kb,
}

impl BandPolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            BandPolicy::SakoeChibaPercent(p) if !(*p > 0.0) || !p.is_finite() => Err(Error::Config(
                format!("band percentage must be positive, got {p}"),
            )),
            _ => Ok(()),
        }
    }

    /// Radius in granules for series of lengths `m` and `n`; `None` is unconstrained.
    pub fn radius(&self, m: usize, n: usize) -> Result<Option<usize>> {
        match *self {
            BandPolicy::Unconstrained => Ok(None),
            BandPolicy::SakoeChibaPercent(p) => Ok(Some((p * m.max(n) as f64 / 100.0).ceil() as usize)),
            BandPolicy::KbBand(r) => Ok(Some(r)),
            BandPolicy::Kb => Err(Error::Precondition(
                "the KB band has no radius until resolved against the matched concepts".into(),
            )),
        }
    }

    /// Replaces [`BandPolicy::Kb`] with the fixed radius of `concepts`.
    pub fn resolve(self, concepts: &[&ConceptDef], granularity: Granularity) -> Result<BandPolicy> {
        match self {
            BandPolicy::Kb => Ok(BandPolicy::KbBand(kb_band_radius(concepts, granularity)?)),
            other => Ok(other),
        }
    }
}

impl fmt::Display for BandPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandPolicy::Unconstrained => f.write_str("unconstrained"),
            BandPolicy::SakoeChibaPercent(p) => write!(f, "sakoe-chiba-{p}%"),
            BandPolicy::KbBand(r) => write!(f, "kb-band-{r}"),
            BandPolicy::Kb => f.write_str("kb-band"),
        }
    }
}

impl FromStr for BandPolicy {
    type Err = Error;

    /// `unconstrained` / `inf`, `sakoe-chiba 10` / `10%`, `kb <radius>`, or `kb-band`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let bad = || Error::Config(format!("invalid band `{s}`"));
        if matches!(lower.as_str(), "unconstrained" | "inf" | "infinity" | "none") {
            return Ok(BandPolicy::Unconstrained);
        }
        if matches!(lower.as_str(), "kb" | "kb-band") {
            return Ok(BandPolicy::Kb);
        }
        let number = |t: &str| -> Result<f64> {
            t.trim_matches(|c: char| c.is_whitespace() || c == '-' || c == '%' || c == '(' || c == ')')
                .parse::<f64>()
                .map_err(|_| bad())
        };
        let band = if let Some(rest) = lower.strip_prefix("sakoe-chiba") {
            BandPolicy::SakoeChibaPercent(number(rest)?)
        } else if let Some(rest) = lower.strip_prefix("kb-band").or_else(|| lower.strip_prefix("kb")) {
            let r = number(rest)?;
            if r < 0.0 || r.fract() != 0.0 {
                return Err(bad());
            }
            BandPolicy::KbBand(r as usize)
        } else if lower.ends_with('%') {
            BandPolicy::SakoeChibaPercent(number(&lower)?)
        } else {
            return Err(bad());
        };
        band.validate()?;
        Ok(band)
    }
}

/// Squared Euclidean distance between two feature vectors.
pub fn local_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Arity {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(sq_dist(a, b))
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Admissible short-axis range for long-axis index `p`.
#[inline]
fn band_range(p: usize, long: usize, short: usize, radius: Option<usize>) -> (usize, usize) {
    let Some(r) = radius else {
        return (0, short - 1);
    };
    if long == 1 {
        return (0, (short - 1).min(r));
    }
    let num = p * (short - 1);
    let den = long - 1;
    let lo = (num / den).saturating_sub(r);
    let hi = (num.div_ceil(den) + r).min(short - 1);
    (lo, hi)
}

/// Whether cell `(i, j)` of an `m x n` cost matrix lies inside the band.
pub fn in_band(i: usize, j: usize, m: usize, n: usize, radius: Option<usize>) -> bool {
    let (p, q, long, short) = if m >= n { (i, j, m, n) } else { (j, i, n, m) };
    let (lo, hi) = band_range(p, long, short, radius);
    (lo..=hi).contains(&q)
}

fn check_pair(a: &DenseSeries, b: &DenseSeries) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Arity {
            left: a.dim(),
            right: b.dim(),
        });
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::Precondition("cannot warp an empty series".into()));
    }
    Ok(())
}

/// Banded DTW distance keeping two rows of the accumulated-cost matrix.
pub fn dtw_distance(a: &DenseSeries, b: &DenseSeries, band: BandPolicy) -> Result<f64> {
    check_pair(a, b)?;
    dtw_with_radius(a, b, band.radius(a.len(), b.len())?)
}

/// DTW with an explicit radius in granules (`None` for no band).
pub fn dtw_with_radius(a: &DenseSeries, b: &DenseSeries, radius: Option<usize>) -> Result<f64> {
    check_pair(a, b)?;
    // The recurrence is symmetric under transposition, so iterate over the longer
    // series and keep rows as long as the shorter one.
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let (m, n) = (long.len(), short.len());
    let mut prev = vec![f64::INFINITY; n];
    let mut cur = vec![f64::INFINITY; n];
    let mut prev_range = (0usize, 0usize);
    for i in 0..m {
        let (lo, hi) = band_range(i, m, n, radius);
        let x = long.point(i);
        for j in lo..=hi {
            let d = sq_dist(x, short.point(j));
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = prev[j];
                let left = if j > 0 { cur[j - 1] } else { f64::INFINITY };
                let diag = if j > 0 { prev[j - 1] } else { f64::INFINITY };
                up.min(left).min(diag)
            };
            cur[j] = d + best;
        }
        // Row i-1 becomes scratch; only its band cells were ever written.
        prev[prev_range.0..=prev_range.1].fill(f64::INFINITY);
        std::mem::swap(&mut prev, &mut cur);
        prev_range = (lo, hi);
    }
    let total = prev[n - 1];
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::InfeasibleBand { m: a.len(), n: b.len() })
    }
}

/// Full accumulated-cost matrix, `+inf` outside the band. Debug aid.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<f64>,
}

impl CostMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.cols + j]
    }

    pub fn distance(&self) -> f64 {
        self.get(self.rows - 1, self.cols - 1)
    }
}

impl fmt::Display for CostMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let line: Vec<String> = (0..self.cols)
                .map(|j| match self.get(i, j) {
                    v if v.is_infinite() => "inf".to_string(),
                    v => format!("{v:.6}"),
                })
                .collect();
            writeln!(f, "{}", line.join(","))?;
        }
        Ok(())
    }
}

pub fn dtw_cost_matrix(a: &DenseSeries, b: &DenseSeries, band: BandPolicy) -> Result<CostMatrix> {
    check_pair(a, b)?;
    let (m, n) = (a.len(), b.len());
    let radius = band.radius(m, n)?;
    let mut cells = vec![f64::INFINITY; m * n];
    for i in 0..m {
        for j in 0..n {
            if !in_band(i, j, m, n, radius) {
                continue;
            }
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let at = |r: usize, c: usize| cells[r * n + c];
                let up = if i > 0 { at(i - 1, j) } else { f64::INFINITY };
                let left = if j > 0 { at(i, j - 1) } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 { at(i - 1, j - 1) } else { f64::INFINITY };
                up.min(left).min(diag)
            };
            cells[i * n + j] = sq_dist(a.point(i), b.point(j)) + best;
        }
    }
    Ok(CostMatrix { rows: m, cols: n, cells })
}

/// Band radius in granules from the longest half-life, `max(GB, GA)`, of the matched
/// concepts.
pub fn kb_band_radius(concepts: &[&ConceptDef], granularity: Granularity) -> Result<usize> {
    let longest = concepts
        .iter()
        .map(|c| c.half_life().minutes())
        .max()
        .ok_or_else(|| Error::Precondition("KB band needs at least one concept".into()))?;
    Ok((longest.max(0) as u64).div_ceil(granularity.minutes() as u64) as usize)
}

/// Symmetric all-pairs distance matrix, computed in parallel over pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    cells: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

pub fn pairwise_distances(series: &[DenseSeries], band: BandPolicy) -> Result<DistanceMatrix> {
    let n = series.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| dtw_distance(&series[i], &series[j], band))
        .collect::<Result<Vec<f64>>>()?;
    let mut cells = vec![0.0; n * n];
    for (&(i, j), d) in pairs.iter().zip(values) {
        cells[i * n + j] = d;
        cells[j * n + i] = d;
    }
    Ok(DistanceMatrix { n, cells })
}

/// `queries.len() x refs.len()` distances, row-major, computed in parallel.
pub fn cross_distances(
    queries: &[&DenseSeries],
    refs: &[&DenseSeries],
    band: BandPolicy,
) -> Result<Vec<Vec<f64>>> {
    queries
        .par_iter()
        .map(|q| refs.iter().map(|r| dtw_distance(q, r, band)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::bundled;

    fn uni(v: &[f64]) -> DenseSeries {
        DenseSeries::univariate(v)
    }

    #[test]
    fn local_distance_examples() {
        assert!((local_distance(&[0.2, 0.4], &[0.5, 0.8]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(local_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(local_distance(&[0.9], &[0.4]).unwrap(), 0.25);
        assert!(matches!(local_distance(&[0.1], &[0.1, 0.2]), Err(Error::Arity { .. })));
    }

    #[test]
    fn warping_absorbs_repeats() {
        let d = dtw_distance(&uni(&[0.0, 0.0, 1.0]), &uni(&[0.0, 1.0]), BandPolicy::Unconstrained).unwrap();
        assert_eq!(d, 0.0);
        let d = dtw_distance(&uni(&[0.0, 0.0, 1.0]), &uni(&[0.0, 1.0]), BandPolicy::KbBand(0)).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn identical_series_are_at_zero() {
        let a = DenseSeries::from_points(&[vec![0.1, 0.9], vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        for band in [BandPolicy::Unconstrained, BandPolicy::KbBand(0), BandPolicy::SakoeChibaPercent(10.0)] {
            assert_eq!(dtw_distance(&a, &a, band).unwrap(), 0.0);
        }
    }

    #[test]
    fn radius_zero_equal_lengths_is_lock_step() {
        let a = uni(&[0.0, 0.5, 1.0, 0.2]);
        let b = uni(&[0.1, 0.1, 0.9, 0.6]);
        let lock: f64 = (0..4).map(|t| (a.point(t)[0] - b.point(t)[0]).powi(2)).sum();
        assert!((dtw_distance(&a, &b, BandPolicy::KbBand(0)).unwrap() - lock).abs() < 1e-15);
    }

    #[test]
    fn cost_matrix_agrees_with_rolling_rows() {
        let a = uni(&[0.0, 0.3, 0.9, 1.0, 0.2, 0.4, 0.4]);
        let b = uni(&[0.1, 0.8, 0.7, 0.0]);
        for band in [BandPolicy::Unconstrained, BandPolicy::KbBand(0), BandPolicy::KbBand(1)] {
            let full = dtw_cost_matrix(&a, &b, band).unwrap();
            assert_eq!(full.distance(), dtw_distance(&a, &b, band).unwrap());
            assert_eq!(dtw_distance(&b, &a, band).unwrap(), dtw_distance(&a, &b, band).unwrap());
        }
        let text = dtw_cost_matrix(&a, &b, BandPolicy::KbBand(0)).unwrap().to_string();
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().next().unwrap().ends_with("inf"));
    }

    #[test]
    fn band_corners_and_connectivity() {
        for m in 1..12 {
            for n in 1..12 {
                for r in 0..3 {
                    assert!(in_band(0, 0, m, n, Some(r)));
                    assert!(in_band(m - 1, n - 1, m, n, Some(r)));
                }
                let a = uni(&vec![0.5; m]);
                let b = uni(&vec![0.25; n]);
                assert!(dtw_distance(&a, &b, BandPolicy::KbBand(0)).is_ok(), "{m}x{n}");
            }
        }
    }

    #[test]
    fn band_parsing_and_radius() {
        assert_eq!("unconstrained".parse::<BandPolicy>().unwrap(), BandPolicy::Unconstrained);
        assert_eq!("sakoe-chiba 10".parse::<BandPolicy>().unwrap(), BandPolicy::SakoeChibaPercent(10.0));
        assert_eq!("10%".parse::<BandPolicy>().unwrap(), BandPolicy::SakoeChibaPercent(10.0));
        assert_eq!("kb 3".parse::<BandPolicy>().unwrap(), BandPolicy::KbBand(3));
        assert_eq!("kb-band".parse::<BandPolicy>().unwrap(), BandPolicy::Kb);
        for b in [BandPolicy::Kb, BandPolicy::KbBand(2), BandPolicy::SakoeChibaPercent(12.5)] {
            assert_eq!(b.to_string().parse::<BandPolicy>().unwrap(), b);
        }
        assert!(BandPolicy::Kb.radius(3, 3).is_err());
        assert!("sakoe-chiba 0".parse::<BandPolicy>().is_err());
        assert!("diagonal".parse::<BandPolicy>().is_err());
        assert_eq!(BandPolicy::SakoeChibaPercent(10.0).radius(180, 95).unwrap(), Some(18));
        assert_eq!(BandPolicy::SakoeChibaPercent(10.0).radius(31, 5).unwrap(), Some(4));
    }

    #[test]
    fn kb_band_radii() {
        let onco = bundled::oncology();
        let all: Vec<&ConceptDef> = onco.concepts.values().collect();
        assert_eq!(kb_band_radius(&all, Granularity::DAY).unwrap(), 1);
        let dia = bundled::diabetes();
        let picks: Vec<&ConceptDef> = ["ALBUMINURIA_U24H/FEMALE", "CREATININE/FEMALE", "HBA1C"]
            .iter()
            .map(|n| dia.concept(n).unwrap())
            .collect();
        assert_eq!(kb_band_radius(&picks, Granularity::MONTH).unwrap(), 6);
        assert_eq!(kb_band_radius(&picks[1..2], Granularity::MONTH).unwrap(), 2);
        let hep = bundled::hepatitis();
        assert_eq!(kb_band_radius(&[hep.concept("LDH").unwrap()], Granularity::DAY).unwrap(), 7);
        assert!(kb_band_radius(&[], Granularity::DAY).is_err());
    }

    #[test]
    fn pairwise_matrix_is_symmetric() {
        let series: Vec<DenseSeries> = (0..5).map(|k| uni(&[k as f64 / 5.0, 0.5, 1.0 - k as f64 / 5.0])).collect();
        let dm = pairwise_distances(&series, BandPolicy::Unconstrained).unwrap();
        for i in 0..5 {
            assert_eq!(dm.get(i, i), 0.0);
            for j in 0..5 {
                assert_eq!(dm.get(i, j), dm.get(j, i));
            }
        }
        let refs: Vec<&DenseSeries> = series.iter().collect();
        let cross = cross_distances(&refs[..2], &refs, BandPolicy::Unconstrained).unwrap();
        assert_eq!(cross[1][3], dm.get(1, 3));
    }

    /// Minimum over explicitly enumerated monotone warping paths.
    fn path_oracle(a: &DenseSeries, b: &DenseSeries, radius: Option<usize>) -> f64 {
        fn walk(a: &DenseSeries, b: &DenseSeries, r: Option<usize>, i: usize, j: usize, acc: f64, best: &mut f64) {
            let (m, n) = (a.len(), b.len());
            if !in_band(i, j, m, n, r) {
                return;
            }
            let acc = acc + sq_dist(a.point(i), b.point(j));
            if i == m - 1 && j == n - 1 {
                *best = best.min(acc);
                return;
            }
            if i + 1 < m {
                walk(a, b, r, i + 1, j, acc, best);
            }
            if j + 1 < n {
                walk(a, b, r, i, j + 1, acc, best);
            }
            if i + 1 < m && j + 1 < n {
                walk(a, b, r, i + 1, j + 1, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        walk(a, b, radius, 0, 0, 0.0, &mut best);
        best
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn series(dim: usize) -> impl Strategy<Value = DenseSeries> {
            prop::collection::vec(prop::collection::vec(0.0f64..=1.0, dim), 1..7)
                .prop_map(|pts| DenseSeries::from_points(&pts).unwrap())
        }

        fn pair() -> impl Strategy<Value = (DenseSeries, DenseSeries)> {
            (1usize..=3).prop_flat_map(|d| (series(d), series(d)))
        }

        proptest! {
            #[test]
            fn matches_path_enumeration((a, b) in pair(), r in prop::option::of(0usize..4)) {
                let fast = dtw_with_radius(&a, &b, r).unwrap();
                prop_assert!((fast - path_oracle(&a, &b, r)).abs() < 1e-12);
            }

            #[test]
            fn symmetric((a, b) in pair(), r in prop::option::of(0usize..4)) {
                prop_assert_eq!(dtw_with_radius(&a, &b, r).unwrap(), dtw_with_radius(&b, &a, r).unwrap());
            }

            #[test]
            fn wider_band_never_costs_more((a, b) in pair(), r in 0usize..5) {
                let narrow = dtw_with_radius(&a, &b, Some(r)).unwrap();
                let wide = dtw_with_radius(&a, &b, Some(r + 1)).unwrap();
                let free = dtw_with_radius(&a, &b, None).unwrap();
                prop_assert!(wide <= narrow + 1e-12);
                prop_assert!(free <= wide + 1e-12);
            }

            #[test]
            fn self_distance_zero((a, _) in pair(), r in prop::option::of(0usize..4)) {
                prop_assert_eq!(dtw_with_radius(&a, &a, r).unwrap(), 0.0);
            }

            #[test]
            fn feature_order_irrelevant((a, b) in (2usize..=3).prop_flat_map(|d| (series(d), series(d)))) {
                let perm: Vec<usize> = (0..a.dim()).rev().collect();
                let pa = a.permute_features(&perm);
                let pb = b.permute_features(&perm);
                let d0 = dtw_with_radius(&a, &b, None).unwrap();
                let d1 = dtw_with_radius(&pa, &pb, None).unwrap();
                prop_assert!((d0 - d1).abs() < 1e-12);
            }
        }
    }
}
