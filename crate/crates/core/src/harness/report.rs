//! Report tables, from per-fold metrics up to the aggregate by representation
//! combination with paired t-tests against raw data.
//!
//! Numbers are written in their shortest round-trip form, so a results file read back
//! aggregates to the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::abstraction::Representation;
use crate::error::{Error, Result};
use crate::eval::{mean, paired_t_test, variance, TTest};

use super::cohort::Exclusion;
use super::cv::{ExperimentResult, FoldMetrics};
use super::grid::MatchConfig;

pub const METRICS_HEADER: &str = "config_id,fold,auc,youden_j,sensitivity,specificity,threshold";
pub const RESULTS_HEADER: &str = "config_id,concepts,representations,interpolation,aggregation,band,k,mean_auc,mean_sensitivity,mean_specificity,duplicate_of,fold_aucs";
pub const AGGREGATE_HEADER: &str = "representation,n_configs,mean_auc,variance,p_vs_raw";

/// Shortest round-trip form; scientific notation outside [1e-5, 1e15).
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else if v != 0.0 && v.is_finite() && !(1e-5..1e15).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn parse_num(s: &str) -> std::result::Result<f64, String> {
    match s.trim() {
        "NA" => Ok(f64::NAN),
        t => t.parse().map_err(|_| format!("invalid number `{t}`")),
    }
}

/// One metrics line; folds are numbered from 1.
pub fn metrics_line(config_id: usize, fold: usize, m: Option<&FoldMetrics>) -> String {
    match m {
        Some(m) => format!(
            "{config_id},{},{},{},{},{},{}",
            fold + 1,
            num(m.auc),
            num(m.youden_j),
            num(m.sensitivity),
            num(m.specificity),
            num(m.threshold)
        ),
        None => format!("{config_id},{},NA,NA,NA,NA,NA", fold + 1),
    }
}

/// Parses a metrics line back to `(config_id, fold index, metrics)`.
pub fn parse_metrics_line(line: &str) -> std::result::Result<(usize, usize, Option<FoldMetrics>), String> {
    let f: Vec<&str> = line.split(',').map(str::trim).collect();
    if f.len() != 7 {
        return Err(format!("expected 7 fields, found {}", f.len()));
    }
    let id = f[0].parse().map_err(|_| format!("invalid config id `{}`", f[0]))?;
    let fold: usize = f[1].parse().map_err(|_| format!("invalid fold `{}`", f[1]))?;
    if fold == 0 {
        return Err("folds are numbered from 1".into());
    }
    if f[2] == "NA" {
        return Ok((id, fold - 1, None));
    }
    Ok((
        id,
        fold - 1,
        Some(FoldMetrics {
            auc: parse_num(f[2])?,
            youden_j: parse_num(f[3])?,
            sensitivity: parse_num(f[4])?,
            specificity: parse_num(f[5])?,
            threshold: parse_num(f[6])?,
        }),
    ))
}

pub fn metrics_csv(results: &[ExperimentResult]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in results {
        for (f, m) in r.folds.iter().enumerate() {
            out.push_str(&metrics_line(r.config_id, f, m.as_ref()));
            out.push('\n');
        }
    }
    out
}

/// Raw configs differ only in the duration delegate when their granules hold point
/// samples of equal weight, so each maps to the first raw config with the same
/// concepts, interpolation, band and `k`.
pub fn raw_duplicates(configs: &[MatchConfig]) -> BTreeMap<usize, usize> {
    let mut first: BTreeMap<String, usize> = BTreeMap::new();
    let mut dup = BTreeMap::new();
    for c in configs.iter().filter(|c| c.is_raw()) {
        let key = format!("{}|{}|{}|{}", c.assignment(), c.interpolation, c.band, c.k);
        match first.get(&key) {
            Some(&canonical) => {
                dup.insert(c.id, canonical);
            }
            None => {
                first.insert(key, c.id);
            }
        }
    }
    dup
}

/// A results-table line.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub config_id: usize,
    pub concepts: Vec<String>,
    pub representations: Vec<Representation>,
    pub interpolation: String,
    pub aggregation: String,
    pub band: String,
    pub k: usize,
    pub mean_auc: f64,
    pub mean_sensitivity: f64,
    pub mean_specificity: f64,
    pub duplicate_of: Option<usize>,
    pub fold_aucs: Vec<f64>,
}

impl ResultRow {
    pub fn new(config: &MatchConfig, result: &ExperimentResult, duplicate_of: Option<usize>) -> ResultRow {
        ResultRow {
            config_id: config.id,
            concepts: config.concepts.clone(),
            representations: config.representations.clone(),
            interpolation: config.interpolation.to_string(),
            aggregation: config.duration_delegate.to_string(),
            band: config.band.to_string(),
            k: config.k,
            mean_auc: result.mean_auc,
            mean_sensitivity: result.mean_sensitivity,
            mean_specificity: result.mean_specificity,
            duplicate_of,
            fold_aucs: result.fold_aucs().into_iter().map(|a| a.unwrap_or(f64::NAN)).collect(),
        }
    }

    pub fn is_raw(&self) -> bool {
        self.representations.iter().all(|r| r.is_raw())
    }

    /// Unordered representation combination, e.g. `S+G` for both `A:S+B:G` and `A:G+B:S`.
    pub fn combination(&self) -> String {
        let mut reps = self.representations.clone();
        reps.sort();
        reps.iter().map(|r| r.code()).collect::<Vec<_>>().join("+")
    }

    fn raw_partner_key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.concepts.join("+"),
            self.interpolation,
            self.aggregation,
            self.band,
            self.k
        )
    }

    pub fn to_line(&self) -> String {
        let reps: Vec<&str> = self.representations.iter().map(|r| r.code()).collect();
        let folds: Vec<String> = self.fold_aucs.iter().map(|&a| num(a)).collect();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.config_id,
            self.concepts.join("+"),
            reps.join("+"),
            self.interpolation,
            self.aggregation,
            self.band,
            self.k,
            num(self.mean_auc),
            num(self.mean_sensitivity),
            num(self.mean_specificity),
            self.duplicate_of.map(|d| d.to_string()).unwrap_or_default(),
            folds.join(";")
        )
    }

    pub fn parse_line(line: &str) -> std::result::Result<ResultRow, String> {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 12 {
            return Err(format!("expected 12 fields, found {}", f.len()));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| format!("invalid integer `{s}`"));
        let representations = f[2]
            .split('+')
            .map(|r| r.parse::<Representation>().map_err(|e| e.to_string()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let concepts: Vec<String> = f[1].split('+').map(str::to_string).collect();
        if concepts.len() != representations.len() {
            return Err("concepts and representations differ in length".into());
        }
        Ok(ResultRow {
            config_id: int(f[0])?,
            concepts,
            representations,
            interpolation: f[3].to_string(),
            aggregation: f[4].to_string(),
            band: f[5].to_string(),
            k: int(f[6])?,
            mean_auc: parse_num(f[7])?,
            mean_sensitivity: parse_num(f[8])?,
            mean_specificity: parse_num(f[9])?,
            duplicate_of: if f[10].is_empty() { None } else { Some(int(f[10])?) },
            fold_aucs: f[11].split(';').filter(|s| !s.is_empty()).map(parse_num).collect::<std::result::Result<_, _>>()?,
        })
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in rows {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

pub fn parse_results_csv(name: &str, text: &str) -> Result<Vec<ResultRow>> {
    text.lines()
        .enumerate()
        .filter(|(i, l)| !(l.trim().is_empty() || (*i == 0 && l.starts_with("config_id"))))
        .map(|(i, l)| {
            ResultRow::parse_line(l).map_err(|message| Error::Data {
                path: name.to_string(),
                line: i + 1,
                message,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationGroup {
    /// Unordered combination such as `S+G`.
    pub key: String,
    pub concept_count: usize,
    pub aucs: Vec<f64>,
    pub mean_auc: f64,
    pub variance: f64,
    /// Paired (group, raw) AUCs: each config against the all-raw config with the same
    /// concepts, interpolation, aggregation, band and `k`.
    pub raw_pairs: Vec<(f64, f64)>,
    pub vs_raw: Option<TTest>,
}

/// Groups configs by unordered representation combination, ordered by concept count,
/// then raw first, then combination.
pub fn aggregate_by_representation(rows: &[ResultRow]) -> Vec<RepresentationGroup> {
    let raw_by_key: BTreeMap<String, f64> = rows
        .iter()
        .filter(|r| r.is_raw())
        .map(|r| (r.raw_partner_key(), r.mean_auc))
        .collect();
    let mut groups: BTreeMap<(usize, Vec<Representation>), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let mut reps = r.representations.clone();
        reps.sort();
        groups.entry((reps.len(), reps)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((concept_count, _), members)| {
            let aucs: Vec<f64> = members.iter().map(|r| r.mean_auc).collect();
            let raw_pairs: Vec<(f64, f64)> = if members[0].is_raw() {
                Vec::new()
            } else {
                members
                    .iter()
                    .filter_map(|r| raw_by_key.get(&r.raw_partner_key()).map(|&raw| (r.mean_auc, raw)))
                    .filter(|(a, b)| !a.is_nan() && !b.is_nan())
                    .collect()
            };
            let vs_raw = if raw_pairs.len() >= 2 {
                let (a, b): (Vec<f64>, Vec<f64>) = raw_pairs.iter().copied().unzip();
                paired_t_test(&a, &b).ok()
            } else {
                None
            };
            RepresentationGroup {
                key: members[0].combination(),
                concept_count,
                mean_auc: mean(&aucs),
                variance: variance(&aucs),
                aucs,
                raw_pairs,
                vs_raw,
            }
        })
        .collect()
}

pub fn aggregate_csv(groups: &[RepresentationGroup]) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for g in groups {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            g.key,
            g.aucs.len(),
            num(g.mean_auc),
            num(g.variance),
            g.vs_raw.map_or("NA".to_string(), |t| num(t.p))
        );
    }
    out
}

pub fn excluded_csv(excluded: &[Exclusion]) -> String {
    let mut out = String::from("entity_id,reason\n");
    for x in excluded {
        let _ = writeln!(out, "{},\"{}\"", x.entity, x.reason.replace('"', "'"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::time::Duration;

    proptest! {
        #[test]
        fn numbers_round_trip(v in prop::num::f64::ANY) {
            let back = parse_num(&num(v)).unwrap();
            prop_assert!(back.to_bits() == v.to_bits() || (v.is_nan() && back.is_nan()));
        }
    }

    #[test]
    fn number_forms() {
        assert_eq!(num(0.75), "0.75");
        assert_eq!(num(4.6e-42), "4.6e-42");
        assert_eq!(num(f64::NAN), "NA");
        assert_eq!(num(f64::INFINITY), "inf");
    }

    fn row(id: usize, concepts: &[&str], reps: &str, k: usize, auc: f64) -> ResultRow {
        ResultRow {
            config_id: id,
            concepts: concepts.iter().map(|s| s.to_string()).collect(),
            representations: reps.split('+').map(|r| r.parse().unwrap()).collect(),
            interpolation: "linear".into(),
            aggregation: "MTT".into(),
            band: "unconstrained".into(),
            k,
            mean_auc: auc,
            mean_sensitivity: 0.5,
            mean_specificity: 0.25,
            duplicate_of: None,
            fold_aucs: vec![auc, f64::NAN],
        }
    }

    #[test]
    fn metrics_lines_round_trip() {
        let m = FoldMetrics {
            auc: 0.1 + 0.2,
            youden_j: 0.5,
            sensitivity: 1.0,
            specificity: 0.5,
            threshold: 1.0 / 3.0,
        };
        let line = metrics_line(7, 2, Some(&m));
        assert!(line.starts_with("7,3,"));
        assert_eq!(parse_metrics_line(&line).unwrap(), (7, 2, Some(m)));
        assert_eq!(parse_metrics_line(&metrics_line(7, 0, None)).unwrap(), (7, 0, None));
        assert!(parse_metrics_line("7,0,NA,NA,NA,NA,NA").is_err());
        let r = ExperimentResult::from_folds(7, vec![Some(m), None], Duration::ZERO);
        assert_eq!(metrics_csv(&[r]).lines().count(), 3);
    }

    #[test]
    fn results_round_trip() {
        let mut r = row(4, &["WBC", "HGB"], "S+G", 3, 0.8125);
        r.duplicate_of = Some(1);
        let text = results_csv(&[r.clone(), row(5, &["WBC"], "R", 1, f64::NAN)]);
        let back = parse_results_csv("r", &text).unwrap();
        assert_eq!(back[0].to_line(), r.to_line());
        assert!(back[1].mean_auc.is_nan());
        assert!(parse_results_csv("r", "config_id\n1,2\n").is_err());
    }

    #[test]
    fn grouping_ignores_concept_order() {
        let rows = vec![
            row(0, &["A", "B"], "R+R", 1, 0.5),
            row(1, &["A", "B"], "S+G", 1, 0.7),
            row(2, &["A", "B"], "G+S", 1, 0.9),
            row(3, &["A"], "S", 1, 0.6),
        ];
        let groups = aggregate_by_representation(&rows);
        let keys: Vec<&str> = groups.iter().map(|g| g.key.as_str()).collect();
        assert_eq!(keys, ["S", "R+R", "S+G"]);
        let sg = &groups[2];
        assert_eq!(sg.aucs.len(), 2);
        assert!((sg.mean_auc - 0.8).abs() < 1e-15);
        assert_eq!(sg.raw_pairs, vec![(0.7, 0.5), (0.9, 0.5)]);
        assert!(sg.vs_raw.is_some());
        assert_eq!(groups[0].mean_auc, 0.6);
        assert_eq!(groups[0].variance, 0.0);
        assert!(groups[1].vs_raw.is_none());
    }

    #[test]
    fn identical_vectors_give_p_one() {
        let rows = vec![
            row(0, &["A"], "R", 1, 0.7),
            row(1, &["A"], "R", 3, 0.6),
            row(2, &["A"], "S", 1, 0.7),
            row(3, &["A"], "S", 3, 0.6),
        ];
        let groups = aggregate_by_representation(&rows);
        assert_eq!(groups[1].vs_raw.unwrap().p, 1.0);
        let csv = aggregate_csv(&groups);
        assert_eq!(csv.lines().next().unwrap(), AGGREGATE_HEADER);
        let raw_line = format!("R,2,{},{},NA", num(mean(&[0.7, 0.6])), num(variance(&[0.7, 0.6])));
        assert_eq!(csv.lines().nth(1).unwrap(), raw_line);
        assert!(csv.lines().nth(2).unwrap().ends_with(",1"));
    }
}
