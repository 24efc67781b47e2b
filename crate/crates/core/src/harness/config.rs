//! Experiment config file: `[experiment]`, `[timeline]` and `[grid]` sections of
//! `key = value` lines.
//!
//! ```text
//! [experiment]
//! concepts = WBC, HGB
//! max_concepts = 2
//! granularity = day
//!
//! [timeline]
//! type = relative
//! reference = ADMISSION
//! before = 0 days
//! after = 60 days
//!
//! [grid]
//! interpolation = nearest, linear, average
//! aggregation = LI, MTT
//! band = sakoe-chiba 10, unconstrained
//! k = auto
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gbr::InterpolationMethod;
use crate::imatch::BandPolicy;
use crate::kb::DurationDelegate;
use crate::scoping::{Aspect, Selection, TimelineSpec};
use crate::sections::{read_sections, Entry, Section};
use crate::temporal::{parse_timestamp, Duration, Granularity};

/// Which `k` values the grid sweeps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KSpec {
    /// Odd values up to the rounded square root of the cohort size.
    Auto,
    List(Vec<usize>),
}

impl KSpec {
    pub fn resolve(&self, n_entities: usize) -> Vec<usize> {
        match self {
            KSpec::Auto => crate::eval::k_values(n_entities),
            KSpec::List(ks) => ks.clone(),
        }
    }
}

impl fmt::Display for KSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSpec::Auto => f.write_str("auto"),
            KSpec::List(ks) => f.write_str(&join(ks)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    /// Bundled KB name or path; the command line may override it.
    pub kb: Option<String>,
    /// Base concept names, in grid order.
    pub concepts: Vec<String>,
    pub max_concepts: usize,
    pub granularity: Granularity,
    pub folds: usize,
    pub positive_label: Option<String>,
    /// Entity attribute selecting `CONCEPT/<value>` KB entries.
    pub subpopulation: Option<String>,
    pub timeline: TimelineSpec,
    pub interpolations: Vec<InterpolationMethod>,
    pub aggregations: Vec<DurationDelegate>,
    pub bands: Vec<BandPolicy>,
    pub k: KSpec,
}

impl ExperimentConfig {
    /// Default grid over the given concepts and timeline.
    pub fn new(concepts: Vec<String>, timeline: TimelineSpec) -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            kb: None,
            max_concepts: concepts.len().min(3),
            concepts,
            granularity: Granularity::DAY,
            folds: 10,
            positive_label: None,
            subpopulation: None,
            timeline,
            interpolations: InterpolationMethod::STANDARD.to_vec(),
            aggregations: vec![DurationDelegate::Li, DurationDelegate::Mtt],
            bands: vec![BandPolicy::SakoeChibaPercent(10.0), BandPolicy::Unconstrained],
            k: KSpec::Auto,
        }
    }

    pub fn parse(source_name: &str, text: &str) -> Result<ExperimentConfig> {
        let sections = read_sections(source_name, text)?;
        let bad = |e: &Entry, message: String| Error::Syntax {
            source_name: source_name.to_string(),
            line: e.line,
            column: e.column,
            message,
        };
        let find = |kind: &str| sections.iter().find(|s| s.kind == kind);
        for s in &sections {
            if !matches!(s.kind.as_str(), "experiment" | "timeline" | "grid") && !(s.kind.is_empty() && s.entries.is_empty()) {
                return Err(Error::Syntax {
                    source_name: source_name.to_string(),
                    line: s.line.max(1),
                    column: 1,
                    message: format!("unknown section `{}`", s.kind),
                });
            }
        }
        let exp = find("experiment").ok_or_else(|| Error::Config("missing [experiment] section".into()))?;
        let timeline = find("timeline").ok_or_else(|| Error::Config("missing [timeline] section".into()))?;
        check_keys(exp, &["name", "kb", "concepts", "max_concepts", "granularity", "folds", "positive_label", "subpopulation"], &bad)?;

        let concepts: Vec<String> = exp
            .get("concepts")
            .map(|e| split_list(&e.value).map(str::to_string).collect())
            .unwrap_or_default();
        if concepts.is_empty() {
            return Err(Error::Config("[experiment] declares no concepts".into()));
        }
        let timeline = parse_timeline(timeline, &bad)?;
        let mut cfg = ExperimentConfig::new(concepts, timeline);
        if let Some(e) = exp.get("name") {
            cfg.name = e.value.clone();
        }
        cfg.kb = exp.get("kb").map(|e| e.value.clone());
        cfg.positive_label = exp.get("positive_label").map(|e| e.value.clone());
        cfg.subpopulation = exp.get("subpopulation").map(|e| e.value.clone());
        if let Some(e) = exp.get("max_concepts") {
            cfg.max_concepts = parse_value(e, &bad)?;
        }
        if let Some(e) = exp.get("granularity") {
            cfg.granularity = parse_value(e, &bad)?;
        }
        if let Some(e) = exp.get("folds") {
            cfg.folds = parse_value(e, &bad)?;
        }
        if let Some(grid) = find("grid") {
            check_keys(grid, &["interpolation", "aggregation", "band", "k"], &bad)?;
            if let Some(e) = grid.get("interpolation") {
                cfg.interpolations = parse_list(e, &bad)?;
            }
            if let Some(e) = grid.get("aggregation") {
                cfg.aggregations = parse_list(e, &bad)?;
            }
            if let Some(e) = grid.get("band") {
                cfg.bands = parse_list(e, &bad)?;
            }
            if let Some(e) = grid.get("k") {
                cfg.k = if e.value.trim().eq_ignore_ascii_case("auto") {
                    KSpec::Auto
                } else {
                    KSpec::List(parse_list(e, &bad)?)
                };
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.concepts.is_empty() {
            return fail("no concepts".into());
        }
        let mut seen = self.concepts.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.concepts.len() {
            return fail("concepts are listed more than once".into());
        }
        if self.max_concepts == 0 || self.max_concepts > self.concepts.len() {
            return fail(format!(
                "max_concepts must be between 1 and {}, got {}",
                self.concepts.len(),
                self.max_concepts
            ));
        }
        if self.folds < 2 {
            return fail(format!("need at least 2 folds, got {}", self.folds));
        }
        if self.interpolations.is_empty() || self.aggregations.is_empty() || self.bands.is_empty() {
            return fail("every grid dimension needs at least one value".into());
        }
        for b in &self.bands {
            b.validate()?;
        }
        if let KSpec::List(ks) = &self.k {
            if ks.is_empty() {
                return fail("empty k list".into());
            }
            for &k in ks {
                crate::eval::check_k(k)?;
            }
        }
        self.timeline.validate()
    }
}

fn check_keys(section: &Section, allowed: &[&str], bad: &impl Fn(&Entry, String) -> Error) -> Result<()> {
    match section.entries.iter().find(|e| !allowed.contains(&e.key.as_str())) {
        Some(e) => Err(bad(e, format!("unknown key `{}` in [{}]", e.key, section.kind))),
        None => Ok(()),
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty())
}

fn parse_value<T: FromStr>(e: &Entry, bad: &impl Fn(&Entry, String) -> Error) -> Result<T>
where
    T::Err: fmt::Display,
{
    e.value
        .trim()
        .parse()
        .map_err(|err: T::Err| bad(e, format!("`{}`: {err}", e.key)))
}

fn parse_list<T: FromStr>(e: &Entry, bad: &impl Fn(&Entry, String) -> Error) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    let items = split_list(&e.value)
        .map(|t| t.parse().map_err(|err: T::Err| bad(e, format!("`{}`: {err}", e.key))))
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(bad(e, format!("`{}` is empty", e.key)));
    }
    Ok(items)
}

fn parse_timeline(s: &Section, bad: &impl Fn(&Entry, String) -> Error) -> Result<TimelineSpec> {
    check_keys(s, &["type", "reference", "aspect", "selection", "before", "after", "start", "end"], bad)?;
    let kind = s.get("type").map(|e| e.value.to_ascii_lowercase()).unwrap_or_else(|| {
        if s.get("reference").is_some() { "relative".into() } else { "absolute".into() }
    });
    let need = |key: &str| {
        s.get(key)
            .ok_or_else(|| Error::Config(format!("[timeline] needs `{key}` for a {kind} timeline")))
    };
    let ts = |key: &str| -> Result<i64> {
        let e = need(key)?;
        parse_timestamp(&e.value).map_err(|err| bad(e, err.to_string()))
    };
    match kind.as_str() {
        "absolute" => Ok(TimelineSpec::Absolute {
            start: ts("start")?,
            end: ts("end")?,
        }),
        "relative" => {
            let aspect = match s.get("aspect").map(|e| (e, e.value.to_ascii_lowercase())) {
                None => Aspect::Start,
                Some((_, v)) if v == "start" => Aspect::Start,
                Some((_, v)) if v == "end" => Aspect::End,
                Some((e, v)) => return Err(bad(e, format!("aspect must be start or end, got `{v}`"))),
            };
            let selection = match s.get("selection") {
                Some(e) => parse_value::<Selection>(e, bad)?,
                None => Selection::First,
            };
            Ok(TimelineSpec::Relative {
                reference: need("reference")?.value.clone(),
                aspect,
                selection,
                before: parse_value::<Duration>(need("before")?, bad)?,
                after: parse_value::<Duration>(need("after")?, bad)?,
            })
        }
        other => Err(Error::Config(format!("timeline type must be relative or absolute, got `{other}`"))),
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[experiment]")?;
        writeln!(f, "name = {}", self.name)?;
        if let Some(kb) = &self.kb {
            writeln!(f, "kb = {kb}")?;
        }
        writeln!(f, "concepts = {}", self.concepts.join(", "))?;
        writeln!(f, "max_concepts = {}", self.max_concepts)?;
        writeln!(f, "granularity = {}", self.granularity)?;
        writeln!(f, "folds = {}", self.folds)?;
        if let Some(p) = &self.positive_label {
            writeln!(f, "positive_label = {p}")?;
        }
        if let Some(s) = &self.subpopulation {
            writeln!(f, "subpopulation = {s}")?;
        }
        writeln!(f, "\n[timeline]")?;
        match &self.timeline {
            TimelineSpec::Absolute { start, end } => {
                writeln!(f, "type = absolute\nstart = {start}\nend = {end}")?;
            }
            TimelineSpec::Relative {
                reference,
                aspect,
                selection,
                before,
                after,
            } => {
                writeln!(f, "type = relative\nreference = {reference}")?;
                let aspect = if *aspect == Aspect::Start { "start" } else { "end" };
                writeln!(f, "aspect = {aspect}\nselection = {selection}")?;
                writeln!(f, "before = {before}\nafter = {after}")?;
            }
        }
        writeln!(f, "\n[grid]")?;
        writeln!(f, "interpolation = {}", join(&self.interpolations))?;
        writeln!(f, "aggregation = {}", join(&self.aggregations))?;
        writeln!(f, "band = {}", join(&self.bands))?;
        writeln!(f, "k = {}", self.k)
    }
}
