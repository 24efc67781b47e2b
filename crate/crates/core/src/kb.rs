//! Declarative per-concept abstraction knowledge: state ranges, significant variation,
//! local persistence and default delegate functions.
//!
//! The file format is line oriented. `[concept <name>]` opens a record whose keys are
//! `type`, `state` (repeated, ordered low to high), `variation`, `good_before`,
//! `good_after`, `value_delegate` and `duration_delegate`. An optional
//! `[knowledge-base]` section carries `name` and `base_unit`.
//!
//! Numeric state ranges are half-open `[low, high)`; the topmost state is closed above
//! at `+inf`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sections::{read_sections, Entry, Section};
use crate::temporal::{Duration, TimeUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueType {
    Numeric,
    Ordinal,
    Boolean,
}

impl FromStr for ValueType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numeric" => Ok(ValueType::Numeric),
            "ordinal" | "ordinal-symbolic" => Ok(ValueType::Ordinal),
            "boolean" => Ok(ValueType::Boolean),
            other => Err(Error::Semantic(format!("unknown value type `{other}`"))),
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueType::Numeric => "numeric",
            ValueType::Ordinal => "ordinal-symbolic",
            ValueType::Boolean => "boolean",
        })
    }
}

/// Statistical delegate applied when every segment in a granule lasts equally long.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ValueDelegate {
    #[default]
    Mean,
    Median,
    Mode,
}

impl FromStr for ValueDelegate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(ValueDelegate::Mean),
            "median" => Ok(ValueDelegate::Median),
            "mode" => Ok(ValueDelegate::Mode),
            other => Err(Error::Config(format!("unknown value delegate `{other}`"))),
        }
    }
}

impl fmt::Display for ValueDelegate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueDelegate::Mean => "mean",
            ValueDelegate::Median => "median",
            ValueDelegate::Mode => "mode",
        })
    }
}

/// Delegate applied when segment durations in a granule differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub enum DurationDelegate {
    /// Longest interval.
    Li,
    /// Maximal total time.
    #[default]
    Mtt,
}

impl FromStr for DurationDelegate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MTT" => Ok(DurationDelegate::Mtt),
            "LI" => Ok(DurationDelegate::Li),
            other => Err(Error::Config(format!("unknown duration delegate `{other}`"))),
        }
    }
}

impl fmt::Display for DurationDelegate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DurationDelegate::Mtt => "MTT",
            DurationDelegate::Li => "LI",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariationKind {
    Absolute,
    Percent,
}

/// Smallest change between consecutive values that counts as a trend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationSpec {
    pub kind: VariationKind,
    pub threshold: f64,
}

impl VariationSpec {
    /// Threshold in value units for a change starting at `from`.
    pub fn threshold_at(&self, from: f64) -> f64 {
        match self.kind {
            VariationKind::Absolute => self.threshold,
            VariationKind::Percent => self.threshold / 100.0 * from.abs(),
        }
    }
}

impl fmt::Display for VariationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            VariationKind::Absolute => "absolute",
            VariationKind::Percent => "percent",
        };
        write!(f, "{kind},{}", self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDef {
    pub label: String,
    pub low: f64,
    pub high: f64,
    /// 1-based position in the low-to-high order.
    pub ordinal: usize,
}

impl StateDef {
    pub fn contains(&self, value: f64) -> bool {
        value >= self.low && value < self.high
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptDef {
    pub name: String,
    pub value_type: ValueType,
    pub states: Vec<StateDef>,
    pub variation: VariationSpec,
    pub good_before: Duration,
    pub good_after: Duration,
    pub value_delegate: ValueDelegate,
    pub duration_delegate: DurationDelegate,
}

impl ConceptDef {
    /// Classifies a numeric value into its state. Symbolic concepts accept their
    /// 1-based ordinal codes here.
    pub fn state_for_value(&self, value: f64) -> Result<&StateDef> {
        let lowest = self
            .states
            .first()
            .ok_or_else(|| Error::Semantic(format!("concept `{}` has no states", self.name)))?;
        if value < lowest.low {
            return Err(Error::OutOfRange {
                concept: self.name.clone(),
                value,
                low: lowest.low,
            });
        }
        let top = self.states.last().expect("non-empty");
        Ok(self
            .states
            .iter()
            .find(|s| s.contains(value))
            .unwrap_or(top))
    }

    pub fn state_by_label(&self, label: &str) -> Option<&StateDef> {
        self.states
            .iter()
            .find(|s| s.label.eq_ignore_ascii_case(label.trim()))
    }

    /// Persistence half-life: the longer of the two local persistence durations.
    pub fn half_life(&self) -> Duration {
        self.good_before.max(self.good_after)
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Semantic(format!("concept `{}`: {msg}", self.name)));
        match self.value_type {
            ValueType::Numeric if self.states.is_empty() => return err("no states".into()),
            ValueType::Ordinal if self.states.len() < 2 => {
                return err("ordinal concepts need at least 2 states".into())
            }
            ValueType::Boolean if self.states.len() != 2 => {
                return err("boolean concepts need exactly 2 states".into())
            }
            _ => {}
        }
        if !(self.variation.threshold > 0.0) || !self.variation.threshold.is_finite() {
            return err(format!(
                "significant variation must be positive, got {}",
                self.variation.threshold
            ));
        }
        if self.good_before.minutes() < 0 || self.good_after.minutes() < 0 {
            return err("persistence durations must be non-negative".into());
        }
        for (i, s) in self.states.iter().enumerate() {
            if s.ordinal != i + 1 {
                return err(format!("state `{}` has ordinal {} at position {}", s.label, s.ordinal, i + 1));
            }
            if !(s.low < s.high) {
                return err(format!("state `{}` has empty range [{}, {})", s.label, s.low, s.high));
            }
        }
        for w in self.states.windows(2) {
            if w[0].high > w[1].low {
                return err(format!("states `{}` and `{}` overlap", w[0].label, w[1].label));
            }
            if w[0].high < w[1].low {
                return err(format!(
                    "gap between `{}` (< {}) and `{}` (>= {})",
                    w[0].label, w[0].high, w[1].label, w[1].low
                ));
            }
        }
        let mut labels: Vec<_> = self.states.iter().map(|s| s.label.to_ascii_uppercase()).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return err("duplicate state label".into());
        }
        if self.value_type == ValueType::Numeric && self.states.last().is_some_and(|s| s.high != f64::INFINITY) {
            return err("the topmost state must extend to inf".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub name: Option<String>,
    pub base_unit: TimeUnit,
    pub concepts: BTreeMap<String, ConceptDef>,
}

impl KnowledgeBase {
    pub fn parse(text: &str) -> Result<KnowledgeBase> {
        Self::parse_named("<knowledge base>", text)
    }

    /// Parses and validates a knowledge base; `source_name` prefixes syntax errors.
    pub fn parse_named(source_name: &str, text: &str) -> Result<KnowledgeBase> {
        let sections = read_sections(source_name, text)?;
        let syntax = |e: &Entry, message: String| Error::Syntax {
            source_name: source_name.to_string(),
            line: e.line,
            column: e.column,
            message,
        };
        let mut kb = KnowledgeBase {
            name: None,
            base_unit: TimeUnit::Minute,
            concepts: BTreeMap::new(),
        };
        for section in &sections {
            match section.kind.as_str() {
                "" | "knowledge-base" => {
                    for e in &section.entries {
                        match e.key.as_str() {
                            "name" => kb.name = Some(e.value.clone()),
                            "base_unit" => {
                                kb.base_unit = e.value.parse().map_err(|err: Error| syntax(e, err.to_string()))?
                            }
                            other => return Err(syntax(e, format!("unknown key `{other}`"))),
                        }
                    }
                }
                "concept" => {
                    let concept = parse_concept(section, &syntax, source_name)?;
                    if kb.concepts.contains_key(&concept.name) {
                        return Err(Error::Semantic(format!("duplicate concept `{}`", concept.name)));
                    }
                    kb.concepts.insert(concept.name.clone(), concept);
                }
                other => {
                    return Err(Error::Syntax {
                        source_name: source_name.to_string(),
                        line: section.line,
                        column: 2,
                        message: format!("unknown section `{other}`"),
                    })
                }
            }
        }
        kb.validate()?;
        Ok(kb)
    }

    fn validate(&self) -> Result<()> {
        if self.concepts.is_empty() {
            return Err(Error::Semantic("no concepts".into()));
        }
        let unit = self.base_unit.minutes();
        for c in self.concepts.values() {
            c.validate()?;
            for d in [c.good_before, c.good_after] {
                if d.minutes() % unit != 0 {
                    return Err(Error::Semantic(format!(
                        "concept `{}`: duration {d} is not a whole number of base units",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn concept(&self, name: &str) -> Result<&ConceptDef> {
        self.concepts
            .get(name)
            .ok_or_else(|| Error::UnknownConcept(name.to_string()))
    }

    /// Looks up `name/subpopulation` first, then the plain `name`.
    pub fn concept_for(&self, name: &str, subpopulation: Option<&str>) -> Result<&ConceptDef> {
        if let Some(sub) = subpopulation {
            if let Some(c) = self.concepts.get(&format!("{name}/{sub}")) {
                return Ok(c);
            }
        }
        if let Some(c) = self.concepts.get(name) {
            return Ok(c);
        }
        // Without an attribute, fall back to the first subpopulation entry.
        let prefix = format!("{name}/");
        self.concepts
            .iter()
            .find(|(k, _)| subpopulation.is_none() && k.starts_with(&prefix))
            .map(|(_, c)| c)
            .ok_or_else(|| Error::UnknownConcept(name.to_string()))
    }

    /// Base concept names with any `/subpopulation` suffix removed, deduplicated.
    pub fn base_concepts(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .concepts
            .keys()
            .map(|k| k.split('/').next().unwrap_or(k).to_string())
            .collect();
        names.dedup();
        names
    }
}

fn parse_concept(
    section: &Section,
    syntax: &impl Fn(&Entry, String) -> Error,
    source_name: &str,
) -> Result<ConceptDef> {
    let name = section.arg.trim().to_string();
    if name.is_empty() {
        return Err(Error::Syntax {
            source_name: source_name.to_string(),
            line: section.line,
            column: 2,
            message: "concept section needs a name".into(),
        });
    }
    let semantic = |msg: String| Error::Semantic(format!("concept `{name}`: {msg}"));
    let known = [
        "type",
        "state",
        "variation",
        "good_before",
        "good_after",
        "value_delegate",
        "duration_delegate",
    ];
    if let Some(e) = section.entries.iter().find(|e| !known.contains(&e.key.as_str())) {
        return Err(syntax(e, format!("unknown key `{}`", e.key)));
    }
    let value_type: ValueType = section
        .get("type")
        .ok_or_else(|| semantic("missing `type`".into()))?
        .value
        .parse()?;

    let mut states = Vec::new();
    for (i, e) in section.all("state").enumerate() {
        let parts: Vec<&str> = e.value.split(',').map(str::trim).collect();
        let ordinal = i + 1;
        let state = match (value_type, parts.as_slice()) {
            (ValueType::Numeric, [label, low, high]) => StateDef {
                label: label.to_string(),
                low: parse_bound(low).map_err(|m| syntax(e, m))?,
                high: parse_bound(high).map_err(|m| syntax(e, m))?,
                ordinal,
            },
            (ValueType::Numeric, _) => return Err(syntax(e, "expected state=<label>,<low>,<high>".into())),
            // Symbolic states occupy their ordinal slot so numeric codes classify too.
            (_, [label]) => StateDef {
                label: label.to_string(),
                low: if i == 0 { f64::NEG_INFINITY } else { ordinal as f64 - 0.5 },
                high: ordinal as f64 + 0.5,
                ordinal,
            },
            _ => return Err(syntax(e, "expected state=<label>".into())),
        };
        if state.label.is_empty() {
            return Err(syntax(e, "empty state label".into()));
        }
        states.push(state);
    }
    if value_type != ValueType::Numeric {
        if let Some(top) = states.last_mut() {
            top.high = f64::INFINITY;
        }
    }

    let variation = match section.get("variation") {
        Some(e) => {
            let (kind, threshold) = e
                .value
                .split_once(',')
                .ok_or_else(|| syntax(e, "expected variation=<absolute|percent>,<threshold>".into()))?;
            let kind = match kind.trim().to_ascii_lowercase().as_str() {
                "absolute" => VariationKind::Absolute,
                "percent" => VariationKind::Percent,
                other => return Err(syntax(e, format!("unknown variation kind `{other}`"))),
            };
            let threshold = threshold
                .trim()
                .trim_end_matches('%')
                .parse::<f64>()
                .map_err(|_| syntax(e, format!("bad threshold `{}`", threshold.trim())))?;
            VariationSpec { kind, threshold }
        }
        None if value_type == ValueType::Numeric => return Err(semantic("missing `variation`".into())),
        // One ordinal step.
        None => VariationSpec {
            kind: VariationKind::Absolute,
            threshold: 1.0,
        },
    };

    let duration = |key: &str| -> Result<Duration> {
        match section.get(key) {
            Some(e) => e.value.parse().map_err(|err: Error| syntax(e, err.to_string())),
            None => Ok(Duration::ZERO),
        }
    };
    let parse_key = |key: &str| section.get(key);
    let value_delegate = match parse_key("value_delegate") {
        Some(e) => e.value.parse().map_err(|err: Error| syntax(e, err.to_string()))?,
        None => ValueDelegate::default(),
    };
    let duration_delegate = match parse_key("duration_delegate") {
        Some(e) => e.value.parse().map_err(|err: Error| syntax(e, err.to_string()))?,
        None => DurationDelegate::default(),
    };

    Ok(ConceptDef {
        good_before: duration("good_before")?,
        good_after: duration("good_after")?,
        name,
        value_type,
        states,
        variation,
        value_delegate,
        duration_delegate,
    })
}

fn parse_bound(s: &str) -> std::result::Result<f64, String> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("bad range bound `{s}`")),
    }
}

fn fmt_bound(v: f64) -> String {
    match v {
        f64::INFINITY => "inf".into(),
        f64::NEG_INFINITY => "-inf".into(),
        v => v.to_string(),
    }
}

impl fmt::Display for KnowledgeBase {
    /// Canonical serialization; parsing it yields an equal knowledge base.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[knowledge-base]")?;
        if let Some(name) = &self.name {
            writeln!(f, "name = {name}")?;
        }
        writeln!(f, "base_unit = {}", self.base_unit)?;
        for c in self.concepts.values() {
            writeln!(f, "\n[concept {}]", c.name)?;
            writeln!(f, "type = {}", c.value_type)?;
            for s in &c.states {
                match c.value_type {
                    ValueType::Numeric => {
                        writeln!(f, "state = {},{},{}", s.label, fmt_bound(s.low), fmt_bound(s.high))?
                    }
                    _ => writeln!(f, "state = {}", s.label)?,
                }
            }
            writeln!(f, "variation = {}", c.variation)?;
            writeln!(f, "good_before = {}", c.good_before)?;
            writeln!(f, "good_after = {}", c.good_after)?;
            writeln!(f, "value_delegate = {}", c.value_delegate)?;
            writeln!(f, "duration_delegate = {}", c.duration_delegate)?;
        }
        Ok(())
    }
}

/// Knowledge bases shipped with the crate.
pub mod bundled {
    use super::KnowledgeBase;

    pub const ONCOLOGY: &str = include_str!("../kb/oncology.kb");
    pub const HEPATITIS: &str = include_str!("../kb/hepatitis.kb");
    pub const DIABETES: &str = include_str!("../kb/diabetes.kb");

    pub fn oncology() -> KnowledgeBase {
        KnowledgeBase::parse_named("oncology.kb", ONCOLOGY).expect("bundled oncology KB is valid")
    }

    pub fn hepatitis() -> KnowledgeBase {
        KnowledgeBase::parse_named("hepatitis.kb", HEPATITIS).expect("bundled hepatitis KB is valid")
    }

    pub fn diabetes() -> KnowledgeBase {
        KnowledgeBase::parse_named("diabetes.kb", DIABETES).expect("bundled diabetes KB is valid")
    }

    pub fn all() -> [KnowledgeBase; 3] {
        [oncology(), hepatitis(), diabetes()]
    }
}
