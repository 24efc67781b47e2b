//! Delimited-text datasets of measurements plus per-entity side tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scoping::Event;
use crate::temporal::{parse_timestamp, Sample, SampleValue, Timestamp};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EntityRecord {
    pub id: String,
    /// Samples per concept, strictly increasing in time.
    pub samples: BTreeMap<String, Vec<Sample>>,
    pub events: Vec<Event>,
    pub label: Option<String>,
    pub attributes: BTreeMap<String, String>,
}

impl EntityRecord {
    pub fn new(id: impl Into<String>) -> Self {
        EntityRecord {
            id: id.into(),
            ..Default::default()
        }
    }

    pub fn samples_of(&self, concept: &str) -> &[Sample] {
        self.samples.get(concept).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub entities: BTreeMap<String, EntityRecord>,
}

/// One parsed line: 1-based line number and trimmed fields.
struct Row {
    line: usize,
    fields: Vec<String>,
}

fn read_rows(name: &str, text: &str, arity: std::ops::RangeInclusive<usize>) -> Result<Vec<Row>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data {
            path: name.to_string(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let first = record.get(0).unwrap_or("");
        if i == 0 && (first.eq_ignore_ascii_case("entity_id") || first.eq_ignore_ascii_case("entity")) {
            continue;
        }
        if !arity.contains(&record.len()) {
            return Err(Error::Data {
                path: name.to_string(),
                line,
                message: format!(
                    "expected {} to {} fields, found {}",
                    arity.start(),
                    arity.end(),
                    record.len()
                ),
            });
        }
        rows.push(Row {
            line,
            fields: record.iter().map(str::to_string).collect(),
        });
    }
    Ok(rows)
}

fn read_file(path: &Path) -> Result<String> {
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    Ok(text)
}

fn timestamp_at(name: &str, line: usize, s: &str) -> Result<Timestamp> {
    parse_timestamp(s).map_err(|e| Error::Data {
        path: name.to_string(),
        line,
        message: e.to_string(),
    })
}

impl Dataset {
    /// Parses `entity_id,concept,timestamp,value` lines. A leading `entity_id` header
    /// line is skipped.
    pub fn parse_data(name: &str, text: &str) -> Result<Dataset> {
        let mut staged: BTreeMap<(String, String), Vec<(Timestamp, usize, SampleValue)>> = BTreeMap::new();
        for row in read_rows(name, text, 4..=4)? {
            let time = timestamp_at(name, row.line, &row.fields[2])?;
            let [entity, concept, _, value] = <[String; 4]>::try_from(row.fields).expect("arity checked");
            staged
                .entry((entity, concept))
                .or_default()
                .push((time, row.line, SampleValue::parse(&value)));
        }
        let mut dataset = Dataset::default();
        for ((entity, concept), mut samples) in staged {
            samples.sort_by_key(|s| (s.0, s.1));
            if let Some(w) = samples.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::Data {
                    path: name.to_string(),
                    line: w[1].1,
                    message: format!(
                        "entity `{entity}` has two `{concept}` samples at time {} (first on line {})",
                        w[0].0, w[0].1
                    ),
                });
            }
            dataset
                .entity_mut(&entity)
                .samples
                .insert(concept, samples.into_iter().map(|(time, _, value)| Sample { time, value }).collect());
        }
        Ok(dataset)
    }

    /// `entity_id,event_name,timestamp[,end_timestamp]`.
    pub fn add_events(&mut self, name: &str, text: &str) -> Result<()> {
        for row in read_rows(name, text, 3..=4)? {
            let start = timestamp_at(name, row.line, &row.fields[2])?;
            let end = match row.fields.get(3).filter(|s| !s.is_empty()) {
                Some(s) => timestamp_at(name, row.line, s)?,
                None => start,
            };
            if end < start {
                return Err(Error::Data {
                    path: name.to_string(),
                    line: row.line,
                    message: format!("event ends at {end} before it starts at {start}"),
                });
            }
            self.entity_mut(&row.fields[0]).events.push(Event {
                name: row.fields[1].clone(),
                start,
                end,
            });
        }
        for e in self.entities.values_mut() {
            e.events.sort_by(|a, b| (&a.name, a.start, a.end).cmp(&(&b.name, b.start, b.end)));
        }
        Ok(())
    }

    /// `entity_id,label`.
    pub fn add_labels(&mut self, name: &str, text: &str) -> Result<()> {
        for row in read_rows(name, text, 2..=2)? {
            let record = self.entity_mut(&row.fields[0]);
            if record.label.as_deref().is_some_and(|l| l != row.fields[1]) {
                return Err(Error::Data {
                    path: name.to_string(),
                    line: row.line,
                    message: format!("conflicting labels for entity `{}`", row.fields[0]),
                });
            }
            record.label = Some(row.fields[1].clone());
        }
        Ok(())
    }

    /// `entity_id,attribute,value`, e.g. `P7,SEX,FEMALE`.
    pub fn add_attributes(&mut self, name: &str, text: &str) -> Result<()> {
        for row in read_rows(name, text, 3..=3)? {
            self.entity_mut(&row.fields[0])
                .attributes
                .insert(row.fields[1].clone(), row.fields[2].clone());
        }
        Ok(())
    }

    pub fn load(
        data: &Path,
        events: Option<&Path>,
        labels: Option<&Path>,
        attributes: Option<&Path>,
    ) -> Result<Dataset> {
        let mut ds = Dataset::parse_data(&data.display().to_string(), &read_file(data)?)?;
        if let Some(p) = events {
            ds.add_events(&p.display().to_string(), &read_file(p)?)?;
        }
        if let Some(p) = labels {
            ds.add_labels(&p.display().to_string(), &read_file(p)?)?;
        }
        if let Some(p) = attributes {
            ds.add_attributes(&p.display().to_string(), &read_file(p)?)?;
        }
        Ok(ds)
    }

    pub fn entity_mut(&mut self, id: &str) -> &mut EntityRecord {
        self.entities
            .entry(id.to_string())
            .or_insert_with(|| EntityRecord::new(id))
    }

    /// Distinct labels, sorted.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.entities.values().filter_map(|e| e.label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    pub fn data_csv(&self) -> String {
        let mut out = String::new();
        for e in self.entities.values() {
            for (concept, samples) in &e.samples {
                for s in samples {
                    let _ = writeln!(out, "{},{},{},{}", e.id, concept, s.time, s.value);
                }
            }
        }
        out
    }

    pub fn events_csv(&self) -> String {
        let mut out = String::new();
        for e in self.entities.values() {
            for ev in &e.events {
                if ev.start == ev.end {
                    let _ = writeln!(out, "{},{},{}", e.id, ev.name, ev.start);
                } else {
                    let _ = writeln!(out, "{},{},{},{}", e.id, ev.name, ev.start, ev.end);
                }
            }
        }
        out
    }

    pub fn labels_csv(&self) -> String {
        let mut out = String::new();
        for e in self.entities.values() {
            if let Some(l) = &e.label {
                let _ = writeln!(out, "{},{}", e.id, l);
            }
        }
        out
    }

    pub fn attributes_csv(&self) -> String {
        let mut out = String::new();
        for e in self.entities.values() {
            for (k, v) in &e.attributes {
                let _ = writeln!(out, "{},{},{}", e.id, k, v);
            }
        }
        out
    }
}
