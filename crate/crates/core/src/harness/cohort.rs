//! Entities scoped and abstracted once per experiment, keeping those with data for every
//! grid concept.

use std::collections::BTreeMap;

use crate::abstraction::{
    abstract_gradient, abstract_raw, abstract_state, raw_values, AbstractionKind, ConceptStats, PopulationStats,
};
use crate::error::{Error, Result};
use crate::gbr::{represent, AggregationConfig};
use crate::imatch::BandPolicy;
use crate::kb::{ConceptDef, KnowledgeBase, ValueType};
use crate::scoping::{entity_tms, restrict, Tms};
use crate::temporal::{DenseSeries, EventTable, Granularity, Sample, UnivariateESequence};

use super::config::ExperimentConfig;
use super::dataset::{Dataset, EntityRecord};
use super::grid::MatchConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedConcept {
    pub def: ConceptDef,
    /// Samples inside the matching scope.
    pub in_scope: Vec<Sample>,
    pub state: UnivariateESequence,
    pub gradient: UnivariateESequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedEntity {
    pub id: String,
    pub label: String,
    pub tms: Tms,
    pub concepts: BTreeMap<String, PreparedConcept>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exclusion {
    pub entity: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    /// Included entities, sorted by id.
    pub entities: Vec<PreparedEntity>,
    pub excluded: Vec<Exclusion>,
    /// Sorted class labels.
    pub classes: Vec<String>,
    pub positive: String,
    pub granularity: Granularity,
}

fn with_entity(err: Error, entity: &str) -> Error {
    match err {
        Error::Sample {
            concept, index, reason, ..
        } => Error::Sample {
            entity: entity.to_string(),
            concept,
            index,
            reason,
        },
        other => other,
    }
}

fn prepare_entity(
    record: &EntityRecord,
    kb: &KnowledgeBase,
    cfg: &ExperimentConfig,
) -> Result<std::result::Result<PreparedEntity, String>> {
    let Some(label) = record.label.clone() else {
        return Ok(Err("no class label".into()));
    };
    let tms = match entity_tms(&record.id, &cfg.timeline, &record.events) {
        Ok(t) => t,
        Err(Error::Excluded { reason, .. }) => return Ok(Err(reason)),
        Err(e) => return Err(e),
    };
    let subpop = cfg
        .subpopulation
        .as_ref()
        .and_then(|attr| record.attributes.get(attr))
        .map(String::as_str);
    let mut concepts = BTreeMap::new();
    for name in &cfg.concepts {
        let def = kb.concept_for(name, subpop)?;
        let samples = record.samples_of(name);
        let abstracted = abstract_state(samples, def).and_then(|s| Ok((s, abstract_gradient(samples, def)?)));
        let (state, gradient) = match abstracted {
            Ok(pair) => pair,
            Err(e) => return Ok(Err(with_entity(e, &record.id).to_string())),
        };
        let prepared = PreparedConcept {
            def: def.clone(),
            in_scope: samples.iter().filter(|s| tms.contains(s.time)).cloned().collect(),
            state: restrict(&state, &tms),
            gradient: restrict(&gradient, &tms),
        };
        if prepared.in_scope.is_empty() {
            return Ok(Err(format!("no `{name}` sample inside the matching scope")));
        }
        if prepared.gradient.is_empty() {
            return Ok(Err(format!("no `{name}` gradient inside the matching scope")));
        }
        concepts.insert(name.clone(), prepared);
    }
    Ok(Ok(PreparedEntity {
        id: record.id.clone(),
        label,
        tms,
        concepts,
    }))
}

impl Cohort {
    /// Scopes and abstracts every entity for the experiment's concepts. Entities that
    /// cannot be matched on every concept are excluded with a reason.
    pub fn prepare(dataset: &Dataset, kb: &KnowledgeBase, cfg: &ExperimentConfig) -> Result<Cohort> {
        cfg.validate()?;
        for c in &cfg.concepts {
            kb.concept_for(c, None)?;
        }
        let mut entities = Vec::new();
        let mut excluded = Vec::new();
        for record in dataset.entities.values() {
            match prepare_entity(record, kb, cfg)? {
                Ok(e) => entities.push(e),
                Err(reason) => {
                    log::info!("excluding entity `{}`: {reason}", record.id);
                    excluded.push(Exclusion {
                        entity: record.id.clone(),
                        reason,
                    });
                }
            }
        }
        let mut classes: Vec<String> = entities.iter().map(|e| e.label.clone()).collect();
        classes.sort();
        classes.dedup();
        if classes.len() != 2 {
            return Err(Error::Config(format!(
                "binary classification needs exactly 2 classes among included entities, found {:?}",
                classes
            )));
        }
        let positive = match &cfg.positive_label {
            Some(p) if classes.contains(p) => p.clone(),
            Some(p) => return Err(Error::Config(format!("positive label `{p}` is not one of {classes:?}"))),
            None => classes[1].clone(),
        };
        Ok(Cohort {
            entities,
            excluded,
            classes,
            positive,
            granularity: cfg.granularity,
        })
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.entities
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .map_err(|_| Error::Precondition(format!("entity `{id}` is not part of the cohort")))
    }

    pub fn is_positive(&self, idx: usize) -> bool {
        self.entities[idx].label == self.positive
    }

    /// Raw normalization parameters fit on the in-scope values of `members`.
    pub fn fit_stats(&self, members: &[usize], concepts: &[String]) -> Result<PopulationStats> {
        let mut stats = PopulationStats::default();
        for name in concepts {
            let mut pooled = Vec::new();
            for &i in members {
                let c = &self.entities[i].concepts[name];
                if c.def.value_type == ValueType::Numeric {
                    pooled.extend(raw_values(&c.in_scope, &c.def)?);
                }
            }
            stats.concepts.insert(name.clone(), ConceptStats::fit(&pooled));
        }
        Ok(stats)
    }

    pub fn event_table(&self, idx: usize, config: &MatchConfig, stats: Option<&PopulationStats>) -> Result<EventTable> {
        let entity = &self.entities[idx];
        let mut owned: Vec<(String, UnivariateESequence, AggregationConfig)> = Vec::new();
        for (name, rep) in config.concepts.iter().zip(&config.representations) {
            let c = entity
                .concepts
                .get(name)
                .ok_or_else(|| Error::UnknownConcept(name.clone()))?;
            let agg = AggregationConfig {
                value_delegate: c.def.value_delegate,
                duration_delegate: config.duration_delegate,
            };
            for &kind in rep.kinds() {
                let seq = match kind {
                    AbstractionKind::State => c.state.clone(),
                    AbstractionKind::Gradient => c.gradient.clone(),
                    AbstractionKind::Raw => {
                        let s = match stats {
                            Some(p) if c.def.value_type == ValueType::Numeric => Some(p.get(name)?),
                            _ => None,
                        };
                        abstract_raw(&c.in_scope, &c.def, s).map_err(|e| with_entity(e, &entity.id))?
                    }
                };
                owned.push((kind.feature_name(name), seq, agg));
            }
        }
        let rows: Vec<(String, &UnivariateESequence, AggregationConfig)> =
            owned.iter().map(|(n, s, a)| (n.clone(), s, *a)).collect();
        represent(&entity.id, &rows, &entity.tms, config.granularity, config.interpolation)
    }

    /// The config's band with a KB band resolved over every definition in use for its
    /// concepts.
    pub fn band_for(&self, config: &MatchConfig) -> Result<BandPolicy> {
        let defs: Vec<&ConceptDef> = self
            .entities
            .iter()
            .flat_map(|e| config.concepts.iter().filter_map(|c| e.concepts.get(c).map(|p| &p.def)))
            .collect();
        config.band.resolve(&defs, config.granularity)
    }

    pub fn series(&self, idx: usize, config: &MatchConfig, stats: Option<&PopulationStats>) -> Result<DenseSeries> {
        self.event_table(idx, config, stats)?.to_series()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::Representation;
    use crate::gbr::InterpolationMethod;
    use crate::kb::{bundled, DurationDelegate};
    use crate::scoping::{Aspect, Selection, TimelineSpec};
    use crate::temporal::time::DAY;
    use crate::temporal::Duration;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::new(
            vec!["WBC".into()],
            TimelineSpec::Relative {
                reference: "ADMIT".into(),
                aspect: Aspect::Start,
                selection: Selection::First,
                before: Duration::ZERO,
                after: Duration(10 * DAY),
            },
        )
    }

    fn dataset() -> Dataset {
        let mut ds = Dataset::parse_data(
            "d",
            &format!(
                "a,WBC,0,5\na,WBC,{},14\nb,WBC,{},3\nb,WBC,{},4\nc,WBC,0,6\nd,WBC,{},8\nd,WBC,{},9\ne,WBC,0,5\ne,WBC,{},6\n",
                2 * DAY,
                DAY,
                3 * DAY,
                20 * DAY,
                21 * DAY,
                DAY
            ),
        )
        .unwrap();
        ds.add_events("e", "a,ADMIT,0\nb,ADMIT,0\nc,ADMIT,0\nd,ADMIT,0\n").unwrap();
        ds.add_labels("l", "a,sick\nb,well\nc,well\nd,sick\ne,sick\n").unwrap();
        ds
    }

    #[test]
    fn exclusions_are_explained() {
        let cohort = Cohort::prepare(&dataset(), &bundled::oncology(), &cfg()).unwrap();
        let ids: Vec<_> = cohort.entities.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        let reasons: BTreeMap<_, _> = cohort.excluded.iter().map(|x| (x.entity.as_str(), x.reason.as_str())).collect();
        assert!(reasons["c"].contains("gradient"), "{}", reasons["c"]);
        assert!(reasons["d"].contains("sample inside"));
        assert!(reasons["e"].contains("ADMIT"));
        assert_eq!(cohort.positive, "well");
        assert!(cohort.is_positive(1));
    }

    #[test]
    fn positive_label_must_exist() {
        let mut c = cfg();
        c.positive_label = Some("sick".into());
        assert_eq!(Cohort::prepare(&dataset(), &bundled::oncology(), &c).unwrap().positive, "sick");
        c.positive_label = Some("dead".into());
        assert!(Cohort::prepare(&dataset(), &bundled::oncology(), &c).is_err());
    }

    #[test]
    fn builds_tables_per_representation() {
        let cohort = Cohort::prepare(&dataset(), &bundled::oncology(), &cfg()).unwrap();
        let mut mc = MatchConfig {
            id: 0,
            group: 0,
            concepts: vec!["WBC".into()],
            representations: vec![Representation::StateAndGradient],
            interpolation: InterpolationMethod::Linear,
            duration_delegate: DurationDelegate::Mtt,
            band: BandPolicy::Unconstrained,
            k: 1,
            timeline: cfg().timeline,
            granularity: Granularity::DAY,
        };
        let t = cohort.event_table(0, &mc, None).unwrap();
        assert_eq!(t.features, vec!["WBC.state", "WBC.gradient"]);
        assert_eq!(t.column_count, 10);
        assert!(t.is_complete());
        mc.representations = vec![Representation::Raw];
        assert!(cohort.event_table(0, &mc, None).is_err());
        let stats = cohort.fit_stats(&[0, 1], &mc.concepts).unwrap();
        let s = cohort.series(0, &mc, Some(&stats)).unwrap();
        assert_eq!((s.dim(), s.len()), (1, 10));
        assert_eq!(s.point(0)[0], stats.get("WBC").unwrap().normalize(5.0));

        mc.band = BandPolicy::Kb;
        assert_eq!(cohort.band_for(&mc).unwrap(), BandPolicy::KbBand(1));
        mc.granularity = Granularity::new(7 * DAY).unwrap();
        assert_eq!(cohort.band_for(&mc).unwrap(), BandPolicy::KbBand(1));
        mc.granularity = Granularity::new(DAY / 2).unwrap();
        assert_eq!(cohort.band_for(&mc).unwrap(), BandPolicy::KbBand(2));
    }
}
