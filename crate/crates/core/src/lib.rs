//! Abstraction-based, interval-based dynamic time warping for irregular, multivariate
//! longitudinal records.
//!
//! The pipeline turns raw time-stamped samples into knowledge-based State and Gradient
//! interval sequences ([`abstraction`]), restricts them to a per-entity matching scope
//! ([`scoping`]), segments them into a complete features × granules table ([`gbr`]),
//! and compares tables with a banded multivariate DTW ([`imatch`]). [`eval`] and
//! [`harness`] run KNN cross-validation over a configuration grid.

pub mod abstraction;
pub mod error;
pub mod eval;
pub mod gbr;
pub mod harness;
pub mod imatch;
pub mod kb;
pub mod scoping;
mod sections;
pub mod temporal;

pub use error::{Error, Result};
pub use kb::{ConceptDef, DurationDelegate, KnowledgeBase, StateDef, ValueDelegate, VariationSpec};
pub use temporal::{
    Duration, EventTable, Granularity, Interval, MultivariateESequence, Sample, Timestamp,
    UnivariateESequence,
};
