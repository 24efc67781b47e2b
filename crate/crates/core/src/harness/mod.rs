//! Experiment driver. Loads datasets and configs, then cross-validates every grid point.

pub mod cohort;
pub mod config;
pub mod cv;
pub mod dataset;
pub mod grid;
pub mod report;
pub mod runner;
pub mod synth;

pub use cohort::{Cohort, Exclusion, PreparedEntity};
pub use config::{ExperimentConfig, KSpec};
pub use cv::{run_cv, stratified_folds, ExperimentResult, FoldMetrics, FoldPlan};
pub use dataset::{Dataset, EntityRecord};
pub use grid::{enumerate_experiments, experiment_count, GridSpec, MatchConfig};
pub use report::{aggregate_by_representation, RepresentationGroup, ResultRow};
pub use runner::{run_grid, write_reports, GridOptions};
pub use synth::{generate_synthetic, SynthSpec, Synthetic};
