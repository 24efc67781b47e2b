//! Time model and the interval-sequence types passed between pipeline stages.

mod sequence;
mod table;
pub mod time;

pub use sequence::{
    Interval, IntervalTag, MultivariateESequence, Sample, SampleValue, UnivariateESequence,
};
pub use table::{DenseSeries, EventTable};
pub use time::{duration_in_granules, parse_timestamp, Duration, Granularity, TimeUnit, Timestamp};
