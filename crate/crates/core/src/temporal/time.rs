//! Time model shared by every pipeline stage.
//!
//! All internal arithmetic runs on integer minutes. Calendar units convert by fixed
//! factors (a month is 30 days, a year 365 days); there is no calendar-aware math.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Timestamp in minutes since an arbitrary epoch.
pub type Timestamp = i64;

pub const MINUTE: i64 = 1;
pub const HOUR: i64 = 60;
pub const DAY: i64 = 1_440;
pub const WEEK: i64 = 7 * DAY;
pub const MONTH: i64 = 30 * DAY;
pub const YEAR: i64 = 365 * DAY;

/// A named time unit with its fixed length in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimeUnit {
    Minute,
    Hour,
    Day,
    Week,
    Month,
    Year,
}

impl TimeUnit {
    pub const fn minutes(self) -> i64 {
        match self {
            TimeUnit::Minute => MINUTE,
            TimeUnit::Hour => HOUR,
            TimeUnit::Day => DAY,
            TimeUnit::Week => WEEK,
            TimeUnit::Month => MONTH,
            TimeUnit::Year => YEAR,
        }
    }

    const fn name(self) -> &'static str {
        match self {
            TimeUnit::Minute => "minute",
            TimeUnit::Hour => "hour",
            TimeUnit::Day => "day",
            TimeUnit::Week => "week",
            TimeUnit::Month => "month",
            TimeUnit::Year => "year",
        }
    }
}

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TimeUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let singular = lower.strip_suffix('s').unwrap_or(&lower);
        Ok(match singular {
            "minute" | "min" => TimeUnit::Minute,
            "hour" | "h" => TimeUnit::Hour,
            "day" | "d" => TimeUnit::Day,
            "week" => TimeUnit::Week,
            "month" => TimeUnit::Month,
            "year" => TimeUnit::Year,
            _ => return Err(Error::Config(format!("unknown time unit `{s}`"))),
        })
    }
}

/// A span of time, stored in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Duration(pub i64);

impl Duration {
    pub const ZERO: Duration = Duration(0);

    pub const fn new(count: i64, unit: TimeUnit) -> Self {
        Duration(count * unit.minutes())
    }

    pub const fn minutes(self) -> i64 {
        self.0
    }

    /// Largest unit that divides the duration exactly, for display.
    fn natural_unit(self) -> TimeUnit {
        [
            TimeUnit::Year,
            TimeUnit::Month,
            TimeUnit::Week,
            TimeUnit::Day,
            TimeUnit::Hour,
        ]
        .into_iter()
        .find(|u| self.0 != 0 && self.0 % u.minutes() == 0)
        .unwrap_or(TimeUnit::Minute)
    }
}

impl FromStr for Duration {
    type Err = Error;

    /// Parses `<n> <unit>` such as `1 Day`, `3 Months` or `90 minutes`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let split = s
            .find(|c: char| !(c.is_ascii_digit() || c == '-' || c == '+'))
            .unwrap_or(s.len());
        let (count, unit) = s.split_at(split);
        let count: i64 = count
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("invalid duration `{s}`")))?;
        let unit = if unit.trim().is_empty() {
            TimeUnit::Minute
        } else {
            unit.parse()?
        };
        Ok(Duration::new(count, unit))
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = self.natural_unit();
        let count = self.0 / unit.minutes();
        let plural = if count == 1 { "" } else { "s" };
        write!(f, "{count} {}{plural}", unit.name())
    }
}

/// Size of one time granule of the segmented timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Granularity(i64);

impl Granularity {
    pub const MINUTE: Granularity = Granularity(MINUTE);
    pub const HOUR: Granularity = Granularity(HOUR);
    pub const DAY: Granularity = Granularity(DAY);
    pub const MONTH: Granularity = Granularity(MONTH);

    pub fn new(minutes: i64) -> Result<Self> {
        if minutes <= 0 {
            return Err(Error::Config(format!(
                "granule length must be positive, got {minutes} minutes"
            )));
        }
        Ok(Granularity(minutes))
    }

    pub const fn minutes(self) -> i64 {
        self.0
    }
}

impl Default for Granularity {
    fn default() -> Self {
        Granularity::DAY
    }
}

impl FromStr for Granularity {
    type Err = Error;

    /// Accepts a bare unit (`day`) or a count and unit (`2 days`).
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().parse::<TimeUnit>() {
            Ok(unit) => Granularity::new(unit.minutes()),
            Err(_) => Granularity::new(s.parse::<Duration>()?.minutes()),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = Duration(self.0);
        match d.natural_unit() {
            unit if self.0 == unit.minutes() => f.write_str(unit.name()),
            _ => write!(f, "{d}"),
        }
    }
}

/// Number of granules spanned by `[start, end]`; a partial trailing granule counts
/// as a whole one.
pub fn duration_in_granules(start: Timestamp, end: Timestamp, granularity: Granularity) -> usize {
    debug_assert!(start <= end, "start {start} after end {end}");
    let span = (end - start).max(0);
    span.div_euclid(granularity.0) as usize + usize::from(span.rem_euclid(granularity.0) != 0)
}

/// Parses a timestamp given either as integer minutes or as an ISO-8601 date
/// (`YYYY-MM-DD`, optionally with `THH:MM[:SS]`), converted to minutes since 1970-01-01.
pub fn parse_timestamp(s: &str) -> Result<Timestamp> {
    let s = s.trim();
    if let Ok(m) = s.parse::<i64>() {
        return Ok(m);
    }
    let epoch = chrono::NaiveDate::from_ymd_opt(1970, 1, 1)
        .expect("valid epoch")
        .and_hms_opt(0, 0, 0)
        .expect("valid epoch");
    let parsed = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .or_else(|_| {
            chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight exists"))
        })
        .map_err(|_| Error::Config(format!("invalid timestamp `{s}`")))?;
    Ok((parsed - epoch).num_minutes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn granule_counts() {
        let g = Granularity::DAY;
        assert_eq!(duration_in_granules(0, 10 * DAY, g), 10);
        assert_eq!(duration_in_granules(0, 1441, g), 2);
        assert_eq!(duration_in_granules(5 * DAY, 5 * DAY, g), 0);
        assert_eq!(duration_in_granules(-DAY, 1, g), 2);
    }

    #[test]
    fn durations_parse_with_fixed_calendar_factors() {
        assert_eq!("1 Day".parse::<Duration>().unwrap(), Duration(1440));
        assert_eq!("3 Months".parse::<Duration>().unwrap(), Duration(90 * DAY));
        assert_eq!("2 years".parse::<Duration>().unwrap(), Duration(730 * DAY));
        assert_eq!("45".parse::<Duration>().unwrap(), Duration(45));
        assert!("two days".parse::<Duration>().is_err());
        assert_eq!(Duration(90 * DAY).to_string(), "3 months");
        assert_eq!(Duration(DAY).to_string(), "1 day");
    }

    #[test]
    fn granularity_parse_and_display() {
        assert_eq!("Day".parse::<Granularity>().unwrap(), Granularity::DAY);
        assert_eq!("month".parse::<Granularity>().unwrap(), Granularity::MONTH);
        assert_eq!("2 days".parse::<Granularity>().unwrap().minutes(), 2 * DAY);
        assert_eq!(Granularity::DAY.to_string(), "day");
        assert!("0 days".parse::<Granularity>().is_err());
    }

    #[test]
    fn iso_dates_convert_to_minutes() {
        assert_eq!(parse_timestamp("1970-01-02").unwrap(), DAY);
        assert_eq!(parse_timestamp("1970-01-01T01:30").unwrap(), 90);
        assert_eq!(parse_timestamp("1234").unwrap(), 1234);
        assert!(parse_timestamp("yesterday").is_err());
    }

    proptest! {
        #[test]
        fn granules_monotone(start in -5000i64..5000, a in 0i64..5000, b in 0i64..5000, g in 1i64..2000) {
            let g = Granularity::new(g).unwrap();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(duration_in_granules(start, start + lo, g) <= duration_in_granules(start, start + hi, g));
            prop_assert!(duration_in_granules(start + lo, start + hi, g) <= duration_in_granules(start, start + hi, g));
        }

        #[test]
        fn granules_subadditive(a in -5000i64..5000, x in 0i64..5000, y in 0i64..5000, g in 1i64..2000) {
            let gr = Granularity::new(g).unwrap();
            let (b, c) = (a + x, a + x + y);
            let split = duration_in_granules(a, b, gr) + duration_in_granules(b, c, gr);
            let whole = duration_in_granules(a, c, gr);
            prop_assert!(split >= whole);
            if (b - a) % g == 0 {
                prop_assert_eq!(split, whole);
            }
        }
    }
}
