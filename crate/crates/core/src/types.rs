use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ActorId = String;
pub type TopicId = String;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Half-open time interval `[start, end)` in UTC seconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Window {
    pub start: i64,
    pub end: i64,
}

impl Window {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        if end <= start {
            return Err(Error::invalid(format!("empty window [{start}, {end})")));
        }
        Ok(Window { start, end })
    }

    pub fn from_days(start_day: NaiveDate, days: u32) -> Result<Self> {
        let start = day_start(start_day);
        Window::new(start, start + i64::from(days) * SECONDS_PER_DAY)
    }

    #[inline]
    pub fn contains(&self, ts: i64) -> bool {
        ts >= self.start && ts < self.end
    }

    pub fn len_seconds(&self) -> i64 {
        self.end - self.start
    }

    pub fn start_date(&self) -> String {
        format_date(self.start)
    }
}

pub fn day_start(day: NaiveDate) -> i64 {
    day.and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        .timestamp()
}

pub fn parse_timestamp(s: &str) -> Result<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc).timestamp());
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(day_start(d));
    }
    Err(Error::invalid(format!("unparseable timestamp `{s}`")))
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| Error::invalid(format!("bad date `{s}`: {e}")))
}

pub fn format_timestamp(ts: i64) -> String {
    Utc.timestamp_opt(ts, 0)
        .single()
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

pub fn format_date(ts: i64) -> String {
    Utc.timestamp_opt(ts, 0)
        .single()
        .map(|dt| dt.format("%Y-%m-%d").to_string())
        .unwrap_or_else(|| ts.to_string())
}
