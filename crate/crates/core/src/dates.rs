//! Calendar dates as integer day offsets from a configurable epoch.

use std::fmt;
use std::ops::Sub;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Day(pub i64);

impl Sub for Day {
    type Output = i64;

    fn sub(self, rhs: Day) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateParser {
    epoch: NaiveDate,
}

impl Default for DateParser {
    fn default() -> Self {
        DateParser {
            epoch: NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch"),
        }
    }
}

impl DateParser {
    pub fn with_epoch(epoch: NaiveDate) -> Self {
        DateParser { epoch }
    }

    pub fn epoch(&self) -> NaiveDate {
        self.epoch
    }

    /// Accepts `YYYY-MM-DD`, `DD/MM/YYYY`, or a bare integer that is already
    /// a day offset.
    pub fn parse(&self, s: &str) -> Result<Day> {
        let s = s.trim();
        if let Ok(offset) = s.parse::<i64>() {
            return Ok(Day(offset));
        }
        let date = NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .or_else(|_| NaiveDate::parse_from_str(s, "%d/%m/%Y"))
            .map_err(|_| Error::Date(s.to_string()))?;
        Ok(Day((date - self.epoch).num_days()))
    }

    /// Empty cells are missing values.
    pub fn parse_opt(&self, s: &str) -> Result<Option<Day>> {
        if s.trim().is_empty() {
            Ok(None)
        } else {
            self.parse(s).map(Some)
        }
    }

    pub fn to_date(&self, day: Day) -> NaiveDate {
        self.epoch + chrono::Duration::days(day.0)
    }
}
