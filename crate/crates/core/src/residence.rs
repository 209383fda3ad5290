//! Residence and movement records, and the repair rules that bring them into
//! a consistent two-stay form.
//!
//! A record describes where a participant lived: an overall village, a first
//! stay and an optional second stay. After cleaning, every present date
//! satisfies `arrival1 <= departure1 <= arrival2 <= departure2`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterId;
use crate::dates::{DateParser, Day};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stay {
    pub village: Option<ClusterId>,
    pub arrival: Option<Day>,
    pub departure: Option<Day>,
}

impl Stay {
    pub fn is_empty(&self) -> bool {
        self.village.is_none() && self.arrival.is_none() && self.departure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidenceRecord {
    pub participant_id: String,
    pub village: ClusterId,
    pub birth_or_entry_date: Option<Day>,
    pub stay1: Stay,
    pub stay2: Stay,
}

impl ResidenceRecord {
    /// A participant who never moved.
    pub fn resident(participant_id: impl Into<String>, village: impl Into<ClusterId>) -> Self {
        ResidenceRecord {
            participant_id: participant_id.into(),
            village: village.into(),
            birth_or_entry_date: None,
            stay1: Stay::default(),
            stay2: Stay::default(),
        }
    }

    /// Present dates in chain order are non-decreasing.
    pub fn is_ordered(&self) -> bool {
        let chain = [
            self.stay1.arrival,
            self.stay1.departure,
            self.stay2.arrival,
            self.stay2.departure,
        ];
        chain
            .iter()
            .flatten()
            .zip(chain.iter().flatten().skip(1))
            .all(|(a, b)| a <= b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExclusionRule {
    /// Dates still out of order after every repair rule (rule 6).
    Unordered,
    /// A date field could not be parsed.
    Malformed(String),
}

impl ExclusionRule {
    pub fn rule_id(&self) -> &'static str {
        match self {
            ExclusionRule::Unordered => "6",
            ExclusionRule::Malformed(_) => "parse",
        }
    }
}

impl fmt::Display for ExclusionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExclusionRule::Unordered => f.write_str("dates out of order after repair"),
            ExclusionRule::Malformed(msg) => write!(f, "malformed record: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exclusion {
    pub participant_id: String,
    pub rule: ExclusionRule,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CleaningOutcome {
    pub cleaned: Vec<ResidenceRecord>,
    pub exclusions: Vec<Exclusion>,
    /// How many records each rule touched, keyed by rule number (1-7).
    pub rule_counts: BTreeMap<u8, usize>,
}

/// Applies the repair rules to every record. The three-stay normalization
/// (rule 7) runs first, then rules 1-6 strictly in order; one record may be
/// touched by several rules.
pub fn clean_residence(records: &[ResidenceRecord]) -> CleaningOutcome {
    let mut out = CleaningOutcome::default();
    for record in records {
        let mut rec = record.clone();
        let mut touched = Vec::new();
        if normalize_three_stays(&mut rec) {
            touched.push(7);
        }
        touched.extend(repair_moves(&mut rec));
        for rule in touched {
            *out.rule_counts.entry(rule).or_default() += 1;
        }
        if rec.is_ordered() {
            out.cleaned.push(rec);
        } else {
            *out.rule_counts.entry(6).or_default() += 1;
            out.exclusions.push(Exclusion {
                participant_id: rec.participant_id,
                rule: ExclusionRule::Unordered,
            });
        }
    }
    out
}

/// Rule 7: some records store the residence before the first move in the
/// overall village field, so they carry three stays. Shift them into the
/// two-stay scheme, dropping the third stay.
fn normalize_three_stays(rec: &mut ResidenceRecord) -> bool {
    // A swapped two-stay record also has stay 1 away from the home village,
    // but its stay 2 is back home; only re-shift genuine three-stay records.
    let differs = matches!(&rec.stay1.village, Some(v) if *v != rec.village)
        && rec.stay2.village.as_ref() != Some(&rec.village);
    if !differs {
        return false;
    }
    let old1 = std::mem::take(&mut rec.stay1);
    rec.stay1 = Stay {
        village: Some(rec.village.clone()),
        arrival: rec.birth_or_entry_date,
        departure: old1.arrival,
    };
    rec.stay2 = old1;
    true
}

/// Rules 1-5. Returns the numbers of the rules that fired.
fn repair_moves(rec: &mut ResidenceRecord) -> Vec<u8> {
    let mut fired = Vec::new();

    // 1: second stay entirely earlier than the first.
    if let (Some(a1), Some(d1), Some(a2), Some(d2)) = (
        rec.stay1.arrival,
        rec.stay1.departure,
        rec.stay2.arrival,
        rec.stay2.departure,
    ) {
        if a2 < a1 && d2 < d1 {
            std::mem::swap(&mut rec.stay1, &mut rec.stay2);
            fired.push(1);
        }
    }

    // 2: second arrival precedes the whole first stay and the second
    // departure is missing.
    if let (Some(a1), Some(d1), Some(a2), None) = (
        rec.stay1.arrival,
        rec.stay1.departure,
        rec.stay2.arrival,
        rec.stay2.departure,
    ) {
        if a2 < a1 && a2 < d1 {
            std::mem::swap(&mut rec.stay1, &mut rec.stay2);
            rec.stay1.departure = rec.stay2.arrival;
            fired.push(2);
        }
    }

    // 3: missing first departure.
    if rec.stay1.departure.is_none() && rec.stay2.arrival.is_some() {
        rec.stay1.departure = rec.stay2.arrival;
        fired.push(3);
    }

    // 4: second arrival before first departure.
    if let (Some(d1), Some(a2)) = (rec.stay1.departure, rec.stay2.arrival) {
        if a2 < d1 {
            rec.stay1.departure = Some(a2);
            fired.push(4);
        }
    }

    // 5: first departure before first arrival.
    if let (Some(a1), Some(d1), Some(a2)) =
        (rec.stay1.arrival, rec.stay1.departure, rec.stay2.arrival)
    {
        if d1 < a1 {
            rec.stay1.departure = Some(a2);
            fired.push(5);
        }
    }

    fired
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct ResidenceRow {
    participant_id: String,
    village: String,
    #[serde(default)]
    birth_or_entry_date: String,
    #[serde(default)]
    stay1_village: String,
    #[serde(default)]
    stay1_arrival: String,
    #[serde(default)]
    stay1_departure: String,
    #[serde(default)]
    stay2_village: String,
    #[serde(default)]
    stay2_arrival: String,
    #[serde(default)]
    stay2_departure: String,
}

fn opt_cluster(s: &str) -> Option<ClusterId> {
    let s = s.trim();
    (!s.is_empty()).then(|| ClusterId::new(s))
}

impl ResidenceRow {
    fn parse(self, dates: &DateParser) -> std::result::Result<ResidenceRecord, (String, String)> {
        let field = |name: &str, value: &str| {
            dates
                .parse_opt(value)
                .map_err(|e| (self.participant_id.clone(), format!("{name}: {e}")))
        };
        Ok(ResidenceRecord {
            participant_id: self.participant_id.clone(),
            village: ClusterId::new(self.village.trim()),
            birth_or_entry_date: field("birth_or_entry_date", &self.birth_or_entry_date)?,
            stay1: Stay {
                village: opt_cluster(&self.stay1_village),
                arrival: field("stay1_arrival", &self.stay1_arrival)?,
                departure: field("stay1_departure", &self.stay1_departure)?,
            },
            stay2: Stay {
                village: opt_cluster(&self.stay2_village),
                arrival: field("stay2_arrival", &self.stay2_arrival)?,
                departure: field("stay2_departure", &self.stay2_departure)?,
            },
        })
    }
}

/// Reads a residence CSV. Rows with unparseable dates are returned as
/// exclusions instead of failing the whole file.
pub fn read_residence_csv(
    path: impl AsRef<Path>,
    dates: &DateParser,
) -> Result<(Vec<ResidenceRecord>, Vec<Exclusion>)> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut records = Vec::new();
    let mut exclusions = Vec::new();
    for row in rdr.deserialize::<ResidenceRow>() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        match row.parse(dates) {
            Ok(rec) => records.push(rec),
            Err((participant_id, msg)) => exclusions.push(Exclusion {
                participant_id,
                rule: ExclusionRule::Malformed(msg),
            }),
        }
    }
    Ok((records, exclusions))
}

pub fn write_residence_csv(
    path: impl AsRef<Path>,
    records: &[ResidenceRecord],
    dates: &DateParser,
) -> Result<()> {
    let path = path.as_ref();
    let fmt_day = |d: Option<Day>| d.map(|d| dates.to_date(d).to_string()).unwrap_or_default();
    let fmt_village = |v: &Option<ClusterId>| v.as_ref().map(|v| v.0.clone()).unwrap_or_default();
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in records {
        wtr.serialize(ResidenceRow {
            participant_id: r.participant_id.clone(),
            village: r.village.0.clone(),
            birth_or_entry_date: fmt_day(r.birth_or_entry_date),
            stay1_village: fmt_village(&r.stay1.village),
            stay1_arrival: fmt_day(r.stay1.arrival),
            stay1_departure: fmt_day(r.stay1.departure),
            stay2_village: fmt_village(&r.stay2.village),
            stay2_arrival: fmt_day(r.stay2.arrival),
            stay2_departure: fmt_day(r.stay2.departure),
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}
