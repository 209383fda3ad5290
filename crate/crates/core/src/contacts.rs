//! Contact-survey records: one report per respondent and survey day, each
//! listing the locations visited and the people spoken with there.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LocationKind {
    OwnCompound,
    OtherCompound,
    Market,
    MosqueChurch,
    Field,
    School,
    PublicPlace,
    OutsideZone,
    Other,
}

impl LocationKind {
    pub const ALL: [LocationKind; 9] = [
        LocationKind::OwnCompound,
        LocationKind::OtherCompound,
        LocationKind::Market,
        LocationKind::MosqueChurch,
        LocationKind::Field,
        LocationKind::School,
        LocationKind::PublicPlace,
        LocationKind::OutsideZone,
        LocationKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LocationKind::OwnCompound => "own_compound",
            LocationKind::OtherCompound => "other_compound",
            LocationKind::Market => "market",
            LocationKind::MosqueChurch => "mosque_church",
            LocationKind::Field => "field",
            LocationKind::School => "school",
            LocationKind::PublicPlace => "public_place",
            LocationKind::OutsideZone => "outside_zone",
            LocationKind::Other => "other",
        }
    }

    pub fn is_home(self) -> bool {
        self == LocationKind::OwnCompound
    }

    /// Locations that carry a village code.
    pub fn has_village(self) -> bool {
        !matches!(self, LocationKind::OutsideZone)
    }
}

impl fmt::Display for LocationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LocationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LocationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| Error::Input(format!("unknown location kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimeOfDay {
    Am,
    Pm,
    Both,
}

impl TimeOfDay {
    pub const ALL: [TimeOfDay; 3] = [TimeOfDay::Am, TimeOfDay::Pm, TimeOfDay::Both];

    pub fn as_str(self) -> &'static str {
        match self {
            TimeOfDay::Am => "AM",
            TimeOfDay::Pm => "PM",
            TimeOfDay::Both => "BOTH",
        }
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TimeOfDay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AM" => Ok(TimeOfDay::Am),
            "PM" => Ok(TimeOfDay::Pm),
            "BOTH" => Ok(TimeOfDay::Both),
            other => Err(Error::Input(format!("unknown time of day {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactEntry {
    pub location_kind: LocationKind,
    pub village: Option<ClusterId>,
    pub time_of_day: Option<TimeOfDay>,
    pub count: Option<u32>,
    pub visited: Option<bool>,
}

impl ContactEntry {
    /// A fully observed entry.
    pub fn new(kind: LocationKind, village: Option<&str>, time: TimeOfDay, count: u32) -> Self {
        ContactEntry {
            location_kind: kind,
            village: village.map(ClusterId::new),
            time_of_day: Some(time),
            count: Some(count),
            visited: (!kind.is_home()).then_some(true),
        }
    }

    /// Whether the location was visited; home entries always are.
    pub fn was_visited(&self) -> Option<bool> {
        if self.location_kind.is_home() {
            Some(true)
        } else {
            self.visited
        }
    }

    /// Number of fields still needed by the exposure calculation that are
    /// missing. Unvisited locations need nothing beyond the visited flag.
    pub fn missing_cells(&self) -> usize {
        match self.was_visited() {
            None => 1,
            Some(false) => 0,
            Some(true) => {
                usize::from(self.time_of_day.is_none())
                    + usize::from(self.count.is_none())
                    + usize::from(self.location_kind.has_village() && self.village.is_none())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactReport {
    pub respondent_id: String,
    pub residence_cluster: ClusterId,
    pub symptomatic: bool,
    /// Days before the survey: 0, -1 or -2.
    pub day_offset: i8,
    pub entries: Vec<ContactEntry>,
}

impl ContactReport {
    pub fn missing_cells(&self) -> usize {
        self.entries.iter().map(ContactEntry::missing_cells).sum()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ContactRow {
    respondent_id: String,
    residence_cluster: String,
    symptomatic: String,
    day_offset: i8,
    location_kind: String,
    #[serde(default)]
    village: String,
    #[serde(default)]
    time_of_day: String,
    #[serde(default)]
    count: String,
    #[serde(default)]
    visited: String,
}

fn parse_bool(s: &str) -> Result<Option<bool>> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" => Ok(None),
        "1" | "true" | "yes" | "y" => Ok(Some(true)),
        "0" | "false" | "no" | "n" => Ok(Some(false)),
        other => Err(Error::Input(format!("bad boolean {other:?}"))),
    }
}

fn fmt_bool(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

/// Reads a contacts CSV (one row per entry). Rows sharing respondent, day and
/// residence are gathered into one report, in first-appearance order. Home
/// entries without a village take the residence cluster.
pub fn read_contacts_csv(path: impl AsRef<Path>) -> Result<Vec<ContactReport>> {
    let path = path.as_ref();
    let wrap = |e: Error| Error::Input(format!("{}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut reports: Vec<ContactReport> = Vec::new();
    let mut index: BTreeMap<(String, i8, String), usize> = BTreeMap::new();
    for row in rdr.deserialize::<ContactRow>() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        if !matches!(row.day_offset, -2..=0) {
            return Err(Error::Input(format!(
                "{}: day_offset {} not in {{0,-1,-2}}",
                path.display(),
                row.day_offset
            )));
        }
        let kind: LocationKind = row.location_kind.parse().map_err(wrap)?;
        let residence = ClusterId::new(row.residence_cluster.trim());
        let village = match row.village.trim() {
            "" if kind.is_home() => Some(residence.clone()),
            "" => None,
            v => Some(ClusterId::new(v)),
        };
        let time_of_day = match row.time_of_day.trim() {
            "" => None,
            t => Some(t.parse().map_err(wrap)?),
        };
        let count = match row.count.trim() {
            "" => None,
            c => Some(
                c.parse::<u32>()
                    .map_err(|_| Error::Input(format!("{}: bad count {c:?}", path.display())))?,
            ),
        };
        let entry = ContactEntry {
            location_kind: kind,
            village,
            time_of_day,
            count,
            visited: parse_bool(&row.visited).map_err(wrap)?,
        };
        let key = (row.respondent_id.clone(), row.day_offset, residence.0.clone());
        let slot = *index.entry(key).or_insert_with(|| {
            reports.push(ContactReport {
                respondent_id: row.respondent_id.clone(),
                residence_cluster: residence.clone(),
                symptomatic: false,
                day_offset: row.day_offset,
                entries: Vec::new(),
            });
            reports.len() - 1
        });
        reports[slot].symptomatic = parse_bool(&row.symptomatic).map_err(wrap)?.unwrap_or(false);
        reports[slot].entries.push(entry);
    }
    Ok(reports)
}

pub fn write_contacts_csv(path: impl AsRef<Path>, reports: &[ContactReport]) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in reports {
        for e in &r.entries {
            wtr.serialize(ContactRow {
                respondent_id: r.respondent_id.clone(),
                residence_cluster: r.residence_cluster.0.clone(),
                symptomatic: fmt_bool(r.symptomatic),
                day_offset: r.day_offset,
                location_kind: e.location_kind.to_string(),
                village: e.village.as_ref().map(|v| v.0.clone()).unwrap_or_default(),
                time_of_day: e.time_of_day.map(|t| t.to_string()).unwrap_or_default(),
                count: e.count.map(|c| c.to_string()).unwrap_or_default(),
                visited: e.visited.map(fmt_bool).unwrap_or_default(),
            })
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Respondent characteristics used by the imputation models.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Covariates {
    pub age_category: AgeCategory,
    pub gender: String,
}

/// Trial age bands plus a catch-all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum AgeCategory {
    Months6To35,
    Months36To8Years,
    Years9To10,
    #[default]
    Other,
}

impl AgeCategory {
    pub const ALL: [AgeCategory; 4] = [
        AgeCategory::Months6To35,
        AgeCategory::Months36To8Years,
        AgeCategory::Years9To10,
        AgeCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgeCategory::Months6To35 => "6-35m",
            AgeCategory::Months36To8Years => "36m-8y",
            AgeCategory::Years9To10 => "9-10y",
            AgeCategory::Other => "other",
        }
    }
}

impl FromStr for AgeCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(AgeCategory::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .unwrap_or(AgeCategory::Other))
    }
}

#[derive(Debug, Deserialize)]
struct CovariateRow {
    participant_id: String,
    #[serde(default)]
    age_category: String,
    #[serde(default)]
    gender: String,
}

pub fn read_covariates_csv(path: impl AsRef<Path>) -> Result<BTreeMap<String, Covariates>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = BTreeMap::new();
    for row in rdr.deserialize::<CovariateRow>() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        out.insert(
            row.participant_id,
            Covariates {
                age_category: row.age_category.parse()?,
                gender: row.gender.trim().to_string(),
            },
        );
    }
    Ok(out)
}
