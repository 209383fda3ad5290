//! Follow-up windows and per-participant time-to-event derivation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{Arm, ArmAssignment, ClusterId};
use crate::dates::{DateParser, Day};
use crate::error::{Error, Result};
use crate::residence::{Exclusion, ResidenceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FollowUpWindow {
    study_start: Day,
    study_end: Day,
    admin_censor: Option<Day>,
}

impl FollowUpWindow {
    pub fn new(study_start: Day, study_end: Day, admin_censor: Option<Day>) -> Result<Self> {
        if study_start >= study_end {
            return Err(Error::Config(format!(
                "study start {study_start} must precede study end {study_end}"
            )));
        }
        if let Some(c) = admin_censor {
            if c <= study_start || c > study_end {
                return Err(Error::Config(format!(
                    "administrative censoring date {c} must lie in ({study_start}, {study_end}]"
                )));
            }
        }
        Ok(FollowUpWindow {
            study_start,
            study_end,
            admin_censor,
        })
    }

    /// Parses `START:END[:CENSOR]`.
    pub fn parse(spec: &str, dates: &DateParser) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        match parts.as_slice() {
            [start, end] => Self::new(dates.parse(start)?, dates.parse(end)?, None),
            [start, end, censor] => Self::new(
                dates.parse(start)?,
                dates.parse(end)?,
                Some(dates.parse(censor)?),
            ),
            _ => Err(Error::Config(format!(
                "window {spec:?} is not START:END[:CENSOR]"
            ))),
        }
    }

    pub fn study_start(&self) -> Day {
        self.study_start
    }

    pub fn study_end(&self) -> Day {
        self.study_end
    }

    pub fn admin_censor(&self) -> Option<Day> {
        self.admin_censor
    }

    /// Last day anyone can be followed.
    pub fn effective_end(&self) -> Day {
        self.admin_censor.unwrap_or(self.study_end)
    }

    pub fn length_days(&self) -> i64 {
        self.study_end - self.study_start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TteExclusion {
    MalformedRecord,
    ResidenceUnordered,
    NotInStudyArea,
    EnteredAfterStudyEnd,
    PreEnrollmentInfection,
    NoFollowUp,
}

impl TteExclusion {
    pub fn as_str(self) -> &'static str {
        match self {
            TteExclusion::MalformedRecord => "malformed_record",
            TteExclusion::ResidenceUnordered => "residence_unordered",
            TteExclusion::NotInStudyArea => "not_in_study_area",
            TteExclusion::EnteredAfterStudyEnd => "entered_after_study_end",
            TteExclusion::PreEnrollmentInfection => "pre_enrollment_infection",
            TteExclusion::NoFollowUp => "no_follow_up",
        }
    }
}

impl fmt::Display for TteExclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TteExclusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use TteExclusion::*;
        [
            MalformedRecord,
            ResidenceUnordered,
            NotInStudyArea,
            EnteredAfterStudyEnd,
            PreEnrollmentInfection,
            NoFollowUp,
        ]
        .into_iter()
        .find(|r| r.as_str() == s.trim())
        .ok_or_else(|| Error::Input(format!("unknown exclusion reason {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalObservation {
    pub participant_id: String,
    pub cluster: ClusterId,
    /// Days since the participant's own follow-up start; zero for excluded rows.
    pub time: f64,
    pub event: bool,
    pub excluded_reason: Option<TteExclusion>,
}

impl SurvivalObservation {
    pub fn new(participant_id: impl Into<String>, cluster: impl Into<ClusterId>, time: f64, event: bool) -> Self {
        SurvivalObservation {
            participant_id: participant_id.into(),
            cluster: cluster.into(),
            time,
            event,
            excluded_reason: None,
        }
    }

    fn excluded(participant_id: &str, cluster: ClusterId, reason: TteExclusion) -> Self {
        SurvivalObservation {
            participant_id: participant_id.to_string(),
            cluster,
            time: 0.0,
            event: false,
            excluded_reason: Some(reason),
        }
    }

    pub fn is_included(&self) -> bool {
        self.excluded_reason.is_none()
    }
}

struct Segment<'a> {
    village: Option<&'a ClusterId>,
    start: Option<Day>,
    end: Option<Day>,
}

fn segments(record: &ResidenceRecord) -> Vec<Segment<'_>> {
    let mut segs = vec![Segment {
        village: Some(record.stay1.village.as_ref().unwrap_or(&record.village)),
        start: record.stay1.arrival,
        end: record.stay1.departure,
    }];
    if !record.stay2.is_empty() {
        segs.push(Segment {
            village: record.stay2.village.as_ref(),
            start: record.stay2.arrival,
            end: record.stay2.departure,
        });
    }
    segs
}

/// Derives one participant's observation from a cleaned residence record.
///
/// Follow-up starts at the later of the study start and arrival in a trial
/// cluster, and ends at the earliest of the study end, the administrative
/// censoring date, leaving the study area, or moving to a cluster of the
/// opposite arm. Moves to villages outside the trial count as leaving. An
/// infection on the day follow-up starts counts as prior to follow-up; an
/// infection on the day of an out-move is an event.
pub fn derive_time_to_event(
    record: &ResidenceRecord,
    infection: Option<Day>,
    window: &FollowUpWindow,
    arms: &ArmAssignment,
) -> SurvivalObservation {
    let pid = record.participant_id.as_str();
    let mut followed: Option<(ClusterId, Arm, Day, Option<Day>)> = None;
    for seg in segments(record) {
        let arm = seg.village.and_then(|v| arms.arm_of(v));
        match &mut followed {
            Some((_, current_arm, _, until)) => {
                let contiguous = seg.start.is_some() && seg.start == *until;
                if contiguous && arm == Some(*current_arm) {
                    *until = seg.end;
                } else {
                    break;
                }
            }
            None => {
                let (Some(village), Some(arm)) = (seg.village, arm) else {
                    continue;
                };
                if matches!(seg.end, Some(e) if e <= window.study_start) {
                    continue;
                }
                let start = seg.start.map_or(window.study_start, |a| a.max(window.study_start));
                followed = Some((village.clone(), arm, start, seg.end));
            }
        }
    }

    let Some((cluster, _, start, until)) = followed else {
        return SurvivalObservation::excluded(pid, record.village.clone(), TteExclusion::NotInStudyArea);
    };
    if start > window.study_end {
        return SurvivalObservation::excluded(pid, cluster, TteExclusion::EnteredAfterStudyEnd);
    }
    let end = until.map_or(window.effective_end(), |u| u.min(window.effective_end()));
    if let Some(inf) = infection {
        if inf <= start {
            return SurvivalObservation::excluded(pid, cluster, TteExclusion::PreEnrollmentInfection);
        }
    }
    if end <= start {
        return SurvivalObservation::excluded(pid, cluster, TteExclusion::NoFollowUp);
    }
    match infection {
        Some(inf) if inf <= end => SurvivalObservation::new(pid, cluster, (inf - start) as f64, true),
        _ => SurvivalObservation::new(pid, cluster, (end - start) as f64, false),
    }
}

/// Derives observations for a whole cohort, keeping the earliest infection per
/// participant and emitting residence-cleaning exclusions as excluded rows.
pub fn derive_cohort(
    cleaned: &[ResidenceRecord],
    cleaning_exclusions: &[Exclusion],
    infections: &BTreeMap<String, Day>,
    window: &FollowUpWindow,
    arms: &ArmAssignment,
) -> Vec<SurvivalObservation> {
    let mut out: Vec<SurvivalObservation> = cleaned
        .iter()
        .map(|r| derive_time_to_event(r, infections.get(&r.participant_id).copied(), window, arms))
        .collect();
    out.extend(cleaning_exclusions.iter().map(|e| {
        let reason = match e.rule {
            crate::residence::ExclusionRule::Unordered => TteExclusion::ResidenceUnordered,
            crate::residence::ExclusionRule::Malformed(_) => TteExclusion::MalformedRecord,
        };
        SurvivalObservation::excluded(&e.participant_id, ClusterId::new(""), reason)
    }));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArmCounts {
    pub n: usize,
    pub events: usize,
}

impl ArmCounts {
    pub fn incidence(&self) -> Option<f64> {
        (self.n > 0).then(|| self.events as f64 / self.n as f64)
    }
}

impl fmt::Display for ArmCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.incidence() {
            Some(p) => write!(f, "{}/{} ({:.2}%)", self.events, self.n, 100.0 * p),
            None => write!(f, "{}/{} (-)", self.events, self.n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CohortSummary {
    pub treated: ArmCounts,
    pub control: ArmCounts,
}

impl CohortSummary {
    pub fn total(&self) -> ArmCounts {
        ArmCounts {
            n: self.treated.n + self.control.n,
            events: self.treated.events + self.control.events,
        }
    }

    pub fn arm(&self, arm: Arm) -> ArmCounts {
        match arm {
            Arm::Treated => self.treated,
            Arm::Control => self.control,
        }
    }
}

/// Per-arm participant and event counts over included observations whose
/// cluster belongs to the trial.
pub fn summarize_cohort(observations: &[SurvivalObservation], arms: &ArmAssignment) -> CohortSummary {
    let mut s = CohortSummary::default();
    for obs in observations.iter().filter(|o| o.is_included()) {
        let counts = match arms.arm_of(&obs.cluster) {
            Some(Arm::Treated) => &mut s.treated,
            Some(Arm::Control) => &mut s.control,
            None => continue,
        };
        counts.n += 1;
        counts.events += usize::from(obs.event);
    }
    s
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationRow {
    participant_id: String,
    cluster: String,
    time_days: String,
    event: String,
    excluded_reason: String,
}

pub fn write_observations_csv(path: impl AsRef<Path>, observations: &[SurvivalObservation]) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for o in observations {
        wtr.serialize(ObservationRow {
            participant_id: o.participant_id.clone(),
            cluster: o.cluster.0.clone(),
            time_days: if o.is_included() { o.time.to_string() } else { String::new() },
            event: if o.event { "1" } else { "0" }.to_string(),
            excluded_reason: o.excluded_reason.map(|r| r.to_string()).unwrap_or_default(),
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn read_observations_csv(path: impl AsRef<Path>) -> Result<Vec<SurvivalObservation>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<ObservationRow>() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let excluded_reason = match row.excluded_reason.trim() {
            "" => None,
            r => Some(r.parse()?),
        };
        let event = match row.event.trim() {
            "1" | "true" | "TRUE" => true,
            "0" | "false" | "FALSE" | "" => false,
            other => return Err(Error::Input(format!("{}: bad event flag {other:?}", path.display()))),
        };
        let time = match row.time_days.trim() {
            "" if excluded_reason.is_some() => 0.0,
            t => t
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("{}: bad time {t:?}", path.display())))?,
        };
        if excluded_reason.is_none() && !(time > 0.0) {
            return Err(Error::Input(format!(
                "{}: participant {} has non-positive time {time}",
                path.display(),
                row.participant_id
            )));
        }
        out.push(SurvivalObservation {
            participant_id: row.participant_id,
            cluster: ClusterId(row.cluster),
            time,
            event,
            excluded_reason,
        });
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct InfectionRow {
    participant_id: String,
    sample_date: String,
}

/// Earliest sample date per participant.
pub fn read_infections_csv(path: impl AsRef<Path>, dates: &DateParser) -> Result<BTreeMap<String, Day>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out: BTreeMap<String, Day> = BTreeMap::new();
    for row in rdr.deserialize::<InfectionRow>() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let day = dates.parse(&row.sample_date)?;
        out.entry(row.participant_id)
            .and_modify(|d| *d = (*d).min(day))
            .or_insert(day);
    }
    Ok(out)
}
