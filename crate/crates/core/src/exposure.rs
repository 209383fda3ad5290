//! Cluster-level treatment exposure: the share of a cluster's contacts that
//! are with residents of treated clusters, corrected for contacts made at
//! home with visitors from clusters of the opposite arm.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{Arm, ArmAssignment, ClusterId};
use crate::contacts::{ContactReport, LocationKind, TimeOfDay};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stratum {
    #[default]
    All,
    Symptomatic,
    Asymptomatic,
}

impl Stratum {
    fn admits(self, symptomatic: bool) -> bool {
        match self {
            Stratum::All => true,
            Stratum::Symptomatic => symptomatic,
            Stratum::Asymptomatic => !symptomatic,
        }
    }
}

impl FromStr for Stratum {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(Stratum::All),
            "symp" | "symptomatic" => Ok(Stratum::Symptomatic),
            "asymp" | "asymptomatic" => Ok(Stratum::Asymptomatic),
            other => Err(Error::Config(format!("unknown stratum {other:?}"))),
        }
    }
}

/// How entries coded as both morning and afternoon enter the morning window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BothHandling {
    #[default]
    WholeCount,
    HalfSplit,
}

impl BothHandling {
    fn weight(self, time: TimeOfDay) -> f64 {
        match (self, time) {
            (BothHandling::HalfSplit, TimeOfDay::Both) => 0.5,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowFilter {
    pub day_offset: i8,
    pub stratum: Stratum,
}

impl Default for WindowFilter {
    fn default() -> Self {
        WindowFilter {
            day_offset: -2,
            stratum: Stratum::All,
        }
    }
}

/// Keeps reports from the chosen survey day and stratum, and within them the
/// morning entries. `BOTH` counts as morning; entries without a time are
/// dropped.
pub fn filter_entries(reports: &[ContactReport], filter: &WindowFilter) -> Vec<ContactReport> {
    reports
        .iter()
        .filter(|r| r.day_offset == filter.day_offset && filter.stratum.admits(r.symptomatic))
        .map(|r| ContactReport {
            entries: r
                .entries
                .iter()
                .filter(|e| matches!(e.time_of_day, Some(TimeOfDay::Am | TimeOfDay::Both)))
                .cloned()
                .collect(),
            ..r.clone()
        })
        .collect()
}

/// Per-cluster respondent sums. Second moments over respondents are kept so
/// the sampling variance of the ratio can be estimated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClusterSums {
    pub sum_t: f64,
    pub sum_d: f64,
    pub respondents: usize,
    pub sum_tt: f64,
    pub sum_dd: f64,
    pub sum_td: f64,
}

impl ClusterSums {
    fn add_respondent(&mut self, t: f64, d: f64) {
        self.sum_t += t;
        self.sum_d += d;
        self.respondents += 1;
        self.sum_tt += t * t;
        self.sum_dd += d * d;
        self.sum_td += t * d;
    }

    fn merge(&mut self, other: &ClusterSums) {
        self.sum_t += other.sum_t;
        self.sum_d += other.sum_d;
        self.respondents += other.respondents;
        self.sum_tt += other.sum_tt;
        self.sum_dd += other.sum_dd;
        self.sum_td += other.sum_td;
    }

    /// Linearized variance of T/D treating respondents as sampling units.
    pub fn ratio_variance(&self) -> f64 {
        let n = self.respondents as f64;
        if self.respondents < 2 || self.sum_d <= 0.0 {
            return 0.0;
        }
        let r = self.sum_t / self.sum_d;
        let ss = (self.sum_tt - 2.0 * r * self.sum_td + r * r * self.sum_dd).max(0.0);
        n / (n - 1.0) * ss / (self.sum_d * self.sum_d)
    }
}

/// Contacts reported by visitors inside compounds of each cluster, split by
/// the visitor's arm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VisitorTerms {
    pub from_treated: f64,
    pub from_control: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VisitorLedger {
    terms: BTreeMap<ClusterId, VisitorTerms>,
}

impl VisitorLedger {
    pub fn get(&self, cluster: &ClusterId) -> VisitorTerms {
        self.terms.get(cluster).copied().unwrap_or_default()
    }

    /// The term that corrects a cluster of the given arm: visitors from
    /// treated clusters for control clusters and vice versa.
    pub fn opposite_arm_term(&self, cluster: &ClusterId, arm: Arm) -> f64 {
        let t = self.get(cluster);
        match arm {
            Arm::Control => t.from_treated,
            Arm::Treated => t.from_control,
        }
    }

    pub fn total(&self) -> f64 {
        self.terms.values().map(|t| t.from_treated + t.from_control).sum()
    }

    fn add(&mut self, host: &ClusterId, visitor_arm: Arm, count: f64) {
        let t = self.terms.entry(host.clone()).or_default();
        match visitor_arm {
            Arm::Treated => t.from_treated += count,
            Arm::Control => t.from_control += count,
        }
    }
}

/// Accumulated sums over contact reports. Merging is associative and
/// commutative, so reports may be sharded freely.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExposureSums {
    pub clusters: BTreeMap<ClusterId, ClusterSums>,
    pub ledger: VisitorLedger,
}

impl ExposureSums {
    pub fn merge(mut self, other: &ExposureSums) -> ExposureSums {
        for (c, s) in &other.clusters {
            self.clusters.entry(c.clone()).or_default().merge(s);
        }
        for (c, t) in &other.ledger.terms {
            let mine = self.ledger.terms.entry(c.clone()).or_default();
            mine.from_treated += t.from_treated;
            mine.from_control += t.from_control;
        }
        self
    }

    pub fn get(&self, cluster: &ClusterId) -> ClusterSums {
        self.clusters.get(cluster).copied().unwrap_or_default()
    }

    pub fn total_d(&self) -> f64 {
        self.clusters.values().map(|s| s.sum_d).sum()
    }
}

pub fn accumulate_sums(reports: &[ContactReport], arms: &ArmAssignment) -> Result<ExposureSums> {
    accumulate_sums_with(reports, arms, BothHandling::WholeCount)
}

/// Denominators take every contact of trial residents; numerators take those
/// located in treated clusters, including home contacts of treated
/// residents. Contacts outside the zone or in non-trial villages only enter
/// denominators. Reports by residents of non-trial villages are ignored.
pub fn accumulate_sums_with(
    reports: &[ContactReport],
    arms: &ArmAssignment,
    both: BothHandling,
) -> Result<ExposureSums> {
    let mut sums = ExposureSums::default();
    for report in reports {
        let Some(resident_arm) = arms.arm_of(&report.residence_cluster) else {
            continue;
        };
        let (mut t, mut d) = (0.0, 0.0);
        for entry in &report.entries {
            let unresolved = |what: &str| Error::Input(format!(
                "contact entry for respondent {} at {} has no {what}; run imputation first",
                report.respondent_id, entry.location_kind
            ));
            match entry.was_visited() {
                Some(true) => {}
                Some(false) => continue,
                None => return Err(unresolved("visited flag")),
            }
            let location = if entry.location_kind.is_home() {
                Some(&report.residence_cluster)
            } else if entry.location_kind.has_village() {
                match &entry.village {
                    Some(v) => Some(v),
                    None => {
                        return Err(Error::UnresolvedVillage {
                            respondent: report.respondent_id.clone(),
                            location: entry.location_kind.to_string(),
                        })
                    }
                }
            } else {
                None
            };
            let count = entry.count.ok_or_else(|| Error::UnresolvedCount {
                respondent: report.respondent_id.clone(),
                location: entry.location_kind.to_string(),
            })?;
            let time = entry.time_of_day.ok_or_else(|| unresolved("time of day"))?;
            let w = f64::from(count) * both.weight(time);
            d += w;
            let location_arm = location.and_then(|c| arms.arm_of(c));
            if location_arm == Some(Arm::Treated) {
                t += w;
            }
            if entry.location_kind == LocationKind::OtherCompound && location_arm.is_some() {
                sums.ledger.add(location.expect("trial location"), resident_arm, w);
            }
        }
        sums.clusters
            .entry(report.residence_cluster.clone())
            .or_default()
            .add_respondent(t, d);
    }
    Ok(sums)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureRow {
    pub cluster: ClusterId,
    pub arm: Arm,
    pub sum_t: f64,
    pub sum_d: f64,
    /// Visitor contacts from the opposite arm (added for control clusters,
    /// subtracted for treated ones).
    pub visitor_term: f64,
    /// Treatment exposure m_j in [0, 1].
    pub exposure: f64,
    /// Sampling variance of the exposure estimate.
    pub variance: f64,
}

impl ExposureRow {
    pub fn pct_in_treated(&self) -> f64 {
        if self.sum_d > 0.0 {
            100.0 * self.sum_t / self.sum_d
        } else {
            100.0 * self.exposure
        }
    }

    pub fn pct_from_visitors(&self) -> f64 {
        if self.sum_d > 0.0 {
            100.0 * self.visitor_term / self.sum_d
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExposureTable {
    rows: Vec<ExposureRow>,
}

impl ExposureTable {
    pub fn from_rows(mut rows: Vec<ExposureRow>) -> Self {
        rows.sort_by(|a, b| a.cluster.cmp(&b.cluster));
        ExposureTable { rows }
    }

    pub fn rows(&self) -> &[ExposureRow] {
        &self.rows
    }

    pub fn get(&self, cluster: &ClusterId) -> Option<&ExposureRow> {
        self.rows
            .binary_search_by(|r| r.cluster.cmp(cluster))
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn exposure_of(&self, cluster: &ClusterId) -> Option<f64> {
        self.get(cluster).map(|r| r.exposure)
    }

    pub fn arms(&self) -> ArmAssignment {
        self.rows.iter().map(|r| (r.cluster.clone(), r.arm)).collect()
    }

    /// The binary table with the same clusters and arms.
    pub fn to_binary(&self) -> ExposureTable {
        binary_exposure(&self.arms())
    }

    pub fn distinct_values(&self) -> usize {
        let mut v: Vec<f64> = self.rows.iter().map(|r| r.exposure).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        for r in &self.rows {
            wtr.serialize(ExposureCsvRow {
                cluster: r.cluster.0.clone(),
                arm: r.arm.to_string(),
                pct_in_treated: r.pct_in_treated(),
                pct_from_visitors: r.pct_from_visitors(),
                exposure: r.exposure,
            })
            .map_err(|e| Error::csv(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads the five-column table. Sums are not stored, so they come back
    /// as zero.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut rows = Vec::new();
        for row in rdr.deserialize::<ExposureCsvRow>() {
            let row = row.map_err(|e| Error::csv(path, e))?;
            if !(0.0..=1.0).contains(&row.exposure) {
                return Err(Error::Input(format!(
                    "{}: exposure {} for cluster {} outside [0, 1]",
                    path.display(),
                    row.exposure,
                    row.cluster
                )));
            }
            rows.push(ExposureRow {
                cluster: ClusterId(row.cluster),
                arm: row.arm.parse()?,
                sum_t: 0.0,
                sum_d: 0.0,
                visitor_term: 0.0,
                exposure: row.exposure,
                variance: 0.0,
            });
        }
        Ok(ExposureTable::from_rows(rows))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ExposureCsvRow {
    cluster: String,
    arm: String,
    pct_in_treated: f64,
    pct_from_visitors: f64,
    exposure: f64,
}

/// m_j = (T + V_trt) / D for control clusters and (T - V_ctr) / D for treated
/// clusters, clamped to [0, 1] with a warning.
pub fn estimate_exposure(sums: &ExposureSums, arms: &ArmAssignment) -> Result<ExposureTable> {
    let mut rows = Vec::with_capacity(arms.len());
    for (cluster, arm) in arms.iter() {
        let s = sums.get(cluster);
        if !(s.sum_d > 0.0) {
            return Err(Error::NoContactData(cluster.to_string()));
        }
        let visitor_term = sums.ledger.opposite_arm_term(cluster, arm);
        let raw = match arm {
            Arm::Control => (s.sum_t + visitor_term) / s.sum_d,
            Arm::Treated => (s.sum_t - visitor_term) / s.sum_d,
        };
        let exposure = raw.clamp(0.0, 1.0);
        if exposure != raw {
            log::warn!("exposure for cluster {cluster} clamped from {raw} to {exposure}");
        }
        rows.push(ExposureRow {
            cluster: cluster.clone(),
            arm,
            sum_t: s.sum_t,
            sum_d: s.sum_d,
            visitor_term,
            exposure,
            variance: s.ratio_variance(),
        });
    }
    Ok(ExposureTable::from_rows(rows))
}

/// The no-contamination covariate: 1 for treated clusters, 0 for control.
pub fn binary_exposure(arms: &ArmAssignment) -> ExposureTable {
    ExposureTable::from_rows(
        arms.iter()
            .map(|(cluster, arm)| ExposureRow {
                cluster: cluster.clone(),
                arm,
                sum_t: 0.0,
                sum_d: 0.0,
                visitor_term: 0.0,
                exposure: arm.indicator(),
                variance: 0.0,
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contacts::ContactEntry;
    use proptest::prelude::*;

    fn arms() -> ArmAssignment {
        [
            (ClusterId::new("A"), Arm::Control),
            (ClusterId::new("B"), Arm::Treated),
            (ClusterId::new("C"), Arm::Control),
        ]
        .into_iter()
        .collect()
    }

    fn report(id: &str, home: &str, entries: Vec<ContactEntry>) -> ContactReport {
        ContactReport {
            respondent_id: id.into(),
            residence_cluster: home.into(),
            symptomatic: false,
            day_offset: -2,
            entries,
        }
    }

    fn home(c: &str, n: u32) -> ContactEntry {
        ContactEntry::new(LocationKind::OwnCompound, Some(c), TimeOfDay::Am, n)
    }

    #[test]
    fn filter_keeps_morning_entries_of_day_minus_two() {
        let mut entries = Vec::new();
        // 10-entry fixture: AM, PM, BOTH, missing cycle.
        for i in 0..10u32 {
            let mut e = ContactEntry::new(LocationKind::Market, Some("B"), TimeOfDay::Am, i);
            e.time_of_day = match i % 4 {
                0 => Some(TimeOfDay::Am),
                1 => Some(TimeOfDay::Pm),
                2 => Some(TimeOfDay::Both),
                _ => None,
            };
            entries.push(e);
        }
        let kept = filter_entries(&[report("r", "A", entries)], &WindowFilter::default());
        // indices 0,2,4,6,8 are AM or BOTH
        let counts: Vec<u32> = kept[0].entries.iter().map(|e| e.count.unwrap()).collect();
        assert_eq!(counts, vec![0, 2, 4, 6, 8]);

        let mut other_day = report("r", "A", vec![home("A", 1)]);
        other_day.day_offset = -1;
        assert!(filter_entries(&[other_day], &WindowFilter::default()).is_empty());
        assert!(filter_entries(&[], &WindowFilter::default()).is_empty());
    }

    #[test]
    fn stratum_filter() {
        let mut symp = report("s", "A", vec![home("A", 1)]);
        symp.symptomatic = true;
        let asymp = report("a", "A", vec![home("A", 1)]);
        let both = [symp, asymp];
        let f = |stratum| filter_entries(&both, &WindowFilter { day_offset: -2, stratum }).len();
        assert_eq!(f(Stratum::All), 2);
        assert_eq!(f(Stratum::Symptomatic), 1);
        assert_eq!(f(Stratum::Asymptomatic), 1);
    }

    #[test]
    fn control_resident_contacts_split_into_numerator_and_denominator() {
        let r = report(
            "r",
            "A",
            vec![home("A", 5), ContactEntry::new(LocationKind::Market, Some("B"), TimeOfDay::Am, 2)],
        );
        let sums = accumulate_sums(&[r], &arms()).unwrap();
        let a = sums.get(&"A".into());
        assert_eq!((a.sum_t, a.sum_d), (2.0, 7.0));
    }

    #[test]
    fn cross_arm_compound_visit_enters_host_ledger() {
        let r = report(
            "r",
            "B",
            vec![ContactEntry::new(LocationKind::OtherCompound, Some("A"), TimeOfDay::Am, 3)],
        );
        let sums = accumulate_sums(&[r], &arms()).unwrap();
        assert_eq!(sums.ledger.get(&"A".into()).from_treated, 3.0);
        assert_eq!(sums.get(&"B".into()).sum_d, 3.0);
        assert_eq!(sums.get(&"B".into()).sum_t, 0.0);
    }

    #[test]
    fn non_trial_and_outside_zone_contacts_only_count_in_denominator() {
        let r = report(
            "r",
            "B",
            vec![
                home("B", 4),
                ContactEntry::new(LocationKind::Market, Some("X"), TimeOfDay::Am, 2),
                ContactEntry::new(LocationKind::OutsideZone, None, TimeOfDay::Both, 1),
            ],
        );
        let t = estimate_exposure(&accumulate_sums(std::slice::from_ref(&r), &arms()).unwrap(), &arms_with_data(&r));
        let row = t.unwrap();
        let b = row.get(&"B".into()).unwrap();
        assert_eq!((b.sum_t, b.sum_d), (4.0, 7.0));
        assert_eq!(b.exposure, 4.0 / 7.0);
    }

    fn arms_with_data(_r: &ContactReport) -> ArmAssignment {
        [(ClusterId::new("B"), Arm::Treated)].into_iter().collect()
    }

    #[test]
    fn missing_count_is_a_hard_error() {
        let mut e = ContactEntry::new(LocationKind::Market, Some("B"), TimeOfDay::Am, 1);
        e.count = None;
        let err = accumulate_sums(&[report("r", "A", vec![e])], &arms()).unwrap_err();
        assert!(matches!(err, Error::UnresolvedCount { .. }));
    }

    #[test]
    fn empty_cluster_is_named_in_the_error() {
        let sums = accumulate_sums(&[report("r", "A", vec![home("A", 2)])], &arms()).unwrap();
        match estimate_exposure(&sums, &arms()) {
            Err(Error::NoContactData(c)) => assert_eq!(c, "B"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_contained_treated_cluster_has_full_exposure() {
        let arms: ArmAssignment = [(ClusterId::new("B"), Arm::Treated)].into_iter().collect();
        let sums = accumulate_sums(&[report("r", "B", vec![home("B", 9)])], &arms).unwrap();
        assert_eq!(estimate_exposure(&sums, &arms).unwrap().exposure_of(&"B".into()), Some(1.0));
    }

    #[test]
    fn clamps_when_visitor_subtraction_overshoots() {
        let arms: ArmAssignment = [(ClusterId::new("A"), Arm::Control), (ClusterId::new("B"), Arm::Treated)]
            .into_iter()
            .collect();
        let reports = [
            report("b", "B", vec![ContactEntry::new(LocationKind::Market, Some("A"), TimeOfDay::Am, 1)]),
            report("a", "A", vec![ContactEntry::new(LocationKind::OtherCompound, Some("B"), TimeOfDay::Am, 5)]),
        ];
        let t = estimate_exposure(&accumulate_sums(&reports, &arms).unwrap(), &arms).unwrap();
        assert_eq!(t.exposure_of(&"B".into()), Some(0.0));
    }

    #[test]
    fn half_split_weights_both_entries() {
        let r = report(
            "r",
            "B",
            vec![ContactEntry::new(LocationKind::Market, Some("B"), TimeOfDay::Both, 4), home("B", 2)],
        );
        let s = accumulate_sums_with(&[r], &arms(), BothHandling::HalfSplit).unwrap();
        assert_eq!(s.get(&"B".into()).sum_d, 4.0);
    }

    #[test]
    fn no_cross_cluster_contact_reduces_to_binary() {
        let reports = [
            report("a", "A", vec![home("A", 3), ContactEntry::new(LocationKind::Market, Some("C"), TimeOfDay::Am, 2)]),
            report("b", "B", vec![home("B", 4)]),
            report("c", "C", vec![home("C", 1)]),
        ];
        let t = estimate_exposure(&accumulate_sums(&reports, &arms()).unwrap(), &arms()).unwrap();
        let b = binary_exposure(&arms());
        let m: Vec<f64> = t.rows().iter().map(|r| r.exposure).collect();
        let z: Vec<f64> = b.rows().iter().map(|r| r.exposure).collect();
        assert_eq!(m, z);
    }

    fn arb_entry() -> impl Strategy<Value = ContactEntry> {
        (0usize..4, 0usize..4, 0u32..8).prop_map(|(k, v, n)| {
            let kind = [LocationKind::OwnCompound, LocationKind::OtherCompound, LocationKind::Market, LocationKind::OutsideZone][k];
            let village = ["A", "B", "C", "X"][v];
            ContactEntry::new(kind, kind.has_village().then_some(village), TimeOfDay::Am, n)
        })
    }

    fn arb_report() -> impl Strategy<Value = ContactReport> {
        (0usize..3, proptest::collection::vec(arb_entry(), 0..6)).prop_map(|(h, mut entries)| {
            let home = ["A", "B", "C"][h];
            for e in entries.iter_mut().filter(|e| e.location_kind.is_home()) {
                e.village = Some(home.into());
            }
            report("r", home, entries)
        })
    }

    proptest! {
        #[test]
        fn sums_are_a_commutative_monoid(reports in proptest::collection::vec(arb_report(), 0..12), split in 0usize..12) {
            let split = split.min(reports.len());
            let whole = accumulate_sums(&reports, &arms()).unwrap();
            let left = accumulate_sums(&reports[..split], &arms()).unwrap();
            let right = accumulate_sums(&reports[split..], &arms()).unwrap();
            let merged = right.merge(&left);
            for c in ["A", "B", "C"] {
                let (w, m) = (whole.get(&c.into()), merged.get(&c.into()));
                prop_assert_eq!((w.sum_t, w.sum_d, w.respondents), (m.sum_t, m.sum_d, m.respondents));
            }
            prop_assert_eq!(whole.ledger.total(), merged.ledger.total());
        }

        #[test]
        fn denominators_conserve_every_counted_contact(reports in proptest::collection::vec(arb_report(), 0..12)) {
            let total: u32 = reports.iter().flat_map(|r| &r.entries).map(|e| e.count.unwrap()).sum();
            let sums = accumulate_sums(&reports, &arms()).unwrap();
            prop_assert_eq!(sums.total_d(), f64::from(total));
        }

        #[test]
        fn treated_contacts_never_lower_a_control_clusters_exposure(
            reports in proptest::collection::vec(arb_report(), 1..10),
            extra in 1u32..5,
        ) {
            let mut base = reports.clone();
            base.push(report("x", "A", vec![home("A", 1)]));
            for c in ["B", "C"] {
                base.push(report(c, c, vec![home(c, 1)]));
            }
            let before = estimate_exposure(&accumulate_sums(&base, &arms()).unwrap(), &arms()).unwrap();
            let mut more = base.clone();
            let idx = more.iter().position(|r| r.respondent_id == "x").unwrap();
            more[idx].entries.push(ContactEntry::new(LocationKind::Market, Some("B"), TimeOfDay::Am, extra));
            let after = estimate_exposure(&accumulate_sums(&more, &arms()).unwrap(), &arms()).unwrap();
            prop_assert!(after.exposure_of(&"A".into()).unwrap() >= before.exposure_of(&"A".into()).unwrap());
        }
    }
}
