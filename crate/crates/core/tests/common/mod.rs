//! Fixtures and independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};

use spillover::contacts::{ContactEntry, ContactReport, LocationKind, TimeOfDay};
use spillover::dates::Day;
use spillover::residence::{ResidenceRecord, Stay};
use spillover::tte::SurvivalObservation;
use spillover::{Arm, ArmAssignment, ClusterId};

pub fn arms(pairs: &[(&str, Arm)]) -> ArmAssignment {
    pairs.iter().map(|(c, a)| (ClusterId::new(*c), *a)).collect()
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

fn at_home(n: u32) -> ContactEntry {
    ContactEntry::new(LocationKind::OwnCompound, None, TimeOfDay::Am, n)
}

/// Seven-person network: A (control) holds persons 1-3, all in contact; B
/// (treated) holds persons 4-7 with one contact between 6 and 7. Person 6
/// also visits person 3 at home in A.
pub fn toy_network() -> (Vec<ContactReport>, ArmAssignment) {
    let mut reports = vec![
        report("p1", "A", vec![at_home(2)]),
        report("p2", "A", vec![at_home(2)]),
        report("p3", "A", vec![at_home(3)]),
        report("p4", "B", vec![at_home(0)]),
        report("p5", "B", vec![at_home(0)]),
        report(
            "p6",
            "B",
            vec![at_home(1), ContactEntry::new(LocationKind::OtherCompound, Some("A"), TimeOfDay::Am, 1)],
        ),
        report("p7", "B", vec![at_home(1)]),
    ];
    for r in &mut reports {
        for e in &mut r.entries {
            if e.location_kind.is_home() {
                e.village = Some(r.residence_cluster.clone());
            }
        }
    }
    (reports, arms(&[("A", Arm::Control), ("B", Arm::Treated)]))
}

pub type StayTuple = (Option<&'static str>, Option<i64>, Option<i64>);

fn stay(s: StayTuple) -> Stay {
    Stay {
        village: s.0.map(ClusterId::new),
        arrival: s.1.map(Day),
        departure: s.2.map(Day),
    }
}

fn rec(id: &str, village: &str, birth: Option<i64>, s1: StayTuple, s2: StayTuple) -> ResidenceRecord {
    ResidenceRecord {
        participant_id: id.into(),
        village: village.into(),
        birth_or_entry_date: birth.map(Day),
        stay1: stay(s1),
        stay2: stay(s2),
    }
}

const NONE: StayTuple = (None, None, None);

/// Expected result for one residence record.
pub enum Expected {
    Kept(ResidenceRecord),
    Excluded,
}

pub struct ResidenceCase {
    pub input: ResidenceRecord,
    pub expected: Expected,
}

/// Thirty records covering every repair rule, with answers worked out by
/// hand. Returns the cases and the expected number of records each rule
/// touches.
pub fn residence_fixture() -> (Vec<ResidenceCase>, BTreeMap<u8, usize>) {
    use Expected::{Excluded, Kept};
    let same = |r: ResidenceRecord| ResidenceCase { expected: Kept(r.clone()), input: r };
    let fix = |input: ResidenceRecord, out: ResidenceRecord| ResidenceCase { input, expected: Kept(out) };
    let drop = |input: ResidenceRecord| ResidenceCase { input, expected: Excluded };
    let t1 = Some("T1");
    let c1 = Some("C1");
    let t2 = Some("T2");
    let c2 = Some("C2");
    let cases = vec![
        same(rec("r01", "T1", None, NONE, NONE)),
        same(rec("r02", "T1", Some(2), (t1, Some(10), Some(50)), (c1, Some(50), None))),
        // rule 1
        fix(
            rec("r03", "T1", None, (t1, Some(100), Some(150)), (c1, Some(20), Some(60))),
            rec("r03", "T1", None, (c1, Some(20), Some(60)), (t1, Some(100), Some(150))),
        ),
        // rule 2
        fix(
            rec("r04", "T1", None, (t1, Some(100), Some(150)), (c1, Some(30), None)),
            rec("r04", "T1", None, (c1, Some(30), Some(100)), (t1, Some(100), Some(150))),
        ),
        // rule 3
        fix(
            rec("r05", "T1", None, (t1, Some(10), None), (c1, Some(80), None)),
            rec("r05", "T1", None, (t1, Some(10), Some(80)), (c1, Some(80), None)),
        ),
        // rule 4
        fix(
            rec("r06", "T1", None, (t1, Some(10), Some(90)), (c1, Some(70), None)),
            rec("r06", "T1", None, (t1, Some(10), Some(70)), (c1, Some(70), None)),
        ),
        // rule 5
        fix(
            rec("r07", "T1", None, (t1, Some(50), Some(30)), (c1, Some(60), None)),
            rec("r07", "T1", None, (t1, Some(50), Some(60)), (c1, Some(60), None)),
        ),
        // rule 6: second stay ends before it starts
        drop(rec("r08", "T1", None, (t1, Some(10), Some(20)), (c1, Some(30), Some(25)))),
        // rule 7
        fix(
            rec("r09", "C1", Some(5), (t1, Some(40), Some(90)), (t2, Some(90), Some(120))),
            rec("r09", "C1", Some(5), (c1, Some(5), Some(40)), (t1, Some(40), Some(90))),
        ),
        fix(
            rec("r10", "C1", None, (t1, Some(40), None), NONE),
            rec("r10", "C1", None, (c1, None, Some(40)), (t1, Some(40), None)),
        ),
        // rules 1 and 4
        fix(
            rec("r11", "T1", None, (t1, Some(50), Some(150)), (c1, Some(20), Some(60))),
            rec("r11", "T1", None, (c1, Some(20), Some(50)), (t1, Some(50), Some(150))),
        ),
        // rules 3 and 5 cannot repair it
        drop(rec("r12", "T1", None, (t1, Some(50), None), (c1, Some(40), None))),
        same(rec("r13", "T1", None, (t1, Some(10), Some(40)), (t2, Some(40), Some(100)))),
        fix(
            rec("r14", "C1", None, (c1, Some(80), Some(20)), (t1, Some(90), None)),
            rec("r14", "C1", None, (c1, Some(80), Some(90)), (t1, Some(90), None)),
        ),
        fix(
            rec("r15", "C1", None, (c1, Some(10), Some(200)), (t2, Some(150), Some(180))),
            rec("r15", "C1", None, (c1, Some(10), Some(150)), (t2, Some(150), Some(180))),
        ),
        drop(rec("r16", "C1", None, (c1, Some(100), Some(50)), NONE)),
        fix(
            rec("r17", "C1", None, NONE, (t1, Some(30), None)),
            rec("r17", "C1", None, (None, None, Some(30)), (t1, Some(30), None)),
        ),
        // rule 7 leaves the dates out of order
        drop(rec("r18", "C1", Some(100), (t1, Some(40), Some(60)), (t2, Some(70), None))),
        drop(rec("r19", "T1", None, (t1, Some(60), Some(20)), (c1, Some(40), None))),
        same(rec("r20", "C2", Some(3), NONE, NONE)),
        fix(
            rec("r21", "T2", None, (t2, Some(30), Some(60)), (c2, Some(30), Some(50))),
            rec("r21", "T2", None, (t2, Some(30), Some(30)), (c2, Some(30), Some(50))),
        ),
        fix(
            rec("r22", "T2", None, (t2, Some(70), Some(90)), (c2, Some(10), None)),
            rec("r22", "T2", None, (c2, Some(10), Some(70)), (t2, Some(70), Some(90))),
        ),
        // stay 2 back in the home village: not a three-stay record
        same(rec("r23", "C2", None, (t1, Some(20), Some(50)), (c2, Some(50), None))),
        same(rec("r24", "C2", Some(1), (c2, Some(1), Some(20)), (t1, Some(20), None))),
        same(rec("r25", "T1", None, (t1, Some(5), Some(60)), (Some("X9"), Some(60), None))),
        fix(
            rec("r26", "C2", None, (c2, Some(5), None), (t2, Some(50), Some(90))),
            rec("r26", "C2", None, (c2, Some(5), Some(50)), (t2, Some(50), Some(90))),
        ),
        // rules 1 and 5
        fix(
            rec("r27", "T1", None, (t1, Some(50), Some(100)), (c1, Some(40), Some(30))),
            rec("r27", "T1", None, (c1, Some(40), Some(50)), (t1, Some(50), Some(100))),
        ),
        same(rec("r28", "T2", None, NONE, NONE)),
        drop(rec("r29", "C1", None, (t1, Some(10), Some(20)), (c1, Some(40), Some(35)))),
        fix(
            rec("r30", "T2", Some(1), (c1, Some(30), Some(80)), NONE),
            rec("r30", "T2", Some(1), (t2, Some(1), Some(30)), (c1, Some(30), Some(80))),
        ),
    ];
    let counts = BTreeMap::from([(1, 3), (2, 2), (3, 4), (4, 4), (5, 6), (6, 6), (7, 4)]);
    (cases, counts)
}

/// Two-arm cohort over four clusters with distinct continuous times and
/// roughly 30% censoring.
pub fn two_arm_cohort(n: usize, seed: u64) -> (Vec<SurvivalObservation>, ArmAssignment) {
    let arms = arms(&[("c1", Arm::Control), ("c2", Arm::Control), ("t1", Arm::Treated), ("t2", Arm::Treated)]);
    let names = ["c1", "c2", "t1", "t2"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = (0..n)
        .map(|i| {
            let cluster = names[i % 4];
            let rate = if cluster.starts_with('t') { 0.01 } else { 0.02 };
            let t_event: f64 = Exp::new(rate).unwrap().sample(&mut rng);
            let t_cens: f64 = Exp::new(0.008).unwrap().sample(&mut rng);
            let time = t_event.min(t_cens).min(150.0);
            SurvivalObservation::new(format!("p{i:04}"), cluster, time, t_event <= t_cens && t_event <= 150.0)
        })
        .collect();
    (obs, arms)
}

/// Nelson–Aalen cumulative hazard of one group, evaluated at `t`.
pub fn nelson_aalen(obs: &[&SurvivalObservation], t: f64) -> f64 {
    let mut times: Vec<f64> = obs.iter().filter(|o| o.event && o.time <= t).map(|o| o.time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .iter()
        .map(|&s| {
            let d = obs.iter().filter(|o| o.event && o.time == s).count() as f64;
            let at_risk = obs.iter().filter(|o| o.time >= s).count() as f64;
            d / at_risk
        })
        .sum()
}

/// Missing-at-random contact fixture: the complete reports and a copy with
/// about 40% of counts and outside-home villages blanked. Count masking
/// depends on the observed symptom status only; village masking is
/// completely at random.
pub struct MarFixture {
    pub complete: Vec<ContactReport>,
    pub masked: Vec<ContactReport>,
    pub arms: ArmAssignment,
    pub masked_counts: usize,
    pub masked_villages: usize,
}

pub fn mar_fixture(arms: ArmAssignment, per_cluster: usize, seed: u64) -> MarFixture {
    let clusters: Vec<&str> = arms.iter().map(|(c, _)| c.as_str()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut complete = Vec::new();
    for (ci, home) in clusters.iter().enumerate() {
        for i in 0..per_cluster {
            let symptomatic = rng.random::<f64>() < 0.5;
            let scale = if symptomatic { 0.8 } else { 1.0 };
            let draw = |mean: f64, rng: &mut ChaCha8Rng| Poisson::new(mean * scale).unwrap().sample(rng) as u32;
            let mut entries = vec![ContactEntry::new(LocationKind::OwnCompound, Some(*home), TimeOfDay::Am, draw(6.0, &mut rng))];
            for (kind, mean) in [(LocationKind::Market, 3.0), (LocationKind::OtherCompound, 2.0)] {
                if rng.random::<f64>() < 0.7 {
                    // mostly the home village, else a random trial village
                    let village = if rng.random::<f64>() < 0.75 {
                        *home
                    } else {
                        clusters[(ci + 1 + rng.random_range(0..clusters.len() - 1)) % clusters.len()]
                    };
                    entries.push(ContactEntry::new(kind, Some(village), TimeOfDay::Am, draw(mean, &mut rng)));
                }
            }
            complete.push(ContactReport {
                respondent_id: format!("{home}-{i:03}"),
                residence_cluster: ClusterId::new(*home),
                symptomatic,
                day_offset: -2,
                entries,
            });
        }
    }
    let mut masked = complete.clone();
    let (mut masked_counts, mut masked_villages) = (0, 0);
    for r in &mut masked {
        let p_count = if r.symptomatic { 0.5 } else { 0.3 };
        for e in &mut r.entries {
            if rng.random::<f64>() < p_count {
                e.count = None;
                masked_counts += 1;
            }
            if !e.location_kind.is_home() && rng.random::<f64>() < 0.4 {
                e.village = None;
                masked_villages += 1;
            }
        }
    }
    MarFixture {
        arms: arms.clone(),
        complete,
        masked,
        masked_counts,
        masked_villages,
    }
}

pub fn six_clusters() -> ArmAssignment {
    arms(&[
        ("c1", Arm::Control),
        ("c2", Arm::Control),
        ("c3", Arm::Control),
        ("t1", Arm::Treated),
        ("t2", Arm::Treated),
        ("t3", Arm::Treated),
    ])
}
