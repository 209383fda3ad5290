mod common;

use std::collections::BTreeMap;
use std::path::Path;

use spillover::contacts::write_contacts_csv;
use spillover::hazards::{aalen_fit, effect_summary, jitter_ties, CovariateKind, HazardModelSpec};
use spillover::imputation::{run_imputation, ImputationSpec};
use spillover::pipeline::{exposure_from_reports, run_pipeline, ExposureOptions, RunConfig};
use spillover::residence::clean_residence;
use spillover::sim::{simulate, Scenario};
use spillover::tte::write_observations_csv;
use spillover::Error;

fn write_config(dir: &Path, body: &str) -> RunConfig {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    RunConfig::load(&path).unwrap()
}

#[test]
fn complete_data_pipeline_equals_direct_fit() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = Scenario {
        n_clusters: 6,
        cluster_size: 300,
        eta_trt: 0.01,
        eta_ctr: 0.02,
        horizon: 90.0,
        ..Scenario::default()
    };
    let params = scenario.params(8).unwrap();
    let obs = simulate(&params).unwrap().observations().unwrap();
    let arms = params.arms();
    let contacts = common::mar_fixture(arms.clone(), 25, 3).complete;
    write_observations_csv(dir.path().join("obs.csv"), &obs).unwrap();
    arms.write_csv(dir.path().join("arms.csv")).unwrap();
    write_contacts_csv(dir.path().join("contacts.csv"), &contacts).unwrap();
    let cfg = write_config(
        dir.path(),
        "out = \"out\"\nseed = 5\nobservations = \"obs.csv\"\narms = \"arms.csv\"\ncontacts = \"contacts.csv\"\nm = 4\nhorizon = 90.0\nsvg = false\n",
    );
    let manifest = run_pipeline(&cfg).unwrap();

    let imputed = run_imputation(&contacts, &BTreeMap::new(), &ImputationSpec::new(4, 5).unwrap()).unwrap();
    assert!(imputed.datasets.iter().all(|d| *d == contacts));
    let table = exposure_from_reports(&contacts, &arms, &ExposureOptions::default()).unwrap();
    let jittered = jitter_ties(&obs, 5);
    let fit = |kind, t| {
        let mut spec = HazardModelSpec::new(kind, t);
        spec.max_time = None;
        effect_summary(&aalen_fit(&jittered, &spec).unwrap(), 90.0).unwrap()
    };
    let adjusted = fit(CovariateKind::ExposureM, table.clone());
    let naive = fit(CovariateKind::BinaryZ, table);
    let row = |name: &str| manifest.summary.iter().find(|r| r.estimator == name).unwrap().clone();
    for (got, want) in [(row("adjusted"), adjusted), (row("naive"), naive)] {
        assert!((got.estimate_pct_points - want.estimate).abs() < 1e-9, "{got:?} vs {want:?}");
        assert!((got.ci_low - want.ci_low).abs() < 1e-9);
        assert!((got.ci_high - want.ci_high).abs() < 1e-9);
    }
    assert!(cfg.out.join("manifest.json").exists());
    assert!(!cfg.out.join("effect_curves.svg").exists());
}

#[test]
fn missing_input_is_an_io_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("arms.csv"), "cluster,arm\nA,control\nB,treated\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "out = \"out\"\nseed = 1\nobservations = \"nowhere.csv\"\narms = \"arms.csv\"\nexposure = \"exp.csv\"\n",
    );
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.is_io_or_config());
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("nowhere.csv"), "{err}");
    assert!(!cfg.out.exists());
}

#[test]
fn failing_stage_is_named() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("obs.csv"), "participant_id,cluster,time_days,event,excluded_reason\np1,A,3,1,\n").unwrap();
    std::fs::write(dir.path().join("arms.csv"), "cluster,arm\nA,control\nB,treated\n").unwrap();
    // no contact data for cluster B
    std::fs::write(
        dir.path().join("contacts.csv"),
        "respondent_id,residence_cluster,symptomatic,day_offset,location_kind,village,time_of_day,count,visited\nr1,A,0,-2,own_compound,A,AM,3,1\nr2,A,0,-2,own_compound,A,AM,,1\nr3,A,1,-2,own_compound,A,AM,4,1\n",
    )
    .unwrap();
    let cfg = write_config(
        dir.path(),
        "out = \"out\"\nseed = 1\nobservations = \"obs.csv\"\narms = \"arms.csv\"\ncontacts = \"contacts.csv\"\nm = 2\n",
    );
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.to_string().starts_with("exposure stage failed"), "{err}");
    assert!(!err.is_io_or_config());
}

#[test]
fn toy_network_exposures() {
    let (reports, arms) = common::toy_network();
    let t = exposure_from_reports(&reports, &arms, &ExposureOptions::default()).unwrap();
    assert_eq!(t.exposure_of(&"A".into()), Some(1.0 / 7.0));
    assert_eq!(t.exposure_of(&"B".into()), Some(2.0 / 3.0));
}

#[test]
fn residence_fixture_matches_answer_key() {
    let (cases, counts) = common::residence_fixture();
    let input: Vec<_> = cases.iter().map(|c| c.input.clone()).collect();
    let out = clean_residence(&input);
    let mut kept = out.cleaned.iter();
    for case in &cases {
        match &case.expected {
            common::Expected::Kept(want) => assert_eq!(kept.next(), Some(want)),
            common::Expected::Excluded => {
                assert!(out.exclusions.iter().any(|e| e.participant_id == case.input.participant_id))
            }
        }
    }
    assert_eq!(kept.next(), None);
    assert_eq!(out.rule_counts, counts);
    assert_eq!(clean_residence(&out.cleaned).cleaned, out.cleaned);
}
