//! Multiple imputation of missing contact-survey fields.
//!
//! Each completed dataset is produced by four passes in a fixed order:
//! visited flag, time of day, contact count, village. Model parameters are
//! redrawn from their approximate sampling distribution for every dataset
//! and hot-deck pools are bootstrapped, so between-imputation spread carries
//! parameter uncertainty.

pub mod binary;
pub mod design;
pub mod empirical;
pub mod negbin;
pub mod rubin;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cluster::ClusterId;
use crate::contacts::{ContactEntry, ContactReport, Covariates, LocationKind, TimeOfDay};
use crate::error::{Error, Result};

pub use binary::{BinaryFit, BinaryLink};
pub use empirical::Empirical;
pub use negbin::{CountFamily, CountFit};
pub use rubin::{rubin_combine, PooledEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predictor {
    LocationKind,
    Symptomatic,
    AgeCategory,
    TimeOfDay,
    DayOffset,
    Gender,
}

pub const VISITED_PREDICTORS: [Predictor; 3] =
    [Predictor::LocationKind, Predictor::Symptomatic, Predictor::AgeCategory];
pub const COUNT_OUTSIDE_PREDICTORS: [Predictor; 4] = [
    Predictor::LocationKind,
    Predictor::Symptomatic,
    Predictor::TimeOfDay,
    Predictor::AgeCategory,
];
pub const COUNT_HOME_PREDICTORS: [Predictor; 5] = [
    Predictor::Symptomatic,
    Predictor::TimeOfDay,
    Predictor::DayOffset,
    Predictor::AgeCategory,
    Predictor::Gender,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImputationSpec {
    pub m: usize,
    pub master_seed: u64,
    /// Redraw model coefficients and bootstrap hot-deck pools per dataset.
    pub parameter_draws: bool,
}

impl ImputationSpec {
    pub fn new(m: usize, master_seed: u64) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config(format!("need at least 2 imputations, got {m}")));
        }
        Ok(ImputationSpec {
            m,
            master_seed,
            parameter_draws: true,
        })
    }
}

/// Random stream for dataset `k`: the master seed with the dataset index as
/// the ChaCha stream id. Adding datasets never changes earlier ones.
pub fn dataset_rng(master_seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(k as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRecord {
    pub dataset: Option<usize>,
    pub model: String,
    pub link: String,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ImputationResult {
    pub datasets: Vec<Vec<ContactReport>>,
    pub metadata: Vec<FitRecord>,
}

impl ImputationResult {
    pub fn write_metadata_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for rec in &self.metadata {
            let line = serde_json::to_string(rec).expect("fit record serializes");
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

fn features(
    report: &ContactReport,
    entry: &ContactEntry,
    cov: &Covariates,
    predictors: &[Predictor],
) -> Vec<String> {
    predictors
        .iter()
        .map(|p| match p {
            Predictor::LocationKind => entry.location_kind.to_string(),
            Predictor::Symptomatic => report.symptomatic.to_string(),
            Predictor::AgeCategory => cov.age_category.as_str().to_string(),
            Predictor::TimeOfDay => entry.time_of_day.map_or("missing".into(), |t| t.to_string()),
            Predictor::DayOffset => report.day_offset.to_string(),
            Predictor::Gender => cov.gender.clone(),
        })
        .collect()
}

struct Context<'a> {
    covariates: &'a BTreeMap<String, Covariates>,
    default_cov: Covariates,
}

impl Context<'_> {
    fn cov(&self, report: &ContactReport) -> &Covariates {
        self.covariates.get(&report.respondent_id).unwrap_or(&self.default_cov)
    }
}

/// Fits the visited-indicator model for one survey-day stratum.
pub fn fit_visited_model(
    reports: &[ContactReport],
    covariates: &BTreeMap<String, Covariates>,
    day_offset: i8,
) -> Result<BinaryFit> {
    let ctx = Context {
        covariates,
        default_cov: Covariates::default(),
    };
    let (rows, y): (Vec<_>, Vec<_>) = reports
        .iter()
        .filter(|r| r.day_offset == day_offset)
        .flat_map(|r| r.entries.iter().map(move |e| (r, e)))
        .filter(|(_, e)| !e.location_kind.is_home())
        .filter_map(|(r, e)| e.visited.map(|v| (features(r, e, ctx.cov(r), &VISITED_PREDICTORS), v)))
        .unzip();
    if rows.is_empty() {
        return Err(Error::Fit(format!(
            "visited model: no complete cases for day {day_offset}"
        )));
    }
    BinaryFit::fit(&rows, &y)
}

/// Which count model an entry belongs to.
fn count_predictors(entry: &ContactEntry) -> &'static [Predictor] {
    if entry.location_kind.is_home() {
        &COUNT_HOME_PREDICTORS
    } else {
        &COUNT_OUTSIDE_PREDICTORS
    }
}

/// Fits the count model (home or outside-home) on visited entries with an
/// observed count.
pub fn fit_count_model(
    reports: &[ContactReport],
    covariates: &BTreeMap<String, Covariates>,
    home: bool,
) -> Result<CountFit> {
    let ctx = Context {
        covariates,
        default_cov: Covariates::default(),
    };
    let (rows, y): (Vec<_>, Vec<_>) = reports
        .iter()
        .flat_map(|r| r.entries.iter().map(move |e| (r, e)))
        .filter(|(_, e)| e.location_kind.is_home() == home && e.was_visited() == Some(true))
        .filter_map(|(r, e)| e.count.map(|c| (features(r, e, ctx.cov(r), count_predictors(e)), c)))
        .unzip();
    CountFit::fit(&rows, &y)
}

/// Observed times per location kind among visited entries.
fn time_pools(reports: &[ContactReport]) -> BTreeMap<LocationKind, Empirical<TimeOfDay>> {
    let mut obs: BTreeMap<LocationKind, Vec<TimeOfDay>> = BTreeMap::new();
    for e in reports.iter().flat_map(|r| &r.entries) {
        if let (Some(true), Some(t)) = (e.was_visited(), e.time_of_day) {
            obs.entry(e.location_kind).or_default().push(t);
        }
    }
    obs.into_iter()
        .map(|(k, v)| (k, Empirical::from_observations(v)))
        .collect()
}

/// Observed visited villages by residence cluster, days -1 and -2 combined.
fn village_pools(reports: &[ContactReport]) -> BTreeMap<ClusterId, Empirical<ClusterId>> {
    let mut obs: BTreeMap<ClusterId, Vec<ClusterId>> = BTreeMap::new();
    for r in reports.iter().filter(|r| matches!(r.day_offset, -1 | -2)) {
        for e in &r.entries {
            if e.location_kind.is_home() || e.was_visited() != Some(true) {
                continue;
            }
            if let Some(v) = &e.village {
                obs.entry(r.residence_cluster.clone()).or_default().push(v.clone());
            }
        }
    }
    obs.into_iter()
        .map(|(k, v)| (k, Empirical::from_observations(v)))
        .collect()
}

/// Fills missing times by sampling the location kind's observed times,
/// falling back to all observed times.
pub fn impute_time_of_day<R: Rng + ?Sized>(
    reports: &mut [ContactReport],
    pools: &BTreeMap<LocationKind, Empirical<TimeOfDay>>,
    rng: &mut R,
) -> Result<()> {
    let all: Vec<TimeOfDay> = reports
        .iter()
        .flat_map(|r| &r.entries)
        .filter(|e| e.was_visited() == Some(true))
        .filter_map(|e| e.time_of_day)
        .collect();
    let global = Empirical::from_observations(all);
    for entry in reports.iter_mut().flat_map(|r| r.entries.iter_mut()) {
        if entry.was_visited() != Some(true) || entry.time_of_day.is_some() {
            continue;
        }
        let pool = match pools.get(&entry.location_kind) {
            Some(p) if !p.is_empty() => p,
            _ => {
                log::warn!(
                    "no observed times for {}; using the overall distribution",
                    entry.location_kind
                );
                &global
            }
        };
        entry.time_of_day = Some(
            pool.sample(rng)
                .ok_or_else(|| Error::Fit("no observed times of day at all".into()))?,
        );
    }
    Ok(())
}

/// Fills missing villages of visited outside-home entries from the
/// respondent's residence-cluster pool, falling back to all observations.
pub fn impute_village<R: Rng + ?Sized>(
    reports: &mut [ContactReport],
    pools: &BTreeMap<ClusterId, Empirical<ClusterId>>,
    global: &Empirical<ClusterId>,
    rng: &mut R,
) -> Result<()> {
    for report in reports.iter_mut() {
        let pool = match pools.get(&report.residence_cluster) {
            Some(p) if !p.is_empty() => p,
            _ => global,
        };
        for entry in report.entries.iter_mut() {
            let needs = !entry.location_kind.is_home()
                && entry.location_kind.has_village()
                && entry.was_visited() == Some(true)
                && entry.village.is_none();
            if needs {
                entry.village = Some(
                    pool.sample(rng)
                        .ok_or_else(|| Error::Fit("no observed villages at all".into()))?,
                );
            }
        }
    }
    Ok(())
}

fn needs_count(e: &ContactEntry) -> bool {
    e.count.is_none() && e.was_visited() == Some(true)
}

/// Produces `spec.m` completed copies of `reports`. Deterministic given the
/// master seed; observed cells are never altered.
pub fn run_imputation(
    reports: &[ContactReport],
    covariates: &BTreeMap<String, Covariates>,
    spec: &ImputationSpec,
) -> Result<ImputationResult> {
    if spec.m < 2 {
        return Err(Error::Config(format!("need at least 2 imputations, got {}", spec.m)));
    }
    let ctx = Context {
        covariates,
        default_cov: Covariates::default(),
    };
    let mut metadata = Vec::new();

    let mut visited_models: BTreeMap<i8, BinaryFit> = BTreeMap::new();
    for day in [0i8, -1, -2] {
        let missing = reports
            .iter()
            .filter(|r| r.day_offset == day)
            .flat_map(|r| &r.entries)
            .any(|e| e.was_visited().is_none());
        if missing {
            let fit = fit_visited_model(reports, covariates, day)?;
            metadata.push(FitRecord {
                dataset: None,
                model: format!("visited[day={day}]"),
                link: fit.link.as_str().into(),
                converged: fit.converged,
                iterations: fit.iterations,
                note: fit.fallback_reason.clone(),
            });
            visited_models.insert(day, fit);
        }
    }
    let times = time_pools(reports);
    let villages = village_pools(reports);
    let global_villages = Empirical::from_observations(
        reports
            .iter()
            .flat_map(|r| &r.entries)
            .filter(|e| !e.location_kind.is_home() && e.was_visited() == Some(true))
            .filter_map(|e| e.village.clone()),
    );

    let outcomes: Vec<(Vec<ContactReport>, Vec<FitRecord>)> = (0..spec.m)
        .into_par_iter()
        .map(|k| -> Result<_> {
            let mut rng = dataset_rng(spec.master_seed, k);
            let mut data = reports.to_vec();
            let mut records = Vec::new();

            // visited
            let models: BTreeMap<i8, BinaryFit> = visited_models
                .iter()
                .map(|(d, f)| (*d, if spec.parameter_draws { f.perturbed(&mut rng) } else { f.clone() }))
                .collect();
            for report in data.iter_mut() {
                let Some(model) = models.get(&report.day_offset) else { continue };
                let cov = ctx.cov(report).clone();
                for i in 0..report.entries.len() {
                    if report.entries[i].was_visited().is_none() {
                        let x = features(report, &report.entries[i], &cov, &VISITED_PREDICTORS);
                        let p = model.predict(&x);
                        report.entries[i].visited = Some(rng.random::<f64>() < p);
                    }
                }
            }

            // time of day
            let pools: BTreeMap<_, _> = if spec.parameter_draws {
                times.iter().map(|(k, e)| (*k, e.bootstrap(&mut rng))).collect()
            } else {
                times.clone()
            };
            impute_time_of_day(&mut data, &pools, &mut rng)?;

            // counts
            for home in [true, false] {
                let missing = data
                    .iter()
                    .flat_map(|r| &r.entries)
                    .any(|e| e.location_kind.is_home() == home && needs_count(e));
                if !missing {
                    continue;
                }
                let fit = fit_count_model(&data, covariates, home)?;
                records.push(FitRecord {
                    dataset: Some(k),
                    model: if home { "count_home" } else { "count_outside_home" }.into(),
                    link: format!("log/{}", fit.family.as_str()),
                    converged: fit.converged,
                    iterations: fit.iterations,
                    note: (fit.family == CountFamily::NegativeBinomial).then(|| format!("theta={}", fit.theta)),
                });
                let model = if spec.parameter_draws { fit.perturbed(&mut rng) } else { fit };
                for report in data.iter_mut() {
                    let cov = ctx.cov(report).clone();
                    for i in 0..report.entries.len() {
                        let e = &report.entries[i];
                        if e.location_kind.is_home() == home && needs_count(e) {
                            let x = features(report, e, &cov, count_predictors(e));
                            report.entries[i].count = Some(model.sample(&x, &mut rng));
                        }
                    }
                }
            }
            for e in data.iter_mut().flat_map(|r| r.entries.iter_mut()) {
                if e.count.is_none() && e.was_visited() == Some(false) {
                    e.count = Some(0);
                }
            }

            // village
            let (pools, global) = if spec.parameter_draws {
                (
                    villages.iter().map(|(k, e)| (k.clone(), e.bootstrap(&mut rng))).collect(),
                    global_villages.bootstrap(&mut rng),
                )
            } else {
                (villages.clone(), global_villages.clone())
            };
            impute_village(&mut data, &pools, &global, &mut rng)?;
            Ok((data, records))
        })
        .collect::<Result<_>>()?;

    let mut datasets = Vec::with_capacity(spec.m);
    for (data, records) in outcomes {
        datasets.push(data);
        metadata.extend(records);
    }
    Ok(ImputationResult { datasets, metadata })
}
