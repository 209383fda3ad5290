//! End-to-end analysis: time-to-event derivation, imputation, exposure
//! estimation per imputed dataset, additive-hazards fits and pooling.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{Arm, ArmAssignment, ClusterId};
use crate::contacts::{read_contacts_csv, read_covariates_csv, write_contacts_csv, ContactReport, Covariates};
use crate::dates::DateParser;
use crate::error::{Error, Result};
use crate::exposure::{
    accumulate_sums_with, estimate_exposure, filter_entries, BothHandling, ExposureTable, Stratum, WindowFilter,
};
use crate::hazards::{
    aalen_fit, effect_summary, jitter_ties, write_summary_csv, CoefficientCurve, CovariateKind, CurveStep,
    HazardModelSpec, SummaryRow,
};
use crate::imputation::{rubin_combine, run_imputation, ImputationSpec};
use crate::plot::{emit_plot_data, PlotSeries};
use crate::residence::{clean_residence, read_residence_csv, write_residence_csv};
use crate::tte::{
    derive_cohort, read_infections_csv, read_observations_csv, summarize_cohort, write_observations_csv,
    FollowUpWindow, SurvivalObservation,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Adjusted,
    Naive,
    #[default]
    Both,
}

impl Estimator {
    pub fn adjusted(self) -> bool {
        matches!(self, Estimator::Adjusted | Estimator::Both)
    }

    pub fn naive(self) -> bool {
        matches!(self, Estimator::Naive | Estimator::Both)
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "adjusted" => Ok(Estimator::Adjusted),
            "naive" => Ok(Estimator::Naive),
            "both" => Ok(Estimator::Both),
            other => Err(Error::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Adjusted => "adjusted",
            Estimator::Naive => "naive",
            Estimator::Both => "both",
        })
    }
}

/// Per-cluster exposure pooled over imputations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledExposureRow {
    pub cluster: ClusterId,
    pub arm: Arm,
    pub exposure: f64,
    pub within_var: f64,
    pub between_var: f64,
    pub total_var: f64,
}

pub fn pool_exposures(tables: &[ExposureTable]) -> Result<Vec<PooledExposureRow>> {
    let first = tables.first().ok_or_else(|| Error::Input("no exposure tables to pool".into()))?;
    first
        .rows()
        .iter()
        .map(|row| {
            let (points, vars): (Vec<f64>, Vec<f64>) = tables
                .iter()
                .map(|t| {
                    t.get(&row.cluster)
                        .map(|r| (r.exposure, r.variance))
                        .ok_or_else(|| Error::Input(format!("cluster {} missing from an imputed exposure table", row.cluster)))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            let (exposure, within_var, between_var, total_var) = if tables.len() == 1 {
                (points[0], vars[0], 0.0, vars[0])
            } else {
                let p = rubin_combine(&points, &vars)?;
                (p.point, p.within_var, p.between_var, p.total_var)
            };
            Ok(PooledExposureRow {
                cluster: row.cluster.clone(),
                arm: row.arm,
                exposure,
                within_var,
                between_var,
                total_var,
            })
        })
        .collect()
}

pub fn write_pooled_exposure_csv(path: impl AsRef<Path>, rows: &[PooledExposureRow]) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        wtr.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Rubin-pools curves fitted on the same event times: the mean of the
/// cumulative coefficients with W + (1 + 1/m)B covariance at each step.
pub fn pool_curves(curves: &[CoefficientCurve]) -> Result<CoefficientCurve> {
    let first = curves.first().ok_or_else(|| Error::Input("no curves to pool".into()))?;
    if curves.len() == 1 {
        return Ok(first.clone());
    }
    if curves.iter().any(|c| c.steps.len() != first.steps.len()) {
        return Err(Error::Input("curves to pool have different event times".into()));
    }
    let m = curves.len() as f64;
    let steps = (0..first.steps.len())
        .map(|i| {
            let time = first.steps[i].time;
            if curves.iter().any(|c| c.steps[i].time != time) {
                return Err(Error::Input(format!("curves to pool disagree at step {i}")));
            }
            let mut cum = [0.0; 2];
            let mut within = [[0.0; 2]; 2];
            for c in curves {
                let s = &c.steps[i];
                for a in 0..2 {
                    cum[a] += s.cum[a] / m;
                    for b in 0..2 {
                        within[a][b] += s.var[a][b] / m;
                    }
                }
            }
            let mut between = [[0.0; 2]; 2];
            for c in curves {
                let s = &c.steps[i];
                for a in 0..2 {
                    for b in 0..2 {
                        between[a][b] += (s.cum[a] - cum[a]) * (s.cum[b] - cum[b]) / (m - 1.0);
                    }
                }
            }
            let mut var = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    var[a][b] = within[a][b] + (1.0 + 1.0 / m) * between[a][b];
                }
            }
            Ok(CurveStep { time, cum, var })
        })
        .collect::<Result<_>>()?;
    Ok(CoefficientCurve { steps })
}

#[derive(Debug, Clone)]
pub struct FitRequest {
    pub estimator: Estimator,
    pub max_time: Option<f64>,
    /// Reporting horizon; defaults to `max_time`, then the last follow-up time.
    pub horizon: Option<f64>,
    pub jitter_seed: u64,
    pub analysis: String,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub horizon: f64,
    /// One curve per exposure table.
    pub adjusted_curves: Vec<CoefficientCurve>,
    pub adjusted: Option<CoefficientCurve>,
    pub naive: Option<CoefficientCurve>,
    pub summary: Vec<SummaryRow>,
}

/// Fits the requested estimators. With several exposure tables (one per
/// imputed dataset) the adjusted fits are pooled by Rubin's rules.
pub fn fit_estimators(
    observations: &[SurvivalObservation],
    exposures: &[ExposureTable],
    req: &FitRequest,
) -> Result<FitOutput> {
    let first = exposures.first().ok_or_else(|| Error::Input("no exposure table".into()))?;
    let obs = jitter_ties(observations, req.jitter_seed);
    let horizon = req.horizon.or(req.max_time).unwrap_or_else(|| {
        obs.iter()
            .filter(|o| o.is_included())
            .map(|o| o.time)
            .fold(0.0, f64::max)
    });
    let spec = |kind, table: &ExposureTable| HazardModelSpec {
        covariate_kind: kind,
        cluster_exposures: table.clone(),
        max_time: req.max_time,
        jitter_seed: req.jitter_seed,
    };
    let mut summary = Vec::new();
    let (adjusted_curves, adjusted) = if req.estimator.adjusted() {
        let curves = exposures
            .par_iter()
            .map(|t| aalen_fit(&obs, &spec(CovariateKind::ExposureM, t)))
            .collect::<Result<Vec<_>>>()?;
        let pooled = pool_curves(&curves)?;
        summary.push(SummaryRow::new(&req.analysis, "adjusted", &effect_summary(&pooled, horizon)?));
        (curves, Some(pooled))
    } else {
        (Vec::new(), None)
    };
    let naive = if req.estimator.naive() {
        let curve = aalen_fit(&obs, &spec(CovariateKind::BinaryZ, first))?;
        summary.push(SummaryRow::new(&req.analysis, "naive", &effect_summary(&curve, horizon)?));
        Some(curve)
    } else {
        None
    };
    Ok(FitOutput {
        horizon,
        adjusted_curves,
        adjusted,
        naive,
        summary,
    })
}

impl FitOutput {
    /// Writes curves, the summary table and plot data into `dir`; returns
    /// the file names written.
    pub fn write(&self, dir: &Path, svg: bool) -> Result<Vec<String>> {
        let mut written = Vec::new();
        let width = self.adjusted_curves.len().to_string().len().max(2);
        if self.adjusted_curves.len() > 1 {
            for (k, c) in self.adjusted_curves.iter().enumerate() {
                let name = format!("curve_adjusted_imp{:0width$}.csv", k + 1);
                c.write_csv(dir.join(&name))?;
                written.push(name);
            }
        }
        let mut series = Vec::new();
        if let Some(c) = &self.adjusted {
            c.write_csv(dir.join("curve_adjusted.csv"))?;
            written.push("curve_adjusted.csv".into());
            series.push(PlotSeries { label: "adjusted", curve: c });
        }
        if let Some(c) = &self.naive {
            c.write_csv(dir.join("curve_naive.csv"))?;
            written.push("curve_naive.csv".into());
            series.push(PlotSeries { label: "naive", curve: c });
        }
        write_summary_csv(dir.join("summary.csv"), &self.summary)?;
        written.push("summary.csv".into());
        let svg_path = dir.join("effect_curves.svg");
        emit_plot_data(&series, &dir.join("effect_curves.csv"), svg.then_some(svg_path.as_path()))?;
        written.push("effect_curves.csv".into());
        if svg {
            written.push("effect_curves.svg".into());
        }
        Ok(written)
    }
}

/// Reads one or more exposure tables.
pub fn read_exposure_tables(paths: &[PathBuf]) -> Result<Vec<ExposureTable>> {
    paths.iter().map(ExposureTable::read_csv).collect()
}

fn default_m() -> usize {
    20
}

fn default_analysis() -> String {
    "main".into()
}

fn default_day_offset() -> i8 {
    -2
}

fn default_true() -> bool {
    true
}

/// Pipeline configuration. Relative paths are resolved against the config
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: u64,
    #[serde(default = "default_analysis")]
    pub analysis: String,
    /// Pre-built observations; otherwise derived from residence + infections.
    pub observations: Option<PathBuf>,
    pub residence: Option<PathBuf>,
    pub infections: Option<PathBuf>,
    /// START:END[:CENSOR]
    pub window: Option<String>,
    pub arms: Option<PathBuf>,
    /// Pre-computed exposure table; otherwise estimated from contacts.
    pub exposure: Option<PathBuf>,
    pub contacts: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub stratum: Option<String>,
    #[serde(default = "default_day_offset")]
    pub day_offset: i8,
    #[serde(default)]
    pub half_split_both: bool,
    #[serde(default)]
    pub estimator: Estimator,
    pub max_time: Option<f64>,
    pub horizon: Option<f64>,
    #[serde(default = "default_true")]
    pub svg: bool,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        for p in [
            &mut self.observations,
            &mut self.residence,
            &mut self.infections,
            &mut self.arms,
            &mut self.exposure,
            &mut self.contacts,
            &mut self.covariates,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    fn validate(&self) -> Result<()> {
        if self.observations.is_none() && (self.residence.is_none() || self.infections.is_none() || self.window.is_none()) {
            return Err(Error::Config(
                "need either `observations` or all of `residence`, `infections` and `window`".into(),
            ));
        }
        if self.exposure.is_none() && self.contacts.is_none() {
            return Err(Error::Config("need either `exposure` or `contacts`".into()));
        }
        if self.contacts.is_some() && self.arms.is_none() {
            return Err(Error::Config("estimating exposure from contacts needs `arms`".into()));
        }
        if self.observations.is_none() && self.arms.is_none() {
            return Err(Error::Config("deriving observations needs `arms`".into()));
        }
        if self.contacts.is_some() && self.m < 2 {
            return Err(Error::Config(format!("need at least 2 imputations, got {}", self.m)));
        }
        for p in [
            &self.observations,
            &self.residence,
            &self.infections,
            &self.arms,
            &self.exposure,
            &self.contacts,
            &self.covariates,
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    pub summary: Vec<SummaryRow>,
}

impl Manifest {
    pub fn files(&self) -> impl Iterator<Item = &str> {
        self.stages.iter().flat_map(|s| s.outputs.iter().map(String::as_str))
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

struct Outputs<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl Outputs<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, stage: &str, inputs: Vec<String>, outputs: Vec<String>) {
        self.manifest.stages.push(StageRecord {
            stage: stage.into(),
            inputs,
            outputs,
        });
    }
}

/// Runs every stage the configuration calls for and writes `manifest.json`
/// last. The first failing stage aborts the run.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let mut out = Outputs {
        dir: &cfg.out,
        manifest: Manifest {
            version: VERSION.into(),
            seed: cfg.seed,
            stages: Vec::new(),
            summary: Vec::new(),
        },
    };
    let arms = cfg.arms.as_ref().map(ArmAssignment::read_csv).transpose()?;

    let observations = tte_stage(cfg, arms.as_ref(), &mut out).map_err(Error::in_stage("tte"))?;
    let exposures = exposure_stages(cfg, arms.as_ref(), &mut out)?;

    let fit = (|| {
        let req = FitRequest {
            estimator: cfg.estimator,
            max_time: cfg.max_time,
            horizon: cfg.horizon,
            jitter_seed: cfg.seed,
            analysis: cfg.analysis.clone(),
        };
        let fit = fit_estimators(&observations, &exposures, &req)?;
        let written = fit.write(out.dir, cfg.svg)?;
        Ok((fit, written))
    })()
    .map_err(Error::in_stage("fit"))?;
    let (fit, written) = fit;
    out.record("fit", vec!["observations".into(), "exposure".into()], written);
    out.manifest.summary = fit.summary.clone();

    let path = out.path("manifest.json");
    let mut text = serde_json::to_string_pretty(&out.manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(out.manifest)
}

fn tte_stage(cfg: &RunConfig, arms: Option<&ArmAssignment>, out: &mut Outputs<'_>) -> Result<Vec<SurvivalObservation>> {
    if let Some(p) = &cfg.observations {
        let obs = read_observations_csv(p)?;
        out.record("load_observations", vec![display(p)], Vec::new());
        return Ok(obs);
    }
    let (residence, infections, window) = (
        cfg.residence.as_ref().expect("validated"),
        cfg.infections.as_ref().expect("validated"),
        cfg.window.as_ref().expect("validated"),
    );
    let arms = arms.expect("validated");
    let dates = DateParser::default();
    let window = FollowUpWindow::parse(window, &dates)?;
    let (records, mut exclusions) = read_residence_csv(residence, &dates)?;
    let cleaned = clean_residence(&records);
    exclusions.extend(cleaned.exclusions.iter().cloned());
    let infections_by_id = read_infections_csv(infections, &dates)?;
    let obs = derive_cohort(&cleaned.cleaned, &exclusions, &infections_by_id, &window, arms);
    write_residence_csv(out.path("residence_clean.csv"), &cleaned.cleaned, &dates)?;
    write_observations_csv(out.path("observations.csv"), &obs)?;
    write_cohort_summary(&out.path("cohort_summary.csv"), &obs, arms)?;
    out.record(
        "tte",
        vec![display(residence), display(infections)],
        vec!["residence_clean.csv".into(), "observations.csv".into(), "cohort_summary.csv".into()],
    );
    Ok(obs)
}

pub fn write_cohort_summary(path: &Path, obs: &[SurvivalObservation], arms: &ArmAssignment) -> Result<()> {
    let s = summarize_cohort(obs, arms);
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    wtr.write_record(["arm", "participants", "events", "incidence_pct"])
        .map_err(|e| Error::csv(path, e))?;
    for (label, c) in [("treated", s.treated), ("control", s.control), ("total", s.total())] {
        let pct = c.incidence().map(|p| format!("{:.2}", 100.0 * p)).unwrap_or_default();
        wtr.write_record([label.to_string(), c.n.to_string(), c.events.to_string(), pct])
            .map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Options for turning contact reports into exposure tables.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExposureOptions {
    pub filter: WindowFilter,
    pub both: BothHandling,
}

pub fn exposure_from_reports(reports: &[ContactReport], arms: &ArmAssignment, opts: &ExposureOptions) -> Result<ExposureTable> {
    let filtered = filter_entries(reports, &opts.filter);
    estimate_exposure(&accumulate_sums_with(&filtered, arms, opts.both)?, arms)
}

fn exposure_stages(cfg: &RunConfig, arms: Option<&ArmAssignment>, out: &mut Outputs<'_>) -> Result<Vec<ExposureTable>> {
    if let Some(p) = &cfg.exposure {
        let table = ExposureTable::read_csv(p).map_err(Error::in_stage("exposure"))?;
        out.record("load_exposure", vec![display(p)], Vec::new());
        return Ok(vec![table]);
    }
    let contacts = cfg.contacts.as_ref().expect("validated");
    let arms = arms.expect("validated");

    let datasets = (|| {
        let reports = read_contacts_csv(contacts)?;
        let covariates: BTreeMap<String, Covariates> = match &cfg.covariates {
            Some(p) => read_covariates_csv(p)?,
            None => BTreeMap::new(),
        };
        let result = run_imputation(&reports, &covariates, &ImputationSpec { m: cfg.m, master_seed: cfg.seed, parameter_draws: true })?;
        let dir = out.path("imputed");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let width = cfg.m.to_string().len().max(2);
        let mut written = Vec::new();
        for (k, d) in result.datasets.iter().enumerate() {
            let name = format!("imputed/contacts_imp{:0width$}.csv", k + 1);
            write_contacts_csv(out.path(&name), d)?;
            written.push(name);
        }
        result.write_metadata_jsonl(out.path("imputation_fits.jsonl"))?;
        written.push("imputation_fits.jsonl".into());
        let mut inputs = vec![display(contacts)];
        inputs.extend(cfg.covariates.as_deref().map(display));
        out.record("impute", inputs, written);
        Ok(result.datasets)
    })()
    .map_err(Error::in_stage("impute"))?;

    (|| {
        let opts = ExposureOptions {
            filter: WindowFilter {
                day_offset: cfg.day_offset,
                stratum: cfg.stratum.as_deref().map(Stratum::from_str).transpose()?.unwrap_or_default(),
            },
            both: if cfg.half_split_both { BothHandling::HalfSplit } else { BothHandling::WholeCount },
        };
        let tables = datasets
            .par_iter()
            .map(|d| exposure_from_reports(d, arms, &opts))
            .collect::<Result<Vec<_>>>()?;
        let dir = out.path("exposure");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let width = tables.len().to_string().len().max(2);
        let mut written = Vec::new();
        for (k, t) in tables.iter().enumerate() {
            let name = format!("exposure/exposure_imp{:0width$}.csv", k + 1);
            t.write_csv(out.path(&name))?;
            written.push(name);
        }
        write_pooled_exposure_csv(out.path("exposure_pooled.csv"), &pool_exposures(&tables)?)?;
        written.push("exposure_pooled.csv".into());
        out.record("exposure", vec!["imputed".into(), display(cfg.arms.as_ref().expect("validated"))], written);
        Ok(tables)
    })()
    .map_err(Error::in_stage("exposure"))
}
