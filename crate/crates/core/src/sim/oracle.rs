//! Replicated simulated trials analysed with both estimators, scored
//! against the simulated truth.

use std::fmt;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{simulate, Scenario, SimMode};
use crate::error::{Error, Result};
use crate::hazards::{aalen_fit, effect_summary, CovariateKind, EffectSummary, HazardModelSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub events: usize,
    /// 100 × ∫β over the horizon.
    pub truth: f64,
    pub adjusted: std::result::Result<EffectSummary, String>,
    pub naive: std::result::Result<EffectSummary, String>,
    pub adjusted_degenerate: bool,
}

impl ReplicateResult {
    pub fn adjusted_covers(&self) -> Option<bool> {
        self.adjusted
            .as_ref()
            .ok()
            .map(|s| s.ci_low <= self.truth && self.truth <= s.ci_high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleSummary {
    pub replicates: usize,
    pub adjusted_fits: usize,
    pub naive_fits: usize,
    pub adjusted_degenerate: usize,
    pub mean_events: f64,
    pub mean_truth: f64,
    pub mean_adjusted: f64,
    pub sd_adjusted: f64,
    pub mean_naive: f64,
    pub sd_naive: f64,
    pub mean_abs_adjusted: f64,
    pub mean_abs_naive: f64,
    pub relative_error_adjusted: f64,
    pub coverage_adjusted: f64,
    pub coverage_naive: f64,
    /// mean naive / mean adjusted
    pub attenuation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub scenario: Scenario,
    pub replicates: Vec<ReplicateResult>,
    pub summary: OracleSummary,
}

/// Seed of replicate `r`, drawn from its own stream of the master seed.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(r as u64);
    rng.next_u64()
}

fn run_replicate(scenario: &Scenario, r: usize) -> Result<ReplicateResult> {
    let seed = replicate_seed(scenario.seed, r);
    let params = scenario.params(seed)?;
    let sim = simulate(&params)?;
    let obs = sim.observations()?;
    let horizon = scenario.horizon;
    let exposures = params.true_exposures();
    let fit = |kind| -> std::result::Result<EffectSummary, Error> {
        let mut spec = HazardModelSpec::new(kind, exposures.clone());
        spec.max_time = Some(horizon);
        effect_summary(&aalen_fit(&obs, &spec)?, horizon)
    };
    let adjusted = fit(CovariateKind::ExposureM);
    let adjusted_degenerate = matches!(adjusted, Err(Error::DegenerateDesign { .. }));
    Ok(ReplicateResult {
        replicate: r,
        seed,
        events: obs.iter().filter(|o| o.event).count(),
        truth: 100.0 * sim.true_estimand(horizon)?,
        adjusted: adjusted.map_err(|e| e.to_string()),
        naive: fit(CovariateKind::BinaryZ).map_err(|e| e.to_string()),
        adjusted_degenerate,
    })
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    (mean, sd)
}

fn summarize(reps: &[ReplicateResult]) -> OracleSummary {
    let adjusted: Vec<f64> = reps.iter().filter_map(|r| r.adjusted.as_ref().ok().map(|s| s.estimate)).collect();
    let naive: Vec<f64> = reps.iter().filter_map(|r| r.naive.as_ref().ok().map(|s| s.estimate)).collect();
    let (mean_adjusted, sd_adjusted) = mean_sd(&adjusted);
    let (mean_naive, sd_naive) = mean_sd(&naive);
    let truths: Vec<f64> = reps.iter().map(|r| r.truth).collect();
    let mean_truth = mean_sd(&truths).0;
    let mean_abs = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
    let coverage = |pick: fn(&ReplicateResult) -> Option<bool>| {
        let hits: Vec<bool> = reps.iter().filter_map(pick).collect();
        hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64
    };
    let naive_covers = |r: &ReplicateResult| {
        r.naive
            .as_ref()
            .ok()
            .map(|s| s.ci_low <= r.truth && r.truth <= s.ci_high)
    };
    OracleSummary {
        replicates: reps.len(),
        adjusted_fits: adjusted.len(),
        naive_fits: naive.len(),
        adjusted_degenerate: reps.iter().filter(|r| r.adjusted_degenerate).count(),
        mean_events: reps.iter().map(|r| r.events as f64).sum::<f64>() / reps.len() as f64,
        mean_truth,
        mean_adjusted,
        sd_adjusted,
        mean_naive,
        sd_naive,
        mean_abs_adjusted: mean_abs(&adjusted),
        mean_abs_naive: mean_abs(&naive),
        relative_error_adjusted: (mean_adjusted - mean_truth).abs() / mean_truth.abs(),
        coverage_adjusted: coverage(ReplicateResult::adjusted_covers),
        coverage_naive: coverage(naive_covers),
        attenuation: mean_naive / mean_adjusted,
    }
}

/// Simulates `scenario.replicates` trials in parallel and fits both
/// estimators with the exposures implied by the mixing matrix. Fit
/// failures are recorded per replicate; simulation failures abort.
pub fn oracle_study(scenario: &Scenario) -> Result<OracleReport> {
    if scenario.replicates < 2 {
        return Err(Error::Config(format!(
            "oracle study needs at least 2 replicates, got {}",
            scenario.replicates
        )));
    }
    if scenario.mode != SimMode::StochasticDiscrete {
        return Err(Error::Config("oracle study needs stochastic mode".into()));
    }
    let replicates = (0..scenario.replicates)
        .into_par_iter()
        .map(|r| run_replicate(scenario, r))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&replicates);
    Ok(OracleReport {
        scenario: scenario.clone(),
        replicates,
        summary,
    })
}

#[derive(Serialize)]
struct ReportRow<'a> {
    replicate: usize,
    seed: u64,
    events: usize,
    truth_pct_points: f64,
    adjusted_estimate: Option<f64>,
    adjusted_ci_low: Option<f64>,
    adjusted_ci_high: Option<f64>,
    adjusted_error: Option<&'a str>,
    naive_estimate: Option<f64>,
    naive_ci_low: Option<f64>,
    naive_ci_high: Option<f64>,
    naive_error: Option<&'a str>,
}

impl OracleReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        for r in &self.replicates {
            let a = r.adjusted.as_ref().ok();
            let n = r.naive.as_ref().ok();
            wtr.serialize(ReportRow {
                replicate: r.replicate,
                seed: r.seed,
                events: r.events,
                truth_pct_points: r.truth,
                adjusted_estimate: a.map(|s| s.estimate),
                adjusted_ci_low: a.map(|s| s.ci_low),
                adjusted_ci_high: a.map(|s| s.ci_high),
                adjusted_error: r.adjusted.as_ref().err().map(String::as_str),
                naive_estimate: n.map(|s| s.estimate),
                naive_ci_low: n.map(|s| s.ci_low),
                naive_ci_high: n.map(|s| s.ci_high),
                naive_error: r.naive.as_ref().err().map(String::as_str),
            })
            .map_err(|e| Error::csv(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.summary;
        let sc = &self.scenario;
        writeln!(
            f,
            "scenario: {} clusters x {}, rho = {}, kappa = {}, eta_trt = {}, eta_ctr = {}, gamma = {}, horizon = {} days",
            sc.n_clusters, sc.cluster_size, sc.rho, sc.kappa, sc.eta_trt, sc.eta_ctr, sc.gamma, sc.horizon
        )?;
        writeln!(f, "replicates: {} (seed {})", s.replicates, sc.seed)?;
        writeln!(f, "mean events per trial: {:.1}", s.mean_events)?;
        writeln!(f, "true effect (pct points): {:.4}", s.mean_truth)?;
        writeln!(
            f,
            "adjusted: mean {:.4}, sd {:.4}, relative error {:.3}, coverage {:.3} ({} fits, {} degenerate)",
            s.mean_adjusted, s.sd_adjusted, s.relative_error_adjusted, s.coverage_adjusted, s.adjusted_fits, s.adjusted_degenerate
        )?;
        writeln!(
            f,
            "naive: mean {:.4}, sd {:.4}, coverage {:.3} ({} fits)",
            s.mean_naive, s.sd_naive, s.coverage_naive, s.naive_fits
        )?;
        writeln!(
            f,
            "mean |adjusted| {:.4}, mean |naive| {:.4}, attenuation {:.3}",
            s.mean_abs_adjusted, s.mean_abs_naive, s.attenuation
        )
    }
}
