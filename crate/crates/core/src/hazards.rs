//! Aalen's additive hazards model with one cluster-level covariate:
//! λ_j(t) = β_0(t) + β_1(t)·x_j, where x_j is the arm indicator (naive
//! analysis) or the treatment exposure m_j (contamination-adjusted).
//!
//! Cumulative coefficients are estimated by least squares at each event
//! time; the variance is the cluster-robust sandwich built from
//! cluster-aggregated influence terms.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterId;
use crate::error::{Error, Result};
use crate::exposure::ExposureTable;
use crate::tte::SurvivalObservation;

/// det(XᵀX) relative to the product of its diagonal below which the
/// design is treated as singular.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateKind {
    /// Intercept only; the treatment component stays at zero.
    Intercept,
    /// Arm indicator z_j.
    BinaryZ,
    /// Treatment exposure m_j.
    ExposureM,
}

impl CovariateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CovariateKind::Intercept => "intercept",
            CovariateKind::BinaryZ => "binary_z",
            CovariateKind::ExposureM => "exposure_m",
        }
    }
}

impl fmt::Display for CovariateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CovariateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "intercept" => Ok(CovariateKind::Intercept),
            "binary_z" | "binary" | "naive" | "z" => Ok(CovariateKind::BinaryZ),
            "exposure_m" | "exposure" | "adjusted" | "m" => Ok(CovariateKind::ExposureM),
            other => Err(Error::Config(format!("unknown covariate kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HazardModelSpec {
    pub covariate_kind: CovariateKind,
    pub cluster_exposures: ExposureTable,
    /// Events after this many days are ignored; at-risk sets are unaffected.
    pub max_time: Option<f64>,
    pub jitter_seed: u64,
}

impl HazardModelSpec {
    pub fn new(covariate_kind: CovariateKind, cluster_exposures: ExposureTable) -> Self {
        HazardModelSpec {
            covariate_kind,
            cluster_exposures,
            max_time: None,
            jitter_seed: 0,
        }
    }

    fn covariate(&self, cluster: &ClusterId) -> Result<f64> {
        let row = self
            .cluster_exposures
            .get(cluster)
            .ok_or_else(|| Error::Input(format!("cluster {cluster} has no exposure value")))?;
        Ok(match self.covariate_kind {
            CovariateKind::Intercept => 0.0,
            CovariateKind::BinaryZ => row.arm.indicator(),
            CovariateKind::ExposureM => row.exposure,
        })
    }
}

/// One step of the cumulative coefficient function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveStep {
    pub time: f64,
    /// (B_0, B_1)
    pub cum: [f64; 2],
    /// Robust covariance of (B_0, B_1).
    pub var: [[f64; 2]; 2],
}

impl CurveStep {
    pub fn origin() -> Self {
        CurveStep {
            time: 0.0,
            cum: [0.0; 2],
            var: [[0.0; 2]; 2],
        }
    }

    pub fn treatment(&self) -> f64 {
        self.cum[1]
    }

    pub fn treatment_var(&self) -> f64 {
        self.var[1][1]
    }
}

/// Right-continuous step function; a fitted curve starts with the origin.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoefficientCurve {
    pub steps: Vec<CurveStep>,
}

impl CoefficientCurve {
    pub fn event_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().skip_while(|s| s.time == 0.0).map(|s| s.time)
    }

    /// The last step at or before `t`.
    pub fn at(&self, t: f64) -> Option<&CurveStep> {
        let idx = self.steps.partition_point(|s| s.time <= t);
        idx.checked_sub(1).map(|i| &self.steps[i])
    }

    pub fn last(&self) -> Option<&CurveStep> {
        self.steps.last()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        if self.steps.is_empty() {
            wtr.write_record(CURVE_HEADER).map_err(|e| Error::csv(path, e))?;
        }
        for s in &self.steps {
            wtr.serialize(CurveRow::from(s)).map_err(|e| Error::csv(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let steps = rdr
            .deserialize::<CurveRow>()
            .map(|r| r.map(CurveStep::from).map_err(|e| Error::csv(path, e)))
            .collect::<Result<_>>()?;
        Ok(CoefficientCurve { steps })
    }
}

const CURVE_HEADER: [&str; 6] = ["time_days", "cum_b0", "cum_bM", "robvar_bM", "robvar_b0", "robcov_b0M"];

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    time_days: f64,
    cum_b0: f64,
    #[serde(rename = "cum_bM")]
    cum_bm: f64,
    #[serde(rename = "robvar_bM")]
    robvar_bm: f64,
    robvar_b0: f64,
    #[serde(rename = "robcov_b0M")]
    robcov_b0m: f64,
}

impl From<&CurveStep> for CurveRow {
    fn from(s: &CurveStep) -> Self {
        CurveRow {
            time_days: s.time,
            cum_b0: s.cum[0],
            cum_bm: s.cum[1],
            robvar_bm: s.var[1][1],
            robvar_b0: s.var[0][0],
            robcov_b0m: s.var[0][1],
        }
    }
}

impl From<CurveRow> for CurveStep {
    fn from(r: CurveRow) -> Self {
        CurveStep {
            time: r.time_days,
            cum: [r.cum_b0, r.cum_bm],
            var: [[r.robvar_b0, r.robcov_b0m], [r.robcov_b0m, r.robvar_bm]],
        }
    }
}

/// Adds Uniform(0, 1) days to every event time when any two included
/// observations share a time. Censoring times are left alone.
pub fn jitter_ties(observations: &[SurvivalObservation], seed: u64) -> Vec<SurvivalObservation> {
    let mut times: Vec<f64> = observations
        .iter()
        .filter(|o| o.is_included())
        .map(|o| o.time)
        .collect();
    times.sort_by(f64::total_cmp);
    let tied = times.windows(2).any(|w| w[0] == w[1]);
    let mut out = observations.to_vec();
    if !tied {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for o in out.iter_mut().filter(|o| o.is_included() && o.event) {
        let u: f64 = rng.sample(Open01);
        o.time += u;
    }
    out
}

struct Subject {
    time: f64,
    event: bool,
    cluster: usize,
}

/// Fits the cumulative coefficients at every event time up to `max_time`.
pub fn aalen_fit(observations: &[SurvivalObservation], spec: &HazardModelSpec) -> Result<CoefficientCurve> {
    let mut cluster_index: BTreeMap<&ClusterId, usize> = BTreeMap::new();
    for o in observations.iter().filter(|o| o.is_included()) {
        let next = cluster_index.len();
        cluster_index.entry(&o.cluster).or_insert(next);
    }
    let mut x = vec![0.0; cluster_index.len()];
    for (c, &i) in &cluster_index {
        x[i] = spec.covariate(c)?;
    }
    let intercept_only = spec.covariate_kind == CovariateKind::Intercept;

    let mut subjects: Vec<Subject> = observations
        .iter()
        .filter(|o| o.is_included())
        .map(|o| Subject {
            time: o.time,
            event: o.event,
            cluster: cluster_index[&o.cluster],
        })
        .collect();
    if let Some(s) = subjects.iter().find(|s| !(s.time.is_finite() && s.time > 0.0)) {
        return Err(Error::Input(format!("follow-up time {} is not positive", s.time)));
    }
    subjects.sort_by(|a, b| a.time.total_cmp(&b.time).then(b.event.cmp(&a.event)));

    let horizon = spec.max_time.unwrap_or(f64::INFINITY);
    let mut at_risk = vec![0.0f64; x.len()];
    for s in &subjects {
        at_risk[s.cluster] += 1.0;
    }
    let mut influence = vec![[0.0f64; 2]; x.len()];
    let mut cum = [0.0f64; 2];
    let mut steps = vec![CurveStep::origin()];
    let mut removed = 0;
    let mut prev_event: Option<f64> = None;

    for (k, s) in subjects.iter().enumerate() {
        if !s.event {
            continue;
        }
        if s.time > horizon {
            break;
        }
        if prev_event == Some(s.time) {
            return Err(Error::TiedEvents(s.time));
        }
        prev_event = Some(s.time);
        // everyone with time < t leaves the risk set; ties with censoring stay
        while removed < k && subjects[removed].time < s.time {
            at_risk[subjects[removed].cluster] -= 1.0;
            removed += 1;
        }

        let (m00, m01, m11) = at_risk.iter().zip(&x).fold((0.0, 0.0, 0.0), |(a, b, c), (&n, &xc)| {
            (a + n, b + n * xc, c + n * xc * xc)
        });
        let inv = if intercept_only {
            [[1.0 / m00, 0.0], [0.0, 0.0]]
        } else {
            let det = m00 * m11 - m01 * m01;
            if !(m11 > 0.0) || !(det / (m00 * m11) >= DEGENERACY_THRESHOLD) {
                return Err(degenerate(s.time, &at_risk, &x));
            }
            [[m11 / det, -m01 / det], [-m01 / det, m00 / det]]
        };
        let xe = [1.0, x[s.cluster]];
        let db = mat_vec(&inv, xe);
        cum[0] += db[0];
        cum[1] += db[1];

        for (c, e) in influence.iter_mut().enumerate() {
            // residual of cluster c: its event minus its fitted at-risk mass
            let fitted = at_risk[c] * (db[0] + x[c] * db[1]);
            let mut r = [-fitted, -fitted * x[c]];
            if c == s.cluster {
                r[0] += 1.0;
                r[1] += x[c];
            }
            let d = mat_vec(&inv, r);
            e[0] += d[0];
            e[1] += d[1];
        }
        let mut var = [[0.0; 2]; 2];
        for e in &influence {
            var[0][0] += e[0] * e[0];
            var[0][1] += e[0] * e[1];
            var[1][1] += e[1] * e[1];
        }
        var[1][0] = var[0][1];
        steps.push(CurveStep { time: s.time, cum, var });
    }
    if steps.len() == 1 {
        return Err(Error::NoEvents(horizon));
    }
    Ok(CoefficientCurve { steps })
}

fn mat_vec(a: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

fn degenerate(time: f64, at_risk: &[f64], x: &[f64]) -> Error {
    let mut values: Vec<f64> = at_risk
        .iter()
        .zip(x)
        .filter(|(&n, _)| n > 0.0)
        .map(|(_, &xc)| xc)
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let cause = match values.as_slice() {
        [only] => format!("every at-risk cluster has covariate value {only}, so the treatment coefficient is not identifiable"),
        _ => "at-risk covariate values are nearly collinear with the intercept".to_string(),
    };
    Error::DegenerateDesign { time, cause }
}

/// Treatment effect at a horizon in percentage points of cumulative hazard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectSummary {
    pub horizon: f64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl EffectSummary {
    /// Builds the summary from a treatment cumulative coefficient and its
    /// robust standard deviation.
    pub fn from_coefficient(horizon: f64, coefficient: f64, sd: f64) -> Self {
        let estimate = 100.0 * coefficient;
        let half = Z_95 * 100.0 * sd;
        EffectSummary {
            horizon,
            estimate,
            ci_low: estimate - half,
            ci_high: estimate + half,
        }
    }
}

impl fmt::Display for EffectSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} [{:.2}, {:.2}]", self.estimate, self.ci_low, self.ci_high)
    }
}

pub fn effect_summary(curve: &CoefficientCurve, horizon: f64) -> Result<EffectSummary> {
    let step = curve
        .at(horizon)
        .ok_or(Error::NoEvents(horizon))?;
    Ok(EffectSummary::from_coefficient(
        horizon,
        step.treatment(),
        step.treatment_var().max(0.0).sqrt(),
    ))
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub analysis: String,
    pub estimator: String,
    pub estimate_pct_points: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SummaryRow {
    pub fn new(analysis: impl Into<String>, estimator: impl Into<String>, s: &EffectSummary) -> Self {
        SummaryRow {
            analysis: analysis.into(),
            estimator: estimator.into(),
            estimate_pct_points: s.estimate,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
        }
    }
}

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        wtr.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary_csv(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::csv(path, e)))
        .collect()
}
