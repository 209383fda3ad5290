//! Multi-cluster SIR epidemics with cross-cluster mixing.
//!
//! Cluster j's force of infection is λ_j(t) = Σ_k m_jk ν_k(t), where
//! ν_k(t) = κ η_k Y_k(t) / N_k is the infectious pressure generated in
//! cluster k. The true overall effect is β(t) = ν̄_trt(t) − ν̄_ctr(t).

pub mod oracle;

use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::cluster::{Arm, ArmAssignment, ClusterId};
use crate::error::{Error, Result};
use crate::exposure::{ExposureRow, ExposureTable};
use crate::tte::SurvivalObservation;

pub use oracle::{oracle_study, OracleReport, OracleSummary, ReplicateResult};

const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[serde(alias = "deterministic", alias = "ode")]
    DeterministicOde,
    #[default]
    #[serde(alias = "stochastic", alias = "chain_binomial")]
    StochasticDiscrete,
}

impl FromStr for SimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "deterministic" | "deterministic_ode" | "ode" => Ok(SimMode::DeterministicOde),
            "stochastic" | "stochastic_discrete" | "chain_binomial" => Ok(SimMode::StochasticDiscrete),
            other => Err(Error::Config(format!("unknown simulation mode {other:?}"))),
        }
    }
}

/// How per-cluster pressures are averaged within an arm for the truth curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArmWeighting {
    #[default]
    Cluster,
    Population,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub name: ClusterId,
    pub size: u64,
    pub arm: Arm,
    pub initial_infected: u64,
    #[serde(default)]
    pub initial_recovered: u64,
    /// Random stream id; clusters keep their draws when simulated in a
    /// different company as long as this stays the same.
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub clusters: Vec<ClusterSpec>,
    pub kappa: f64,
    pub eta_trt: f64,
    pub eta_ctr: f64,
    /// Row-stochastic: mixing[j][k] is the share of j's contacts made in k.
    pub mixing: Vec<Vec<f64>>,
    pub gamma: f64,
    pub horizon: f64,
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weighting: ArmWeighting,
}

fn default_dt() -> f64 {
    0.25
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let n = self.clusters.len();
        if n == 0 {
            return Err(Error::Config("no clusters".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.kappa >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::Config("kappa and gamma must be non-negative".into()));
        }
        for eta in [self.eta_trt, self.eta_ctr] {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::Config(format!("transmission probability {eta} outside [0, 1]")));
            }
        }
        for c in &self.clusters {
            if c.size == 0 {
                return Err(Error::Config(format!("cluster {} is empty", c.name)));
            }
            if c.initial_infected + c.initial_recovered > c.size {
                return Err(Error::Config(format!(
                    "cluster {} starts with more infected and recovered than members",
                    c.name
                )));
            }
        }
        if self.mixing.len() != n || self.mixing.iter().any(|r| r.len() != n) {
            return Err(Error::Config(format!("mixing matrix must be {n}x{n}")));
        }
        for (j, row) in self.mixing.iter().enumerate() {
            if row.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::Config(format!("mixing row {j} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Config(format!("mixing row {j} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn eta(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Treated => self.eta_trt,
            Arm::Control => self.eta_ctr,
        }
    }

    pub fn arms(&self) -> ArmAssignment {
        self.clusters.iter().map(|c| (c.name.clone(), c.arm)).collect()
    }

    /// Exposure each cluster actually experiences: the share of its
    /// contacts made in treated clusters.
    pub fn true_exposures(&self) -> ExposureTable {
        let rows = self
            .clusters
            .iter()
            .zip(&self.mixing)
            .map(|(c, row)| {
                let (mut trt, mut ctr) = (0.0, 0.0);
                for (k, &w) in row.iter().enumerate() {
                    match self.clusters[k].arm {
                        Arm::Treated => trt += w,
                        Arm::Control => ctr += w,
                    }
                }
                ExposureRow {
                    cluster: c.name.clone(),
                    arm: c.arm,
                    sum_t: trt,
                    sum_d: trt + ctr,
                    visitor_term: 0.0,
                    exposure: trt / (trt + ctr),
                    variance: 0.0,
                }
            })
            .collect();
        ExposureTable::from_rows(rows)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let p: SimParams = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

/// Each cluster spends `rho` of its contacts spread evenly over the
/// opposite arm's clusters and the rest evenly over its own arm, itself
/// included.
pub fn build_mixing_matrix(arms: &[Arm], rho: f64) -> Result<Vec<Vec<f64>>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("contamination fraction {rho} outside [0, 1]")));
    }
    let n_trt = arms.iter().filter(|a| **a == Arm::Treated).count();
    let count = |arm: Arm| if arm == Arm::Treated { n_trt } else { arms.len() - n_trt };
    arms.iter()
        .map(|&own| {
            let same = count(own) as f64;
            let other = count(own.opposite()) as f64;
            if other == 0.0 && rho > 0.0 {
                return Err(Error::Config(format!(
                    "contamination {rho} requested but there is no {} cluster",
                    own.opposite()
                )));
            }
            Ok(arms
                .iter()
                .map(|&a| if a == own { (1.0 - rho) / same } else { rho / other })
                .collect())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Compartments {
    pub s: f64,
    pub y: f64,
    pub r: f64,
}

impl Compartments {
    pub fn total(&self) -> f64 {
        self.s + self.y + self.r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSimulation {
    pub params: SimParams,
    /// Grid 0, dt, 2dt, ..., horizon (the last step may be shorter).
    pub times: Vec<f64>,
    /// states[i][j]: cluster j at times[i].
    pub states: Vec<Vec<Compartments>>,
    /// Per cluster, infection times of the initially susceptible
    /// (stochastic mode only).
    pub infection_times: Option<Vec<Vec<f64>>>,
    /// β at each grid time.
    pub beta: Vec<f64>,
}

fn time_grid(horizon: f64, dt: f64) -> Vec<f64> {
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let mut t: Vec<f64> = (0..steps).map(|i| i as f64 * dt).collect();
    t.push(horizon);
    t
}

fn pressures(p: &SimParams, state: &[Compartments]) -> Vec<f64> {
    p.clusters
        .iter()
        .zip(state)
        .map(|(c, x)| p.kappa * p.eta(c.arm) * x.y / c.size as f64)
        .collect()
}

fn forces(p: &SimParams, nu: &[f64]) -> Vec<f64> {
    p.mixing
        .iter()
        .map(|row| row.iter().zip(nu).map(|(m, v)| m * v).sum())
        .collect()
}

/// β(t) from the cluster pressures at one instant.
pub fn arm_contrast(p: &SimParams, nu: &[f64]) -> f64 {
    let mut acc = [(0.0, 0.0); 2];
    for (c, v) in p.clusters.iter().zip(nu) {
        let w = match p.weighting {
            ArmWeighting::Cluster => 1.0,
            ArmWeighting::Population => c.size as f64,
        };
        let slot = &mut acc[(c.arm == Arm::Treated) as usize];
        slot.0 += w * v;
        slot.1 += w;
    }
    let mean = |(s, w): (f64, f64)| if w > 0.0 { s / w } else { 0.0 };
    mean(acc[1]) - mean(acc[0])
}

fn initial_state(p: &SimParams) -> Vec<Compartments> {
    p.clusters
        .iter()
        .map(|c| Compartments {
            s: (c.size - c.initial_infected - c.initial_recovered) as f64,
            y: c.initial_infected as f64,
            r: c.initial_recovered as f64,
        })
        .collect()
}

fn derivative(p: &SimParams, x: &[Compartments]) -> Vec<Compartments> {
    let lambda = forces(p, &pressures(p, x));
    x.iter()
        .zip(&lambda)
        .map(|(c, l)| {
            let inf = l * c.s;
            let rec = p.gamma * c.y;
            Compartments {
                s: -inf,
                y: inf - rec,
                r: rec,
            }
        })
        .collect()
}

fn axpy(x: &[Compartments], h: f64, d: &[Compartments]) -> Vec<Compartments> {
    x.iter()
        .zip(d)
        .map(|(a, b)| Compartments {
            s: a.s + h * b.s,
            y: a.y + h * b.y,
            r: a.r + h * b.r,
        })
        .collect()
}

fn rk4_step(p: &SimParams, x: &[Compartments], h: f64) -> Vec<Compartments> {
    let k1 = derivative(p, x);
    let k2 = derivative(p, &axpy(x, h / 2.0, &k1));
    let k3 = derivative(p, &axpy(x, h / 2.0, &k2));
    let k4 = derivative(p, &axpy(x, h, &k3));
    x.iter()
        .enumerate()
        .map(|(j, a)| {
            let comb = |f: fn(&Compartments) -> f64| {
                f(&k1[j]) + 2.0 * f(&k2[j]) + 2.0 * f(&k3[j]) + f(&k4[j])
            };
            let ds = h / 6.0 * comb(|c| c.s);
            let dr = h / 6.0 * comb(|c| c.r);
            // y closes the balance so the total is kept to rounding
            let s = a.s + ds;
            let r = a.r + dr;
            Compartments { s, y: a.total() - s - r, r }
        })
        .collect()
}

/// Runs the epidemic over the grid `0, dt, ..., horizon`.
pub fn simulate(params: &SimParams) -> Result<TrialSimulation> {
    params.validate()?;
    let times = time_grid(params.horizon, params.dt);
    let mut state = initial_state(params);
    let mut states = Vec::with_capacity(times.len());
    let mut beta = Vec::with_capacity(times.len());
    let stochastic = params.mode == SimMode::StochasticDiscrete;
    let mut rngs: Vec<ChaCha8Rng> = params
        .clusters
        .iter()
        .map(|c| {
            let mut r = ChaCha8Rng::seed_from_u64(params.seed);
            r.set_stream(c.stream);
            r
        })
        .collect();
    let mut infections: Vec<Vec<f64>> = vec![Vec::new(); params.clusters.len()];

    for (i, &t) in times.iter().enumerate() {
        let nu = pressures(params, &state);
        beta.push(arm_contrast(params, &nu));
        states.push(state.clone());
        let Some(&next) = times.get(i + 1) else { break };
        let h = next - t;
        state = if stochastic {
            let lambda = forces(params, &nu);
            let p_rec = 1.0 - (-params.gamma * h).exp();
            state
                .iter()
                .zip(&lambda)
                .zip(rngs.iter_mut().zip(infections.iter_mut()))
                .map(|((x, &l), (rng, inf))| {
                    let p_inf = 1.0 - (-l * h).exp();
                    let new_inf = draw_binomial(rng, x.s, p_inf);
                    let new_rec = draw_binomial(rng, x.y, p_rec);
                    for _ in 0..new_inf as u64 {
                        inf.push(t + h * rng.random::<f64>());
                    }
                    Compartments {
                        s: x.s - new_inf,
                        y: x.y + new_inf - new_rec,
                        r: x.r + new_rec,
                    }
                })
                .collect()
        } else {
            rk4_step(params, &state, h)
        };
    }
    for inf in infections.iter_mut() {
        inf.sort_by(f64::total_cmp);
    }
    Ok(TrialSimulation {
        params: params.clone(),
        times,
        states,
        infection_times: stochastic.then_some(infections),
        beta,
    })
}

fn draw_binomial<R: Rng + ?Sized>(rng: &mut R, n: f64, p: f64) -> f64 {
    if n <= 0.0 || p <= 0.0 {
        return 0.0;
    }
    Binomial::new(n as u64, p.min(1.0))
        .expect("probability in [0, 1]")
        .sample(rng) as f64
}

impl TrialSimulation {
    /// ∫₀ᴴ β(t) dt by the trapezoid rule on the simulation grid.
    pub fn true_estimand(&self, horizon: f64) -> Result<f64> {
        let end = *self.times.last().expect("grid is never empty");
        if !(horizon >= 0.0) || horizon > end + 1e-9 {
            return Err(Error::HorizonOutOfRange {
                requested: horizon,
                available: end,
            });
        }
        let mut total = 0.0;
        for i in 1..self.times.len() {
            let (t0, t1) = (self.times[i - 1], self.times[i]);
            if t0 >= horizon {
                break;
            }
            let (b0, b1) = (self.beta[i - 1], self.beta[i]);
            if t1 <= horizon {
                total += 0.5 * (b0 + b1) * (t1 - t0);
            } else {
                let bh = b0 + (b1 - b0) * (horizon - t0) / (t1 - t0);
                total += 0.5 * (b0 + bh) * (horizon - t0);
            }
        }
        Ok(total)
    }

    /// Running ∫β at every grid time.
    pub fn cumulative_beta(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.times.len());
        let mut acc = 0.0;
        for i in 0..self.times.len() {
            if i > 0 {
                acc += 0.5 * (self.beta[i - 1] + self.beta[i]) * (self.times[i] - self.times[i - 1]);
            }
            out.push(acc);
        }
        out
    }

    /// One row per initially susceptible person: an event at the infection
    /// time, or censoring at the horizon.
    pub fn observations(&self) -> Result<Vec<SurvivalObservation>> {
        let inf = self
            .infection_times
            .as_ref()
            .ok_or_else(|| Error::Config("individual infection times need stochastic mode".into()))?;
        let mut out = Vec::new();
        for (c, times) in self.params.clusters.iter().zip(inf) {
            let cohort = (c.size - c.initial_infected - c.initial_recovered) as usize;
            for i in 0..cohort {
                let id = format!("{}-{:05}", c.name, i + 1);
                out.push(match times.get(i) {
                    Some(&t) => SurvivalObservation::new(id, c.name.clone(), t, true),
                    None => SurvivalObservation::new(id, c.name.clone(), self.params.horizon, false),
                });
            }
        }
        Ok(out)
    }

    pub fn write_trajectories_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        wtr.write_record(["time", "cluster", "arm", "S", "Y", "R"])
            .map_err(|e| Error::csv(path, e))?;
        for (t, row) in self.times.iter().zip(&self.states) {
            for (c, x) in self.params.clusters.iter().zip(row) {
                wtr.write_record([
                    t.to_string(),
                    c.name.to_string(),
                    c.arm.to_string(),
                    x.s.to_string(),
                    x.y.to_string(),
                    x.r.to_string(),
                ])
                .map_err(|e| Error::csv(path, e))?;
            }
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_truth_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        wtr.write_record(["time", "beta", "cum_beta"])
            .map_err(|e| Error::csv(path, e))?;
        for ((t, b), cb) in self.times.iter().zip(&self.beta).zip(self.cumulative_beta()) {
            wtr.write_record([t.to_string(), b.to_string(), cb.to_string()])
                .map_err(|e| Error::csv(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }
}

/// Desk-scale trial: equal clusters alternating control/treated with
/// uniform within- and between-arm mixing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub n_clusters: usize,
    pub cluster_size: u64,
    pub rho: f64,
    pub kappa: f64,
    pub eta_trt: f64,
    pub eta_ctr: f64,
    pub gamma: f64,
    pub initial_infected: u64,
    pub horizon: f64,
    pub dt: f64,
    pub mode: SimMode,
    pub weighting: ArmWeighting,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            n_clusters: 20,
            cluster_size: 500,
            rho: 0.15,
            kappa: 10.0,
            eta_trt: 0.0015,
            eta_ctr: 0.003,
            gamma: 0.2,
            initial_infected: 5,
            horizon: 180.0,
            dt: 0.25,
            mode: SimMode::StochasticDiscrete,
            weighting: ArmWeighting::Cluster,
            replicates: 500,
            seed: 20240101,
        }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn arms(&self) -> Vec<Arm> {
        (0..self.n_clusters)
            .map(|i| if i % 2 == 0 { Arm::Control } else { Arm::Treated })
            .collect()
    }

    pub fn params(&self, seed: u64) -> Result<SimParams> {
        let arms = self.arms();
        let mixing = build_mixing_matrix(&arms, self.rho)?;
        let width = self.n_clusters.to_string().len().max(2);
        let clusters = arms
            .iter()
            .enumerate()
            .map(|(i, &arm)| ClusterSpec {
                name: ClusterId(format!("c{:0width$}", i + 1)),
                size: self.cluster_size,
                arm,
                initial_infected: self.initial_infected,
                initial_recovered: 0,
                stream: i as u64,
            })
            .collect();
        let p = SimParams {
            clusters,
            kappa: self.kappa,
            eta_trt: self.eta_trt,
            eta_ctr: self.eta_ctr,
            mixing,
            gamma: self.gamma,
            horizon: self.horizon,
            mode: self.mode,
            dt: self.dt,
            seed,
            weighting: self.weighting,
        };
        p.validate()?;
        Ok(p)
    }
}

/// A simulation config file holds either a generated scenario or fully
/// explicit parameters (recognised by a `clusters` table).
pub fn load_sim_config(path: impl AsRef<Path>) -> Result<SimParams> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if value.contains_key("clusters") {
        SimParams::from_toml_str(&text)
    } else {
        let s = Scenario::from_toml_str(&text)?;
        s.params(s.seed)
    }
}

#[cfg(test)]
mod tests;
