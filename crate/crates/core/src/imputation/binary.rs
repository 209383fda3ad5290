//! Binary-outcome regression for the visited indicator: log link by
//! constrained Fisher scoring, with a logit fallback.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::design::{weighted_normal_solve, Design};
use crate::error::{Error, Result};

/// Upper bound on fitted log-link probabilities.
pub const MAX_PROBABILITY: f64 = 1.0 - 1e-8;
const TOLERANCE: f64 = 1e-8;
const MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryLink {
    Log,
    Logit,
    /// Every training outcome was identical.
    Constant,
}

impl BinaryLink {
    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLink::Log => "log",
            BinaryLink::Logit => "logit",
            BinaryLink::Constant => "constant",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BinaryFit {
    pub design: Design,
    pub coef: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub link: BinaryLink,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Why the log link was abandoned, if it was.
    pub fallback_reason: Option<String>,
    constant: f64,
}

struct Fitted {
    coef: DVector<f64>,
    cov: DMatrix<f64>,
    ll: f64,
    iterations: usize,
}

fn bernoulli_ll(y: &[f64], p: &DVector<f64>) -> f64 {
    y.iter()
        .zip(p.iter())
        .map(|(&y, &p)| if y > 0.5 { p.ln() } else { (1.0 - p).ln() })
        .sum()
}

fn fit_log(x: &DMatrix<f64>, y: &[f64], ybar: f64) -> std::result::Result<Fitted, String> {
    let max_eta = MAX_PROBABILITY.ln();
    let mut coef = DVector::zeros(x.ncols());
    coef[0] = ybar.min(MAX_PROBABILITY).ln() - 1e-6;
    let mut mu = (x * &coef).map(f64::exp);
    let mut ll = bernoulli_ll(y, &mu);
    for iter in 1..=MAX_ITER {
        let w = mu.map(|m| m / (1.0 - m));
        let resid = DVector::from_iterator(
            y.len(),
            y.iter().zip(mu.iter()).map(|(&y, &m)| (y - m) / (1.0 - m)),
        );
        let score = x.transpose() * resid;
        let (step, cov) =
            weighted_normal_solve(x, &w, &score).ok_or("singular information matrix")?;
        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..60 {
            let cand = &coef + &step * scale;
            let cand_eta = x * &cand;
            if cand_eta.max() <= max_eta {
                let cand_mu = cand_eta.map(f64::exp);
                let cand_ll = bernoulli_ll(y, &cand_mu);
                if cand_ll.is_finite() && cand_ll >= ll - 1e-12 {
                    accepted = Some((cand, cand_mu, cand_ll));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((c, m, new_ll)) = accepted else {
            // No feasible ascent step: we sit on the constraint boundary.
            return Ok(Fitted { coef, cov, ll, iterations: iter });
        };
        let delta = new_ll - ll;
        coef = c;
        mu = m;
        ll = new_ll;
        if delta.abs() < TOLERANCE {
            let w = mu.map(|m| m / (1.0 - m));
            let zero = DVector::zeros(x.ncols());
            let (_, cov) = weighted_normal_solve(x, &w, &zero).ok_or("singular information matrix")?;
            return Ok(Fitted { coef, cov, ll, iterations: iter });
        }
    }
    Err(format!("log-binomial fit did not converge in {MAX_ITER} iterations"))
}

fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

fn fit_logit(x: &DMatrix<f64>, y: &[f64], ybar: f64) -> Result<(Fitted, bool)> {
    let mut coef = DVector::zeros(x.ncols());
    coef[0] = (ybar / (1.0 - ybar)).ln();
    let clamp = |p: f64| p.clamp(1e-15, 1.0 - 1e-15);
    let mut mu = (x * &coef).map(|e| clamp(logistic(e)));
    let mut ll = bernoulli_ll(y, &mu);
    let mut cov = DMatrix::identity(x.ncols(), x.ncols());
    for iter in 1..=MAX_ITER {
        let w = mu.map(|m| m * (1.0 - m));
        let resid = DVector::from_iterator(y.len(), y.iter().zip(mu.iter()).map(|(&y, &m)| y - m));
        let score = x.transpose() * resid;
        let (step, c) = weighted_normal_solve(x, &w, &score)
            .ok_or_else(|| Error::Fit("logistic fallback: singular information matrix".into()))?;
        cov = c;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &coef + &step * scale;
            let cand_mu = (x * &cand).map(|e| clamp(logistic(e)));
            let cand_ll = bernoulli_ll(y, &cand_mu);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 {
                accepted = Some((cand, cand_mu, cand_ll));
                break;
            }
            scale *= 0.5;
        }
        let Some((c, m, new_ll)) = accepted else {
            return Ok((Fitted { coef, cov, ll, iterations: iter }, true));
        };
        let delta = new_ll - ll;
        coef = c;
        mu = m;
        ll = new_ll;
        if delta.abs() < TOLERANCE {
            return Ok((Fitted { coef, cov, ll, iterations: iter }, true));
        }
    }
    Ok((Fitted { coef, cov, ll, iterations: MAX_ITER }, false))
}

impl BinaryFit {
    /// Fits P(y = 1) on categorical predictors. The log link is tried first;
    /// if it cannot be fitted the logit link is used and the reason recorded.
    pub fn fit(rows: &[Vec<String>], y: &[bool]) -> Result<BinaryFit> {
        if rows.is_empty() {
            return Err(Error::Fit("no complete cases for binary model".into()));
        }
        let design = Design::from_rows(rows);
        let yf: Vec<f64> = y.iter().map(|&b| f64::from(u8::from(b))).collect();
        let ybar = yf.iter().sum::<f64>() / yf.len() as f64;
        let p = design.columns();
        if ybar == 0.0 || ybar == 1.0 {
            return Ok(BinaryFit {
                design,
                coef: DVector::zeros(p),
                cov: DMatrix::zeros(p, p),
                link: BinaryLink::Constant,
                converged: true,
                iterations: 0,
                log_likelihood: 0.0,
                fallback_reason: None,
                constant: ybar,
            });
        }
        let x = design.matrix(rows);
        match fit_log(&x, &yf, ybar) {
            Ok(f) => Ok(BinaryFit {
                design,
                coef: f.coef,
                cov: f.cov,
                link: BinaryLink::Log,
                converged: true,
                iterations: f.iterations,
                log_likelihood: f.ll,
                fallback_reason: None,
                constant: ybar,
            }),
            Err(reason) => {
                let (f, converged) = fit_logit(&x, &yf, ybar)?;
                Ok(BinaryFit {
                    design,
                    coef: f.coef,
                    cov: f.cov,
                    link: BinaryLink::Logit,
                    converged,
                    iterations: f.iterations,
                    log_likelihood: f.ll,
                    fallback_reason: Some(reason),
                    constant: ybar,
                })
            }
        }
    }

    pub fn predict(&self, row: &[String]) -> f64 {
        let eta = || self.design.encode(row).dot(&self.coef);
        match self.link {
            BinaryLink::Constant => self.constant,
            BinaryLink::Log => eta().exp().min(1.0),
            BinaryLink::Logit => logistic(eta()),
        }
    }

    /// A copy with coefficients drawn from their approximate sampling
    /// distribution N(coef, cov).
    pub fn perturbed<R: Rng + ?Sized>(&self, rng: &mut R) -> BinaryFit {
        let mut out = self.clone();
        if self.link == BinaryLink::Constant {
            return out;
        }
        if let Some(chol) = self.cov.clone().cholesky() {
            let z = DVector::from_iterator(self.coef.len(), (0..self.coef.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
            out.coef = &self.coef + chol.l() * z;
        }
        out
    }
}
