//! Negative-binomial (NB2) regression with log link for contact counts.
//!
//! Mean coefficients are updated by iteratively reweighted least squares at
//! fixed dispersion, and the dispersion by a one-dimensional search on the
//! log scale, alternating until the log-likelihood settles.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use statrs::function::gamma::ln_gamma;

use super::design::{weighted_normal_solve, Design};
use crate::error::{Error, Result};

const TOLERANCE: f64 = 1e-8;
const MAX_ITER: usize = 200;
/// Search range for ln(theta); the upper end means no overdispersion.
const LN_THETA_RANGE: (f64, f64) = (-8.0, 16.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountFamily {
    NegativeBinomial,
    /// Dispersion ran off to infinity.
    Poisson,
    /// Fewer than two distinct observed counts.
    Constant,
}

impl CountFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            CountFamily::NegativeBinomial => "negative_binomial",
            CountFamily::Poisson => "poisson",
            CountFamily::Constant => "constant",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CountFit {
    pub design: Design,
    pub coef: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// NB2 size parameter: Var = mu + mu^2 / theta. Infinite for Poisson.
    pub theta: f64,
    pub family: CountFamily,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    constant: f64,
}

fn nb_ll(y: &[f64], mu: &DVector<f64>, theta: f64) -> f64 {
    if theta.is_infinite() {
        return y
            .iter()
            .zip(mu.iter())
            .map(|(&y, &m)| y * m.ln() - m - ln_gamma(y + 1.0))
            .sum();
    }
    let base = -ln_gamma(theta);
    y.iter()
        .zip(mu.iter())
        .map(|(&y, &m)| {
            ln_gamma(y + theta) + base - ln_gamma(y + 1.0)
                + theta * (theta / (theta + m)).ln()
                + if y > 0.0 { y * (m / (theta + m)).ln() } else { 0.0 }
        })
        .sum()
}

/// IRLS for the mean coefficients at fixed theta.
fn irls(
    x: &DMatrix<f64>,
    y: &[f64],
    coef: &mut DVector<f64>,
    theta: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let mut mu = (x * &*coef).map(f64::exp);
    let mut ll = nb_ll(y, &mu, theta);
    let mut cov = DMatrix::zeros(x.ncols(), x.ncols());
    for _ in 0..50 {
        let w = mu.map(|m| if theta.is_infinite() { m } else { m / (1.0 + m / theta) });
        // score for the log link: sum x (y - mu) w / mu
        let r = DVector::from_iterator(
            y.len(),
            y.iter().zip(mu.iter()).zip(w.iter()).map(|((&y, &m), &w)| (y - m) * w / m),
        );
        let score = x.transpose() * r;
        let (step, c) = weighted_normal_solve(x, &w, &score)
            .ok_or_else(|| Error::Fit("count model: singular information matrix".into()))?;
        cov = c;
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let cand = &*coef + &step * scale;
            let cand_mu = (x * &cand).map(f64::exp);
            let cand_ll = nb_ll(y, &cand_mu, theta);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 {
                let delta = cand_ll - ll;
                *coef = cand;
                mu = cand_mu;
                ll = cand_ll;
                improved = delta.abs() >= TOLERANCE * 1e-2;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((cov, ll))
}

/// Golden-section maximization of the log-likelihood over ln(theta).
fn best_ln_theta(y: &[f64], mu: &DVector<f64>) -> f64 {
    let f = |lt: f64| nb_ll(y, mu, lt.exp());
    let (mut a, mut b) = LN_THETA_RANGE;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-7 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

impl CountFit {
    pub fn fit(rows: &[Vec<String>], y: &[u32]) -> Result<CountFit> {
        if rows.is_empty() {
            return Err(Error::Fit("no observed counts for count model".into()));
        }
        let design = Design::from_rows(rows);
        let p = design.columns();
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let n = yf.len() as f64;
        let mean = yf.iter().sum::<f64>() / n;
        let mut distinct = y.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Ok(CountFit {
                design,
                coef: DVector::zeros(p),
                cov: DMatrix::zeros(p, p),
                theta: f64::INFINITY,
                family: CountFamily::Constant,
                converged: true,
                iterations: 0,
                log_likelihood: 0.0,
                constant: mean,
            });
        }
        let x = design.matrix(rows);
        let mut coef = DVector::zeros(p);
        coef[0] = mean.ln();

        // Poisson start, then alternate.
        let (mut cov, mut ll) = irls(&x, &yf, &mut coef, f64::INFINITY)?;
        let mut theta = f64::INFINITY;
        let mut converged = false;
        let mut iterations = 0;
        for iter in 1..=MAX_ITER {
            iterations = iter;
            let mu = (&x * &coef).map(f64::exp);
            let lt = best_ln_theta(&yf, &mu);
            theta = if lt >= LN_THETA_RANGE.1 - 1e-3 { f64::INFINITY } else { lt.exp() };
            let (c, new_ll) = irls(&x, &yf, &mut coef, theta)?;
            cov = c;
            let delta = new_ll - ll;
            ll = new_ll;
            if delta.abs() < TOLERANCE {
                converged = true;
                break;
            }
        }
        let family = if theta.is_infinite() {
            CountFamily::Poisson
        } else {
            CountFamily::NegativeBinomial
        };
        Ok(CountFit {
            design,
            coef,
            cov,
            theta,
            family,
            converged,
            iterations,
            log_likelihood: ll,
            constant: mean,
        })
    }

    pub fn mean(&self, row: &[String]) -> f64 {
        match self.family {
            CountFamily::Constant => self.constant,
            _ => self.design.encode(row).dot(&self.coef).exp(),
        }
    }

    /// Draws a count from the fitted conditional distribution.
    pub fn sample<R: Rng + ?Sized>(&self, row: &[String], rng: &mut R) -> u32 {
        let mu = self.mean(row);
        let lambda = match self.family {
            CountFamily::Constant => return mu.round() as u32,
            CountFamily::Poisson => mu,
            CountFamily::NegativeBinomial => Gamma::new(self.theta, mu / self.theta)
                .map(|g| g.sample(rng))
                .unwrap_or(mu),
        };
        if !(lambda > 0.0) {
            return 0;
        }
        Poisson::new(lambda)
            .map(|p| p.sample(rng))
            .unwrap_or(lambda)
            .min(f64::from(u32::MAX)) as u32
    }

    /// A copy with mean coefficients drawn from N(coef, cov).
    pub fn perturbed<R: Rng + ?Sized>(&self, rng: &mut R) -> CountFit {
        let mut out = self.clone();
        if self.family == CountFamily::Constant {
            return out;
        }
        if let Some(chol) = self.cov.clone().cholesky() {
            let z = DVector::from_iterator(self.coef.len(), (0..self.coef.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
            out.coef = &self.coef + chol.l() * z;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn nb_draw(rng: &mut ChaCha8Rng, mu: f64, theta: f64) -> u32 {
        let lambda = Gamma::new(theta, mu / theta).unwrap().sample(rng);
        Poisson::new(lambda).unwrap().sample(rng) as u32
    }

    #[test]
    fn intercept_only_mean_is_sample_mean() {
        let y = [0u32, 1, 1, 2, 3, 5, 8, 13];
        let rows = vec![row(&["x"]); y.len()];
        let fit = CountFit::fit(&rows, &y).unwrap();
        let mean = y.iter().sum::<u32>() as f64 / y.len() as f64;
        assert!((fit.mean(&row(&["x"])) - mean).abs() < 1e-6);
        assert_eq!(fit.family, CountFamily::NegativeBinomial);
    }

    #[test]
    fn constant_counts_impute_the_constant() {
        let rows = vec![row(&["x"]); 6];
        let fit = CountFit::fit(&rows, &[4; 6]).unwrap();
        assert_eq!(fit.family, CountFamily::Constant);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..50).all(|_| fit.sample(&row(&["x"]), &mut rng) == 4));
    }

    #[test]
    fn equidispersed_counts_degrade_to_poisson() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y: Vec<u32> = (0..4000).map(|_| Poisson::new(3.0).unwrap().sample(&mut rng) as u32).collect();
        let rows = vec![row(&["x"]); y.len()];
        let fit = CountFit::fit(&rows, &y).unwrap();
        assert!(fit.theta > 50.0, "theta {}", fit.theta);
    }

    #[test]
    fn recovers_negative_binomial_regression() {
        // log mu = ln 2 + 0.7 [a] - 0.4 [b], theta = 1.5; 50,000 records.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let theta = 1.5;
        let beta = [2f64.ln(), 0.7, -0.4];
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..50_000 {
            let a: bool = rng.random();
            let b: bool = rng.random();
            let eta = beta[0] + if a { beta[1] } else { 0.0 } + if b { beta[2] } else { 0.0 };
            rows.push(row(&[if a { "1" } else { "0" }, if b { "1" } else { "0" }]));
            y.push(nb_draw(&mut rng, eta.exp(), theta));
        }
        let fit = CountFit::fit(&rows, &y).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.family, CountFamily::NegativeBinomial);
        for (j, &b) in beta.iter().enumerate() {
            let se = fit.cov[(j, j)].sqrt();
            assert!((fit.coef[j] - b).abs() < 3.0 * se, "coef {j}: {} vs {b} (se {se})", fit.coef[j]);
        }
        assert!((fit.theta - theta).abs() < 0.15, "theta {}", fit.theta);
    }
}
