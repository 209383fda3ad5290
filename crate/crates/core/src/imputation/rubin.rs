use serde::Serialize;

use crate::error::{Error, Result};

/// Estimate pooled across multiply imputed datasets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PooledEstimate {
    pub point: f64,
    pub within_var: f64,
    pub between_var: f64,
    pub total_var: f64,
    pub m: usize,
}

impl PooledEstimate {
    pub fn std_error(&self) -> f64 {
        self.total_var.sqrt()
    }
}

/// Rubin's combining rules: mean of the points, mean of the variances, sample
/// variance of the points, and T = W + (1 + 1/m) B.
pub fn rubin_combine(points: &[f64], variances: &[f64]) -> Result<PooledEstimate> {
    let m = points.len();
    if m != variances.len() {
        return Err(Error::Input(format!(
            "{m} point estimates but {} variances",
            variances.len()
        )));
    }
    if m < 2 {
        return Err(Error::Input(format!("need at least 2 imputations, got {m}")));
    }
    let mf = m as f64;
    let point = points.iter().sum::<f64>() / mf;
    let within_var = variances.iter().sum::<f64>() / mf;
    let between_var = points.iter().map(|p| (p - point).powi(2)).sum::<f64>() / (mf - 1.0);
    Ok(PooledEstimate {
        point,
        within_var,
        between_var,
        total_var: within_var + (1.0 + 1.0 / mf) * between_var,
        m,
    })
}
