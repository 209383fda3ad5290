//! Dummy-coded design matrices for models whose predictors are all
//! categorical.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

/// Intercept plus reference-coded indicator columns. The first level of each
/// factor (in sorted order) is the reference; levels unseen at fit time map
/// to the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    levels: Vec<Vec<String>>,
}

impl Design {
    pub fn from_rows(rows: &[Vec<String>]) -> Self {
        let factors = rows.first().map_or(0, Vec::len);
        let levels = (0..factors)
            .map(|f| {
                rows.iter()
                    .map(|r| r[f].clone())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect()
            })
            .collect();
        Design { levels }
    }

    pub fn columns(&self) -> usize {
        1 + self.levels.iter().map(|l| l.len().saturating_sub(1)).sum::<usize>()
    }

    pub fn encode_into(&self, row: &[String], out: &mut [f64]) {
        out.fill(0.0);
        out[0] = 1.0;
        let mut offset = 1;
        for (levels, value) in self.levels.iter().zip(row) {
            if let Ok(pos) = levels.binary_search(value) {
                if pos > 0 {
                    out[offset + pos - 1] = 1.0;
                }
            }
            offset += levels.len().saturating_sub(1);
        }
    }

    pub fn encode(&self, row: &[String]) -> DVector<f64> {
        let mut v = DVector::zeros(self.columns());
        self.encode_into(row, v.as_mut_slice());
        v
    }

    pub fn matrix(&self, rows: &[Vec<String>]) -> DMatrix<f64> {
        let p = self.columns();
        let mut x = DMatrix::zeros(rows.len(), p);
        let mut buf = vec![0.0; p];
        for (i, r) in rows.iter().enumerate() {
            self.encode_into(r, &mut buf);
            for (j, v) in buf.iter().enumerate() {
                x[(i, j)] = *v;
            }
        }
        x
    }
}

/// Solves (XᵀWX) b = rhs, adding a vanishing ridge if the system is singular
/// (aliased dummy columns). Returns the solution and the inverse.
pub(crate) fn weighted_normal_solve(
    x: &DMatrix<f64>,
    w: &DVector<f64>,
    rhs: &DVector<f64>,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let p = x.ncols();
    let mut info = DMatrix::<f64>::zeros(p, p);
    for (i, row) in x.row_iter().enumerate() {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        for a in 0..p {
            let xa = row[a];
            if xa == 0.0 {
                continue;
            }
            for b in a..p {
                info[(a, b)] += wi * xa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(a, b)] = info[(b, a)];
        }
    }
    let scale = (0..p).map(|i| info[(i, i)]).fold(0.0f64, f64::max).max(1.0);
    for ridge in [0.0, 1e-10, 1e-8, 1e-6] {
        let mut m = info.clone();
        for i in 0..p {
            m[(i, i)] += ridge * scale;
        }
        if let Some(chol) = m.cholesky() {
            let sol = chol.solve(rhs);
            if sol.iter().all(|v| v.is_finite()) {
                return Some((sol, chol.inverse()));
            }
        }
    }
    None
}
