//! Ordinary least squares with intercept via Householder QR, falling back to
//! the SVD minimum-norm solution when the design is rank deficient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Design;
use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub rank_deficient: bool,
}

pub fn fit_linear(x: &Design, y: &[f64]) -> Result<LinearModel> {
    if x.rows != y.len() {
        return Err(Error::InvalidInput(format!("{} rows but {} targets", x.rows, y.len())));
    }
    let k = x.cols + 1;
    if x.rows < k {
        return Err(Error::InsufficientHistory(format!("{} rows for {} coefficients", x.rows, k)));
    }
    if x.data.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in regression data".into()));
    }
    let a = DMatrix::from_fn(x.rows, k, |i, j| if j == 0 { 1.0 } else { x.data[i * x.cols + j - 1] });
    let b = DVector::from_column_slice(y);

    let qr = a.clone().qr();
    let r = qr.r();
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rank_deficient = (0..k).any(|i| r[(i, i)].abs() <= RANK_TOL * diag_max.max(1.0));

    let beta = if rank_deficient {
        log::warn!("rank-deficient design ({} columns); using the minimum-norm solution", k);
        let svd = a.svd(true, true);
        let eps = RANK_TOL * svd.singular_values.max().max(1.0);
        svd.solve(&b, eps).map_err(|e| Error::InvalidInput(e.to_string()))?
    } else {
        let qtb = qr.q().transpose() * &b;
        r.solve_upper_triangular(&qtb)
            .ok_or_else(|| Error::InvalidInput("singular triangular factor".into()))?
    };
    Ok(LinearModel { intercept: beta[0], coef: beta.iter().skip(1).copied().collect(), rank_deficient })
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(row).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn predict(&self, x: &Design) -> Vec<f64> {
        (0..x.rows).map(|i| self.predict_row(x.row(i))).collect()
    }
}
