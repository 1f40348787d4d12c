//! Lawson–Hanson active-set solver for `min ‖y − P·w‖²` subject to `w ≥ 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::Design;

const RANK_TOL: f64 = 1e-12;

/// Unconstrained least squares on the columns in `passive`.
fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> Result<Vec<f64>> {
    let sub = a.select_columns(passive.iter());
    let qr = sub.clone().qr();
    let r = qr.r();
    let k = passive.len();
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let full_rank = sub.nrows() >= k && (0..k).all(|i| r[(i, i)].abs() > RANK_TOL * diag_max.max(f64::MIN_POSITIVE));
    let z = if full_rank {
        let qtb = qr.q().transpose() * b;
        r.solve_upper_triangular(&qtb).ok_or_else(|| Error::InvalidInput("singular triangular factor".into()))?
    } else {
        let svd = sub.svd(true, true);
        let eps = RANK_TOL * svd.singular_values.max();
        svd.solve(b, eps).map_err(|e| Error::InvalidInput(e.to_string()))?
    };
    Ok(z.iter().copied().collect())
}

/// Nonnegative, zero-intercept least-squares weights for the columns of `p`.
pub fn fit_nnls(p: &Design, y: &[f64]) -> Result<Vec<f64>> {
    if p.rows == 0 || p.cols == 0 {
        return Err(Error::InvalidInput(format!("NNLS needs at least one row and column, got {}x{}", p.rows, p.cols)));
    }
    if p.rows != y.len() {
        return Err(Error::InvalidInput(format!("{} rows but {} targets", p.rows, y.len())));
    }
    if p.data.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in NNLS data".into()));
    }
    let n = p.cols;
    let a = DMatrix::from_row_slice(p.rows, n, &p.data);
    let b = DVector::from_column_slice(y);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())) * b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-13 * scale.max(f64::MIN_POSITIVE) * p.rows as f64;

    let mut w = vec![0.0; n];
    let mut passive = vec![false; n];
    // Negative gradient of ½‖y − Pw‖².
    let neg_grad = |w: &[f64]| -> DVector<f64> {
        let resid = &b - &a * DVector::from_column_slice(w);
        a.transpose() * resid
    };

    for _ in 0..3 * n + 10 {
        let g = neg_grad(&w);
        let Some(j) = (0..n).filter(|&j| !passive[j] && g[j] > tol).max_by(|&i, &k| g[i].total_cmp(&g[k])) else {
            break;
        };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let z = solve_passive(&a, &b, &idx)?;
            if z.iter().all(|&v| v > 0.0) {
                for (&i, &v) in idx.iter().zip(&z) {
                    w[i] = v;
                }
                break;
            }
            // Step toward z until the first passive weight hits zero.
            let mut alpha = f64::INFINITY;
            for (&i, &v) in idx.iter().zip(&z) {
                if v <= 0.0 {
                    alpha = alpha.min(w[i] / (w[i] - v));
                }
            }
            for (&i, &v) in idx.iter().zip(&z) {
                w[i] += alpha * (v - w[i]);
                if w[i] <= 1e-15 * (1.0 + v.abs()) {
                    w[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    Ok(w)
}

/// `‖y − P·w‖₂`.
pub fn residual_norm(p: &Design, y: &[f64], w: &[f64]) -> f64 {
    (0..p.rows)
        .map(|i| {
            let fit: f64 = p.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
            (y[i] - fit).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}
