//! Yeo-Johnson power transforms fitted to Gaussianize training columns, then
//! applied with missing-fill and out-of-sample capping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_PRESENT: usize = 30;
pub const DEFAULT_CAP: f64 = 4.5;
const LAMBDA_RANGE: (f64, f64) = (-5.0, 5.0);
const LAMBDA_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub lambda: f64,
    pub mean: f64,
    pub sd: f64,
    pub cap: f64,
}

/// The Yeo-Johnson power transform; strictly increasing in `x` for every λ.
pub fn yeo_johnson(x: f64, lambda: f64) -> f64 {
    yeo_johnson_from_log(x >= 0.0, x.abs().ln_1p(), lambda)
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// `yeo_johnson` given `ln(1 + |x|)` precomputed.
fn yeo_johnson_from_log(positive: bool, log1p_abs: f64, lambda: f64) -> f64 {
    if positive {
        if lambda.abs() < 1e-12 {
            log1p_abs
        } else {
            (lambda * log1p_abs).exp_m1() / lambda
        }
    } else {
        let l2 = 2.0 - lambda;
        if l2.abs() < 1e-12 {
            -log1p_abs
        } else {
            -(l2 * log1p_abs).exp_m1() / l2
        }
    }
}

/// Profile log-likelihood of λ under a Gaussian model of the transformed data.
fn log_likelihood(logs: &[(bool, f64)], log_jacobian: f64, lambda: f64) -> f64 {
    let transformed: Vec<f64> = logs.iter().map(|&(pos, l)| yeo_johnson_from_log(pos, l, lambda)).collect();
    let (_, var) = mean_var(&transformed);
    if !(var > 0.0) || !var.is_finite() {
        return f64::NEG_INFINITY;
    }
    -0.5 * logs.len() as f64 * var.ln() + (lambda - 1.0) * log_jacobian
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Fits λ by maximum likelihood on the present values, then the mean and
/// population standard deviation of the transformed values.
pub fn fit_transform(train: &[Option<f64>]) -> Result<ColumnTransform> {
    let values: Vec<f64> = train.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    if values.len() < MIN_PRESENT {
        return Err(Error::InsufficientHistory(format!(
            "{} present values, need at least {MIN_PRESENT}",
            values.len()
        )));
    }
    let (_, raw_var) = mean_var(&values);
    if !(raw_var > 0.0) {
        return Err(Error::ZeroVariance("constant column".into()));
    }
    let logs: Vec<(bool, f64)> = values.iter().map(|&x| (x >= 0.0, x.abs().ln_1p())).collect();
    let log_jacobian: f64 = logs.iter().map(|&(pos, l)| if pos { l } else { -l }).sum();
    let lambda = golden_section_max(
        |l| log_likelihood(&logs, log_jacobian, l),
        LAMBDA_RANGE.0,
        LAMBDA_RANGE.1,
        LAMBDA_TOL,
    );
    let transformed: Vec<f64> = values.iter().map(|&x| yeo_johnson(x, lambda)).collect();
    let (mean, var) = mean_var(&transformed);
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::ZeroVariance(format!("transformed column at lambda {lambda}")));
    }
    Ok(ColumnTransform { lambda, mean, sd, cap: DEFAULT_CAP })
}

impl ColumnTransform {
    pub fn apply_one(&self, value: Option<f64>, is_test: bool) -> f64 {
        let Some(x) = value.filter(|v| v.is_finite()) else {
            return 0.0;
        };
        let z = (yeo_johnson(x, self.lambda) - self.mean) / self.sd;
        if is_test {
            z.clamp(-self.cap, self.cap)
        } else {
            z
        }
    }
}

/// Transforms and standardizes; missing becomes 0, and out-of-sample rows are
/// clamped to `±cap`.
pub fn apply(values: &[Option<f64>], t: &ColumnTransform, is_test: bool) -> Vec<f64> {
    values.iter().map(|&v| t.apply_one(v, is_test)).collect()
}
