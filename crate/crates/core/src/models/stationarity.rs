//! KPSS and augmented Dickey-Fuller tests at the 5% level, and the
//! differencing order they jointly imply.

use nalgebra::{DMatrix, DVector};

pub const MAX_DIFFERENCES: usize = 4;
pub const KPSS_CRITICAL_5PCT: f64 = 0.463;

/// The ⌊12 (n/100)^{1/4}⌋ lag rule.
pub fn lag_order(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

pub fn difference(y: &[f64]) -> Vec<f64> {
    y.windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn difference_n(y: &[f64], d: usize) -> Vec<f64> {
    (0..d).fold(y.to_vec(), |acc, _| difference(&acc))
}

/// Least squares `b ≈ a·β`: coefficients, residual sum of squares and the
/// diagonal of (aᵀa)⁻¹. `None` when `a` is rank deficient.
pub(crate) fn least_squares(a: DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, f64, DVector<f64>)> {
    let k = a.ncols();
    if a.nrows() <= k {
        return None;
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let scale = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= 1e-10 * scale.max(1e-300)) {
        return None;
    }
    let beta = r.solve_upper_triangular(&(qr.q().transpose() * b))?;
    let resid = b - &a * &beta;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(k, k))?;
    let diag = DVector::from_fn(k, |i, _| r_inv.row(i).norm_squared());
    Some((beta, resid.norm_squared(), diag))
}

/// KPSS level-stationarity statistic with Bartlett-weighted long-run variance.
pub fn kpss_statistic(y: &[f64], lags: usize) -> Option<f64> {
    let n = y.len();
    if n < 3 {
        return None;
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let e: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let autocov = |s: usize| e[s..].iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let mut lrv = autocov(0);
    for s in 1..=lags.min(n - 1) {
        lrv += 2.0 * (1.0 - s as f64 / (lags as f64 + 1.0)) * autocov(s);
    }
    if !(lrv > 0.0) {
        return None;
    }
    let mut partial = 0.0;
    let eta: f64 = e
        .iter()
        .map(|v| {
            partial += v;
            partial * partial
        })
        .sum();
    Some(eta / (n as f64 * n as f64 * lrv))
}

/// True unless KPSS rejects level stationarity at 5%. Degenerate (constant)
/// series count as stationary.
pub fn kpss_stationary(y: &[f64]) -> bool {
    kpss_statistic(y, lag_order(y.len())).is_none_or(|s| s <= KPSS_CRITICAL_5PCT)
}

/// MacKinnon's 5% critical value for the constant-only ADF regression.
pub fn adf_critical_5pct(n: usize) -> f64 {
    let n = n as f64;
    -2.8621 - 2.738 / n - 8.36 / (n * n)
}

/// ADF t-statistic on y_{t-1} in Δy_t = α + β y_{t-1} + Σγ_i Δy_{t-i} + e_t,
/// with its effective sample size.
pub fn adf_statistic(y: &[f64], lags: usize) -> Option<(f64, usize)> {
    let dy = difference(y);
    if dy.len() <= lags {
        return None;
    }
    let rows = dy.len() - lags;
    let cols = 2 + lags;
    if rows <= cols + 1 {
        return None;
    }
    let a = DMatrix::from_fn(rows, cols, |r, c| {
        let t = r + lags;
        match c {
            0 => 1.0,
            1 => y[t],
            _ => dy[t - (c - 1)],
        }
    });
    let b = DVector::from_fn(rows, |r, _| dy[r + lags]);
    let (beta, rss, diag) = least_squares(a, &b)?;
    let sigma2 = rss / (rows - cols) as f64;
    if !(sigma2 > 0.0) {
        return None;
    }
    Some((beta[1] / (sigma2 * diag[1]).sqrt(), rows))
}

/// True when ADF rejects a unit root at 5%; degenerate regressions count as
/// rejection, matching the KPSS convention for constant series.
pub fn adf_rejects_unit_root(y: &[f64]) -> bool {
    let mut lags = lag_order(y.len());
    loop {
        if let Some((t, n)) = adf_statistic(y, lags) {
            return t < adf_critical_5pct(n);
        }
        if lags == 0 {
            return true;
        }
        lags /= 2;
    }
}

/// Differencing order: the larger of the KPSS and ADF choices, each the
/// fewest differences (up to four) at which its test passes.
pub fn select_differences(y: &[f64]) -> usize {
    let first = |pass: &dyn Fn(&[f64]) -> bool| {
        (0..=MAX_DIFFERENCES).find(|&d| pass(&difference_n(y, d))).unwrap_or(MAX_DIFFERENCES)
    };
    first(&kpss_stationary).max(first(&adf_rejects_unit_root))
}
