//! ARIMA(p, d, q) by conditional sum of squares: differencing order from the
//! stationarity tests, (p, q) by AIC over a common effective sample.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::stationarity::{difference_n, least_squares, select_differences};
use crate::error::{Error, Result};

pub const MAX_P: usize = 4;
pub const MAX_Q: usize = 4;
pub const MIN_OBSERVATIONS: usize = 50;
/// Residuals are accumulated from this index of the differenced series for
/// every candidate, so all AIC values share one sample.
const START: usize = if MAX_P > MAX_Q { MAX_P } else { MAX_Q };
const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    /// Level of the differenced series; fitted only when d = 0.
    pub mean: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma2: f64,
    pub aic: f64,
}

struct Layout {
    p: usize,
    q: usize,
    with_mean: bool,
}

impl Layout {
    fn len(&self) -> usize {
        self.p + self.q + usize::from(self.with_mean)
    }

    fn unpack<'a>(&self, beta: &'a [f64]) -> (f64, &'a [f64], &'a [f64]) {
        let m = usize::from(self.with_mean);
        let mean = if self.with_mean { beta[0] } else { 0.0 };
        (mean, &beta[m..m + self.p], &beta[m + self.p..])
    }
}

/// Conditional residuals from `START` on (earlier residuals are zero).
fn residuals(w: &[f64], mean: f64, phi: &[f64], theta: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; w.len()];
    for t in START..w.len() {
        let mut v = w[t] - mean;
        for (i, ph) in phi.iter().enumerate() {
            v -= ph * (w[t - 1 - i] - mean);
        }
        for (j, th) in theta.iter().enumerate() {
            v -= th * e[t - 1 - j];
        }
        e[t] = v;
    }
    e
}

/// Residuals and their Jacobian with respect to (mean, φ, θ).
fn residuals_and_jacobian(w: &[f64], layout: &Layout, beta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let (mean, phi, theta) = layout.unpack(beta);
    let e = residuals(w, mean, phi, theta);
    let k = layout.len();
    let n = w.len();
    let m = usize::from(layout.with_mean);
    let mut jac = DMatrix::zeros(n, k);
    for t in START..n {
        for c in 0..k {
            let direct = if layout.with_mean && c == 0 {
                -1.0 + phi.iter().sum::<f64>()
            } else if c < m + layout.p {
                -(w[t - 1 - (c - m)] - mean)
            } else {
                -e[t - 1 - (c - m - layout.p)]
            };
            let mut v = direct;
            for (j, th) in theta.iter().enumerate() {
                v -= th * jac[(t - 1 - j, c)];
            }
            jac[(t, c)] = v;
        }
    }
    (e, jac.rows(START, n - START).into_owned())
}

fn sum_squares(e: &[f64]) -> f64 {
    e[START..].iter().map(|v| v * v).sum()
}

/// Hannan-Rissanen start: a long autoregression estimates the innovations,
/// then one regression on lagged values and lagged innovations.
fn initial_guess(w: &[f64], layout: &Layout) -> Vec<f64> {
    let mean = if layout.with_mean { w.iter().sum::<f64>() / w.len() as f64 } else { 0.0 };
    let x: Vec<f64> = w.iter().map(|v| v - mean).collect();
    let n = x.len();
    let mut out = Vec::with_capacity(layout.len());
    if layout.with_mean {
        out.push(mean);
    }
    if layout.p + layout.q == 0 {
        return out;
    }
    let long = (layout.p + layout.q).max(8).min(n / 4);
    let mut innovations = vec![0.0; n];
    if long > 0 {
        let a = DMatrix::from_fn(n - long, long, |r, c| x[r + long - 1 - c]);
        let b = DVector::from_fn(n - long, |r, _| x[r + long]);
        if let Some((coef, _, _)) = least_squares(a, &b) {
            for t in long..n {
                innovations[t] = x[t] - (0..long).map(|c| coef[c] * x[t - 1 - c]).sum::<f64>();
            }
        }
    }
    let first = long + layout.q;
    let k = layout.p + layout.q;
    let guess = (n > first + k + 1).then(|| {
        let a = DMatrix::from_fn(n - first, k, |r, c| {
            let t = r + first;
            if c < layout.p {
                x[t - 1 - c]
            } else {
                innovations[t - 1 - (c - layout.p)]
            }
        });
        let b = DVector::from_fn(n - first, |r, _| x[r + first]);
        least_squares(a, &b).map(|(coef, _, _)| coef)
    });
    let mut coef: Vec<f64> = guess.flatten().map_or_else(|| vec![0.0; k], |c| c.iter().copied().collect());
    for part in [0..layout.p, layout.p..k] {
        let total: f64 = coef[part.clone()].iter().map(|v| v.abs()).sum();
        if !(total < 0.95) {
            let shrink = if total.is_finite() { 0.9 / total } else { 0.0 };
            coef[part].iter_mut().for_each(|v| *v *= shrink);
        }
    }
    out.extend(coef);
    out
}

/// Levenberg-Marquardt refinement of the conditional sum of squares.
fn refine(w: &[f64], layout: &Layout, mut beta: Vec<f64>) -> Option<(Vec<f64>, f64)> {
    let k = layout.len();
    let (mut e, mut jac) = residuals_and_jacobian(w, layout, &beta);
    let mut ss = sum_squares(&e);
    if !ss.is_finite() {
        return None;
    }
    if k == 0 {
        return Some((beta, ss));
    }
    let mut damping = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        let r = DVector::from_column_slice(&e[START..]);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut improved = false;
        while damping < 1e10 {
            let mut lhs = jtj.clone();
            for i in 0..k {
                lhs[(i, i)] += damping * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = lhs.cholesky().map(|c| c.solve(&(-&jtr))) else {
                damping *= 10.0;
                continue;
            };
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
            let (te, tj) = residuals_and_jacobian(w, layout, &trial);
            let tss = sum_squares(&te);
            if tss.is_finite() && tss < ss {
                let converged = (ss - tss) <= 1e-12 * ss.max(1e-300);
                beta = trial;
                e = te;
                jac = tj;
                ss = tss;
                damping = (damping / 10.0).max(1e-12);
                improved = !converged;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Some((beta, ss))
}

fn fit_candidate(w: &[f64], order: ArimaOrder) -> Option<ArimaModel> {
    let layout = Layout { p: order.p, q: order.q, with_mean: order.d == 0 };
    let (beta, ss) = refine(w, &layout, initial_guess(w, &layout))?;
    let n = (w.len() - START) as f64;
    let sigma2 = ss / n;
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return None;
    }
    let k = layout.len() + 1;
    let aic = n * sigma2.ln() + 2.0 * k as f64;
    let (mean, phi, theta) = layout.unpack(&beta);
    aic.is_finite().then(|| ArimaModel {
        order,
        mean,
        phi: phi.to_vec(),
        theta: theta.to_vec(),
        sigma2,
        aic,
    })
}

/// Chooses d by the stationarity tests and (p, q) ∈ [0, 4]² by AIC, and
/// returns the fitted model. Falls back to (0, d, 0) when no candidate has a
/// finite likelihood.
pub fn select_arima_order(y: &[f64]) -> Result<ArimaModel> {
    if y.len() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientHistory(format!("{} observations, need {MIN_OBSERVATIONS}", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in series".into()));
    }
    let d = select_differences(y);
    let w = difference_n(y, d);
    if w.len() <= START + MAX_P + MAX_Q + 2 {
        return Err(Error::InsufficientHistory(format!("{} values after {d} differences", w.len())));
    }
    let mut best: Option<ArimaModel> = None;
    for p in 0..=MAX_P {
        for q in 0..=MAX_Q {
            if let Some(m) = fit_candidate(&w, ArimaOrder { p, d, q }) {
                if best.as_ref().is_none_or(|b| m.aic < b.aic) {
                    best = Some(m);
                }
            }
        }
    }
    Ok(best.unwrap_or_else(|| {
        log::warn!("no ARIMA candidate had a finite likelihood; using (0, {d}, 0)");
        let mean = if d == 0 { w.iter().sum::<f64>() / w.len() as f64 } else { 0.0 };
        ArimaModel { order: ArimaOrder { p: 0, d, q: 0 }, mean, phi: vec![], theta: vec![], sigma2: f64::NAN, aic: f64::NAN }
    }))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl ArimaModel {
    /// One-step-ahead forecast of the value following `history`.
    pub fn forecast_next(&self, history: &[f64]) -> f64 {
        let ArimaOrder { d, .. } = self.order;
        let w = difference_n(history, d);
        let n = w.len();
        let e = residuals(&w, self.mean, &self.phi, &self.theta);
        let mut wf = self.mean;
        for (i, ph) in self.phi.iter().enumerate() {
            if let Some(t) = n.checked_sub(1 + i) {
                wf += ph * (w[t] - self.mean);
            }
        }
        for (j, th) in self.theta.iter().enumerate() {
            if let Some(t) = n.checked_sub(1 + j) {
                wf += th * e[t];
            }
        }
        let m = history.len();
        let mut level = 0.0;
        for k in 1..=d {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            level += sign * binomial(d, k) * history[m - k];
        }
        wf + level
    }
}
