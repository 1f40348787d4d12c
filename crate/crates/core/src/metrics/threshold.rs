use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How often the forecast crossed `theta_up` and what followed, and how the
/// forecast behaved in weeks whose realized return fell to `theta_down` or
/// below. Conditional fields are `None` when nothing qualifies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub n: usize,
    pub theta_up: f64,
    pub up_count: usize,
    pub up_frequency: f64,
    pub up_realized_up_rate: Option<f64>,
    pub up_mean_realized: Option<f64>,
    pub theta_down: f64,
    pub down_count: usize,
    pub down_frequency: f64,
    pub down_da: Option<f64>,
    pub down_mean_predicted: Option<f64>,
}

pub fn threshold_report(predicted: &[f64], realized: &[f64], theta_up: f64, theta_down: f64) -> Result<ThresholdSummary> {
    if predicted.len() != realized.len() {
        return Err(Error::InvalidInput(format!("{} predictions but {} realized values", predicted.len(), realized.len())));
    }
    let n = predicted.len();
    let pairs = || predicted.iter().copied().zip(realized.iter().copied());
    let big_calls: Vec<(f64, f64)> = pairs().filter(|&(p, _)| p >= theta_up).collect();
    let big_losses: Vec<(f64, f64)> = pairs().filter(|&(_, r)| r <= theta_down).collect();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let mean_of = |rows: &[(f64, f64)], f: fn(&(f64, f64)) -> f64| {
        (!rows.is_empty()).then(|| rows.iter().map(f).sum::<f64>() / rows.len() as f64)
    };
    Ok(ThresholdSummary {
        n,
        theta_up,
        up_count: big_calls.len(),
        up_frequency: frac(big_calls.len()),
        up_realized_up_rate: mean_of(&big_calls, |&(_, r)| if r >= 0.0 { 1.0 } else { 0.0 }),
        up_mean_realized: mean_of(&big_calls, |&(_, r)| r),
        theta_down,
        down_count: big_losses.len(),
        down_frequency: frac(big_losses.len()),
        down_da: mean_of(&big_losses, |&(p, r)| if (p >= 0.0) == (r >= 0.0) { 1.0 } else { 0.0 }),
        down_mean_predicted: mean_of(&big_losses, |&(p, _)| p),
    })
}
