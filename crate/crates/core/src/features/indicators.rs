//! Daily technical indicators on split/dividend-adjusted prices.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::DailySeries;

pub const CCI_PERIOD: usize = 20;
pub const CCI_CONSTANT: f64 = 0.015;
pub const MACD_FAST: usize = 12;
pub const MACD_SLOW: usize = 26;
pub const MACD_SIGNAL: usize = 9;
pub const RSI_PERIOD: usize = 14;
pub const KDJ_PERIOD: usize = 14;
pub const KDJ_SMOOTH: usize = 3;
pub const WR_PERIOD: usize = 14;
pub const ATR_PERIOD: usize = 14;
pub const CMF_PERIOD: usize = 20;

/// Shortest series accepted: the slow MACD EMA plus its signal line.
pub const MIN_BARS: usize = MACD_SLOW + MACD_SIGNAL;

/// One day of indicator values; `None` during each indicator's warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRow {
    pub date: NaiveDate,
    pub cci: Option<f64>,
    pub macdh: Option<f64>,
    pub rsi: Option<f64>,
    pub kdj_k: Option<f64>,
    pub wr: Option<f64>,
    pub atr_pct: Option<f64>,
    pub cmf: Option<f64>,
}

/// Adjusted high/low/close columns plus raw volume.
pub struct PriceColumns {
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    pub close: Vec<f64>,
    pub volume: Vec<f64>,
}

impl PriceColumns {
    pub fn from_series(series: &DailySeries) -> Self {
        let mut cols = PriceColumns { high: vec![], low: vec![], close: vec![], volume: vec![] };
        for bar in &series.bars {
            let (_, h, l, c) = bar.adjusted_ohlc();
            cols.high.push(h);
            cols.low.push(l);
            cols.close.push(c);
            cols.volume.push(bar.volume);
        }
        cols
    }
}

pub fn compute_indicators(series: &DailySeries) -> Result<Vec<IndicatorRow>> {
    if series.bars.len() < MIN_BARS {
        return Err(Error::InsufficientHistory(format!(
            "{}: {} daily bars, indicators need {MIN_BARS}",
            series.ticker,
            series.bars.len()
        )));
    }
    let p = PriceColumns::from_series(series);
    let cci = cci(&p.high, &p.low, &p.close);
    let macdh = macd_histogram(&p.close);
    let rsi = rsi(&p.close);
    let kdj_k = kdj_k(&p.high, &p.low, &p.close);
    let wr = williams_r(&p.high, &p.low, &p.close);
    let atr_pct = atr_pct(&p.high, &p.low, &p.close);
    let cmf = chaikin_money_flow(&p.high, &p.low, &p.close, &p.volume);
    Ok(series
        .bars
        .iter()
        .enumerate()
        .map(|(i, bar)| IndicatorRow {
            date: bar.date,
            cci: cci[i],
            macdh: macdh[i],
            rsi: rsi[i],
            kdj_k: kdj_k[i],
            wr: wr[i],
            atr_pct: atr_pct[i],
            cmf: cmf[i],
        })
        .collect())
}

/// Exponential moving average seeded with the first value.
pub fn ema(values: &[f64], period: usize) -> Vec<f64> {
    let alpha = 2.0 / (period as f64 + 1.0);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = match values.first() {
        Some(v) => *v,
        None => return out,
    };
    for &v in values {
        acc += alpha * (v - acc);
        out.push(acc);
    }
    out
}

/// Wilder average over `values[1..]`, seeded with the plain mean of the first
/// `period` of them. Entry `i` is defined for `i >= period`.
fn wilder(values: &[f64], period: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; values.len()];
    if values.len() <= period {
        return out;
    }
    let mut avg = values[1..=period].iter().sum::<f64>() / period as f64;
    out[period] = Some(avg);
    for i in period + 1..values.len() {
        avg += (values[i] - avg) / period as f64;
        out[i] = Some(avg);
    }
    out
}

fn window_extremes(high: &[f64], low: &[f64], end: usize, period: usize) -> (f64, f64) {
    let start = end + 1 - period;
    let hh = high[start..=end].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ll = low[start..=end].iter().copied().fold(f64::INFINITY, f64::min);
    (hh, ll)
}

pub fn cci(high: &[f64], low: &[f64], close: &[f64]) -> Vec<Option<f64>> {
    let tp: Vec<f64> = (0..close.len()).map(|i| (high[i] + low[i] + close[i]) / 3.0).collect();
    let mut out = vec![None; tp.len()];
    for i in CCI_PERIOD - 1..tp.len() {
        let window = &tp[i + 1 - CCI_PERIOD..=i];
        let sma = window.iter().sum::<f64>() / CCI_PERIOD as f64;
        let md = window.iter().map(|v| (v - sma).abs()).sum::<f64>() / CCI_PERIOD as f64;
        // A flat window leaves only rounding noise in the deviation.
        out[i] = Some(if md <= 1e-12 * sma.abs() { 0.0 } else { (tp[i] - sma) / (CCI_CONSTANT * md) });
    }
    out
}

pub fn macd_histogram(close: &[f64]) -> Vec<Option<f64>> {
    let fast = ema(close, MACD_FAST);
    let slow = ema(close, MACD_SLOW);
    let macd: Vec<f64> = fast.iter().zip(&slow).map(|(f, s)| f - s).collect();
    let signal = ema(&macd, MACD_SIGNAL);
    let first = MACD_SLOW + MACD_SIGNAL - 2;
    (0..close.len()).map(|i| (i >= first).then(|| macd[i] - signal[i])).collect()
}

pub fn rsi(close: &[f64]) -> Vec<Option<f64>> {
    let mut gains = vec![0.0; close.len()];
    let mut losses = vec![0.0; close.len()];
    for i in 1..close.len() {
        let d = close[i] - close[i - 1];
        gains[i] = d.max(0.0);
        losses[i] = (-d).max(0.0);
    }
    let avg_gain = wilder(&gains, RSI_PERIOD);
    let avg_loss = wilder(&losses, RSI_PERIOD);
    avg_gain
        .iter()
        .zip(&avg_loss)
        .map(|(g, l)| {
            let (g, l) = ((*g)?, (*l)?);
            Some(if l == 0.0 {
                if g == 0.0 {
                    50.0
                } else {
                    100.0
                }
            } else {
                100.0 - 100.0 / (1.0 + g / l)
            })
        })
        .collect()
}

/// The K line of KDJ(14, 3, 3): a 3-day simple average of the raw stochastic value.
pub fn kdj_k(high: &[f64], low: &[f64], close: &[f64]) -> Vec<Option<f64>> {
    let n = close.len();
    let mut rsv = vec![None; n];
    for i in KDJ_PERIOD - 1..n {
        let (hh, ll) = window_extremes(high, low, i, KDJ_PERIOD);
        rsv[i] = Some(if hh == ll { 50.0 } else { 100.0 * (close[i] - ll) / (hh - ll) });
    }
    let mut out = vec![None; n];
    for i in KDJ_PERIOD + KDJ_SMOOTH - 2..n {
        let sum: f64 = rsv[i + 1 - KDJ_SMOOTH..=i].iter().map(|v| v.unwrap()).sum();
        out[i] = Some(sum / KDJ_SMOOTH as f64);
    }
    out
}

pub fn williams_r(high: &[f64], low: &[f64], close: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None; close.len()];
    for i in WR_PERIOD - 1..close.len() {
        let (hh, ll) = window_extremes(high, low, i, WR_PERIOD);
        out[i] = Some(if hh == ll { -50.0 } else { -100.0 * (hh - close[i]) / (hh - ll) });
    }
    out
}

pub fn atr_pct(high: &[f64], low: &[f64], close: &[f64]) -> Vec<Option<f64>> {
    let tr: Vec<f64> = (0..close.len())
        .map(|i| {
            let range = high[i] - low[i];
            if i == 0 {
                range
            } else {
                range.max((high[i] - close[i - 1]).abs()).max((low[i] - close[i - 1]).abs())
            }
        })
        .collect();
    wilder(&tr, ATR_PERIOD)
        .iter()
        .zip(close)
        .map(|(atr, c)| atr.map(|a| 100.0 * a / c))
        .collect()
}

pub fn chaikin_money_flow(high: &[f64], low: &[f64], close: &[f64], volume: &[f64]) -> Vec<Option<f64>> {
    let mfv: Vec<f64> = (0..close.len())
        .map(|i| {
            let range = high[i] - low[i];
            if range == 0.0 {
                0.0
            } else {
                ((close[i] - low[i]) - (high[i] - close[i])) / range * volume[i]
            }
        })
        .collect();
    let mut out = vec![None; close.len()];
    for i in CMF_PERIOD - 1..close.len() {
        let flow: f64 = mfv[i + 1 - CMF_PERIOD..=i].iter().sum();
        let vol: f64 = volume[i + 1 - CMF_PERIOD..=i].iter().sum();
        out[i] = Some(if vol == 0.0 { 0.0 } else { (flow / vol).clamp(-1.0, 1.0) });
    }
    out
}
