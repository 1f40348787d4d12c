use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{week_ending_friday, DailySeries};
use crate::error::{Error, Result};

const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeeklyPoint {
    pub week_end: NaiveDate,
    /// Mean of ln(adjusted close) over the week's trading days.
    pub avg_log_adj_close: f64,
    /// Log return against the previous realized week; `None` for the first.
    pub ret: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklySeries {
    pub ticker: String,
    pub weeks: Vec<WeeklyPoint>,
}

impl WeeklySeries {
    pub fn span_years(&self) -> f64 {
        match (self.weeks.first(), self.weeks.last()) {
            (Some(a), Some(b)) => (b.week_end - a.week_end).num_days() as f64 / DAYS_PER_YEAR,
            _ => 0.0,
        }
    }
}

/// Groups trading days into Friday-ended weeks and differences the weekly
/// average log adjusted close. Weeks without trading days do not appear, so
/// a return spans the gap back to the previous realized week.
pub fn weekly_aggregate(series: &DailySeries) -> Result<WeeklySeries> {
    let mut weeks: Vec<WeeklyPoint> = Vec::new();
    let mut current: Option<(NaiveDate, f64, usize)> = None;
    for bar in &series.bars {
        let week = week_ending_friday(bar.date);
        let log_price = bar.adj_close.ln();
        match current.as_mut() {
            Some((w, sum, n)) if *w == week => {
                *sum += log_price;
                *n += 1;
            }
            _ => {
                if let Some((w, sum, n)) = current.take() {
                    weeks.push(WeeklyPoint { week_end: w, avg_log_adj_close: sum / n as f64, ret: None });
                }
                current = Some((week, log_price, 1));
            }
        }
    }
    if let Some((w, sum, n)) = current {
        weeks.push(WeeklyPoint { week_end: w, avg_log_adj_close: sum / n as f64, ret: None });
    }
    if weeks.len() < 2 {
        return Err(Error::InsufficientHistory(format!("{}: fewer than 2 weeks", series.ticker)));
    }
    for i in 1..weeks.len() {
        weeks[i].ret = Some(weeks[i].avg_log_adj_close - weeks[i - 1].avg_log_adj_close);
    }
    Ok(WeeklySeries { ticker: series.ticker.clone(), weeks })
}

/// Keeps a series whose first-to-last week span is at least `min_years`
/// (inclusive, 365.25-day years).
pub fn filter_history(series: &WeeklySeries, min_years: f64) -> bool {
    series.span_years() >= min_years
}
