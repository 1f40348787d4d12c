use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::Serialize;

use super::{DailyBar, DailySeries};
use crate::error::{Error, Result};
use crate::stats::quantile;

/// Rows whose adjusted close differs from the alternate source by more than
/// this relative amount are dropped.
pub const DROP_TOLERANCE: f64 = 0.02;
/// Tolerance used for the agreement tallies.
pub const AGREEMENT_TOLERANCE: f64 = 0.01;
/// Default fraction of dropped rows above which the whole stock is rejected.
pub const DEFAULT_REJECT_FRACTION: f64 = 0.05;

const FIELDS: [&str; 6] = ["open", "high", "low", "close", "adj_close", "volume"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldStats {
    /// Share of matched rows within 1% relative error.
    pub within_1pct: f64,
    /// 99% quantile of the relative error over matched rows.
    pub q99_error: f64,
}

/// Dividend or split agreement; informational only, never used to edit data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventReport {
    pub base_events: usize,
    pub dates_matched: f64,
    pub amount_exact: f64,
    pub amount_within_1pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconciliationReport {
    pub ticker: String,
    pub rows_base: usize,
    pub rows_matched: usize,
    pub rows_dropped: usize,
    pub fields: BTreeMap<String, FieldStats>,
    pub dividend: EventReport,
    pub split: EventReport,
    pub stock_rejected: bool,
}

impl ReconciliationReport {
    /// `key = value` lines, one per statistic, in a fixed order.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ticker = {}", self.ticker);
        let _ = writeln!(out, "rows_base = {}", self.rows_base);
        let _ = writeln!(out, "rows_matched = {}", self.rows_matched);
        let _ = writeln!(out, "rows_dropped = {}", self.rows_dropped);
        for name in FIELDS {
            if let Some(s) = self.fields.get(name) {
                let _ = writeln!(out, "{name}.within_1pct = {}", s.within_1pct);
                let _ = writeln!(out, "{name}.q99_error = {}", s.q99_error);
            }
        }
        for (label, ev) in [("dividend", &self.dividend), ("split", &self.split)] {
            let _ = writeln!(out, "{label}.base_events = {}", ev.base_events);
            let _ = writeln!(out, "{label}.dates_matched = {}", ev.dates_matched);
            let _ = writeln!(out, "{label}.amount_exact = {}", ev.amount_exact);
            let _ = writeln!(out, "{label}.amount_within_1pct = {}", ev.amount_within_1pct);
        }
        let _ = writeln!(out, "stock_rejected = {}", self.stock_rejected);
        out
    }
}

fn rel_error(base: f64, alt: f64) -> f64 {
    if base == alt {
        0.0
    } else if alt == 0.0 {
        f64::INFINITY
    } else {
        ((base - alt) / alt).abs()
    }
}

fn field(bar: &DailyBar, name: &str) -> f64 {
    match name {
        "open" => bar.open,
        "high" => bar.high,
        "low" => bar.low,
        "close" => bar.close,
        "adj_close" => bar.adj_close,
        "volume" => bar.volume,
        _ => unreachable!("unknown field {name}"),
    }
}

/// Validates `base` against `alt` on shared dates with the default whole-stock
/// rejection limit.
pub fn reconcile(base: &DailySeries, alt: &DailySeries) -> Result<(DailySeries, ReconciliationReport)> {
    reconcile_with_limit(base, alt, DEFAULT_REJECT_FRACTION)
}

/// Drops base rows whose adjusted close disagrees with `alt` by more than 2%.
/// Dates missing from `alt` are kept untouched; kept rows are copied verbatim.
pub fn reconcile_with_limit(
    base: &DailySeries,
    alt: &DailySeries,
    reject_fraction: f64,
) -> Result<(DailySeries, ReconciliationReport)> {
    let alt_by_date: BTreeMap<NaiveDate, &DailyBar> = alt.bars.iter().map(|b| (b.date, b)).collect();
    let matched: Vec<(&DailyBar, &DailyBar)> =
        base.bars.iter().filter_map(|b| alt_by_date.get(&b.date).map(|a| (b, *a))).collect();
    if matched.is_empty() {
        return Err(Error::NoCommonDates { ticker: base.ticker.clone() });
    }

    let mut fields = BTreeMap::new();
    for name in FIELDS {
        let errors: Vec<f64> = matched.iter().map(|(b, a)| rel_error(field(b, name), field(a, name))).collect();
        let within = errors.iter().filter(|e| **e <= AGREEMENT_TOLERANCE).count() as f64 / errors.len() as f64;
        let finite: Vec<f64> = errors.iter().map(|e| if e.is_finite() { *e } else { f64::MAX }).collect();
        let q99 = quantile(&finite, 0.99).unwrap_or(0.0);
        fields.insert(name.to_string(), FieldStats { within_1pct: within, q99_error: q99 });
    }

    let kept: Vec<DailyBar> = base
        .bars
        .iter()
        .filter(|b| match alt_by_date.get(&b.date) {
            Some(a) => rel_error(b.adj_close, a.adj_close) <= DROP_TOLERANCE,
            None => true,
        })
        .copied()
        .collect();
    let rows_dropped = base.bars.len() - kept.len();
    let stock_rejected = rows_dropped as f64 / matched.len() as f64 > reject_fraction;

    let report = ReconciliationReport {
        ticker: base.ticker.clone(),
        rows_base: base.bars.len(),
        rows_matched: matched.len(),
        rows_dropped,
        fields,
        dividend: event_report(base, &alt_by_date, |b| b.dividend, |v| v > 0.0),
        split: event_report(base, &alt_by_date, |b| b.split, |v| v != 1.0),
        stock_rejected,
    };
    let series = DailySeries { ticker: base.ticker.clone(), sector: base.sector, bars: kept };
    Ok((series, report))
}

fn event_report(
    base: &DailySeries,
    alt: &BTreeMap<NaiveDate, &DailyBar>,
    value: fn(&DailyBar) -> f64,
    is_event: fn(f64) -> bool,
) -> EventReport {
    let events: Vec<&DailyBar> = base.bars.iter().filter(|b| is_event(value(b))).collect();
    let matched: Vec<(f64, f64)> = events
        .iter()
        .filter_map(|b| alt.get(&b.date).map(|a| (value(b), value(a))))
        .filter(|(_, a)| is_event(*a))
        .collect();
    let frac = |n: usize, d: usize| if d == 0 { 1.0 } else { n as f64 / d as f64 };
    EventReport {
        base_events: events.len(),
        dates_matched: frac(matched.len(), events.len()),
        amount_exact: frac(matched.iter().filter(|(b, a)| b == a).count(), matched.len()),
        amount_within_1pct: frac(
            matched.iter().filter(|(b, a)| rel_error(*b, *a) <= AGREEMENT_TOLERANCE).count(),
            matched.len(),
        ),
    }
}
