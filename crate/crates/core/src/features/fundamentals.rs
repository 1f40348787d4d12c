//! Valuation ratios from the latest quarterly report on or before each day.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::DailySeries;

/// Per-share figures from one quarterly report, effective from `effective_date`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterlyReport {
    pub ticker: String,
    pub effective_date: NaiveDate,
    pub eps_ttm: Option<f64>,
    pub book_per_share: Option<f64>,
    pub revenue_per_share_ttm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalRow {
    pub date: NaiveDate,
    pub pe: Option<f64>,
    pub pb: Option<f64>,
    pub ps: Option<f64>,
}

/// Reads `ticker,effective_date,eps_ttm,book_per_share,revenue_per_share_ttm`
/// and groups the reports by ticker, sorted by effective date.
pub fn read_reports_csv(path: &Path) -> Result<BTreeMap<String, Vec<QuarterlyReport>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut out: BTreeMap<String, Vec<QuarterlyReport>> = BTreeMap::new();
    for (line, record) in reader.deserialize::<QuarterlyReport>().enumerate() {
        let report = record.map_err(|e| Error::parse(path, format!("row {}: {e}", line + 2)))?;
        out.entry(report.ticker.clone()).or_default().push(report);
    }
    for reports in out.values_mut() {
        reports.sort_by_key(|r| r.effective_date);
    }
    Ok(out)
}

pub fn write_reports_csv(path: &Path, reports: &[QuarterlyReport]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for r in reports {
        writer.serialize(r)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn positive_ratio(price: f64, per_share: Option<f64>) -> Option<f64> {
    per_share.filter(|v| *v > 0.0).map(|v| price / v)
}

/// PE, PB and PS per trading day from the raw close. Non-positive earnings,
/// book value or revenue leave that ratio missing; days before the first
/// report have all three missing.
pub fn compute_fundamentals(series: &DailySeries, reports: &[QuarterlyReport]) -> Vec<FundamentalRow> {
    let mut sorted: Vec<&QuarterlyReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.effective_date);
    let mut next = 0;
    let mut current: Option<&QuarterlyReport> = None;
    series
        .bars
        .iter()
        .map(|bar| {
            while next < sorted.len() && sorted[next].effective_date <= bar.date {
                current = Some(sorted[next]);
                next += 1;
            }
            match current {
                Some(r) => FundamentalRow {
                    date: bar.date,
                    pe: positive_ratio(bar.close, r.eps_ttm),
                    pb: positive_ratio(bar.close, r.book_per_share),
                    ps: positive_ratio(bar.close, r.revenue_per_share_ttm),
                },
                None => FundamentalRow { date: bar.date, pe: None, pb: None, ps: None },
            }
        })
        .collect()
}
