//! File-level stages: raw bar directories to cleaned daily series, and
//! cleaned series to the weekly feature table.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{compute_fundamentals, compute_indicators, weekly_features, QuarterlyReport, WeeklyFeatureRow};
use crate::market_data::{
    filter_history, read_bars_csv, reconcile_with_limit, repair_bars, weekly_aggregate, DailySeries,
    ReconciliationReport, Sector, DEFAULT_REJECT_FRACTION,
};
use crate::sentiment::SentimentTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub min_history_years: f64,
    pub reject_fraction: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { min_history_years: 5.0, reject_fraction: DEFAULT_REJECT_FRACTION }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedStock {
    pub series: DailySeries,
    pub report: Option<ReconciliationReport>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestOutput {
    pub stocks: Vec<IngestedStock>,
    /// (ticker, reason), sorted by ticker.
    pub rejected: Vec<(String, String)>,
    /// Reports of stocks rejected by reconciliation.
    pub rejected_reports: Vec<ReconciliationReport>,
}

/// `<TICKER>.csv` files in `dir`, sorted by ticker.
pub fn list_bar_files(dir: &Path) -> Result<Vec<(String, std::path::PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Repairs every base file against the union trading calendar, reconciles
/// it with the alternate source when one exists, and applies the history
/// filter.
pub fn ingest(
    bars_dir: &Path,
    alt_dir: Option<&Path>,
    sectors: &BTreeMap<String, Sector>,
    options: IngestOptions,
) -> Result<IngestOutput> {
    let files = list_bar_files(bars_dir)?;
    if files.is_empty() {
        return Err(Error::InvalidInput(format!("no bar files in {}", bars_dir.display())));
    }
    let raw: Vec<(String, Vec<crate::market_data::RawBar>)> =
        files.iter().map(|(t, p)| Ok((t.clone(), read_bars_csv(p)?))).collect::<Result<_>>()?;
    let calendar: Vec<NaiveDate> =
        raw.iter().flat_map(|(_, bars)| bars.iter().map(|b| b.date)).collect::<BTreeSet<_>>().into_iter().collect();

    let results: Vec<(String, Result<IngestedStock>)> = raw
        .par_iter()
        .map(|(ticker, bars)| {
            let sector = sectors.get(ticker).copied();
            let result = (|| {
                let base = repair_bars(ticker, sector, bars, &calendar)?;
                let (series, report) = match alt_dir.map(|d| d.join(format!("{ticker}.csv"))) {
                    Some(path) if path.exists() => {
                        let alt = repair_bars(ticker, sector, &read_bars_csv(&path)?, &calendar)?;
                        let (kept, report) = reconcile_with_limit(&base, &alt, options.reject_fraction)?;
                        (kept, Some(report))
                    }
                    _ => (base, None),
                };
                Ok(IngestedStock { series, report })
            })();
            (ticker.clone(), result)
        })
        .collect();

    let mut out = IngestOutput::default();
    for (ticker, result) in results {
        match result {
            Ok(stock) if stock.report.as_ref().is_some_and(|r| r.stock_rejected) => {
                let report = stock.report.expect("checked");
                out.rejected.push((
                    ticker,
                    format!("{} of {} matched rows disagree by more than 2%", report.rows_dropped, report.rows_matched),
                ));
                out.rejected_reports.push(report);
            }
            Ok(stock) => {
                let weekly = weekly_aggregate(&stock.series)?;
                if filter_history(&weekly, options.min_history_years) {
                    out.stocks.push(stock);
                } else {
                    out.rejected.push((
                        ticker,
                        format!("{:.2} years of history, need {}", weekly.span_years(), options.min_history_years),
                    ));
                }
            }
            Err(e) => out.rejected.push((ticker, e.to_string())),
        }
    }
    for (t, reason) in &out.rejected {
        log::info!("{t} rejected: {reason}");
    }
    Ok(out)
}

/// Weekly feature rows for every series; stocks too short for the
/// indicators are returned as (ticker, reason).
pub fn build_features(
    series: &[DailySeries],
    reports: &BTreeMap<String, Vec<QuarterlyReport>>,
    sentiment: &SentimentTable,
) -> (Vec<WeeklyFeatureRow>, Vec<(String, String)>) {
    let empty_reports = Vec::new();
    let empty_sentiment = BTreeMap::new();
    let results: Vec<(String, Result<Vec<WeeklyFeatureRow>>)> = series
        .par_iter()
        .map(|s| {
            let result = (|| {
                let indicators = compute_indicators(s)?;
                let fundamentals = compute_fundamentals(s, reports.get(&s.ticker).unwrap_or(&empty_reports));
                let weekly = weekly_aggregate(s)?;
                Ok(weekly_features(
                    s.sector,
                    &indicators,
                    &fundamentals,
                    sentiment.get(&s.ticker).unwrap_or(&empty_sentiment),
                    &weekly,
                ))
            })();
            (s.ticker.clone(), result)
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (ticker, result) in results {
        match result {
            Ok(r) => rows.extend(r),
            Err(e) => skipped.push((ticker, e.to_string())),
        }
    }
    (rows, skipped)
}

/// Weekly returns of an index from its daily bars.
pub fn index_returns(series: &DailySeries) -> Result<BTreeMap<NaiveDate, f64>> {
    Ok(weekly_aggregate(series)?.weeks.iter().filter_map(|w| w.ret.map(|r| (w.week_end, r))).collect())
}

/// Repairs an index bar file and returns its weekly returns.
pub fn read_index_bars(path: &Path) -> Result<BTreeMap<NaiveDate, f64>> {
    let series = repair_bars("INDEX", None, &read_bars_csv(path)?, &[])?;
    index_returns(&series)
}

/// Reads a bar file that must be complete, such as one written by the
/// ingest stage.
pub fn read_clean_series(path: &Path, ticker: &str, sector: Option<Sector>) -> Result<DailySeries> {
    let bars = read_bars_csv(path)?
        .iter()
        .map(|r| r.complete().ok_or_else(|| Error::parse(path, format!("incomplete row on {}", r.date))))
        .collect::<Result<Vec<_>>>()?;
    DailySeries::new(ticker, sector, bars)
}

/// Equal-weighted mean of the stocks' weekly returns, for universes without
/// index bars.
pub fn equal_weight_index(realized: &BTreeMap<(String, NaiveDate), f64>) -> BTreeMap<NaiveDate, f64> {
    let mut sums: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for ((_, week), r) in realized {
        let e = sums.entry(*week).or_default();
        e.0 += r;
        e.1 += 1;
    }
    sums.into_iter().map(|(w, (s, n))| (w, s / n as f64)).collect()
}

#[derive(serde::Serialize, serde::Deserialize)]
struct WeeklyReturnRow {
    week_end: NaiveDate,
    #[serde(rename = "return")]
    ret: f64,
}

pub fn write_weekly_returns_csv(path: &Path, returns: &BTreeMap<NaiveDate, f64>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for (&week_end, &ret) in returns {
        writer.serialize(WeeklyReturnRow { week_end, ret })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_weekly_returns_csv(path: &Path) -> Result<BTreeMap<NaiveDate, f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut out = BTreeMap::new();
    for record in reader.deserialize::<WeeklyReturnRow>() {
        let row = record.map_err(|e| Error::parse(path, e.to_string()))?;
        out.insert(row.week_end, row.ret);
    }
    Ok(out)
}
