//! The weekly sentiment file produced by the external news scorer:
//! `ticker,week_end,sentiment`, one row per ticker and Friday-ended week.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::median;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklySentiment {
    pub ticker: String,
    pub week_end: NaiveDate,
    pub sentiment: f64,
}

/// Sentiment by ticker, then by week-ending Friday.
pub type SentimentTable = BTreeMap<String, BTreeMap<NaiveDate, f64>>;

pub fn validate(row: &WeeklySentiment) -> Result<()> {
    if row.week_end.weekday() != Weekday::Fri {
        return Err(Error::InvalidInput(format!("{} {}: week_end is not a Friday", row.ticker, row.week_end)));
    }
    if !(-1.0..=1.0).contains(&row.sentiment) {
        return Err(Error::InvalidInput(format!(
            "{} {}: sentiment {} outside [-1, 1]",
            row.ticker, row.week_end, row.sentiment
        )));
    }
    Ok(())
}

pub fn read_weekly_sentiment(path: &Path) -> Result<SentimentTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut table = SentimentTable::new();
    for (line, record) in reader.deserialize::<WeeklySentiment>().enumerate() {
        let row = record.map_err(|e| Error::parse(path, format!("row {}: {e}", line + 2)))?;
        validate(&row).map_err(|e| Error::parse(path, format!("row {}: {e}", line + 2)))?;
        if table.entry(row.ticker.clone()).or_default().insert(row.week_end, row.sentiment).is_some() {
            return Err(Error::parse(path, format!("row {}: duplicate {} {}", line + 2, row.ticker, row.week_end)));
        }
    }
    Ok(table)
}

pub fn write_weekly_sentiment(path: &Path, table: &SentimentTable) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for (ticker, weeks) in table {
        for (week_end, sentiment) in weeks {
            writer.serialize(WeeklySentiment { ticker: ticker.clone(), week_end: *week_end, sentiment: *sentiment })?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Median article score per ticker and Friday-ended week.
pub fn weekly_median(scores: &[(String, NaiveDate, f64)]) -> SentimentTable {
    let mut grouped: BTreeMap<(String, NaiveDate), Vec<f64>> = BTreeMap::new();
    for (ticker, date, score) in scores {
        grouped.entry((ticker.clone(), crate::market_data::week_ending_friday(*date))).or_default().push(*score);
    }
    let mut table = SentimentTable::new();
    for ((ticker, week), values) in grouped {
        if let Some(m) = median(&values) {
            table.entry(ticker).or_default().insert(week, m);
        }
    }
    table
}
