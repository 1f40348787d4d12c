//! Daily indicators and valuation ratios reduced to one row per ticker-week.

mod fundamentals;
pub mod indicators;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{week_ending_friday, Sector, WeeklySeries};
use crate::stats::median_present;

pub use fundamentals::{compute_fundamentals, read_reports_csv, write_reports_csv, FundamentalRow, QuarterlyReport};
pub use indicators::{compute_indicators, IndicatorRow};

/// Predictor columns of a weekly feature row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureColumn {
    Return,
    Sentiment,
    Cci,
    Macdh,
    Rsi,
    KdjK,
    Wr,
    AtrPct,
    Cmf,
    Pe,
    Pb,
    Ps,
}

impl FeatureColumn {
    pub const ALL: [FeatureColumn; 12] = [
        FeatureColumn::Return,
        FeatureColumn::Sentiment,
        FeatureColumn::Cci,
        FeatureColumn::Macdh,
        FeatureColumn::Rsi,
        FeatureColumn::KdjK,
        FeatureColumn::Wr,
        FeatureColumn::AtrPct,
        FeatureColumn::Cmf,
        FeatureColumn::Pe,
        FeatureColumn::Pb,
        FeatureColumn::Ps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureColumn::Return => "return",
            FeatureColumn::Sentiment => "sentiment",
            FeatureColumn::Cci => "cci",
            FeatureColumn::Macdh => "macdh",
            FeatureColumn::Rsi => "rsi",
            FeatureColumn::KdjK => "kdj_k",
            FeatureColumn::Wr => "wr",
            FeatureColumn::AtrPct => "atr_pct",
            FeatureColumn::Cmf => "cmf",
            FeatureColumn::Pe => "pe",
            FeatureColumn::Pb => "pb",
            FeatureColumn::Ps => "ps",
        }
    }
}

impl fmt::Display for FeatureColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureColumn::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::MissingColumn(s.to_string()))
    }
}

/// One ticker-week. Indicator and ratio fields hold the median of that
/// week's daily values; `target` is the next realized week's return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyFeatureRow {
    pub ticker: String,
    pub sector: Option<Sector>,
    pub week_end: NaiveDate,
    #[serde(rename = "return")]
    pub ret: Option<f64>,
    pub target: Option<f64>,
    pub sentiment: Option<f64>,
    pub cci: Option<f64>,
    pub macdh: Option<f64>,
    pub rsi: Option<f64>,
    pub kdj_k: Option<f64>,
    pub wr: Option<f64>,
    pub atr_pct: Option<f64>,
    pub cmf: Option<f64>,
    pub pe: Option<f64>,
    pub pb: Option<f64>,
    pub ps: Option<f64>,
}

impl WeeklyFeatureRow {
    pub fn get(&self, column: FeatureColumn) -> Option<f64> {
        *self.slot(column)
    }

    pub fn set(&mut self, column: FeatureColumn, value: Option<f64>) {
        *self.slot_mut(column) = value;
    }

    fn slot(&self, column: FeatureColumn) -> &Option<f64> {
        match column {
            FeatureColumn::Return => &self.ret,
            FeatureColumn::Sentiment => &self.sentiment,
            FeatureColumn::Cci => &self.cci,
            FeatureColumn::Macdh => &self.macdh,
            FeatureColumn::Rsi => &self.rsi,
            FeatureColumn::KdjK => &self.kdj_k,
            FeatureColumn::Wr => &self.wr,
            FeatureColumn::AtrPct => &self.atr_pct,
            FeatureColumn::Cmf => &self.cmf,
            FeatureColumn::Pe => &self.pe,
            FeatureColumn::Pb => &self.pb,
            FeatureColumn::Ps => &self.ps,
        }
    }

    fn slot_mut(&mut self, column: FeatureColumn) -> &mut Option<f64> {
        match column {
            FeatureColumn::Return => &mut self.ret,
            FeatureColumn::Sentiment => &mut self.sentiment,
            FeatureColumn::Cci => &mut self.cci,
            FeatureColumn::Macdh => &mut self.macdh,
            FeatureColumn::Rsi => &mut self.rsi,
            FeatureColumn::KdjK => &mut self.kdj_k,
            FeatureColumn::Wr => &mut self.wr,
            FeatureColumn::AtrPct => &mut self.atr_pct,
            FeatureColumn::Cmf => &mut self.cmf,
            FeatureColumn::Pe => &mut self.pe,
            FeatureColumn::Pb => &mut self.pb,
            FeatureColumn::Ps => &mut self.ps,
        }
    }
}

/// Joins daily indicators and ratios onto the weekly return series, taking
/// per-week medians over present values, and attaches the weekly sentiment.
pub fn weekly_features(
    sector: Option<Sector>,
    indicators: &[IndicatorRow],
    fundamentals: &[FundamentalRow],
    sentiment: &BTreeMap<NaiveDate, f64>,
    weekly: &WeeklySeries,
) -> Vec<WeeklyFeatureRow> {
    let mut ind_by_week: BTreeMap<NaiveDate, Vec<&IndicatorRow>> = BTreeMap::new();
    for row in indicators {
        ind_by_week.entry(week_ending_friday(row.date)).or_default().push(row);
    }
    let mut fund_by_week: BTreeMap<NaiveDate, Vec<&FundamentalRow>> = BTreeMap::new();
    for row in fundamentals {
        fund_by_week.entry(week_ending_friday(row.date)).or_default().push(row);
    }

    let empty_ind = Vec::new();
    let empty_fund = Vec::new();
    weekly
        .weeks
        .iter()
        .enumerate()
        .map(|(i, point)| {
            let ind = ind_by_week.get(&point.week_end).unwrap_or(&empty_ind);
            let fund = fund_by_week.get(&point.week_end).unwrap_or(&empty_fund);
            let med_i = |f: fn(&IndicatorRow) -> Option<f64>| {
                median_present(&ind.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            let med_f = |f: fn(&FundamentalRow) -> Option<f64>| {
                median_present(&fund.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            WeeklyFeatureRow {
                ticker: weekly.ticker.clone(),
                sector,
                week_end: point.week_end,
                ret: point.ret,
                target: weekly.weeks.get(i + 1).and_then(|next| next.ret),
                sentiment: sentiment.get(&point.week_end).copied(),
                cci: med_i(|r| r.cci),
                macdh: med_i(|r| r.macdh),
                rsi: med_i(|r| r.rsi),
                kdj_k: med_i(|r| r.kdj_k),
                wr: med_i(|r| r.wr),
                atr_pct: med_i(|r| r.atr_pct),
                cmf: med_i(|r| r.cmf),
                pe: med_f(|r| r.pe),
                pb: med_f(|r| r.pb),
                ps: med_f(|r| r.ps),
            }
        })
        .collect()
}

pub fn write_features_csv(path: &Path, rows: &[WeeklyFeatureRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_features_csv(path: &Path) -> Result<Vec<WeeklyFeatureRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut rows = Vec::new();
    for (line, record) in reader.deserialize::<WeeklyFeatureRow>().enumerate() {
        rows.push(record.map_err(|e| Error::parse(path, format!("row {}: {e}", line + 2)))?);
    }
    Ok(rows)
}
