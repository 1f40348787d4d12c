use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DailyBar, Sector};
use crate::error::{Error, Result};

/// A bar as read from disk; empty CSV fields are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawBar {
    pub date: NaiveDate,
    pub open: Option<f64>,
    pub high: Option<f64>,
    pub low: Option<f64>,
    pub close: Option<f64>,
    pub adj_close: Option<f64>,
    pub volume: Option<f64>,
    pub dividend: Option<f64>,
    pub split: Option<f64>,
}

impl RawBar {
    pub fn missing(date: NaiveDate) -> Self {
        RawBar {
            date,
            open: None,
            high: None,
            low: None,
            close: None,
            adj_close: None,
            volume: None,
            dividend: None,
            split: None,
        }
    }

    /// The bar if every price and volume field is present.
    pub fn complete(&self) -> Option<DailyBar> {
        Some(DailyBar {
            date: self.date,
            open: self.open?,
            high: self.high?,
            low: self.low?,
            close: self.close?,
            adj_close: self.adj_close?,
            volume: self.volume?,
            dividend: self.dividend.unwrap_or(0.0),
            split: self.split.unwrap_or(1.0),
        })
    }
}

impl From<DailyBar> for RawBar {
    fn from(b: DailyBar) -> Self {
        RawBar {
            date: b.date,
            open: Some(b.open),
            high: Some(b.high),
            low: Some(b.low),
            close: Some(b.close),
            adj_close: Some(b.adj_close),
            volume: Some(b.volume),
            dividend: Some(b.dividend),
            split: Some(b.split),
        }
    }
}

pub fn read_bars_csv(path: &Path) -> Result<Vec<RawBar>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let headers = reader.headers()?.clone();
    let expected = ["date", "open", "high", "low", "close", "adj_close", "volume", "dividend", "split"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse(path, format!("expected header `{}`", expected.join(","))));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.deserialize::<RawBar>().enumerate() {
        let row = record.map_err(|e| Error::parse(path, format!("row {}: {e}", line + 2)))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_bars_csv(path: &Path, bars: &[DailyBar]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for bar in bars {
        writer.serialize(RawBar::from(*bar))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Deserialize)]
struct SectorRow {
    ticker: String,
    sector: String,
}

pub fn read_sector_map(path: &Path) -> Result<BTreeMap<String, Sector>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut map = BTreeMap::new();
    for record in reader.deserialize::<SectorRow>() {
        let row = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let sector = row.sector.parse::<Sector>().map_err(|e| Error::parse(path, e.to_string()))?;
        map.insert(row.ticker, sector);
    }
    Ok(map)
}
