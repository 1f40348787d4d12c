use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::features::WeeklyFeatureRow;
use crate::market_data::Sector;

/// One stock's weekly feature rows in date order.
#[derive(Debug, Clone, PartialEq)]
pub struct StockPanel {
    pub ticker: String,
    pub sector: Option<Sector>,
    pub rows: Vec<WeeklyFeatureRow>,
}

impl StockPanel {
    /// Week whose return row `i` targets.
    pub fn target_week(&self, i: usize) -> Option<NaiveDate> {
        self.rows.get(i + 1).map(|r| r.week_end)
    }
}

/// The modeling universe, sorted by ticker.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    pub stocks: Vec<StockPanel>,
}

impl Panel {
    pub fn from_rows(rows: Vec<WeeklyFeatureRow>) -> Result<Panel> {
        let mut by_ticker: BTreeMap<String, Vec<WeeklyFeatureRow>> = BTreeMap::new();
        for row in rows {
            by_ticker.entry(row.ticker.clone()).or_default().push(row);
        }
        let mut stocks = Vec::with_capacity(by_ticker.len());
        for (ticker, mut rows) in by_ticker {
            rows.sort_by_key(|r| r.week_end);
            if rows.windows(2).any(|w| w[0].week_end == w[1].week_end) {
                return Err(Error::InvalidInput(format!("{ticker}: duplicate week in feature table")));
            }
            let sector = rows[0].sector;
            stocks.push(StockPanel { ticker, sector, rows });
        }
        Ok(Panel { stocks })
    }

    pub fn rows(&self) -> impl Iterator<Item = &WeeklyFeatureRow> {
        self.stocks.iter().flat_map(|s| s.rows.iter())
    }

    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        let first = self.rows().map(|r| r.week_end).min()?;
        let last = self.rows().map(|r| r.week_end).max()?;
        Some((first, last))
    }

    pub fn restrict(&self, tickers: &[String]) -> Panel {
        if tickers.is_empty() {
            return self.clone();
        }
        Panel { stocks: self.stocks.iter().filter(|s| tickers.contains(&s.ticker)).cloned().collect() }
    }

    /// Realized return of each (ticker, week).
    pub fn realized(&self) -> BTreeMap<(String, NaiveDate), f64> {
        self.stocks
            .iter()
            .flat_map(|s| s.rows.iter().filter_map(|r| r.ret.map(|v| ((s.ticker.clone(), r.week_end), v))))
            .collect()
    }
}
