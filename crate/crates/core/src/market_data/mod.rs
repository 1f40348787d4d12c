//! Daily bar ingestion, two-source reconciliation, gap repair and weekly
//! log-return aggregation.

mod io;
mod reconcile;
mod repair;
mod weekly;

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use io::{read_bars_csv, read_sector_map, write_bars_csv, RawBar};
pub use reconcile::{AGREEMENT_TOLERANCE, DEFAULT_REJECT_FRACTION, DROP_TOLERANCE, reconcile, reconcile_with_limit, EventReport, FieldStats, ReconciliationReport};
pub use repair::{fill_missing, repair_bars, MAX_MISSING_RUN};
pub use weekly::{filter_history, weekly_aggregate, WeeklyPoint, WeeklySeries};

/// One trading day of a single ticker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: f64,
    pub dividend: f64,
    pub split: f64,
}

impl DailyBar {
    pub fn is_valid(&self) -> bool {
        let lo = self.open.min(self.close);
        let hi = self.open.max(self.close);
        self.low <= lo
            && hi <= self.high
            && self.adj_close > 0.0
            && self.volume >= 0.0
            && self.dividend >= 0.0
            && self.split > 0.0
    }

    /// Ratio that maps raw prices onto the adjusted scale.
    pub fn adjustment(&self) -> f64 {
        if self.close > 0.0 {
            self.adj_close / self.close
        } else {
            1.0
        }
    }

    /// Open/high/low/close rescaled onto the adjusted-close scale.
    pub fn adjusted_ohlc(&self) -> (f64, f64, f64, f64) {
        let k = self.adjustment();
        (self.open * k, self.high * k, self.low * k, self.adj_close)
    }
}

/// GICS-style sector label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sector {
    CommunicationServices,
    ConsumerDiscretionary,
    ConsumerStaples,
    Energy,
    Financials,
    HealthCare,
    Industrials,
    InformationTechnology,
    Materials,
    RealEstate,
    Utilities,
}

impl Sector {
    pub const ALL: [Sector; 11] = [
        Sector::CommunicationServices,
        Sector::ConsumerDiscretionary,
        Sector::ConsumerStaples,
        Sector::Energy,
        Sector::Financials,
        Sector::HealthCare,
        Sector::Industrials,
        Sector::InformationTechnology,
        Sector::Materials,
        Sector::RealEstate,
        Sector::Utilities,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Sector::CommunicationServices => "Communication Services",
            Sector::ConsumerDiscretionary => "Consumer Discretionary",
            Sector::ConsumerStaples => "Consumer Staples",
            Sector::Energy => "Energy",
            Sector::Financials => "Financials",
            Sector::HealthCare => "Health Care",
            Sector::Industrials => "Industrials",
            Sector::InformationTechnology => "Information Technology",
            Sector::Materials => "Materials",
            Sector::RealEstate => "Real Estate",
            Sector::Utilities => "Utilities",
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Sector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Sector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for Sector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Sector::ALL
            .iter()
            .copied()
            .find(|sector| {
                let name: String = sector.as_str().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
                name.to_ascii_lowercase() == key
            })
            .ok_or_else(|| Error::InvalidInput(format!("unknown sector `{s}`")))
    }
}

/// Date-ordered daily bars of one ticker.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub ticker: String,
    pub sector: Option<Sector>,
    pub bars: Vec<DailyBar>,
}

impl DailySeries {
    /// Builds a series, checking that dates strictly increase.
    pub fn new(ticker: impl Into<String>, sector: Option<Sector>, bars: Vec<DailyBar>) -> crate::Result<Self> {
        let ticker = ticker.into();
        if let Some(w) = bars.windows(2).find(|w| w[1].date <= w[0].date) {
            return Err(Error::InvalidInput(format!(
                "{ticker}: dates not strictly increasing at {}",
                w[1].date
            )));
        }
        Ok(DailySeries { ticker, sector, bars })
    }
}

/// The Friday that closes the week containing `date`. Saturdays and Sundays
/// roll forward to the following Friday.
pub fn week_ending_friday(date: NaiveDate) -> NaiveDate {
    let from_monday = date.weekday().num_days_from_monday() as i64;
    let friday = Weekday::Fri.num_days_from_monday() as i64;
    let ahead = (friday - from_monday).rem_euclid(7);
    date + Duration::days(ahead)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn friday_week_end() {
        // 2020-06-08 is a Monday.
        assert_eq!(week_ending_friday(d(2020, 6, 8)), d(2020, 6, 12));
        assert_eq!(week_ending_friday(d(2020, 6, 12)), d(2020, 6, 12));
        assert_eq!(week_ending_friday(d(2020, 6, 13)), d(2020, 6, 19));
        assert_eq!(week_ending_friday(d(2020, 6, 14)), d(2020, 6, 19));
    }

    #[test]
    fn sector_parsing() {
        assert_eq!("Health Care".parse::<Sector>().unwrap(), Sector::HealthCare);
        assert_eq!("information_technology".parse::<Sector>().unwrap(), Sector::InformationTechnology);
        assert!("Crypto".parse::<Sector>().is_err());
    }

    #[test]
    fn series_rejects_duplicate_dates() {
        let bar = DailyBar {
            date: d(2020, 1, 2),
            open: 1.0,
            high: 1.0,
            low: 1.0,
            close: 1.0,
            adj_close: 1.0,
            volume: 0.0,
            dividend: 0.0,
            split: 1.0,
        };
        assert!(DailySeries::new("X", None, vec![bar, bar]).is_err());
    }
}
