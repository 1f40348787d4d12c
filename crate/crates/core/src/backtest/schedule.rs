use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Lookback, Update};

/// Fit dates for one update policy. The first fit closes the two-year
/// warm-up and produces the first year of base predictions; evaluation
/// starts the year after.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub warmup_end: NaiveDate,
    /// All fit dates, strictly increasing; the first equals `warmup_end`.
    pub fits: Vec<NaiveDate>,
    pub data_end: NaiveDate,
    pub eval_start: NaiveDate,
}

fn year_end(year: i32) -> NaiveDate {
    NaiveDate::from_ymd_opt(year, 12, 31).expect("valid date")
}

fn month_end(year: i32, month: u32) -> NaiveDate {
    let first = NaiveDate::from_ymd_opt(year, month, 1).expect("valid date");
    first + Months::new(1) - chrono::Days::new(1)
}

impl Schedule {
    /// Fit dates after the initial one.
    pub fn refits(&self) -> &[NaiveDate] {
        &self.fits[1..]
    }

    /// Index of the fit that predicts week `week`, if any.
    pub fn fit_for(&self, week: NaiveDate) -> Option<usize> {
        if week <= self.warmup_end || week > self.data_end {
            return None;
        }
        Some(self.fits.partition_point(|&b| b < week) - 1)
    }

    /// Weeks in `(fits[k], fits[k+1]]`, open-ended for the last fit.
    pub fn interval(&self, k: usize) -> (NaiveDate, Option<NaiveDate>) {
        (self.fits[k], self.fits.get(k + 1).copied())
    }
}

pub fn build_schedule(first: NaiveDate, last: NaiveDate, update: Update) -> Result<Schedule> {
    let start_year = first.year();
    let warmup_end = year_end(start_year + 1);
    if last < warmup_end + chrono::Days::new(358) {
        return Err(Error::InsufficientHistory(format!(
            "data {first} to {last} does not cover two warm-up years plus one prediction year"
        )));
    }
    // The final week may end in January after the last trading day of the
    // year; fit dates are cut at that week's Monday.
    let final_monday = last - chrono::Days::new(4);
    let mut fits = vec![warmup_end];
    match update {
        Update::Yearly => {
            fits.extend((start_year + 2..final_monday.year()).map(year_end));
        }
        Update::Monthly => {
            let mut d = warmup_end;
            loop {
                let next = d + chrono::Days::new(1);
                d = month_end(next.year(), next.month());
                if d >= final_monday {
                    break;
                }
                fits.push(d);
            }
        }
    }
    Ok(Schedule {
        warmup_end,
        fits,
        data_end: last,
        eval_start: NaiveDate::from_ymd_opt(start_year + 3, 1, 1).expect("valid date"),
    })
}

/// Earliest row date (exclusive) a fit at `boundary` may train on.
pub fn window_start(boundary: NaiveDate, lookback: Lookback) -> Option<NaiveDate> {
    match lookback {
        Lookback::AllPast => None,
        Lookback::Rolling10y => boundary.checked_sub_months(Months::new(120)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn twenty_year_yearly_schedule() {
        let s = build_schedule(d(2000, 1, 7), d(2019, 12, 27), Update::Yearly).unwrap();
        assert_eq!(s.warmup_end, d(2001, 12, 31));
        assert_eq!(s.refits().len(), 17);
        assert_eq!(s.refits()[0], d(2002, 12, 31));
        assert_eq!(*s.refits().last().unwrap(), d(2018, 12, 31));
        assert_eq!(s.eval_start, d(2003, 1, 1));
        assert_eq!(s.fit_for(d(2003, 1, 3)), Some(1));
        assert_eq!(s.fit_for(d(2002, 1, 4)), Some(0));
        assert_eq!(s.fit_for(d(2001, 12, 28)), None);
    }

    #[test]
    fn monthly_schedule_has_twelve_boundaries_per_year() {
        let s = build_schedule(d(2000, 1, 7), d(2005, 6, 24), Update::Monthly).unwrap();
        assert_eq!(s.fits.iter().filter(|b| b.year() == 2003).count(), 12);
        assert!(s.fits.contains(&d(2003, 2, 28)));
        assert!(s.fits.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn final_week_spilling_into_january_adds_no_fit() {
        // Tuesday 2019-12-31 belongs to the week ending Friday 2020-01-03.
        let s = build_schedule(d(2000, 1, 7), d(2020, 1, 3), Update::Yearly).unwrap();
        assert_eq!(s.refits().len(), 17);
        let m = build_schedule(d(2000, 1, 7), d(2020, 1, 3), Update::Monthly).unwrap();
        assert_eq!(*m.fits.last().unwrap(), d(2019, 11, 30));
    }

    #[test]
    fn short_range_rejected() {
        assert!(build_schedule(d(2000, 1, 7), d(2002, 6, 28), Update::Yearly).is_err());
    }

    #[test]
    fn rolling_window_truncates_to_available() {
        // Ten years before 2005 predates the data, so every row qualifies.
        let start = window_start(d(2005, 12, 31), Lookback::Rolling10y).unwrap();
        assert_eq!(start, d(1995, 12, 31));
        assert!(start < d(2000, 1, 7));
        assert_eq!(window_start(d(2005, 12, 31), Lookback::AllPast), None);
    }
}
