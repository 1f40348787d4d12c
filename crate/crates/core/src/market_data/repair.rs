use chrono::NaiveDate;

use super::{DailyBar, DailySeries, RawBar, Sector};
use crate::error::{Error, Result};

/// Longest run of consecutive missing days that is still repaired.
pub const MAX_MISSING_RUN: usize = 10;

/// Fills gaps by repeatedly halving the distance to the next present value.
///
/// An interior missing entry becomes the midpoint of the (already repaired)
/// previous entry and the next present input. Missing entries with no present
/// value after them repeat the previous entry.
pub fn fill_missing(values: &[Option<f64>]) -> Result<Vec<f64>> {
    let Some(first) = values.first() else {
        return Ok(Vec::new());
    };
    if first.is_none() {
        return Err(Error::LeadingMissing);
    }
    check_runs(values)?;

    let mut out = Vec::with_capacity(values.len());
    out.push(first.unwrap());
    for i in 1..values.len() {
        let filled = match values[i] {
            Some(v) => v,
            None => {
                let prev = out[i - 1];
                match values[i + 1..].iter().flatten().next() {
                    Some(&next) => (prev + next) / 2.0,
                    None => prev,
                }
            }
        };
        out.push(filled);
    }
    Ok(out)
}

fn check_runs(values: &[Option<f64>]) -> Result<()> {
    let mut start = 0;
    let mut run = 0;
    for (i, v) in values.iter().enumerate() {
        if v.is_none() {
            if run == 0 {
                start = i;
            }
            run += 1;
            if run > MAX_MISSING_RUN {
                return Err(Error::MissingRunTooLong { start, run: count_run(values, start), limit: MAX_MISSING_RUN });
            }
        } else {
            run = 0;
        }
    }
    Ok(())
}

fn count_run(values: &[Option<f64>], start: usize) -> usize {
    values[start..].iter().take_while(|v| v.is_none()).count()
}

/// Turns raw rows (possibly with empty fields) into a complete daily series.
///
/// `calendar` lists extra trading dates known from another source; any date in
/// it that the raw rows lack is inserted as an all-missing row before repair.
/// Price and volume columns are repaired with [`fill_missing`]; a missing
/// dividend means no dividend and a missing split means no split.
pub fn repair_bars(
    ticker: &str,
    sector: Option<Sector>,
    raw: &[RawBar],
    calendar: &[NaiveDate],
) -> Result<DailySeries> {
    let mut rows: Vec<RawBar> = raw.to_vec();
    let known: std::collections::BTreeSet<NaiveDate> = rows.iter().map(|r| r.date).collect();
    let first = rows.iter().map(|r| r.date).min();
    let last = rows.iter().map(|r| r.date).max();
    if let (Some(first), Some(last)) = (first, last) {
        for &date in calendar {
            if date > first && date < last && !known.contains(&date) {
                rows.push(RawBar::missing(date));
            }
        }
    }
    rows.sort_by_key(|r| r.date);
    rows.dedup_by_key(|r| r.date);
    if rows.is_empty() {
        return Err(Error::InsufficientHistory(format!("{ticker}: no rows")));
    }

    let column = |f: fn(&RawBar) -> Option<f64>| -> Result<Vec<f64>> {
        let values: Vec<Option<f64>> = rows.iter().map(f).collect();
        fill_missing(&values).map_err(|e| match e {
            Error::LeadingMissing => Error::InvalidInput(format!("{ticker}: first row has missing fields")),
            other => other,
        })
    };
    let open = column(|r| r.open)?;
    let high = column(|r| r.high)?;
    let low = column(|r| r.low)?;
    let close = column(|r| r.close)?;
    let adj_close = column(|r| r.adj_close)?;
    let volume = column(|r| r.volume)?;

    let bars = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            // Columns are repaired independently, so restore the range ordering.
            let hi = high[i].max(open[i]).max(close[i]);
            let lo = low[i].min(open[i]).min(close[i]);
            DailyBar {
                date: r.date,
                open: open[i],
                high: hi,
                low: lo,
                close: close[i],
                adj_close: adj_close[i],
                volume: volume[i].max(0.0),
                dividend: r.dividend.unwrap_or(0.0),
                split: r.split.unwrap_or(1.0),
            }
        })
        .collect::<Vec<_>>();
    if let Some(bad) = bars.iter().find(|b| b.adj_close <= 0.0) {
        return Err(Error::InvalidInput(format!("{ticker}: non-positive adjusted close on {}", bad.date)));
    }
    DailySeries::new(ticker, sector, bars)
}
