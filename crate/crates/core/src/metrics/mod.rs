//! Directional accuracy and error metrics, their aggregation by stock, year
//! and index, threshold-conditional summaries and slope diagnostics.

mod slopes;
mod threshold;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::ensemble::INDEX_TICKER;
use crate::error::{Error, Result};
use crate::models::Prediction;

pub use slopes::{slope_diagnostics, GroupSlope, SlopeGroup, SlopeReport};
pub use threshold::{threshold_report, ThresholdSummary};

/// Pseudo model id for the constant "always up" forecast.
pub const ALWAYS_UP_ID: &str = "always_up";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub n: usize,
    pub da: f64,
    pub uda: f64,
    pub dda: f64,
    pub rmse: f64,
    pub mse: f64,
    pub mae: f64,
}

fn up(x: f64) -> bool {
    x >= 0.0
}

/// Metrics over the `n` periods ending at index `t` (inclusive).
pub fn compute_metrics_window(realized: &[f64], predicted: &[f64], t: usize, n: usize) -> Result<MetricValues> {
    if realized.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "{} realized values but {} predictions",
            realized.len(),
            predicted.len()
        )));
    }
    if n == 0 || t >= realized.len() || n > t + 1 {
        return Err(Error::InvalidInput(format!("window of {n} ending at {t} out of range")));
    }
    let r = &realized[t + 1 - n..=t];
    let p = &predicted[t + 1 - n..=t];
    let mut hits = 0usize;
    let (mut ups, mut up_hits, mut downs, mut down_hits) = (0usize, 0usize, 0usize, 0usize);
    let (mut sq, mut abs) = (0.0, 0.0);
    for (&ri, &pi) in r.iter().zip(p) {
        let hit = up(ri) == up(pi);
        hits += hit as usize;
        if up(ri) {
            ups += 1;
            up_hits += hit as usize;
        } else {
            downs += 1;
            down_hits += hit as usize;
        }
        sq += (ri - pi).powi(2);
        abs += (ri - pi).abs();
    }
    let ratio = |k: usize, m: usize| if m == 0 { 1.0 } else { k as f64 / m as f64 };
    let mse = sq / n as f64;
    Ok(MetricValues {
        n,
        da: hits as f64 / n as f64,
        uda: ratio(up_hits, ups),
        dda: ratio(down_hits, downs),
        rmse: mse.sqrt(),
        mse,
        mae: abs / n as f64,
    })
}

pub fn compute_metrics(realized: &[f64], predicted: &[f64]) -> Result<MetricValues> {
    if realized.is_empty() {
        return Err(Error::InvalidInput("metrics need at least one period".into()));
    }
    compute_metrics_window(realized, predicted, realized.len().saturating_sub(1), realized.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricScope {
    Stock,
    AllStocks,
    Index,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub model_id: String,
    pub scope: MetricScope,
    /// Empty for the pooled and index scopes.
    pub ticker: String,
    /// `None` for the full evaluation period.
    pub year: Option<i32>,
    #[serde(flatten)]
    pub values: MetricValues,
}

/// A prediction joined with its realized return.
#[derive(Debug, Clone, PartialEq)]
pub struct Joined {
    pub model_id: String,
    pub ticker: String,
    pub week_end: NaiveDate,
    pub predicted: f64,
    pub realized: f64,
}

/// Joins predictions dated on or after `eval_start` with realized returns.
/// [`INDEX_TICKER`] rows are joined with `index_realized`. The always-up
/// forecast is added for every (ticker, week) that any model predicted.
pub fn join(
    predictions: &[Prediction],
    realized: &BTreeMap<(String, NaiveDate), f64>,
    index_realized: &BTreeMap<NaiveDate, f64>,
    eval_start: NaiveDate,
) -> Vec<Joined> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for p in predictions.iter().filter(|p| p.week_end >= eval_start) {
        let r = if p.ticker == INDEX_TICKER {
            index_realized.get(&p.week_end).copied()
        } else {
            realized.get(&(p.ticker.clone(), p.week_end)).copied()
        };
        if let Some(r) = r {
            if seen.insert((p.ticker.clone(), p.week_end)) {
                out.push(Joined {
                    model_id: ALWAYS_UP_ID.into(),
                    ticker: p.ticker.clone(),
                    week_end: p.week_end,
                    predicted: 0.0,
                    realized: r,
                });
            }
            out.push(Joined {
                model_id: p.model_id.clone(),
                ticker: p.ticker.clone(),
                week_end: p.week_end,
                predicted: p.value,
                realized: r,
            });
        }
    }
    out
}

/// Records per (stock, year), per stock, pooled over stocks per year and in
/// full, and for the index per year and in full; ordered by model, scope,
/// year (full last) and ticker.
pub fn aggregate(rows: &[Joined]) -> Vec<MetricsRecord> {
    type Key = (String, MetricScope, Option<i32>, String);
    let mut groups: BTreeMap<Key, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut sorted: Vec<&Joined> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.model_id, &a.ticker, a.week_end).cmp(&(&b.model_id, &b.ticker, b.week_end)));
    for row in sorted {
        let year = Some(row.week_end.year());
        let keys: Vec<(MetricScope, Option<i32>, String)> = if row.ticker == INDEX_TICKER {
            vec![(MetricScope::Index, year, String::new()), (MetricScope::Index, None, String::new())]
        } else {
            vec![
                (MetricScope::Stock, year, row.ticker.clone()),
                (MetricScope::Stock, None, row.ticker.clone()),
                (MetricScope::AllStocks, year, String::new()),
                (MetricScope::AllStocks, None, String::new()),
            ]
        };
        for (scope, year, ticker) in keys {
            let entry = groups.entry((row.model_id.clone(), scope, year, ticker)).or_default();
            entry.0.push(row.realized);
            entry.1.push(row.predicted);
        }
    }
    let mut out: Vec<MetricsRecord> = groups
        .into_iter()
        .filter_map(|((model_id, scope, year, ticker), (r, p))| {
            compute_metrics(&r, &p).ok().map(|values| MetricsRecord { model_id, scope, ticker, year, values })
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.model_id, a.scope, a.year.is_none(), a.year, &a.ticker).cmp(&(
            &b.model_id,
            b.scope,
            b.year.is_none(),
            b.year,
            &b.ticker,
        ))
    });
    out
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    model_id: &'a str,
    scope: MetricScope,
    ticker: &'a str,
    period: String,
    n: usize,
    da: f64,
    uda: f64,
    dda: f64,
    rmse: f64,
    mse: f64,
    mae: f64,
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for r in records {
        let v = r.values;
        writer.serialize(MetricsRow {
            model_id: &r.model_id,
            scope: r.scope,
            ticker: &r.ticker,
            period: r.year.map_or_else(|| "full".to_string(), |y| y.to_string()),
            n: v.n,
            da: v.da,
            uda: v.uda,
            dda: v.dda,
            rmse: v.rmse,
            mse: v.mse,
            mae: v.mae,
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Full-period pooled and index metrics as an aligned text table.
pub fn summary_table(records: &[MetricsRecord]) -> String {
    let mut out = String::new();
    for (scope, title) in [(MetricScope::AllStocks, "all stocks"), (MetricScope::Index, "index")] {
        let rows: Vec<&MetricsRecord> = records.iter().filter(|r| r.scope == scope && r.year.is_none()).collect();
        if rows.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{title}");
        let _ = writeln!(
            out,
            "  {:<16} {:>7} {:>7} {:>7} {:>7} {:>9} {:>9} {:>9}",
            "model", "n", "DA", "UDA", "DDA", "RMSE", "MSE", "MAE"
        );
        for r in rows {
            let v = r.values;
            let _ = writeln!(
                out,
                "  {:<16} {:>7} {:>7.4} {:>7.4} {:>7.4} {:>9.5} {:>9.6} {:>9.5}",
                r.model_id, v.n, v.da, v.uda, v.dda, v.rmse, v.mse, v.mae
            );
        }
    }
    out
}

/// Per-year pooled DA path for each model: `model_id,year,da`.
pub fn write_da_paths_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    writer.write_record(["model_id", "scope", "year", "da"])?;
    for r in records.iter().filter(|r| r.scope != MetricScope::Stock) {
        if let Some(year) = r.year {
            let scope = if r.scope == MetricScope::Index { "index" } else { "all_stocks" };
            writer.write_record([r.model_id.as_str(), scope, &year.to_string(), &r.values.da.to_string()])?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Predicted-versus-realized pairs of one model for scatter plots.
pub fn write_scatter_csv(path: &Path, rows: &[Joined], model_id: &str) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    writer.write_record(["ticker", "week_end", "predicted", "realized"])?;
    for r in rows.iter().filter(|r| r.model_id == model_id) {
        writer.write_record([
            r.ticker.as_str(),
            &r.week_end.to_string(),
            &r.predicted.to_string(),
            &r.realized.to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_example() {
        let m = compute_metrics(&[0.01, -0.02], &[0.02, -0.01]).unwrap();
        assert_eq!((m.da, m.uda, m.dda), (1.0, 1.0, 1.0));
        assert!((m.rmse - 0.01).abs() < 1e-15 && (m.mae - 0.01).abs() < 1e-15);
    }

    #[test]
    fn degenerate_branches() {
        let m = compute_metrics(&[-0.1, -0.2], &[0.1, -0.1]).unwrap();
        assert_eq!(m.uda, 1.0);
        assert_eq!(m.dda, 0.5);
        let m = compute_metrics(&[0.0, 0.2], &[-0.1, 0.1]).unwrap();
        assert_eq!(m.dda, 1.0);
        assert_eq!(m.uda, 0.5);
    }

    #[test]
    fn zero_counts_as_up() {
        let m = compute_metrics(&[0.0], &[0.0]).unwrap();
        assert_eq!(m.da, 1.0);
        let m = compute_metrics(&[0.0], &[-1e-9]).unwrap();
        assert_eq!(m.da, 0.0);
    }

    #[test]
    fn errors() {
        assert!(compute_metrics(&[0.1], &[0.1, 0.2]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics_window(&[0.1, 0.2], &[0.1, 0.2], 0, 2).is_err());
    }

    #[test]
    fn window_is_a_slice() {
        let r = [0.1, -0.2, 0.3, -0.4, 0.5];
        let p = [0.2, 0.2, -0.3, -0.1, 0.4];
        assert_eq!(compute_metrics_window(&r, &p, 3, 2).unwrap(), compute_metrics(&r[2..4], &p[2..4]).unwrap());
    }

    fn joined(model: &str, ticker: &str, week: NaiveDate, p: f64, r: f64) -> Joined {
        Joined { model_id: model.into(), ticker: ticker.into(), week_end: week, predicted: p, realized: r }
    }

    #[test]
    fn pooled_da_is_size_weighted() {
        let w = |y, d| NaiveDate::from_ymd_opt(y, 3, d).unwrap();
        let mut rows = Vec::new();
        // Stock A: 6 of 10 right; stock B: 8 of 10 right.
        for (ticker, right) in [("A", 6), ("B", 8)] {
            for i in 0..10 {
                let p = if i < right { 0.1 } else { -0.1 };
                rows.push(joined("m", ticker, w(2005, i + 1), p, 0.2));
            }
        }
        let recs = aggregate(&rows);
        let pooled = recs.iter().find(|r| r.scope == MetricScope::AllStocks && r.year.is_none()).unwrap();
        assert!((pooled.values.da - 0.7).abs() < 1e-15);
        assert_eq!(pooled.values.n, 20);
        let single = recs.iter().find(|r| r.ticker == "A" && r.year == Some(2005)).unwrap();
        assert_eq!(single.values, compute_metrics(&[0.2; 10], &[0.1, 0.1, 0.1, 0.1, 0.1, 0.1, -0.1, -0.1, -0.1, -0.1]).unwrap());
    }

    #[test]
    fn year_partition_sums_to_full() {
        let rows: Vec<Joined> = (0..30)
            .map(|i| {
                let week = NaiveDate::from_ymd_opt(2004 + i / 10, 1 + (i % 10) as u32, 5).unwrap();
                joined("m", "A", week, (i as f64).sin(), (i as f64).cos())
            })
            .collect();
        let recs = aggregate(&rows);
        let yearly: usize = recs.iter().filter(|r| r.scope == MetricScope::Stock && r.year.is_some()).map(|r| r.values.n).sum();
        let full = recs.iter().find(|r| r.scope == MetricScope::Stock && r.year.is_none()).unwrap();
        assert_eq!(yearly, full.values.n);
    }

    #[test]
    fn join_adds_always_up_and_index() {
        let week = NaiveDate::from_ymd_opt(2005, 1, 7).unwrap();
        let preds = vec![
            Prediction { ticker: "A".into(), week_end: week, model_id: "m".into(), value: 0.1 },
            Prediction { ticker: "A".into(), week_end: week, model_id: "n".into(), value: -0.1 },
            Prediction { ticker: INDEX_TICKER.into(), week_end: week, model_id: "m".into(), value: 0.1 },
            Prediction { ticker: "A".into(), week_end: week - chrono::Days::new(7), model_id: "m".into(), value: 0.1 },
        ];
        let realized = BTreeMap::from([(("A".to_string(), week), -0.3)]);
        let index = BTreeMap::from([(week, 0.2)]);
        let rows = join(&preds, &realized, &index, week);
        assert_eq!(rows.len(), 5);
        let recs = aggregate(&rows);
        let up = recs.iter().find(|r| r.model_id == ALWAYS_UP_ID && r.scope == MetricScope::Index && r.year.is_none()).unwrap();
        assert_eq!(up.values.da, 1.0);
        assert!(summary_table(&recs).contains("always_up"));
    }

    proptest! {
        #[test]
        fn rmse_at_least_mae(pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..50)) {
            let (r, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = compute_metrics(&r, &p).unwrap();
            prop_assert!(m.rmse >= m.mae - 1e-15);
            prop_assert!((0.0..=1.0).contains(&m.da) && (0.0..=1.0).contains(&m.uda) && (0.0..=1.0).contains(&m.dda));
        }

        #[test]
        fn perfect_and_opposite(r in prop::collection::vec(-1.0f64..1.0, 1..50)) {
            prop_assert_eq!(compute_metrics(&r, &r).unwrap().da, 1.0);
            if r.iter().all(|&v| v != 0.0) {
                let opposite: Vec<f64> = r.iter().map(|v| -v - 1e-12 * v.signum()).collect();
                prop_assert_eq!(compute_metrics(&r, &opposite).unwrap().da, 0.0);
            }
        }
    }
}
