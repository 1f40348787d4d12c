//! Walk-forward protocol: fit schedules, lookback windows, model scopes and
//! leak-free prediction generation.

mod engine;
mod panel;
mod schedule;

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureColumn;
use crate::models::Prediction;
use crate::preprocess::ColumnTransform;

pub use engine::{derive_seed, run_walk_forward, BacktestOptions, BacktestOutput};
pub use panel::{Panel, StockPanel};
pub use schedule::{build_schedule, window_start, Schedule};

/// A prediction with its provenance: the fit that produced it and the latest
/// date of any input read (training targets or the input row).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub prediction: Prediction,
    pub fit_date: NaiveDate,
    pub input_through: NaiveDate,
}

/// A (model, ticker, week) in the prediction range without a prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub model_id: String,
    pub ticker: String,
    pub week_end: NaiveDate,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub model_id: String,
    pub fit_date: NaiveDate,
    pub group: String,
    pub column: FeatureColumn,
    /// `None` when the column was zero-filled for the window.
    pub transform: Option<ColumnTransform>,
}

#[derive(Serialize)]
struct ProvenanceRow<'a> {
    ticker: &'a str,
    week_end: NaiveDate,
    model_id: &'a str,
    fit_date: NaiveDate,
    input_through: NaiveDate,
}

pub fn write_provenance_csv(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for r in records {
        writer.serialize(ProvenanceRow {
            ticker: &r.prediction.ticker,
            week_end: r.prediction.week_end,
            model_id: &r.prediction.model_id,
            fit_date: r.fit_date,
            input_through: r.input_through,
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_skips_csv(path: &Path, skips: &[SkipRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for s in skips {
        writer.serialize(s)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct TransformRow<'a> {
    model_id: &'a str,
    fit_date: NaiveDate,
    group: &'a str,
    column: FeatureColumn,
    lambda: Option<f64>,
    mean: Option<f64>,
    sd: Option<f64>,
    cap: Option<f64>,
}

pub fn write_transforms_csv(path: &Path, records: &[TransformRecord]) -> Result<()> {
    let mut sorted: Vec<&TransformRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.model_id, a.fit_date, &a.group, a.column).cmp(&(&b.model_id, b.fit_date, &b.group, b.column))
    });
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for r in sorted {
        writer.serialize(TransformRow {
            model_id: &r.model_id,
            fit_date: r.fit_date,
            group: &r.group,
            column: r.column,
            lambda: r.transform.map(|t| t.lambda),
            mean: r.transform.map(|t| t.mean),
            sd: r.transform.map(|t| t.sd),
            cap: r.transform.map(|t| t.cap),
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
