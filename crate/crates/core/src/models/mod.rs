//! Base model families behind one fit/predict contract.

mod adam;
pub mod arima;
mod artifact;
pub mod ffnn;
pub mod forest;
pub mod linear;
pub mod lstm;
pub mod stationarity;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureColumn;

pub use artifact::{read_artifact, write_artifact, ArtifactManifest, FittedModel, ARTIFACT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Arima,
    Linear,
    RandomForest,
    Ffnn,
    Lstm2,
    Lstm1Finetune,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 6] = [
        ModelFamily::Arima,
        ModelFamily::Linear,
        ModelFamily::RandomForest,
        ModelFamily::Ffnn,
        ModelFamily::Lstm2,
        ModelFamily::Lstm1Finetune,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Arima => "arima",
            ModelFamily::Linear => "linear",
            ModelFamily::RandomForest => "random_forest",
            ModelFamily::Ffnn => "ffnn",
            ModelFamily::Lstm2 => "lstm2",
            ModelFamily::Lstm1Finetune => "lstm1_finetune",
        }
    }

    /// Predictor columns each family consumes.
    pub fn feature_set(self) -> Vec<FeatureColumn> {
        use FeatureColumn::*;
        match self {
            ModelFamily::Arima => vec![Return],
            ModelFamily::Linear => vec![Return, Sentiment, Cci, Macdh, Rsi, KdjK, Wr, Cmf],
            _ => vec![Return, Sentiment, Cci, Macdh, Rsi, KdjK, Wr, Cmf, Pe, Ps, Pb, AtrPct],
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelFamily::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown model family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    PerStock,
    PerSector,
    AllStock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lookback {
    AllPast,
    #[serde(rename = "rolling_10y")]
    Rolling10y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Update {
    Yearly,
    Monthly,
}

/// Training budget for the neural families; the defaults are the standard
/// configuration, smaller values exist for quick runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub dropout: f64,
    pub finetune_learning_rate: f64,
    pub finetune_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.1,
            dropout: 0.6,
            finetune_learning_rate: 1e-4,
            finetune_epochs: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { trees: 400, max_depth: 8, min_samples_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Identifier used in prediction tables; defaults to the family name.
    pub id: String,
    pub family: ModelFamily,
    pub scope: Scope,
    pub lookback: Lookback,
    pub update: Update,
    pub feature_set: Vec<FeatureColumn>,
    pub seed: u64,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub forest: ForestConfig,
}

impl ModelSpec {
    /// The standard configuration of a family.
    pub fn standard(family: ModelFamily, seed: u64) -> ModelSpec {
        let (scope, lookback, update) = match family {
            ModelFamily::Arima => (Scope::PerStock, Lookback::AllPast, Update::Yearly),
            ModelFamily::Linear => (Scope::AllStock, Lookback::Rolling10y, Update::Yearly),
            ModelFamily::RandomForest => (Scope::PerSector, Lookback::Rolling10y, Update::Yearly),
            ModelFamily::Ffnn => (Scope::AllStock, Lookback::Rolling10y, Update::Monthly),
            ModelFamily::Lstm2 | ModelFamily::Lstm1Finetune => (Scope::AllStock, Lookback::AllPast, Update::Yearly),
        };
        ModelSpec {
            id: family.name().to_string(),
            family,
            scope,
            lookback,
            update,
            feature_set: family.feature_set(),
            seed,
            train: TrainConfig::default(),
            forest: ForestConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::config("model.id", "empty"));
        }
        if self.family == ModelFamily::Arima {
            if self.scope != Scope::PerStock {
                return Err(Error::config(format!("model.{}.scope", self.id), "arima is fitted per stock"));
            }
            if self.feature_set != [FeatureColumn::Return] {
                return Err(Error::config(format!("model.{}.feature_set", self.id), "arima is univariate in return"));
            }
        }
        if self.feature_set.is_empty() {
            return Err(Error::config(format!("model.{}.feature_set", self.id), "empty"));
        }
        if !(0.0..1.0).contains(&self.train.dropout) {
            return Err(Error::config(format!("model.{}.train.dropout", self.id), "must be in [0, 1)"));
        }
        if self.train.batch_size == 0 || self.train.max_epochs == 0 {
            return Err(Error::config(format!("model.{}.train", self.id), "batch_size and max_epochs must be positive"));
        }
        if self.forest.trees == 0 || self.forest.max_depth == 0 {
            return Err(Error::config(format!("model.{}.forest", self.id), "trees and max_depth must be positive"));
        }
        Ok(())
    }
}

/// The exchange record between models, ensemble and metrics: the predicted
/// return of `ticker` over the week ending `week_end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub ticker: String,
    pub week_end: NaiveDate,
    pub model_id: String,
    pub value: f64,
}

pub fn write_predictions_csv(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for p in predictions {
        writer.serialize(p)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<Prediction>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["ticker", "week_end", "model_id", "value"] {
        return Err(Error::parse(path, "expected header `ticker,week_end,model_id,value`"));
    }
    let mut out = Vec::new();
    for record in reader.deserialize::<Prediction>() {
        let p = record.map_err(|e| Error::parse(path, e.to_string()))?;
        if !p.value.is_finite() {
            return Err(Error::parse(path, format!("non-finite prediction for {} {}", p.ticker, p.week_end)));
        }
        out.push(p);
    }
    Ok(out)
}

/// Row-major design matrix: one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Design {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Design {
        assert_eq!(data.len(), rows * cols, "design size mismatch");
        Design { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Design {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Design::new(rows.len(), cols, data)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }
}
