//! Run manifest: a TOML file naming the inputs, universe filter, model specs
//! and ensemble options. Relative paths resolve against the file's directory;
//! a relative run directory resolves against `WFSTACK_RUN_ROOT` when set.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::backtest::derive_seed;
use crate::ensemble::EnsembleOptions;
use crate::error::{Error, Result};
use crate::features::FeatureColumn;
use crate::market_data::DEFAULT_REJECT_FRACTION;
use crate::models::{ForestConfig, Lookback, ModelFamily, ModelSpec, Scope, TrainConfig, Update};
use crate::text_linking::LinkThresholds;

pub const RUN_ROOT_ENV: &str = "WFSTACK_RUN_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub bars: PathBuf,
    pub alt_bars: Option<PathBuf>,
    pub sectors: PathBuf,
    pub fundamentals: Option<PathBuf>,
    pub sentiment: Option<PathBuf>,
    pub index_bars: Option<PathBuf>,
    pub companies: Option<PathBuf>,
    pub articles: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    /// Reviewed link table; the `link` stage's automatic table is used when absent.
    pub links: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniverseConfig {
    pub min_history_years: f64,
    pub reject_fraction: f64,
    /// Restrict to these tickers; all when empty.
    pub tickers: Vec<String>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
}

impl Default for UniverseConfig {
    fn default() -> Self {
        UniverseConfig {
            min_history_years: 5.0,
            reject_fraction: DEFAULT_REJECT_FRACTION,
            tickers: Vec::new(),
            start: None,
            end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub lcs: f64,
    pub cosine: f64,
    pub top_k: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        let t = LinkThresholds::default();
        LinkConfig { lcs: t.lcs, cosine: t.cosine, top_k: 5 }
    }
}

/// A model entry: the family's standard spec with optional overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub family: ModelFamily,
    pub id: Option<String>,
    pub scope: Option<Scope>,
    pub lookback: Option<Lookback>,
    pub update: Option<Update>,
    pub feature_set: Option<Vec<FeatureColumn>>,
    pub seed: Option<u64>,
    pub train: Option<TrainConfig>,
    pub forest: Option<ForestConfig>,
}

impl ModelEntry {
    pub fn standard(family: ModelFamily) -> Self {
        ModelEntry {
            family,
            id: None,
            scope: None,
            lookback: None,
            update: None,
            feature_set: None,
            seed: None,
            train: None,
            forest: None,
        }
    }

    /// The full spec; an unset seed derives from the run seed and the id.
    pub fn to_spec(&self, run_seed: u64) -> ModelSpec {
        let id = self.id.clone().unwrap_or_else(|| self.family.name().to_string());
        let mut spec = ModelSpec::standard(self.family, self.seed.unwrap_or_else(|| derive_seed(run_seed, &[&id])));
        spec.id = id;
        if let Some(v) = self.scope {
            spec.scope = v;
        }
        if let Some(v) = self.lookback {
            spec.lookback = v;
        }
        if let Some(v) = self.update {
            spec.update = v;
        }
        if let Some(v) = &self.feature_set {
            spec.feature_set = v.clone();
        }
        if let Some(v) = &self.train {
            spec.train = *v;
        }
        if let Some(v) = &self.forest {
            spec.forest = *v;
        }
        spec
    }
}

fn default_models() -> Vec<ModelEntry> {
    ModelFamily::ALL.iter().map(|&f| ModelEntry::standard(f)).collect()
}

fn default_output() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub threshold_up: f64,
    pub threshold_down: f64,
    /// Predictors for the slope diagnostics.
    pub slope_columns: Vec<FeatureColumn>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            threshold_up: 0.02,
            threshold_down: -0.02,
            slope_columns: vec![FeatureColumn::Sentiment, FeatureColumn::Pe, FeatureColumn::Rsi],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub data: DataPaths,
    #[serde(default)]
    pub universe: UniverseConfig,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default = "default_models")]
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub ensemble: EnsembleOptions,
    #[serde(default)]
    pub report: ReportConfig,
}

fn toml_field(e: &toml::de::Error) -> String {
    // toml reports the offending key in the message; keep the first line.
    e.message().lines().next().unwrap_or("invalid config").to_string()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .and_then(|s| text.get(s))
                .map(|s| s.split(['=', '\n']).next().unwrap_or(s).trim().to_string())
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| "<root>".into());
            Error::config(field, toml_field(&e))
        })
    }

    /// Reads, resolves relative paths against the file's directory and
    /// validates.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = RunConfig::parse(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve(&base, std::env::var_os(RUN_ROOT_ENV).map(PathBuf::from).as_deref());
        config.validate()?;
        Ok(config)
    }

    pub fn resolve(&mut self, base: &Path, run_root: Option<&Path>) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let d = &mut self.data;
        join(&mut d.bars);
        join(&mut d.sectors);
        for p in [
            &mut d.alt_bars,
            &mut d.fundamentals,
            &mut d.sentiment,
            &mut d.index_bars,
            &mut d.companies,
            &mut d.articles,
            &mut d.embeddings,
            &mut d.synonyms,
            &mut d.links,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        if self.output.is_relative() {
            self.output = run_root.unwrap_or(base).join(&self.output);
        }
    }

    /// Checks that every referenced input exists and the model list is usable.
    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        let required = [("data.bars", Some(&d.bars)), ("data.sectors", Some(&d.sectors))];
        let optional = [
            ("data.alt_bars", d.alt_bars.as_ref()),
            ("data.fundamentals", d.fundamentals.as_ref()),
            ("data.sentiment", d.sentiment.as_ref()),
            ("data.index_bars", d.index_bars.as_ref()),
            ("data.companies", d.companies.as_ref()),
            ("data.articles", d.articles.as_ref()),
            ("data.embeddings", d.embeddings.as_ref()),
            ("data.synonyms", d.synonyms.as_ref()),
            ("data.links", d.links.as_ref()),
        ];
        for (field, path) in required.into_iter().chain(optional) {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::config(field, format!("{} does not exist", p.display())));
                }
            }
        }
        if !(self.universe.min_history_years >= 0.0) {
            return Err(Error::config("universe.min_history_years", "must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.universe.reject_fraction) {
            return Err(Error::config("universe.reject_fraction", "must be in [0, 1]"));
        }
        if let (Some(s), Some(e)) = (self.universe.start, self.universe.end) {
            if s >= e {
                return Err(Error::config("universe.start", "must precede universe.end"));
            }
        }
        if self.models.is_empty() {
            return Err(Error::config("models", "no models configured"));
        }
        let mut ids = BTreeSet::new();
        for spec in self.model_specs() {
            spec.validate()?;
            if !ids.insert(spec.id.clone()) {
                return Err(Error::config("models.id", format!("duplicate model id `{}`", spec.id)));
            }
        }
        if self.ensemble.window_months == 0 || self.ensemble.index_window_months == 0 {
            return Err(Error::config("ensemble.window_months", "must be positive"));
        }
        Ok(())
    }

    pub fn model_specs(&self) -> Vec<ModelSpec> {
        self.models.iter().map(|m| m.to_spec(self.seed)).collect()
    }

    /// Keeps only the models whose ids are listed.
    pub fn select_models(&mut self, ids: &[String]) -> Result<()> {
        let specs = self.model_specs();
        for id in ids {
            if !specs.iter().any(|s| &s.id == id) {
                return Err(Error::config("models", format!("unknown model id `{id}`")));
            }
        }
        let keep: Vec<ModelEntry> =
            self.models.iter().zip(&specs).filter(|(_, s)| ids.contains(&s.id)).map(|(m, _)| m.clone()).collect();
        self.models = keep;
        Ok(())
    }

    pub fn link_thresholds(&self) -> LinkThresholds {
        LinkThresholds { lcs: self.link.lcs, cosine: self.link.cosine }
    }
}
