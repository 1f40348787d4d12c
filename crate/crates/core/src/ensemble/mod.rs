//! Zero-intercept nonnegative stacking of base-model predictions, per stock
//! or pooled, plus the index-level ensemble over cross-sectional medians.

mod nnls;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Months, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backtest::{Schedule, SkipRecord};
use crate::error::{Error, Result};
use crate::models::{Design, Prediction};
use crate::stats::median;

pub use nnls::{fit_nnls, residual_norm};

/// Model id used for stacked predictions.
pub const ENSEMBLE_ID: &str = "ensemble";
/// Ticker used for index-level predictions.
pub const INDEX_TICKER: &str = "INDEX";

pub const DEFAULT_BASE_MODELS: [&str; 4] = ["random_forest", "ffnn", "lstm1_finetune", "lstm2"];
pub const DEFAULT_INDEX_MODELS: [&str; 5] = ["linear", "random_forest", "ffnn", "lstm2", "lstm1_finetune"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    /// One weight vector per window fitted on all stocks' pairs.
    Pooled,
    /// One weight vector per stock per window.
    PerStock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleOptions {
    pub mode: EnsembleMode,
    pub base_models: Vec<String>,
    pub window_months: u32,
    pub index_models: Vec<String>,
    pub index_window_months: u32,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            mode: EnsembleMode::Pooled,
            base_models: DEFAULT_BASE_MODELS.iter().map(|s| s.to_string()).collect(),
            window_months: 24,
            index_models: DEFAULT_INDEX_MODELS.iter().map(|s| s.to_string()).collect(),
            index_window_months: 12,
        }
    }
}

/// Weights over `model_ids` and the first and last week of the pairs that
/// produced them. `group` is the ticker for per-stock fits, `"all"` for
/// pooled fits and [`INDEX_TICKER`] for the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFit {
    pub group: String,
    pub fit_date: NaiveDate,
    pub model_ids: Vec<String>,
    pub weights: Vec<f64>,
    pub window: (NaiveDate, NaiveDate),
    pub n: usize,
}

impl EnsembleFit {
    pub fn predict(&self, base: &[f64]) -> f64 {
        self.weights.iter().zip(base).map(|(w, p)| w * p).sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct EnsembleOutput {
    pub predictions: Vec<Prediction>,
    pub fits: Vec<EnsembleFit>,
    pub skips: Vec<SkipRecord>,
}

/// One (group, week) with every base prediction present.
#[derive(Debug, Clone)]
struct Pair {
    group: String,
    week: NaiveDate,
    base: Vec<f64>,
}

/// Gathers predictions by (ticker, week) in `model_ids` order. Rows missing a
/// model are returned separately with the missing ids.
#[allow(clippy::type_complexity)]
fn collect_rows(
    predictions: &[Prediction],
    model_ids: &[String],
) -> (Vec<Pair>, Vec<(String, NaiveDate, Vec<String>)>) {
    let position: BTreeMap<&str, usize> = model_ids.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
    let mut table: BTreeMap<(&str, NaiveDate), Vec<Option<f64>>> = BTreeMap::new();
    for p in predictions {
        if let Some(&j) = position.get(p.model_id.as_str()) {
            table.entry((p.ticker.as_str(), p.week_end)).or_insert_with(|| vec![None; model_ids.len()])[j] =
                Some(p.value);
        }
    }
    let mut complete = Vec::new();
    let mut incomplete = Vec::new();
    for ((ticker, week), values) in table {
        if values.iter().all(Option::is_some) {
            complete.push(Pair { group: ticker.to_string(), week, base: values.into_iter().flatten().collect() });
        } else {
            let missing =
                values.iter().zip(model_ids).filter(|(v, _)| v.is_none()).map(|(_, m)| m.clone()).collect();
            incomplete.push((ticker.to_string(), week, missing));
        }
    }
    (complete, incomplete)
}

fn fit_window(
    group: &str,
    fit_date: NaiveDate,
    model_ids: &[String],
    pairs: &[&Pair],
    realized: &dyn Fn(&Pair) -> Option<f64>,
) -> Result<Option<EnsembleFit>> {
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut weeks = Vec::new();
    for pair in pairs {
        if let Some(r) = realized(pair) {
            data.extend_from_slice(&pair.base);
            y.push(r);
            weeks.push(pair.week);
        }
    }
    if y.is_empty() {
        return Ok(None);
    }
    let design = Design::new(y.len(), model_ids.len(), data);
    let weights = fit_nnls(&design, &y)?;
    Ok(Some(EnsembleFit {
        group: group.to_string(),
        fit_date,
        model_ids: model_ids.to_vec(),
        weights,
        window: (*weeks.iter().min().expect("nonempty"), *weeks.iter().max().expect("nonempty")),
        n: y.len(),
    }))
}

/// Rows used by a fit at `boundary`: weeks in `(boundary − months, boundary]`.
fn in_window(week: NaiveDate, boundary: NaiveDate, months: u32) -> bool {
    let start = boundary.checked_sub_months(Months::new(months)).unwrap_or(NaiveDate::MIN);
    week > start && week <= boundary
}

fn validate_models(ids: &[String], field: &str) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::config(field, "at least one base model is required"));
    }
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::config(field, "duplicate model id"));
    }
    Ok(())
}

/// Stacks the stock-level base predictions.
///
/// A fit at each refit date of `schedule` uses the trailing window of
/// (base predictions, realized return) pairs whose week is on or before the
/// fit date, and predicts every week up to the next refit date. Weeks at or
/// before the first refit are training-only. Weeks missing a base
/// prediction are logged as skips, as are groups without any training pair.
pub fn stack(
    predictions: &[Prediction],
    realized: &BTreeMap<(String, NaiveDate), f64>,
    schedule: &Schedule,
    options: &EnsembleOptions,
) -> Result<EnsembleOutput> {
    validate_models(&options.base_models, "ensemble.base_models")?;
    let models = &options.base_models;
    let (pairs, incomplete) = collect_rows(predictions, models);
    let refits = schedule.refits();
    let mut out = EnsembleOutput::default();
    let Some(&first_refit) = refits.first() else {
        return Ok(out);
    };

    let interval = |week: NaiveDate| -> Option<usize> {
        (week > first_refit).then(|| refits.partition_point(|&b| b < week) - 1)
    };
    for (ticker, week, missing) in &incomplete {
        if interval(*week).is_some() {
            out.skips.push(SkipRecord {
                model_id: ENSEMBLE_ID.into(),
                ticker: ticker.clone(),
                week_end: *week,
                reason: format!("missing base prediction: {}", missing.join(" ")),
            });
        }
    }

    let lookup = |p: &Pair| realized.get(&(p.group.clone(), p.week)).copied();
    let groups: Vec<String> = match options.mode {
        EnsembleMode::Pooled => vec!["all".to_string()],
        EnsembleMode::PerStock => pairs.iter().map(|p| p.group.clone()).collect::<BTreeSet<_>>().into_iter().collect(),
    };
    let tasks: Vec<(usize, &String)> =
        (0..refits.len()).flat_map(|k| groups.iter().map(move |g| (k, g))).collect();
    let fits: Vec<Option<EnsembleFit>> = tasks
        .par_iter()
        .map(|&(k, group)| {
            let window: Vec<&Pair> = pairs
                .iter()
                .filter(|p| options.mode == EnsembleMode::Pooled || &p.group == group)
                .filter(|p| in_window(p.week, refits[k], options.window_months))
                .collect();
            fit_window(group, refits[k], models, &window, &lookup)
        })
        .collect::<Result<_>>()?;

    let mut by_key: BTreeMap<(usize, &str), &EnsembleFit> = BTreeMap::new();
    for (&(k, group), fit) in tasks.iter().zip(&fits) {
        if let Some(fit) = fit {
            by_key.insert((k, group.as_str()), fit);
        }
    }
    for pair in &pairs {
        let Some(k) = interval(pair.week) else { continue };
        let group = match options.mode {
            EnsembleMode::Pooled => "all",
            EnsembleMode::PerStock => pair.group.as_str(),
        };
        match by_key.get(&(k, group)) {
            Some(fit) => out.predictions.push(Prediction {
                ticker: pair.group.clone(),
                week_end: pair.week,
                model_id: ENSEMBLE_ID.into(),
                value: fit.predict(&pair.base),
            }),
            None => out.skips.push(SkipRecord {
                model_id: ENSEMBLE_ID.into(),
                ticker: pair.group.clone(),
                week_end: pair.week,
                reason: format!("no training pairs for the fit at {}", refits[k]),
            }),
        }
    }
    out.fits = fits.into_iter().flatten().collect();
    out.predictions.sort_by(|a, b| (&a.ticker, a.week_end).cmp(&(&b.ticker, b.week_end)));
    out.skips.sort_by(|a, b| (&a.ticker, a.week_end).cmp(&(&b.ticker, b.week_end)));
    Ok(out)
}

/// Per model and week, the median prediction across stocks, emitted as
/// [`INDEX_TICKER`] predictions under the model's id.
pub fn index_features(predictions: &[Prediction], model_ids: &[String]) -> Vec<Prediction> {
    let wanted: BTreeSet<&str> = model_ids.iter().map(String::as_str).collect();
    let mut cells: BTreeMap<(&str, NaiveDate), Vec<f64>> = BTreeMap::new();
    for p in predictions {
        if p.ticker != INDEX_TICKER && wanted.contains(p.model_id.as_str()) {
            cells.entry((p.model_id.as_str(), p.week_end)).or_default().push(p.value);
        }
    }
    cells
        .into_iter()
        .filter_map(|((model, week), values)| {
            median(&values).map(|value| Prediction {
                ticker: INDEX_TICKER.into(),
                week_end: week,
                model_id: model.to_string(),
                value,
            })
        })
        .collect()
}

/// Index ensemble: NNLS over the per-week cross-sectional medians of the
/// index models, refit at each refit date on a trailing window of index
/// returns. Returns the median features together with the stacked output.
pub fn stack_index(
    predictions: &[Prediction],
    index_realized: &BTreeMap<NaiveDate, f64>,
    schedule: &Schedule,
    options: &EnsembleOptions,
) -> Result<(Vec<Prediction>, EnsembleOutput)> {
    validate_models(&options.index_models, "ensemble.index_models")?;
    let features = index_features(predictions, &options.index_models);
    let realized: BTreeMap<(String, NaiveDate), f64> =
        index_realized.iter().map(|(&w, &r)| ((INDEX_TICKER.to_string(), w), r)).collect();
    let index_options = EnsembleOptions {
        mode: EnsembleMode::PerStock,
        base_models: options.index_models.clone(),
        window_months: options.index_window_months,
        ..options.clone()
    };
    let out = stack(&features, &realized, schedule, &index_options)?;
    Ok((features, out))
}

#[derive(Serialize)]
struct WeightRow<'a> {
    window_start: NaiveDate,
    window_end: NaiveDate,
    model_id: &'a str,
    weight: f64,
}

#[derive(Serialize)]
struct GroupWeightRow<'a> {
    group: &'a str,
    window_start: NaiveDate,
    window_end: NaiveDate,
    model_id: &'a str,
    weight: f64,
}

/// Weight history, one row per (fit, model). A leading `group` column is
/// added when the fits span more than one group.
pub fn write_weights_csv(path: &Path, fits: &[EnsembleFit]) -> Result<()> {
    let grouped = fits.iter().map(|f| &f.group).collect::<BTreeSet<_>>().len() > 1;
    let mut sorted: Vec<&EnsembleFit> = fits.iter().collect();
    sorted.sort_by(|a, b| (&a.group, a.fit_date).cmp(&(&b.group, b.fit_date)));
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for fit in sorted {
        for (model_id, &weight) in fit.model_ids.iter().zip(&fit.weights) {
            let (window_start, window_end) = fit.window;
            if grouped {
                writer.serialize(GroupWeightRow { group: &fit.group, window_start, window_end, model_id, weight })?;
            } else {
                writer.serialize(WeightRow { window_start, window_end, model_id, weight })?;
            }
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
