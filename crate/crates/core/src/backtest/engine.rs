//! Fit tasks are (spec, fit date, group) triples; each fits transforms and a
//! model on rows whose target week is on or before the fit date, then
//! predicts every week up to the next fit date.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::panel::{Panel, StockPanel};
use super::schedule::{build_schedule, window_start, Schedule};
use super::{PredictionRecord, SkipRecord, TransformRecord};
use crate::error::{Error, Result};
use crate::features::{FeatureColumn, WeeklyFeatureRow};
use crate::models::arima::select_arima_order;
use crate::models::ffnn::fit_ffnn;
use crate::models::forest::fit_random_forest;
use crate::models::linear::fit_linear;
use crate::models::lstm::{finetune_head, fit_lstm, LstmNet, SequenceSet, STEPS};
use crate::models::{
    write_artifact, ArtifactManifest, Design, FittedModel, ModelFamily, ModelSpec, Prediction, Scope,
};
use crate::preprocess::{fit_transform, ColumnTransform};

#[derive(Debug, Clone, Default)]
pub struct BacktestOptions {
    /// Directory for serialized models; nothing is saved when `None`.
    pub save_models: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct BacktestOutput {
    pub predictions: Vec<PredictionRecord>,
    pub skips: Vec<SkipRecord>,
    pub transforms: Vec<TransformRecord>,
    pub schedules: BTreeMap<String, Schedule>,
}

impl BacktestOutput {
    pub fn prediction_table(&self) -> Vec<Prediction> {
        self.predictions.iter().map(|r| r.prediction.clone()).collect()
    }
}

/// Deterministic seed for one fit, independent of scheduling order.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

fn group_key(stock: &StockPanel, scope: Scope) -> String {
    match scope {
        Scope::PerStock => stock.ticker.clone(),
        Scope::PerSector => stock.sector.map_or_else(|| "unknown".to_string(), |s| s.to_string()),
        Scope::AllStock => "all".to_string(),
    }
}

struct Task<'a> {
    spec: &'a ModelSpec,
    spec_index: usize,
    fit: NaiveDate,
    next: Option<NaiveDate>,
    group: String,
    stocks: Vec<usize>,
}

#[derive(Default)]
struct TaskOutput {
    predictions: Vec<(usize, PredictionRecord)>,
    skips: Vec<(usize, SkipRecord)>,
    transforms: Vec<TransformRecord>,
}

/// (stock, row) of an input row whose target week falls in a task's interval.
type Instance = (usize, usize);

pub fn run_walk_forward(panel: &Panel, specs: &[ModelSpec], options: &BacktestOptions) -> Result<BacktestOutput> {
    let (first, last) = panel.date_range().ok_or_else(|| Error::InvalidInput("empty panel".into()))?;
    let mut seen = std::collections::BTreeSet::new();
    for spec in specs {
        spec.validate()?;
        if !seen.insert(spec.id.clone()) {
            return Err(Error::config("model.id", format!("duplicate model id `{}`", spec.id)));
        }
    }
    let mut schedules = BTreeMap::new();
    let mut tasks = Vec::new();
    for (spec_index, spec) in specs.iter().enumerate() {
        let schedule = build_schedule(first, last, spec.update)?;
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (s, stock) in panel.stocks.iter().enumerate() {
            groups.entry(group_key(stock, spec.scope)).or_default().push(s);
        }
        for k in 0..schedule.fits.len() {
            let (fit, next) = schedule.interval(k);
            for (group, stocks) in &groups {
                tasks.push(Task { spec, spec_index, fit, next, group: group.clone(), stocks: stocks.clone() });
            }
        }
        schedules.insert(spec.id.clone(), schedule);
    }
    if let Some(dir) = &options.save_models {
        for spec in specs {
            let d = dir.join(&spec.id);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
    }

    let outputs: Vec<Result<TaskOutput>> =
        tasks.par_iter().map(|t| run_task(panel, t, options.save_models.as_deref())).collect();
    let mut predictions = Vec::new();
    let mut skips = Vec::new();
    let mut transforms = Vec::new();
    for out in outputs {
        let out = out?;
        predictions.extend(out.predictions);
        skips.extend(out.skips);
        transforms.extend(out.transforms);
    }
    let key = |i: usize, t: &str, w: NaiveDate| (i, t.to_string(), w);
    predictions.sort_by(|a, b| {
        key(a.0, &a.1.prediction.ticker, a.1.prediction.week_end).cmp(&key(b.0, &b.1.prediction.ticker, b.1.prediction.week_end))
    });
    skips.sort_by_key(|a| key(a.0, &a.1.ticker, a.1.week_end));
    for s in &skips {
        log::debug!("skip {} {} {}: {}", s.1.model_id, s.1.ticker, s.1.week_end, s.1.reason);
    }
    Ok(BacktestOutput {
        predictions: predictions.into_iter().map(|p| p.1).collect(),
        skips: skips.into_iter().map(|s| s.1).collect(),
        transforms,
        schedules,
    })
}

fn in_interval(week: NaiveDate, fit: NaiveDate, next: Option<NaiveDate>) -> bool {
    week > fit && next.is_none_or(|n| week <= n)
}

impl Task<'_> {
    fn instances(&self, panel: &Panel) -> Vec<Instance> {
        let mut out = Vec::new();
        for &s in &self.stocks {
            let stock = &panel.stocks[s];
            for i in 0..stock.rows.len().saturating_sub(1) {
                if in_interval(stock.rows[i + 1].week_end, self.fit, self.next) {
                    out.push((s, i));
                }
            }
        }
        out
    }

    /// Rows usable for training: target present, target week on or before
    /// the fit date, row inside the lookback window.
    fn training_rows(&self, panel: &Panel) -> Vec<Instance> {
        let start = window_start(self.fit, self.spec.lookback);
        let mut out = Vec::new();
        for &s in &self.stocks {
            let stock = &panel.stocks[s];
            for i in 0..stock.rows.len().saturating_sub(1) {
                let row = &stock.rows[i];
                if row.target.is_some()
                    && stock.rows[i + 1].week_end <= self.fit
                    && start.is_none_or(|st| row.week_end > st)
                {
                    out.push((s, i));
                }
            }
        }
        out
    }

    fn seed(&self, extra: &str) -> u64 {
        derive_seed(self.spec.seed, &[&self.spec.id, &self.fit.to_string(), &self.group, extra])
    }

    fn skip_all(&self, panel: &Panel, instances: &[Instance], reason: &str) -> TaskOutput {
        log::info!("{} fit {} group {}: skipped ({reason})", self.spec.id, self.fit, self.group);
        TaskOutput {
            skips: instances.iter().map(|&(s, i)| (self.spec_index, self.skip(panel, s, i, reason))).collect(),
            ..TaskOutput::default()
        }
    }

    fn skip(&self, panel: &Panel, s: usize, i: usize, reason: &str) -> SkipRecord {
        let stock = &panel.stocks[s];
        SkipRecord {
            model_id: self.spec.id.clone(),
            ticker: stock.ticker.clone(),
            week_end: stock.rows[i + 1].week_end,
            reason: reason.to_string(),
        }
    }

    fn record(&self, panel: &Panel, s: usize, i: usize, value: f64, trained_through: NaiveDate) -> (usize, PredictionRecord) {
        let stock = &panel.stocks[s];
        let input = stock.rows[i].week_end;
        (
            self.spec_index,
            PredictionRecord {
                prediction: Prediction {
                    ticker: stock.ticker.clone(),
                    week_end: stock.rows[i + 1].week_end,
                    model_id: self.spec.id.clone(),
                    value,
                },
                fit_date: self.fit,
                input_through: input.max(trained_through),
            },
        )
    }
}

fn run_task(panel: &Panel, task: &Task, save: Option<&Path>) -> Result<TaskOutput> {
    let instances = task.instances(panel);
    if instances.is_empty() {
        return Ok(TaskOutput::default());
    }
    let training = task.training_rows(panel);
    if training.is_empty() {
        return Ok(task.skip_all(panel, &instances, "no training rows before the fit date"));
    }
    let trained_through = training
        .iter()
        .map(|&(s, i)| panel.stocks[s].rows[i + 1].week_end)
        .max()
        .expect("non-empty training set");
    let outcome = match task.spec.family {
        ModelFamily::Arima => run_arima(panel, task, &instances, trained_through),
        ModelFamily::Lstm2 | ModelFamily::Lstm1Finetune => {
            run_sequence(panel, task, &instances, &training, trained_through, save)
        }
        _ => run_flat(panel, task, &instances, &training, trained_through, save),
    };
    Ok(match outcome {
        Ok(out) => out,
        Err(e) => task.skip_all(panel, &instances, &e.to_string()),
    })
}

fn row_of(panel: &Panel, (s, i): Instance) -> &WeeklyFeatureRow {
    &panel.stocks[s].rows[i]
}

/// Per-column transforms fitted on the training rows; `None` marks a column
/// that is zero-filled for this window.
fn fit_transforms(
    panel: &Panel,
    task: &Task,
    training: &[Instance],
) -> (Vec<Option<ColumnTransform>>, Vec<TransformRecord>) {
    let mut transforms = Vec::with_capacity(task.spec.feature_set.len());
    let mut records = Vec::new();
    for &col in &task.spec.feature_set {
        let values: Vec<Option<f64>> = training.iter().map(|&r| row_of(panel, r).get(col)).collect();
        let t = match fit_transform(&values) {
            Ok(t) => Some(t),
            Err(e) => {
                log::info!("{} fit {} group {}: column {col} zero-filled ({e})", task.spec.id, task.fit, task.group);
                None
            }
        };
        records.push(TransformRecord {
            model_id: task.spec.id.clone(),
            fit_date: task.fit,
            group: task.group.clone(),
            column: col,
            transform: t,
        });
        transforms.push(t);
    }
    (transforms, records)
}

fn encode(row: &WeeklyFeatureRow, columns: &[FeatureColumn], transforms: &[Option<ColumnTransform>], is_test: bool) -> Vec<f64> {
    columns
        .iter()
        .zip(transforms)
        .map(|(&c, t)| t.map_or(0.0, |t| t.apply_one(row.get(c), is_test)))
        .collect()
}

fn training_hash(panel: &Panel, task: &Task, training: &[Instance]) -> String {
    let mut h = Sha256::new();
    for &(s, i) in training {
        let row = row_of(panel, (s, i));
        h.update(row.ticker.as_bytes());
        h.update(row.week_end.to_string().as_bytes());
        for &c in &task.spec.feature_set {
            h.update(row.get(c).unwrap_or(f64::NAN).to_le_bytes());
        }
        h.update(row.target.unwrap_or(f64::NAN).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn save_model(
    dir: &Path,
    panel: &Panel,
    task: &Task,
    training: &[Instance],
    transforms: &[Option<ColumnTransform>],
    model: &FittedModel,
) -> Result<()> {
    let window_start = training.iter().map(|&r| row_of(panel, r).week_end).min().unwrap_or(task.fit);
    let manifest = ArtifactManifest {
        spec: task.spec.clone(),
        group: task.group.clone(),
        window_start,
        window_end: task.fit,
        training_hash: training_hash(panel, task, training),
        transforms: task.spec.feature_set.iter().copied().zip(transforms.iter().copied()).collect(),
        payload_sha256: String::new(),
    };
    let name: String = task.group.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    write_artifact(&dir.join(&task.spec.id).join(format!("{}_{name}.bin", task.fit)), &manifest, model)
}

fn run_flat(
    panel: &Panel,
    task: &Task,
    instances: &[Instance],
    training: &[Instance],
    trained_through: NaiveDate,
    save: Option<&Path>,
) -> Result<TaskOutput> {
    let spec = task.spec;
    let (transforms, transform_records) = fit_transforms(panel, task, training);
    let cols = spec.feature_set.len();
    let mut data = Vec::with_capacity(training.len() * cols);
    let mut y = Vec::with_capacity(training.len());
    for &r in training {
        let row = row_of(panel, r);
        data.extend(encode(row, &spec.feature_set, &transforms, false));
        y.push(row.target.expect("training rows have targets"));
    }
    let x = Design::new(training.len(), cols, data);
    let seed = task.seed("");
    let model = match spec.family {
        ModelFamily::Linear => FittedModel::Linear(fit_linear(&x, &y)?),
        ModelFamily::RandomForest => FittedModel::Forest(fit_random_forest(&x, &y, &spec.forest, seed)?),
        ModelFamily::Ffnn => FittedModel::Ffnn(fit_ffnn(&x, &y, &spec.train, seed)?.0),
        other => unreachable!("{other} is not a flat model"),
    };
    if let Some(dir) = save {
        save_model(dir, panel, task, training, &transforms, &model)?;
    }
    let mut out = TaskOutput { transforms: transform_records, ..TaskOutput::default() };
    for &(s, i) in instances {
        let features = encode(&panel.stocks[s].rows[i], &spec.feature_set, &transforms, true);
        let value = match &model {
            FittedModel::Linear(m) => m.predict_row(&features),
            FittedModel::Forest(m) => m.predict_row(&features),
            FittedModel::Ffnn(m) => m.predict_row(&features),
            _ => unreachable!(),
        };
        out.predictions.push(task.record(panel, s, i, value, trained_through));
    }
    Ok(out)
}

fn run_arima(panel: &Panel, task: &Task, instances: &[Instance], trained_through: NaiveDate) -> Result<TaskOutput> {
    let stock = &panel.stocks[task.stocks[0]];
    let history: Vec<f64> = stock.rows.iter().filter(|r| r.week_end <= task.fit).filter_map(|r| r.ret).collect();
    let model = select_arima_order(&history)?;
    log::debug!("{} {} fit {}: order {:?}", task.spec.id, stock.ticker, task.fit, model.order);
    let mut out = TaskOutput::default();
    for &(s, i) in instances {
        let past: Vec<f64> = panel.stocks[s].rows[..=i].iter().filter_map(|r| r.ret).collect();
        if past.len() <= model.order.d {
            out.skips.push((task.spec_index, task.skip(panel, s, i, "history shorter than differencing order")));
            continue;
        }
        let value = model.forecast_next(&past);
        if value.is_finite() {
            out.predictions.push(task.record(panel, s, i, value, trained_through));
        } else {
            out.skips.push((task.spec_index, task.skip(panel, s, i, "non-finite forecast")));
        }
    }
    Ok(out)
}

/// Three consecutive encoded rows ending at row `i`.
fn window(
    stock: &StockPanel,
    i: usize,
    columns: &[FeatureColumn],
    transforms: &[Option<ColumnTransform>],
    is_test: bool,
) -> [Vec<f64>; STEPS] {
    std::array::from_fn(|k| encode(&stock.rows[i + 1 + k - STEPS], columns, transforms, is_test))
}

fn run_sequence(
    panel: &Panel,
    task: &Task,
    instances: &[Instance],
    training: &[Instance],
    trained_through: NaiveDate,
    save: Option<&Path>,
) -> Result<TaskOutput> {
    let spec = task.spec;
    let (transforms, transform_records) = fit_transforms(panel, task, training);
    let usable: std::collections::HashSet<Instance> = training.iter().copied().collect();
    let inputs = spec.feature_set.len();

    // A window is a training sample when all three rows are training rows.
    let mut samples_by_stock: BTreeMap<usize, SequenceSet> = BTreeMap::new();
    for &(s, i) in training {
        if i + 1 < STEPS || !(1..STEPS).all(|k| usable.contains(&(s, i - k))) {
            continue;
        }
        let stock = &panel.stocks[s];
        let steps = window(stock, i, &spec.feature_set, &transforms, false);
        let targets = std::array::from_fn(|k| stock.rows[i + 1 + k - STEPS].target.expect("training target"));
        samples_by_stock
            .entry(s)
            .or_insert_with(|| SequenceSet::new(inputs))
            .push([&steps[0], &steps[1], &steps[2]], Some(targets));
    }
    let mut all = SequenceSet::new(inputs);
    for set in samples_by_stock.values() {
        all.features.extend_from_slice(&set.features);
        all.targets.extend_from_slice(&set.targets);
    }
    let depth = if spec.family == ModelFamily::Lstm2 { 2 } else { 1 };
    let (base, _) = fit_lstm(&all, depth, &spec.train, task.seed(""))?;

    let mut nets: BTreeMap<usize, LstmNet> = BTreeMap::new();
    let mut heads = BTreeMap::new();
    if spec.family == ModelFamily::Lstm1Finetune {
        let stocks: std::collections::BTreeSet<usize> = instances.iter().map(|&(s, _)| s).collect();
        for s in stocks {
            let ticker = &panel.stocks[s].ticker;
            match samples_by_stock.get(&s) {
                Some(set) if !set.is_empty() => {
                    let (tuned, _) = finetune_head(&base, set, &spec.train, task.seed(ticker))?;
                    heads.insert(ticker.clone(), (tuned.head_w.as_slice().to_vec(), tuned.head_b));
                    nets.insert(s, tuned);
                }
                _ => log::info!("{} fit {}: {ticker} has no training windows; shared head used", spec.id, task.fit),
            }
        }
    }
    if let Some(dir) = save {
        let model = if spec.family == ModelFamily::Lstm1Finetune {
            FittedModel::FinetunedLstm { base: base.clone(), heads }
        } else {
            FittedModel::Lstm(base.clone())
        };
        save_model(dir, panel, task, training, &transforms, &model)?;
    }

    let mut out = TaskOutput { transforms: transform_records, ..TaskOutput::default() };
    let mut pending: BTreeMap<usize, (SequenceSet, Vec<usize>)> = BTreeMap::new();
    for &(s, i) in instances {
        if i + 1 < STEPS {
            log::warn!("{} {}: fewer than three weeks of history", spec.id, panel.stocks[s].ticker);
            out.skips.push((task.spec_index, task.skip(panel, s, i, "fewer than three weeks of history")));
            continue;
        }
        let steps = window(&panel.stocks[s], i, &spec.feature_set, &transforms, true);
        let entry = pending.entry(s).or_insert_with(|| (SequenceSet::new(inputs), Vec::new()));
        entry.0.push([&steps[0], &steps[1], &steps[2]], None);
        entry.1.push(i);
    }
    for (s, (set, rows)) in pending {
        let net = nets.get(&s).unwrap_or(&base);
        for (i, value) in rows.into_iter().zip(net.predict(&set)) {
            out.predictions.push(task.record(panel, s, i, value, trained_through));
        }
    }
    Ok(out)
}
