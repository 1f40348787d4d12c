//! One function per subcommand. Each reads its inputs from the manifest or
//! the run directory and overwrites its outputs there.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use wfstack::backtest::{
    build_schedule, run_walk_forward, write_provenance_csv, write_skips_csv, write_transforms_csv, BacktestOptions,
    Panel, Schedule,
};
use wfstack::config::RunConfig;
use wfstack::ensemble::{stack, stack_index, write_weights_csv, ENSEMBLE_ID};
use wfstack::features::{read_features_csv, read_reports_csv, write_features_csv, WeeklyFeatureRow};
use wfstack::market_data::{read_sector_map, write_bars_csv};
use wfstack::metrics::{
    aggregate, join, slope_diagnostics, summary_table, threshold_report, write_da_paths_csv, write_metrics_csv,
    write_scatter_csv, SlopeGroup, ThresholdSummary,
};
use wfstack::models::{read_predictions_csv, write_predictions_csv, Prediction};
use wfstack::models::Update;
use wfstack::pipeline::{
    build_features, equal_weight_index, ingest as ingest_bars, list_bar_files, read_clean_series, read_index_bars,
    read_weekly_returns_csv, write_weekly_returns_csv, IngestOptions,
};
use wfstack::sentiment::read_weekly_sentiment;
use wfstack::synth::{generate, write_synth, SynthConfig};
use wfstack::text_linking::{
    link_articles, match_candidates, read_articles_jsonl, read_company_names, read_confirmed_links,
    write_candidates_csv, write_links_csv, EmbeddingTable, SynonymRules,
};

const CLEAN_DIR: &str = "clean";
const FEATURES: &str = "features.csv";
const INDEX_WEEKLY: &str = "index_weekly.csv";
const LINKS: &str = "links.csv";
const PREDICTIONS: &str = "predictions.csv";
const ENSEMBLE_PREDICTIONS: &str = "ensemble_predictions.csv";

fn require(path: &Path, produced_by: &str) -> Result<PathBuf> {
    if !path.exists() {
        bail!("missing {}; run `wfstack {produced_by}` first", path.display());
    }
    Ok(path.to_path_buf())
}

fn require_field<'a>(value: &'a Option<PathBuf>, field: &str) -> Result<&'a Path> {
    value.as_deref().with_context(|| format!("config field `{field}` is required for this command"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn synth(out: &Path, stocks: usize, years: usize, seed: u64) -> Result<()> {
    let config = SynthConfig { stocks, years, seed, ..SynthConfig::default() };
    let data = generate(&config)?;
    if out.join("bars").exists() {
        // Regenerate from scratch so a smaller universe leaves no stale files.
        for sub in ["bars", "bars_alt"] {
            std::fs::remove_dir_all(out.join(sub)).with_context(|| format!("clearing {}", out.display()))?;
        }
    }
    write_synth(out, &data)?;
    println!("wrote {stocks} stocks over {years} years to {}", out.display());
    Ok(())
}

pub fn ingest(config: &RunConfig) -> Result<()> {
    let sectors = read_sector_map(&config.data.sectors)?;
    let options = IngestOptions {
        min_history_years: config.universe.min_history_years,
        reject_fraction: config.universe.reject_fraction,
    };
    let out = ingest_bars(&config.data.bars, config.data.alt_bars.as_deref(), &sectors, options)?;

    let clean = config.output.join(CLEAN_DIR);
    if clean.exists() {
        std::fs::remove_dir_all(&clean).with_context(|| format!("clearing {}", clean.display()))?;
    }
    std::fs::create_dir_all(&clean).with_context(|| format!("creating {}", clean.display()))?;
    let wanted = &config.universe.tickers;
    let mut report = csv::Writer::from_path(config.output.join("ingest_report.csv"))?;
    report.write_record(["ticker", "status", "reason"])?;
    let mut reconciliation = String::new();
    let mut kept = 0;
    for stock in &out.stocks {
        let ticker = &stock.series.ticker;
        if !wanted.is_empty() && !wanted.contains(ticker) {
            continue;
        }
        write_bars_csv(&clean.join(format!("{ticker}.csv")), &stock.series.bars)?;
        report.write_record([ticker.as_str(), "kept", ""])?;
        if let Some(r) = &stock.report {
            reconciliation.push_str(&r.to_key_value());
            reconciliation.push('\n');
        }
        kept += 1;
    }
    for (ticker, reason) in &out.rejected {
        if wanted.is_empty() || wanted.contains(ticker) {
            report.write_record([ticker.as_str(), "rejected", reason.as_str()])?;
        }
    }
    for r in &out.rejected_reports {
        reconciliation.push_str(&r.to_key_value());
        reconciliation.push('\n');
    }
    report.flush()?;
    write_text(&config.output.join("reconciliation.txt"), &reconciliation)?;

    if let Some(path) = &config.data.index_bars {
        write_weekly_returns_csv(&config.output.join(INDEX_WEEKLY), &read_index_bars(path)?)?;
    }
    println!("ingested {kept} stocks, rejected {}", out.rejected.len());
    Ok(())
}

pub fn features(config: &RunConfig) -> Result<()> {
    let clean = require(&config.output.join(CLEAN_DIR), "ingest")?;
    let sectors = read_sector_map(&config.data.sectors)?;
    let series = list_bar_files(&clean)?
        .into_iter()
        .map(|(ticker, path)| read_clean_series(&path, &ticker, sectors.get(&ticker).copied()))
        .collect::<wfstack::Result<Vec<_>>>()?;
    let reports = match &config.data.fundamentals {
        Some(p) => read_reports_csv(p)?,
        None => BTreeMap::new(),
    };
    let sentiment = match &config.data.sentiment {
        Some(p) => read_weekly_sentiment(p)?,
        None => {
            warn!("no sentiment file configured; the sentiment column is empty");
            BTreeMap::new()
        }
    };
    let (mut rows, skipped) = build_features(&series, &reports, &sentiment);
    let (start, end) = (config.universe.start, config.universe.end);
    rows.retain(|r| start.is_none_or(|s| r.week_end >= s) && end.is_none_or(|e| r.week_end <= e));
    rows.sort_by(|a, b| (&a.ticker, a.week_end).cmp(&(&b.ticker, b.week_end)));
    write_features_csv(&config.output.join(FEATURES), &rows)?;
    let mut w = csv::Writer::from_path(config.output.join("features_skipped.csv"))?;
    w.write_record(["ticker", "reason"])?;
    for (t, reason) in &skipped {
        w.write_record([t, reason])?;
    }
    w.flush()?;
    println!("{} feature rows for {} stocks ({} skipped)", rows.len(), series.len() - skipped.len(), skipped.len());
    Ok(())
}

pub fn link(config: &RunConfig) -> Result<()> {
    let names = read_company_names(require_field(&config.data.companies, "data.companies")?)?;
    let articles = read_articles_jsonl(require_field(&config.data.articles, "data.articles")?)?;
    let table = EmbeddingTable::load(require_field(&config.data.embeddings, "data.embeddings")?)?;
    let rules = match &config.data.synonyms {
        Some(p) => SynonymRules::load(p)?,
        None => SynonymRules::default(),
    };
    let keywords: BTreeSet<String> =
        articles.iter().flat_map(|a| a.organizations().map(str::to_string)).collect();
    let mut candidates = Vec::new();
    for (ticker, name) in &names {
        candidates.extend(match_candidates(
            ticker,
            name,
            &keywords,
            &table,
            &rules,
            config.link_thresholds(),
            config.link.top_k,
        )?);
    }
    write_candidates_csv(&config.output.join("link_candidates.csv"), &candidates)?;
    let links_path = config.output.join(LINKS);
    write_links_csv(&links_path, &candidates)?;

    let confirmed = read_confirmed_links(config.data.links.as_deref().unwrap_or(&links_path))?;
    let pairs = link_articles(&articles, &confirmed);
    let mut w = csv::Writer::from_path(config.output.join("article_links.csv"))?;
    w.write_record(["ticker", "article_id"])?;
    for (t, id) in &pairs {
        w.write_record([t, id])?;
    }
    w.flush()?;
    let n_confirmed = candidates.iter().filter(|c| c.confirmed).count();
    println!("{} candidates, {n_confirmed} pre-confirmed, {} article links", candidates.len(), pairs.len());
    Ok(())
}

fn load_panel(config: &RunConfig) -> Result<Panel> {
    let rows = read_features_csv(&require(&config.output.join(FEATURES), "features")?)?;
    Ok(Panel::from_rows(rows)?.restrict(&config.universe.tickers))
}

/// Yearly schedule over the panel's dates; stacking refits on the same
/// calendar as the yearly base models.
fn yearly_schedule(panel: &Panel) -> Result<Schedule> {
    let (first, last) = panel.date_range().context("feature table is empty")?;
    Ok(build_schedule(first, last, Update::Yearly)?)
}

pub fn backtest(config: &RunConfig, save_models: bool) -> Result<()> {
    let panel = load_panel(config)?;
    let specs = config.model_specs();
    let models_dir = config.output.join("models");
    let options = BacktestOptions { save_models: save_models.then(|| models_dir.clone()) };
    let out = run_walk_forward(&panel, &specs, &options)?;
    write_predictions_csv(&config.output.join(PREDICTIONS), &out.prediction_table())?;
    write_provenance_csv(&config.output.join("provenance.csv"), &out.predictions)?;
    write_skips_csv(&config.output.join("skips.csv"), &out.skips)?;
    write_transforms_csv(&config.output.join("transforms.csv"), &out.transforms)?;
    let record = serde_json::json!({
        "warmup_years": 2,
        "first_base_predictions": "year 3",
        "evaluation_start": "year 4",
        "models": specs,
        "schedules": out.schedules,
    });
    write_text(&config.output.join("backtest.json"), &serde_json::to_string_pretty(&record)?)?;
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for p in &out.predictions {
        counts.entry(&p.prediction.model_id).or_default().0 += 1;
    }
    for s in &out.skips {
        counts.entry(&s.model_id).or_default().1 += 1;
    }
    for (model, (n, skipped)) in counts {
        println!("{model:<16} {n:>7} predictions {skipped:>6} skipped");
    }
    Ok(())
}

fn index_realized(config: &RunConfig, panel: &Panel) -> Result<BTreeMap<chrono::NaiveDate, f64>> {
    let path = config.output.join(INDEX_WEEKLY);
    if path.exists() {
        Ok(read_weekly_returns_csv(&path)?)
    } else {
        info!("no index returns in the run directory; using the equal-weighted stock average");
        Ok(equal_weight_index(&panel.realized()))
    }
}

pub fn ensemble(config: &RunConfig) -> Result<()> {
    let predictions = read_predictions_csv(&require(&config.output.join(PREDICTIONS), "backtest")?)?;
    let panel = load_panel(config)?;
    let schedule = yearly_schedule(&panel)?;
    let stocks = stack(&predictions, &panel.realized(), &schedule, &config.ensemble)?;
    let (medians, index) = stack_index(&predictions, &index_realized(config, &panel)?, &schedule, &config.ensemble)?;

    let mut all: Vec<Prediction> = stocks.predictions.clone();
    all.extend(medians);
    all.extend(index.predictions.iter().cloned());
    write_predictions_csv(&config.output.join(ENSEMBLE_PREDICTIONS), &all)?;
    write_weights_csv(&config.output.join("ensemble_weights.csv"), &stocks.fits)?;
    write_weights_csv(&config.output.join("index_weights.csv"), &index.fits)?;
    let mut skips = stocks.skips.clone();
    skips.extend(index.skips.iter().cloned());
    write_skips_csv(&config.output.join("ensemble_skips.csv"), &skips)?;
    println!(
        "{} stock and {} index ensemble predictions from {} + {} fits, {} skipped",
        stocks.predictions.len(),
        index.predictions.len(),
        stocks.fits.len(),
        index.fits.len(),
        skips.len()
    );
    Ok(())
}

pub fn report(config: &RunConfig) -> Result<()> {
    let predictions_path = config.output.join(PREDICTIONS);
    if !predictions_path.exists() {
        bail!("missing predictions file {}; run `wfstack backtest` first", predictions_path.display());
    }
    let mut predictions = read_predictions_csv(&predictions_path)?;
    let ensemble_path = config.output.join(ENSEMBLE_PREDICTIONS);
    if ensemble_path.exists() {
        predictions.extend(read_predictions_csv(&ensemble_path)?);
    } else {
        info!("no ensemble predictions; reporting base models only");
    }
    let panel = load_panel(config)?;
    let schedule = yearly_schedule(&panel)?;
    let rows = join(&predictions, &panel.realized(), &index_realized(config, &panel)?, schedule.eval_start);
    let records = aggregate(&rows);
    write_metrics_csv(&config.output.join("metrics.csv"), &records)?;
    write_da_paths_csv(&config.output.join("da_by_year.csv"), &records)?;

    let focus = if rows.iter().any(|r| r.model_id == ENSEMBLE_ID) {
        ENSEMBLE_ID.to_string()
    } else {
        predictions.first().map(|p| p.model_id.clone()).unwrap_or_default()
    };
    write_scatter_csv(&config.output.join("threshold_scatter.csv"), &rows, &focus)?;

    let mut summary = summary_table(&records);
    let (up, down) = (config.report.threshold_up, config.report.threshold_down);
    let mut thresholds = csv::Writer::from_path(config.output.join("thresholds.csv"))?;
    let _ = writeln!(summary, "\nthresholds (all stocks): predicted >= {up}, realized <= {down}");
    let models: BTreeSet<&str> = rows.iter().map(|r| r.model_id.as_str()).collect();
    for model in models {
        let (p, r): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|j| j.model_id == model && j.ticker != wfstack::ensemble::INDEX_TICKER)
            .map(|j| (j.predicted, j.realized))
            .unzip();
        if p.is_empty() {
            continue;
        }
        let t = threshold_report(&p, &r, up, down)?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
        let _ = writeln!(
            summary,
            "  {model:<16} calls {:>6.2}%  up-rate {}  mean realized {}  | losses {:>6.2}%  DA {}  mean predicted {}",
            100.0 * t.up_frequency,
            fmt(t.up_realized_up_rate),
            fmt(t.up_mean_realized),
            100.0 * t.down_frequency,
            fmt(t.down_da),
            fmt(t.down_mean_predicted),
        );
        thresholds.serialize(ThresholdRow::new(model, &t))?;
    }
    thresholds.flush()?;

    let feature_rows: Vec<WeeklyFeatureRow> = panel.rows().cloned().collect();
    let mut slopes = csv::Writer::from_path(config.output.join("slopes.csv"))?;
    slopes.write_record(["column", "grouping", "group", "slope", "intercept", "n"])?;
    let _ = writeln!(summary, "\nslopes of next-week return");
    for &column in &config.report.slope_columns {
        for (grouping, name) in [(SlopeGroup::Year, "year"), (SlopeGroup::Company, "company"), (SlopeGroup::Sector, "sector")] {
            let rep = slope_diagnostics(&feature_rows, column, grouping);
            for g in &rep.groups {
                slopes.write_record([
                    column.name(),
                    name,
                    &g.group,
                    &g.slope.to_string(),
                    &g.intercept.to_string(),
                    &g.n.to_string(),
                ])?;
            }
            let _ = writeln!(
                summary,
                "  {:<10} by {name:<8} {:>4} positive {:>4} negative {:>4} skipped",
                column.name(),
                rep.positive,
                rep.negative,
                rep.skipped.len()
            );
        }
    }
    slopes.flush()?;
    write_text(&config.output.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

#[derive(serde::Serialize)]
struct ThresholdRow<'a> {
    model_id: &'a str,
    n: usize,
    theta_up: f64,
    up_count: usize,
    up_frequency: f64,
    up_realized_up_rate: Option<f64>,
    up_mean_realized: Option<f64>,
    theta_down: f64,
    down_count: usize,
    down_frequency: f64,
    down_da: Option<f64>,
    down_mean_predicted: Option<f64>,
}

impl<'a> ThresholdRow<'a> {
    fn new(model_id: &'a str, t: &ThresholdSummary) -> Self {
        ThresholdRow {
            model_id,
            n: t.n,
            theta_up: t.theta_up,
            up_count: t.up_count,
            up_frequency: t.up_frequency,
            up_realized_up_rate: t.up_realized_up_rate,
            up_mean_realized: t.up_mean_realized,
            theta_down: t.theta_down,
            down_count: t.down_count,
            down_frequency: t.down_frequency,
            down_da: t.down_da,
            down_mean_predicted: t.down_mean_predicted,
        }
    }
}
