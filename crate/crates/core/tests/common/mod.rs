//! Shared fixtures for the integration tests and the acceptance run.
#![allow(dead_code)]

use chrono::{Days, NaiveDate};
use wfstack::market_data::{DailyBar, DailySeries};

/// Forty days of smooth, slightly trending prices with irregular ranges
/// and volume.
pub fn fixture_series() -> DailySeries {
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let bars = (0..40u64)
        .map(|i| {
            let x = i as f64;
            let close = 100.0 + 3.0 * (0.5 * x).sin() + 0.4 * x + if i % 7 == 3 { 1.5 } else { 0.0 };
            let high = close + 0.8 + 0.3 * ((i * 5) % 4) as f64;
            let low = close - 0.6 - 0.25 * ((i * 3) % 5) as f64;
            DailyBar {
                date: start + Days::new(i),
                open: close,
                high,
                low,
                close,
                adj_close: close,
                volume: 1000.0 + 37.0 * ((i * 11) % 13) as f64,
                dividend: 0.0,
                split: 1.0,
            }
        })
        .collect();
    DailySeries::new("FIX", None, bars).unwrap()
}

/// Values from a separate loop-by-loop oracle written from the textbook
/// definitions: day, then cci, macdh, rsi, kdj_k, wr, atr_pct, cmf.
pub const FIXTURE_EXPECTED: [(usize, [f64; 7]); 6] = [
    (34, [15.432160745051721, -0.16996832291352515, 57.41067523453844, 57.822814666335944, -46.60710259552333, 2.461276525480065, -0.06823839999796678]),
    (35, [29.58827075663552, -0.2835867161934451, 58.447270666913155, 54.69127818801826, -45.666075941601555, 2.426026571761955, -0.06762139855929797]),
    (36, [40.34542873171409, -0.29238408890579803, 61.48172031561546, 57.17145910453627, -36.212444149266325, 2.368104376391758, -0.06810883727974781]),
    (37, [84.20860247968854, -0.19915204768256523, 65.57912476756397, 62.28945476042893, -31.253115627845332, 2.338649926137401, -0.06801813144780527]),
    (38, [150.4298748922304, 0.06537664246967134, 72.19635930616516, 72.5196438592924, -14.97550864501114, 2.4002707933780405, -0.06822172410745457]),
    (39, [147.58591170238216, 0.22477632480679288, 72.6441151554187, 78.71946710182927, -17.612974421655746, 2.3940885050433938, -0.06800059613541709]),
];

/// First defined day of each indicator and the oracle value there.
pub const FIXTURE_FIRST: [(&str, usize, f64); 7] = [
    ("cci", 19, 72.28808182289501),
    ("macdh", 33, 0.02739029633162371),
    ("rsi", 14, 70.68477064701668),
    ("kdj_k", 15, 83.69709743596513),
    ("wr", 13, -19.1882132368876),
    ("atr_pct", 14, 2.587563317521469),
    ("cmf", 19, -0.07158444386712509),
];

pub fn indicator_value(row: &wfstack::features::IndicatorRow, name: &str) -> Option<f64> {
    match name {
        "cci" => row.cci,
        "macdh" => row.macdh,
        "rsi" => row.rsi,
        "kdj_k" => row.kdj_k,
        "wr" => row.wr,
        "atr_pct" => row.atr_pct,
        "cmf" => row.cmf,
        _ => panic!("unknown indicator {name}"),
    }
}

pub const INDICATORS: [&str; 7] = ["cci", "macdh", "rsi", "kdj_k", "wr", "atr_pct", "cmf"];

/// Largest absolute deviation from the fixture oracle, and whether every
/// warm-up row before the first defined day is missing.
pub fn fixture_deviation() -> (f64, bool) {
    let rows = wfstack::features::compute_indicators(&fixture_series()).unwrap();
    let mut worst = 0.0f64;
    for (day, values) in FIXTURE_EXPECTED {
        for (name, expected) in INDICATORS.iter().zip(values) {
            let got = indicator_value(&rows[day], name).unwrap_or(f64::NAN);
            worst = worst.max((got - expected).abs()).max(if got.is_nan() { f64::INFINITY } else { 0.0 });
        }
    }
    let mut warmup_missing = true;
    for (name, first, expected) in FIXTURE_FIRST {
        let got = indicator_value(&rows[first], name).unwrap_or(f64::NAN);
        worst = worst.max((got - expected).abs()).max(if got.is_nan() { f64::INFINITY } else { 0.0 });
        warmup_missing &= rows[..first].iter().all(|r| indicator_value(r, name).is_none());
    }
    (worst, warmup_missing)
}

/// Textbook LCS length by memoized recursion over suffixes.
pub fn lcs_oracle(a: &[char], b: &[char]) -> usize {
    fn go(a: &[char], b: &[char], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(v) = memo[i][j] {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo[i][j] = Some(v);
        v
    }
    let mut memo = vec![vec![None; b.len()]; a.len()];
    go(a, b, 0, 0, &mut memo)
}

pub struct NaiveMetrics {
    pub da: f64,
    pub uda: f64,
    pub dda: f64,
    pub rmse: f64,
    pub mse: f64,
    pub mae: f64,
}

/// The metric formulas evaluated term by term.
pub fn naive_metrics(r: &[f64], p: &[f64]) -> NaiveMetrics {
    let n = r.len();
    let ind = |x: f64| if x >= 0.0 { 1.0 } else { 0.0 };
    let mut da = 0.0;
    let mut up_num = 0.0;
    let mut up_den = 0.0;
    let mut down_num = 0.0;
    let mut down_den = 0.0;
    let mut sq = 0.0;
    let mut abs = 0.0;
    for t in 0..n {
        let same = ind(r[t]) * ind(p[t]) + (1.0 - ind(r[t])) * (1.0 - ind(p[t]));
        da += same;
        up_num += ind(r[t]) * ind(p[t]);
        up_den += ind(r[t]);
        down_num += (1.0 - ind(r[t])) * (1.0 - ind(p[t]));
        down_den += 1.0 - ind(r[t]);
        sq += (r[t] - p[t]) * (r[t] - p[t]);
        abs += (r[t] - p[t]).abs();
    }
    NaiveMetrics {
        da: da / n as f64,
        uda: if up_den == 0.0 { 1.0 } else { up_num / up_den },
        dda: if down_den == 0.0 { 1.0 } else { down_num / down_den },
        rmse: (sq / n as f64).sqrt(),
        mse: sq / n as f64,
        mae: abs / n as f64,
    }
}

pub struct SynthRun {
    pub config: wfstack::config::RunConfig,
    pub panel: wfstack::backtest::Panel,
    pub index: std::collections::BTreeMap<NaiveDate, f64>,
}

/// Generates a synthetic data set under `dir` and runs ingestion and
/// feature construction on it, the same chain the command line follows.
pub fn synth_run(dir: &std::path::Path, synth: &wfstack::synth::SynthConfig) -> SynthRun {
    use wfstack::pipeline::{build_features, ingest, read_index_bars, IngestOptions};

    let data = wfstack::synth::generate(synth).unwrap();
    wfstack::synth::write_synth(dir, &data).unwrap();
    let config = wfstack::config::RunConfig::load(&dir.join("wfstack.toml")).unwrap();
    let sectors = wfstack::market_data::read_sector_map(&config.data.sectors).unwrap();
    let options = IngestOptions {
        min_history_years: config.universe.min_history_years,
        reject_fraction: config.universe.reject_fraction,
    };
    let out = ingest(&config.data.bars, config.data.alt_bars.as_deref(), &sectors, options).unwrap();
    let series: Vec<DailySeries> = out.stocks.into_iter().map(|s| s.series).collect();
    let reports = wfstack::features::read_reports_csv(config.data.fundamentals.as_deref().unwrap()).unwrap();
    let sentiment = wfstack::sentiment::read_weekly_sentiment(config.data.sentiment.as_deref().unwrap()).unwrap();
    let (rows, _) = build_features(&series, &reports, &sentiment);
    let panel = wfstack::backtest::Panel::from_rows(rows).unwrap();
    let index = read_index_bars(config.data.index_bars.as_deref().unwrap()).unwrap();
    SynthRun { config, panel, index }
}

/// Standard model specs with training budgets cut down for quick runs.
pub fn quick_specs(seed: u64) -> Vec<wfstack::models::ModelSpec> {
    use wfstack::models::{ModelFamily, ModelSpec};
    ModelFamily::ALL
        .iter()
        .map(|&family| {
            let mut spec = ModelSpec::standard(family, wfstack::backtest::derive_seed(seed, &[family.name()]));
            spec.forest.trees = 10;
            spec.forest.max_depth = 4;
            spec.train.max_epochs = 2;
            spec.train.finetune_epochs = 2;
            spec
        })
        .collect()
}
