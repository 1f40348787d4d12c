//! Seeded synthetic universe in the on-disk input formats, so the full
//! pipeline runs without external data.
//!
//! Each stock carries a latent AR(1) signal `s`; its weekly sentiment is
//! `tanh(s)` and the next week's log return is
//! `vol · (weight · tanh(s) + noise_sd · ε)`. Daily closes jitter around the
//! weekly level with zero mean inside each week, so the weekly average log
//! price reproduces the planted returns exactly.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{write_reports_csv, QuarterlyReport};
use crate::market_data::{write_bars_csv, DailyBar, Sector};
use crate::sentiment::{write_weekly_sentiment, SentimentTable};
use crate::text_linking::EMBEDDING_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub stocks: usize,
    pub years: usize,
    pub seed: u64,
    pub start_year: i32,
    /// AR(1) coefficient of the latent signal (unit stationary variance).
    pub signal_phi: f64,
    /// Weight of `tanh(signal)` in the next week's return, in vol units.
    pub signal_weight: f64,
    /// Standard deviation of the return noise, in vol units.
    pub noise_sd: f64,
    /// Fraction of weeks with a sentiment value.
    pub sentiment_coverage: f64,
    /// Fraction of trading days removed from the base source.
    pub missing_day_rate: f64,
    /// Fraction of alternate-source rows disagreeing by 3%.
    pub disagreement_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            stocks: 50,
            years: 8,
            seed: 7,
            start_year: 2000,
            signal_phi: 0.9,
            signal_weight: 0.3,
            noise_sd: 1.0,
            sentiment_coverage: 0.8,
            missing_day_rate: 0.005,
            disagreement_rate: 0.003,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthStock {
    pub ticker: String,
    pub name: String,
    pub sector: Sector,
    pub base: Vec<DailyBar>,
    pub alt: Vec<DailyBar>,
    pub reports: Vec<QuarterlyReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub config: SynthConfig,
    pub stocks: Vec<SynthStock>,
    pub index: Vec<DailyBar>,
    pub sentiment: SentimentTable,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn trading_weeks(start_year: i32, years: usize) -> Vec<(NaiveDate, Vec<NaiveDate>)> {
    let first = NaiveDate::from_ymd_opt(start_year, 1, 1).expect("valid year");
    let last = NaiveDate::from_ymd_opt(start_year + years as i32 - 1, 12, 31).expect("valid year");
    let mut weeks: Vec<(NaiveDate, Vec<NaiveDate>)> = Vec::new();
    let mut d = first;
    while d <= last {
        let holiday = (d.month() == 1 && d.day() == 1) || (d.month() == 12 && d.day() == 25);
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) && !holiday {
            let friday = crate::market_data::week_ending_friday(d);
            match weeks.last_mut() {
                Some((w, days)) if *w == friday => days.push(d),
                _ => weeks.push((friday, vec![d])),
            }
        }
        d = d.succ_opt().expect("date in range");
    }
    weeks
}

const SYLLABLES: [&str; 16] =
    ["ka", "lo", "mer", "vi", "dan", "tor", "sel", "qua", "ri", "zen", "bo", "lux", "pha", "nor", "gen", "tri"];

fn company_word(i: usize) -> String {
    let a = SYLLABLES[i % 16];
    let b = SYLLABLES[(i / 16 + 3 * i) % 16];
    let c = SYLLABLES[(i / 256 + 7 * i + 5) % 16];
    let mut w = format!("{a}{b}{c}");
    w[..1].make_ascii_uppercase();
    w
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    if config.stocks == 0 || config.years < 3 {
        return Err(Error::config("synth", "need at least one stock and three years"));
    }
    if !(0.0..1.0).contains(&config.signal_phi.abs()) || config.noise_sd < 0.0 {
        return Err(Error::config("synth", "signal_phi must be in (-1, 1) and noise_sd non-negative"));
    }
    let weeks = trading_weeks(config.start_year, config.years);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let innovation_sd = (1.0 - config.signal_phi * config.signal_phi).sqrt();
    let volume: LogNormal<f64> = LogNormal::new(13.8, 0.4).expect("valid lognormal");

    let mut stocks = Vec::with_capacity(config.stocks);
    let mut sentiment = SentimentTable::new();
    // Sum over stocks of the daily log-price deviation from each start level.
    let mut index_log: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for k in 0..config.stocks {
        let ticker = format!("S{:03}", k + 1);
        let sector = Sector::ALL[k % Sector::ALL.len()];
        let vol: f64 = rng.random_range(0.015..0.035);
        let p0: f64 = rng.random_range(20.0..200.0);
        let jitter = Normal::new(0.0, 0.25 * vol).expect("valid normal");

        let mut signal = normal(&mut rng);
        let mut prev_signal: f64 = 0.0;
        let mut level = p0.ln();
        let mut bars = Vec::new();
        let mut weekly_sentiment = BTreeMap::new();
        let mut reports = Vec::new();
        for (t, (friday, days)) in weeks.iter().enumerate() {
            if t > 0 {
                let eps = normal(&mut rng);
                level += vol * (config.signal_weight * prev_signal.tanh() + config.noise_sd * eps);
            }
            let offsets: Vec<f64> = days.iter().map(|_| jitter.sample(&mut rng)).collect();
            let mean_offset = offsets.iter().sum::<f64>() / offsets.len() as f64;
            for (&date, off) in days.iter().zip(&offsets) {
                let log_close = level + off - mean_offset;
                *index_log.entry(date).or_insert(0.0) += log_close - p0.ln();
                let close = log_close.exp();
                let open = close * (0.004 * normal(&mut rng)).exp();
                let high = open.max(close) * (0.004 * rng.random::<f64>()).exp();
                let low = open.min(close) * (-0.004 * rng.random::<f64>()).exp();
                bars.push(DailyBar {
                    date,
                    open,
                    high,
                    low,
                    close,
                    adj_close: close,
                    volume: volume.sample(&mut rng).round(),
                    dividend: 0.0,
                    split: 1.0,
                });
            }
            if rng.random::<f64>() < config.sentiment_coverage {
                weekly_sentiment.insert(*friday, signal.tanh());
            }
            if t % 13 == 0 {
                let price = level.exp();
                let eps_ttm = if rng.random::<f64>() < 0.05 {
                    -price * rng.random_range(0.005..0.03)
                } else {
                    price * rng.random_range(0.03..0.08)
                };
                reports.push(QuarterlyReport {
                    ticker: ticker.clone(),
                    effective_date: *friday,
                    eps_ttm: Some(eps_ttm),
                    book_per_share: Some(price * rng.random_range(0.2..0.6)),
                    revenue_per_share_ttm: Some(price * rng.random_range(0.3..1.5)),
                });
            }
            prev_signal = signal;
            signal = config.signal_phi * signal + innovation_sd * normal(&mut rng);
        }

        let alt: Vec<DailyBar> = bars
            .iter()
            .map(|b| {
                let err = if rng.random::<f64>() < config.disagreement_rate {
                    1.03
                } else {
                    1.0 + 0.001 * normal(&mut rng)
                };
                DailyBar { adj_close: b.adj_close * err, close: b.close * err, ..*b }
            })
            .collect();
        let last = bars.len() - 1;
        let base: Vec<DailyBar> = bars
            .into_iter()
            .enumerate()
            .filter(|(i, _)| *i == 0 || *i == last || rng.random::<f64>() >= config.missing_day_rate)
            .map(|(_, b)| b)
            .collect();
        sentiment.insert(ticker.clone(), weekly_sentiment);
        stocks.push(SynthStock { name: format!("{} Corporation", company_word(k)), ticker, sector, base, alt, reports });
    }

    let n = config.stocks as f64;
    let index = index_log
        .into_iter()
        .map(|(date, sum)| {
            let close = 1000.0 * (sum / n).exp();
            DailyBar {
                date,
                open: close,
                high: close,
                low: close,
                close,
                adj_close: close,
                volume: 0.0,
                dividend: 0.0,
                split: 1.0,
            }
        })
        .collect();
    Ok(SynthData { config: config.clone(), stocks, index, sentiment })
}

/// Writes the universe as:
///
/// ```text
/// bars/<TICKER>.csv, bars_alt/<TICKER>.csv, index.csv, sectors.csv,
/// fundamentals.csv, sentiment.csv, companies.csv, articles.jsonl,
/// embeddings.txt, wfstack.toml
/// ```
pub fn write_synth(dir: &Path, data: &SynthData) -> Result<()> {
    for sub in ["bars", "bars_alt"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut sectors = String::from("ticker,sector\n");
    let mut companies = String::from("ticker,name\n");
    let mut reports = Vec::new();
    for s in &data.stocks {
        write_bars_csv(&dir.join("bars").join(format!("{}.csv", s.ticker)), &s.base)?;
        write_bars_csv(&dir.join("bars_alt").join(format!("{}.csv", s.ticker)), &s.alt)?;
        sectors.push_str(&format!("{},{}\n", s.ticker, s.sector));
        companies.push_str(&format!("{},{}\n", s.ticker, s.name));
        reports.extend(s.reports.iter().cloned());
    }
    write_bars_csv(&dir.join("index.csv"), &data.index)?;
    write_reports_csv(&dir.join("fundamentals.csv"), &reports)?;
    write_weekly_sentiment(&dir.join("sentiment.csv"), &data.sentiment)?;
    write_text(&dir.join("sectors.csv"), &sectors)?;
    write_text(&dir.join("companies.csv"), &companies)?;
    write_text(&dir.join("articles.jsonl"), &articles(data))?;
    write_text(&dir.join("embeddings.txt"), &embeddings(data))?;
    write_text(&dir.join("wfstack.toml"), &run_config(data))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// A few archive-style articles per company, tagged with name variants.
fn articles(data: &SynthData) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(data.config.seed ^ 0xA7);
    let mut out = String::new();
    let mut id = 0;
    for s in &data.stocks {
        let word = s.name.split_whitespace().next().unwrap_or_default();
        for variant in [format!("{word} Inc"), format!("{word} Corp"), s.name.clone()] {
            id += 1;
            let year = data.config.start_year + rng.random_range(0..data.config.years as i32);
            let record = serde_json::json!({
                "_id": format!("synth://article/{id}"),
                "pub_date": format!("{year}-{:02}-{:02}T12:00:00+0000", rng.random_range(1..=12), rng.random_range(1..=28)),
                "headline": {"main": format!("{word} reports quarterly results")},
                "snippet": format!("{word} shares moved after the announcement."),
                "lead_paragraph": format!("{word} said on Tuesday that results were in line."),
                "keywords": [
                    {"name": "subject", "value": "Company Reports", "rank": 1},
                    {"name": "organizations", "value": variant, "rank": 2},
                ],
            });
            out.push_str(&record.to_string());
            out.push('\n');
        }
    }
    out
}

/// Random unit-scale vectors for letters, suffix words and company words.
fn embeddings(data: &SynthData) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(data.config.seed ^ 0xE3);
    let mut words: Vec<String> = ('a'..='z').map(String::from).collect();
    words.extend(["Inc", "Corp", "Corporation", "reports"].map(String::from));
    for s in &data.stocks {
        words.extend(s.name.split_whitespace().map(String::from));
    }
    words.sort();
    words.dedup();
    let scale = 1.0 / (EMBEDDING_DIM as f64).sqrt();
    let mut out = String::new();
    for w in words {
        out.push_str(&w);
        for _ in 0..EMBEDDING_DIM {
            out.push_str(&format!(" {:.6}", scale * normal(&mut rng)));
        }
        out.push('\n');
    }
    out
}

fn run_config(data: &SynthData) -> String {
    format!(
        r#"# Run configuration for the synthetic universe; paths are relative to this file.
seed = {seed}

[data]
bars = "bars"
alt_bars = "bars_alt"
sectors = "sectors.csv"
fundamentals = "fundamentals.csv"
sentiment = "sentiment.csv"
index_bars = "index.csv"
companies = "companies.csv"
articles = "articles.jsonl"
embeddings = "embeddings.txt"

[universe]
min_history_years = 5.0
"#,
        seed = data.config.seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{weekly_aggregate, DailySeries};

    fn small() -> SynthConfig {
        SynthConfig { stocks: 3, years: 3, missing_day_rate: 0.0, ..SynthConfig::default() }
    }

    #[test]
    fn weekly_returns_follow_the_planted_levels() {
        let data = generate(&small()).unwrap();
        let s = &data.stocks[0];
        let series = DailySeries::new(s.ticker.clone(), Some(s.sector), s.base.clone()).unwrap();
        let weekly = weekly_aggregate(&series).unwrap();
        let rets: Vec<f64> = weekly.weeks.iter().filter_map(|w| w.ret).collect();
        let sd = (rets.iter().map(|r| r * r).sum::<f64>() / rets.len() as f64).sqrt();
        assert!(sd > 0.01 && sd < 0.06, "weekly sd {sd}");
        assert!(s.base.iter().all(|b| b.is_valid()));
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SynthConfig { seed: 8, ..small() };
        assert_ne!(generate(&small()).unwrap().stocks[0].base, generate(&other).unwrap().stocks[0].base);
    }

    #[test]
    fn sentiment_is_friday_keyed_and_bounded() {
        let data = generate(&small()).unwrap();
        for weeks in data.sentiment.values() {
            for (d, v) in weeks {
                assert_eq!(d.weekday(), Weekday::Fri);
                assert!((-1.0..=1.0).contains(v));
            }
        }
    }
}
