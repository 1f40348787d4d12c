//! Acceptance run: one PASS/FAIL line per criterion, each with its measured
//! quantity and runtime against its time limit. Exits nonzero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wfstack::backtest::{build_schedule, run_walk_forward, BacktestOptions, Panel, Schedule};
use wfstack::ensemble::{fit_nnls, residual_norm, stack, stack_index, EnsembleFit, EnsembleOptions, INDEX_TICKER};
use wfstack::error::Error;
use wfstack::features::{compute_indicators, FeatureColumn};
use wfstack::market_data::{fill_missing, DailyBar, DailySeries};
use wfstack::metrics::{aggregate, compute_metrics, join, MetricScope, ALWAYS_UP_ID};
use wfstack::models::{Design, Prediction, Update};
use wfstack::preprocess::{apply, fit_transform, yeo_johnson, DEFAULT_CAP};
use wfstack::synth::SynthConfig;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Runner {
    failures: usize,
}

impl Runner {
    fn run(&mut self, name: &str, limit: Duration, check: impl FnOnce() -> Check) {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (mut pass, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let mut timing = format!("{:.1}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs());
        if elapsed > limit {
            pass = false;
            timing.push_str(", over time");
        }
        if !pass {
            self.failures += 1;
        }
        println!("{} {name}: {detail} [{timing}]", if pass { "PASS" } else { "FAIL" });
    }
}

fn metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut all_up, mut all_down) = (0, 0);
    for case in 0..1000 {
        let n = rng.random_range(1..60);
        // Every tenth case has one-signed realized returns so both
        // degenerate branches are exercised.
        let sign = match case % 10 {
            0 => Some(1.0),
            5 => Some(-1.0),
            _ => None,
        };
        let draw = |rng: &mut ChaCha8Rng| {
            if rng.random::<f64>() < 0.05 {
                0.0
            } else {
                rng.random_range(-0.1..0.1)
            }
        };
        let r: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = draw(&mut rng);
                match sign {
                    Some(s) if s > 0.0 => v.abs(),
                    Some(_) => -(v.abs() + 1e-6),
                    None => v,
                }
            })
            .collect();
        let p: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        all_up += r.iter().all(|&v| v >= 0.0) as usize;
        all_down += r.iter().all(|&v| v < 0.0) as usize;
        let got = compute_metrics(&r, &p).map_err(|e| e.to_string())?;
        let want = common::naive_metrics(&r, &p);
        let same = got.da == want.da
            && got.uda == want.uda
            && got.dda == want.dda
            && got.rmse == want.rmse
            && got.mse == want.mse
            && got.mae == want.mae;
        if !same {
            return Err(format!("case {case} differs"));
        }
    }
    ensure(
        all_up > 0 && all_down > 0,
        format!("1000 cases identical ({all_up} all-up, {all_down} all-down)"),
    )
}

fn gap_traces() -> Check {
    let halving = fill_missing(&[Some(0.0), None, None, Some(4.0)]).map_err(|e| e.to_string())?;
    if halving != [0.0, 2.0, 3.0, 4.0] {
        return Err(format!("interior gap gave {halving:?}"));
    }
    let trailing = fill_missing(&[Some(1.0), Some(2.5), None, None]).map_err(|e| e.to_string())?;
    if trailing != [1.0, 2.5, 2.5, 2.5] {
        return Err(format!("trailing gap gave {trailing:?}"));
    }
    let mut long = vec![Some(1.0)];
    long.extend(std::iter::repeat_n(None, 11));
    long.push(Some(2.0));
    match fill_missing(&long) {
        Err(Error::MissingRunTooLong { run: 11, .. }) => {}
        other => return Err(format!("11 missing gave {other:?}")),
    }
    Ok("[0,Na,Na,4] -> [0,2,3,4]; trailing carried forward; 11-day run rejected".into())
}

fn lcs_oracle_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let alphabet: Vec<char> = "abcdeé ".chars().collect();
    for case in 0..1000 {
        let word = |rng: &mut ChaCha8Rng| -> Vec<char> {
            let len = rng.random_range(0..=20);
            let k = rng.random_range(2..=alphabet.len());
            (0..len).map(|_| alphabet[rng.random_range(0..k)]).collect()
        };
        let (a, b) = (word(&mut rng), word(&mut rng));
        let got = wfstack::text_linking::lcs_length(&a, &b);
        let want = common::lcs_oracle(&a, &b);
        if got != want {
            return Err(format!("case {case}: {got} vs {want}"));
        }
    }
    Ok("1000 pairs identical".into())
}

fn random_design(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Design {
    let normal = Normal::new(0.0, scale).unwrap();
    Design::new(rows, cols, (0..rows * cols).map(|_| normal.sample(rng)).collect())
}

fn kkt_residual(p: &Design, y: &[f64], w: &[f64]) -> f64 {
    let fitted: Vec<f64> = (0..p.rows).map(|i| p.row(i).iter().zip(w).map(|(a, b)| a * b).sum()).collect();
    let mut worst = 0.0f64;
    for (j, &wj) in w.iter().enumerate() {
        let g: f64 = (0..p.rows).map(|i| p.data[i * p.cols + j] * (fitted[i] - y[i])).sum();
        worst = worst.max((-g).max(0.0)).max((wj * g).abs()).max((-wj).max(0.0));
    }
    worst
}

/// Minimum of ‖Pw − y‖² over a grid of step `h` on (w1, w2) in [0, 3]²,
/// with w3 ≥ 0 minimized exactly for each grid point.
fn grid_minimum(p: &Design, y: &[f64], h: f64) -> f64 {
    let mut g = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (i, &yi) in y.iter().enumerate() {
        let row = p.row(i);
        for j in 0..3 {
            b[j] += row[j] * yi;
            for k in 0..3 {
                g[j][k] += row[j] * row[k];
            }
        }
    }
    let yy: f64 = y.iter().map(|v| v * v).sum();
    let steps = (3.0 / h).round() as usize;
    let mut best = f64::INFINITY;
    for a in 0..=steps {
        let w1 = a as f64 * h;
        for c in 0..=steps {
            let w2 = c as f64 * h;
            let w3 = ((b[2] - g[2][0] * w1 - g[2][1] * w2) / g[2][2]).max(0.0);
            let w = [w1, w2, w3];
            let mut f = yy;
            for j in 0..3 {
                f -= 2.0 * b[j] * w[j];
                for k in 0..3 {
                    f += w[j] * g[j][k] * w[k];
                }
            }
            best = best.min(f);
        }
    }
    best
}

fn nnls_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_kkt = 0.0f64;
    for case in 0..200 {
        let cols = 3 + case % 4;
        let rows = rng.random_range(cols + 2..80);
        let mut p = random_design(&mut rng, rows, cols, 1.0);
        if case % 3 == 0 {
            // Nearly collinear pair of columns.
            for i in 0..rows {
                p.data[i * cols + 1] = p.data[i * cols] + 1e-3 * p.data[i * cols + 1];
            }
        }
        let y: Vec<f64> = (0..rows).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w = fit_nnls(&p, &y).map_err(|e| e.to_string())?;
        worst_kkt = worst_kkt.max(kkt_residual(&p, &y, &w));
    }
    if worst_kkt > 1e-8 {
        return Err(format!("KKT residual {worst_kkt:e}"));
    }

    let mut worst_gap = 0.0f64;
    let mut grid_cases = 0;
    while grid_cases < 12 {
        let rows = 40;
        // Entries of sd 1/√(3·rows) keep the Gram eigenvalues near 1/3, so
        // the grid's discretization error stays far below 1e-6.
        let p = random_design(&mut rng, rows, 3, 1.0 / (3.0 * rows as f64).sqrt());
        let truth: Vec<f64> = (0..3).map(|_| rng.random_range(-0.8..2.5)).collect();
        let y: Vec<f64> = (0..rows)
            .map(|i| p.row(i).iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-0.05..0.05))
            .collect();
        let w = fit_nnls(&p, &y).map_err(|e| e.to_string())?;
        if w[0] > 2.9 || w[1] > 2.9 {
            continue;
        }
        let ours = residual_norm(&p, &y, &w).powi(2);
        let grid = grid_minimum(&p, &y, 1e-3);
        worst_gap = worst_gap.max((ours - grid).abs());
        grid_cases += 1;
    }
    if worst_gap > 1e-6 {
        return Err(format!("objective differs from grid oracle by {worst_gap:e}"));
    }

    let mut worst_perfect = 0.0f64;
    for case in 0..20 {
        let cols = 3 + case % 4;
        let p = random_design(&mut rng, 50, cols, 1.0);
        let j = case % cols;
        let y = p.column(j);
        let w = fit_nnls(&p, &y).map_err(|e| e.to_string())?;
        for (k, &wk) in w.iter().enumerate() {
            worst_perfect = worst_perfect.max((wk - if k == j { 1.0 } else { 0.0 }).abs());
        }
    }
    ensure(
        worst_perfect <= 1e-10,
        format!(
            "KKT max {worst_kkt:.1e} over 200 problems; grid gap max {worst_gap:.1e} over 12; perfect column off by {worst_perfect:.1e}"
        ),
    )
}

/// Cancellation in the difference quotient leaves about ε·|loss|/h ≈ 1e-11
/// of noise; the floor keeps that noise five orders below the denominator,
/// so exactly-zero gradients (inactive ReLU units) are not scored as errors.
const DENOMINATOR_FLOOR: f64 = 1e-6;

fn relative_gradient_error(
    params: Vec<f64>,
    grad: &[f64],
    mut loss_at: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let h = 1e-4;
    let mut worst = 0.0f64;
    for k in 0..params.len() {
        let mut at = |offset: f64| {
            let mut p = params.clone();
            p[k] += offset;
            loss_at(&p)
        };
        // Fourth-order central difference.
        let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        worst = worst.max((fd - grad[k]).abs() / (fd.abs() + grad[k].abs()).max(DENOMINATOR_FLOOR));
    }
    worst
}

fn gradient_checks() -> Check {
    use wfstack::models::ffnn::{Ffnn, HIDDEN as FFNN_HIDDEN};
    use wfstack::models::lstm::{LstmNet, SequenceSet, HIDDEN as LSTM_HIDDEN, STEPS};

    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let inputs = 12;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let rows = 24;
    let x = Design::new(rows, inputs, (0..rows * inputs).map(|_| normal.sample(&mut rng)).collect());
    // Targets well away from the initial outputs keep every absolute error
    // on one side of its kink.
    let y: Vec<f64> = (0..rows).map(|i| if i % 2 == 0 { 3.0 } else { -3.0 }).collect();
    let mut net = Ffnn::new(inputs, FFNN_HIDDEN, &mut rng);
    let (_, grad) = net.loss_and_gradient(&x, &y);
    let ffnn_err = relative_gradient_error(net.parameters(), &grad, |p| {
        net.set_parameters(p);
        net.loss(&x, &y)
    });

    let mut set = SequenceSet::new(inputs);
    for s in 0..8 {
        let steps: Vec<Vec<f64>> = (0..STEPS).map(|_| (0..inputs).map(|_| normal.sample(&mut rng)).collect()).collect();
        let sign = if s % 2 == 0 { 3.0 } else { -3.0 };
        set.push([&steps[0], &steps[1], &steps[2]], Some([sign; STEPS]));
    }
    let mut lstm_err = 0.0f64;
    for depth in [1, 2] {
        let mut net = LstmNet::new(inputs, LSTM_HIDDEN, depth, &mut rng);
        let (_, grad) = net.loss_and_gradient(&set);
        lstm_err = lstm_err.max(relative_gradient_error(net.parameters(), &grad, |p| {
            net.set_parameters(p);
            net.loss(&set)
        }));
    }
    ensure(
        ffnn_err < 1e-4 && lstm_err < 1e-4,
        format!("max relative error FFNN-{FFNN_HIDDEN} {ffnn_err:.1e}, LSTM-{LSTM_HIDDEN} x{STEPS} steps {lstm_err:.1e}"),
    )
}

/// Base and stacked predictions of one quick backtest.
fn quick_predictions(panel: &Panel, seed: u64) -> wfstack::Result<(Vec<wfstack::backtest::PredictionRecord>, Vec<Prediction>)> {
    let out = run_walk_forward(panel, &common::quick_specs(seed), &BacktestOptions::default())?;
    let base = out.prediction_table();
    let schedule = yearly_schedule(panel);
    let options = EnsembleOptions::default();
    let stocks = stack(&base, &panel.realized(), &schedule, &options)?;
    let index = wfstack::pipeline::equal_weight_index(&panel.realized());
    let (medians, idx) = stack_index(&base, &index, &schedule, &options)?;
    let mut all = base;
    all.extend(stocks.predictions);
    all.extend(medians);
    all.extend(idx.predictions);
    Ok((out.predictions, all))
}

fn yearly_schedule(panel: &Panel) -> Schedule {
    let (first, last) = panel.date_range().expect("nonempty panel");
    build_schedule(first, last, Update::Yearly).expect("schedule")
}

/// Scrambles every value dated after `t`, keeping the table consistent:
/// targets are re-derived from the scrambled returns.
fn scramble_after(panel: &Panel, t: NaiveDate, rng: &mut ChaCha8Rng) -> Panel {
    let mut out = panel.clone();
    for stock in &mut out.stocks {
        for row in stock.rows.iter_mut().filter(|r| r.week_end > t) {
            for column in FeatureColumn::ALL {
                let v = row.get(column).unwrap_or(0.5);
                row.set(column, Some(v * rng.random_range(-3.0..3.0) + rng.random_range(-1.0..1.0)));
            }
        }
        for i in 0..stock.rows.len() {
            if stock.rows[i].week_end >= t {
                stock.rows[i].target = stock.rows.get(i + 1).and_then(|next| next.ret);
            }
        }
    }
    out
}

fn no_lookahead() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let synth = SynthConfig { stocks: 6, years: 6, seed: 11, ..SynthConfig::default() };
    let run = common::synth_run(dir.path(), &synth);
    let (records, reference) = quick_predictions(&run.panel, 5).map_err(|e| e.to_string())?;
    if let Some(r) = records.iter().find(|r| r.input_through >= r.prediction.week_end) {
        return Err(format!("{} {} read input through {}", r.prediction.model_id, r.prediction.week_end, r.input_through));
    }
    let schedule = yearly_schedule(&run.panel);
    let weeks: Vec<NaiveDate> = run
        .panel
        .stocks[0]
        .rows
        .iter()
        .map(|r| r.week_end)
        .filter(|&w| w > schedule.warmup_end && w < schedule.data_end)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let key = |p: &Prediction| (p.model_id.clone(), p.ticker.clone(), p.week_end);
    let mut checked = 0;
    let mut times = Vec::new();
    for _ in 0..5 {
        let t = weeks[rng.random_range(0..weeks.len())];
        times.push(t);
        let scrambled = scramble_after(&run.panel, t, &mut rng);
        let (_, again) = quick_predictions(&scrambled, 5).map_err(|e| e.to_string())?;
        let before: BTreeMap<_, u64> =
            reference.iter().filter(|p| p.week_end <= t).map(|p| (key(p), p.value.to_bits())).collect();
        let after: BTreeMap<_, u64> =
            again.iter().filter(|p| p.week_end <= t).map(|p| (key(p), p.value.to_bits())).collect();
        if before != after {
            let diff = before.iter().find(|(k, v)| after.get(*k) != Some(v)).map(|(k, _)| k.clone());
            return Err(format!("scrambling after {t} changed {diff:?}"));
        }
        checked += before.len();
    }
    let times: Vec<String> = times.iter().map(ToString::to_string).collect();
    Ok(format!("{checked} predictions bitwise unchanged at t = {}", times.join(", ")))
}

fn random_window(rng: &mut ChaCha8Rng) -> DailySeries {
    let len = rng.random_range(35..90);
    let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    let mut price: f64 = rng.random_range(1.0..500.0);
    let vol: f64 = rng.random_range(0.002..0.08);
    let bars = (0..len)
        .map(|i| {
            let open = price;
            price *= (vol * rng.random_range(-2.0..2.0)).exp();
            let high = open.max(price) * (1.0 + rng.random_range(0.0..vol));
            let low = open.min(price) * (1.0 - rng.random_range(0.0..vol));
            // Some flat days test the zero-range branches.
            let flat = rng.random::<f64>() < 0.05;
            let (high, low, close) = if flat { (open, open, open) } else { (high, low, price) };
            price = close;
            DailyBar {
                date: start + chrono::Days::new(i as u64),
                open,
                high,
                low,
                close,
                adj_close: close,
                volume: if rng.random::<f64>() < 0.05 { 0.0 } else { rng.random_range(0.0..1e7) },
                dividend: 0.0,
                split: 1.0,
            }
        })
        .collect();
    DailySeries::new("R", None, bars).unwrap()
}

fn indicator_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut values = 0usize;
    for case in 0..10_000 {
        for row in compute_indicators(&random_window(&mut rng)).map_err(|e| e.to_string())? {
            let checks = [
                (row.rsi, 0.0, 100.0, "rsi"),
                (row.wr, -100.0, 0.0, "wr"),
                (row.cmf, -1.0, 1.0, "cmf"),
                (row.kdj_k, 0.0, 100.0, "kdj_k"),
            ];
            for (v, lo, hi, name) in checks {
                if let Some(v) = v {
                    values += 1;
                    if !(lo..=hi).contains(&v) {
                        return Err(format!("window {case}: {name} = {v}"));
                    }
                }
            }
        }
    }
    let (worst, warmup) = common::fixture_deviation();
    ensure(
        worst <= 1e-9 && warmup,
        format!("{values} bounded values over 10000 windows; fixture max deviation {worst:.1e}, warm-up rows empty: {warmup}"),
    )
}

fn yeo_johnson_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    for case in 0..60 {
        let n = rng.random_range(30..3000);
        let sample: Vec<Option<f64>> = (0..n)
            .map(|_| {
                let z: f64 = normal.sample(&mut rng);
                let v = match case % 4 {
                    0 => z.exp(),
                    1 => -(2.0 * z).exp(),
                    2 => 40.0 * z,
                    _ => z.powi(3) * 5.0,
                };
                (rng.random::<f64>() > 0.1).then_some(v)
            })
            .collect();
        let t = fit_transform(&sample).map_err(|e| e.to_string())?;
        let present: Vec<Option<f64>> = sample.iter().copied().filter(Option::is_some).collect();
        let z = apply(&present, &t, false);
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64;
        worst_mean = worst_mean.max(mean.abs());
        worst_var = worst_var.max((var - 1.0).abs());
    }
    let mut monotone = true;
    for _ in 0..2000 {
        let lambda = rng.random_range(-5.0..5.0);
        let mut xs: Vec<f64> = (0..50).map(|_| rng.random_range(-50.0..50.0)).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        monotone &= xs.windows(2).all(|w| yeo_johnson(w[0], lambda) < yeo_johnson(w[1], lambda));
    }
    let train: Vec<Option<f64>> = (0..200).map(|_| Some(normal.sample(&mut rng))).collect();
    let t = fit_transform(&train).map_err(|e| e.to_string())?;
    let extreme = apply(&[Some(1e6), Some(-1e6), Some(0.0)], &t, true);
    let capped = extreme[0] == DEFAULT_CAP && extreme[1] == -DEFAULT_CAP && extreme[2].abs() < DEFAULT_CAP;
    let uncapped_train = apply(&[Some(1e6)], &t, false)[0] > DEFAULT_CAP;
    ensure(
        worst_mean < 1e-8 && worst_var < 1e-6 && monotone && capped && uncapped_train,
        format!(
            "max |mean| {worst_mean:.1e}, max |var-1| {worst_var:.1e}; monotone: {monotone}; test cap at {DEFAULT_CAP}: {capped}"
        ),
    )
}

fn arima_check() -> Check {
    use wfstack::models::arima::select_arima_order;

    let simulate = |seed: u64, phi: f64| -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut x = 0.0;
        let mut out = Vec::with_capacity(500);
        for i in 0..600 {
            x = phi * x + normal.sample(&mut rng);
            // Burn-in of 100 draws.
            if i >= 100 {
                out.push(x);
            }
        }
        out
    };
    let mut ar_hits = 0;
    let mut wn_hits = 0;
    for seed in 0..50 {
        let ar = select_arima_order(&simulate(1000 + seed, 0.5)).map_err(|e| e.to_string())?;
        ar_hits += (ar.order.p >= 1 && ar.order.d == 0) as usize;
        let wn = select_arima_order(&simulate(2000 + seed, 0.0)).map_err(|e| e.to_string())?;
        wn_hits += (wn.order.d == 0) as usize;
    }
    ensure(
        ar_hits >= 40 && wn_hits >= 45,
        format!("AR(1) p>=1,d=0 in {ar_hits}/50 (need 40); white noise d=0 in {wn_hits}/50 (need 45)"),
    )
}

struct DeskRun {
    base: Vec<Prediction>,
    medians: Vec<Prediction>,
    stock_fits: Vec<EnsembleFit>,
    index_fits: Vec<EnsembleFit>,
    realized: BTreeMap<(String, NaiveDate), f64>,
    index: BTreeMap<NaiveDate, f64>,
    da: BTreeMap<String, f64>,
}

fn desk_run() -> Result<DeskRun, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = common::synth_run(dir.path(), &SynthConfig::default());
    let specs = run.config.model_specs();
    let out = run_walk_forward(&run.panel, &specs, &BacktestOptions::default()).map_err(|e| e.to_string())?;
    let base = out.prediction_table();
    let schedule = yearly_schedule(&run.panel);
    let realized = run.panel.realized();
    let stocks = stack(&base, &realized, &schedule, &run.config.ensemble).map_err(|e| e.to_string())?;
    let (medians, index) =
        stack_index(&base, &run.index, &schedule, &run.config.ensemble).map_err(|e| e.to_string())?;
    let mut all = base.clone();
    all.extend(stocks.predictions.iter().cloned());
    let rows = join(&all, &realized, &run.index, schedule.eval_start);
    let da = aggregate(&rows)
        .into_iter()
        .filter(|r| r.scope == MetricScope::AllStocks && r.year.is_none())
        .map(|r| (r.model_id, r.values.da))
        .collect();
    Ok(DeskRun {
        base,
        medians,
        stock_fits: stocks.fits,
        index_fits: index.fits,
        realized,
        index: run.index,
        da,
    })
}

fn desk_ordering(run: &Result<DeskRun, String>) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    let ensemble = *run.da.get(wfstack::ensemble::ENSEMBLE_ID).ok_or("no ensemble metrics")?;
    let always_up = *run.da.get(ALWAYS_UP_ID).ok_or("no baseline metrics")?;
    let (best_id, best) = run
        .da
        .iter()
        .filter(|(m, _)| m.as_str() != wfstack::ensemble::ENSEMBLE_ID && m.as_str() != ALWAYS_UP_ID)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or("no base model metrics")?;
    let table: Vec<String> = run.da.iter().map(|(m, v)| format!("{m} {:.2}%", 100.0 * v)).collect();
    ensure(
        ensemble >= always_up + 0.03 && ensemble >= best - 0.005,
        format!(
            "ensemble {:.2}% vs always-up {:.2}% (+{:.2} pts) and best individual {best_id} {:.2}%; all: {}",
            100.0 * ensemble,
            100.0 * always_up,
            100.0 * (ensemble - always_up),
            100.0 * best,
            table.join(", ")
        ),
    )
}

/// Rebuilds a fit's training pairs and compares its residual norm with each
/// single base model's.
fn dominates(fit: &EnsembleFit, predictions: &[Prediction], realized: &BTreeMap<(String, NaiveDate), f64>) -> Result<bool, String> {
    let mut table: BTreeMap<(&str, NaiveDate), Vec<Option<f64>>> = BTreeMap::new();
    for p in predictions {
        if let Some(j) = fit.model_ids.iter().position(|m| *m == p.model_id) {
            if p.week_end < fit.window.0 || p.week_end > fit.window.1 {
                continue;
            }
            if fit.group != "all" && p.ticker != fit.group {
                continue;
            }
            table.entry((p.ticker.as_str(), p.week_end)).or_insert_with(|| vec![None; fit.model_ids.len()])[j] =
                Some(p.value);
        }
    }
    let mut data = Vec::new();
    let mut y = Vec::new();
    for ((ticker, week), values) in table {
        if let (true, Some(&r)) = (values.iter().all(Option::is_some), realized.get(&(ticker.to_string(), week))) {
            data.extend(values.into_iter().flatten());
            y.push(r);
        }
    }
    if y.len() != fit.n {
        return Err(format!("{} fit at {}: rebuilt {} pairs, fit used {}", fit.group, fit.fit_date, y.len(), fit.n));
    }
    let cols = fit.model_ids.len();
    let p = Design::new(y.len(), cols, data);
    let ours = residual_norm(&p, &y, &fit.weights);
    Ok((0..cols).all(|j| {
        let mut one_hot = vec![0.0; cols];
        one_hot[j] = 1.0;
        ours <= residual_norm(&p, &y, &one_hot)
    }))
}

fn nnls_dominance(run: &Result<DeskRun, String>) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    let index_realized: BTreeMap<(String, NaiveDate), f64> =
        run.index.iter().map(|(w, v)| ((INDEX_TICKER.to_string(), *w), *v)).collect();
    let mut failed = Vec::new();
    for fit in &run.stock_fits {
        if !dominates(fit, &run.base, &run.realized)? {
            failed.push(format!("{} {}", fit.group, fit.fit_date));
        }
    }
    for fit in &run.index_fits {
        if !dominates(fit, &run.medians, &index_realized)? {
            failed.push(format!("index {}", fit.fit_date));
        }
    }
    let total = run.stock_fits.len() + run.index_fits.len();
    let groups: BTreeSet<&str> = run.stock_fits.iter().map(|f| f.group.as_str()).collect();
    ensure(
        failed.is_empty() && total > 0,
        format!(
            "{}/{total} fitted windows ({} stock, {} index; groups {groups:?}) dominate every one-hot model{}",
            total - failed.len(),
            run.stock_fits.len(),
            run.index_fits.len(),
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    )
}

fn main() {
    let mut runner = Runner { failures: 0 };
    let secs = Duration::from_secs;
    runner.run("metric oracle", secs(1), metric_oracle);
    runner.run("gap repair traces", secs(1), gap_traces);
    runner.run("LCS vs DP oracle", secs(5), lcs_oracle_check);
    runner.run("NNLS KKT, grid oracle, perfect column", secs(30), nnls_check);
    runner.run("gradient checks", secs(60), gradient_checks);
    runner.run("no lookahead", secs(300), no_lookahead);
    runner.run("indicator ranges and fixture", secs(30), indicator_check);
    runner.run("Yeo-Johnson", secs(10), yeo_johnson_check);
    runner.run("ARIMA order selection", secs(120), arima_check);

    // The dominance check reuses the fits of the desk-scale run.
    let mut desk = Err("desk-scale run did not complete".to_string());
    runner.run("desk-scale ordering", secs(600), || {
        desk = desk_run();
        desk_ordering(&desk)
    });
    runner.run("NNLS in-sample dominance", secs(10), || nnls_dominance(&desk));

    if runner.failures > 0 {
        println!("{} criteria failed", runner.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
