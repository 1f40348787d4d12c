//! Walk-forward stacking backtester for weekly stock return forecasts.
//!
//! The pipeline runs: daily bars ([`market_data`]) → weekly features
//! ([`features`], [`text_linking`], [`sentiment`]) → per-window Gaussianizing
//! transforms ([`preprocess`]) → base models ([`models`]) driven by the
//! walk-forward engine ([`backtest`]) → nonnegative stacking ([`ensemble`])
//! → evaluation ([`metrics`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod market_data;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod sentiment;
pub mod stats;
pub mod synth;
pub mod text_linking;

pub use error::{Error, Result};
