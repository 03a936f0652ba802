//! Session-separated realized volatility from tick data, finite-sample moment
//! analysis of volatility-standardized returns, and a synthetic market used
//! as a Monte Carlo reference for the whole pipeline.
//!
//! Data flow: [`market_data`] parses ticks and slices them into trading
//! sessions, [`sampling`] resamples each session onto a Δ-minute grid,
//! [`rv`] sums squared returns, [`moments`] standardizes session returns by
//! `sqrt(RV)` and compares their moments with the exact finite-sample law,
//! and [`fitting`] extrapolates the moment decay curves to Δ → 0.
//! [`pipeline`] strings the stages together; [`synth`] generates test data.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fitting;
pub mod format;
pub mod io;
pub mod market_data;
pub mod moments;
pub mod pipeline;
pub mod registry;
pub mod rv;
pub mod sampling;
pub mod synth;

pub use market_data::{parse_ticks, split_sessions, SessionCalendar, SessionLabel, Tick, TickSeries};
pub use pipeline::{analyze, AnalysisConfig, AnalysisReport};
