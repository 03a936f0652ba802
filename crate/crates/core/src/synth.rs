//! Synthetic tick data with known integrated volatility.
//!
//! Within each session the log price is a driftless Gaussian diffusion with
//! constant spot volatility, so every tick increment is `N(0, σ² dt / T)` and
//! the session's integrated volatility is exactly the drawn `σ²`. Session
//! variances come from a pluggable [`VolatilityModel`]; observed prices pass
//! through a pluggable [`NoiseModel`].
//!
//! Randomness: each trading day owns a ChaCha8 stream selected by the day's
//! ordinal date under the configured seed, so output does not depend on how
//! days are scheduled across threads. Normals use the ziggurat sampler of
//! `rand_distr::StandardNormal`; gamma draws use `rand_distr::Gamma`.

use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::format::fmt_price;
use crate::market_data::{
    is_weekend, tse_sessions, SessionConfig, SessionLabel, SessionSpec, Tick, TickSeries, TIMESTAMP_FORMAT,
};
use crate::registry::{param_f64, Registry, RegistryError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn normal(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

/// Law of the per-session integrated variance σ².
pub trait VolatilityModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn draw(&self, rng: &mut dyn RngCore) -> f64;
    /// E[σ²].
    fn mean(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantVol {
    pub sigma2: f64,
}

/// `ln σ² ~ N(mu, s²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalVol {
    pub mu: f64,
    pub s: f64,
}

/// `σ² = scale / G` with `G ~ Gamma(shape, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct InverseGammaVol {
    pub shape: f64,
    pub scale: f64,
    gamma: Gamma<f64>,
}

impl InverseGammaVol {
    /// `shape > 3` keeps the sixth moment of unstandardized returns finite.
    pub fn new(shape: f64, scale: f64) -> Result<Self, String> {
        if !(shape > 3.0) || !(scale > 0.0) {
            return Err(format!("inverse gamma needs shape > 3 and scale > 0, got shape={shape} scale={scale}"));
        }
        let gamma = Gamma::new(shape, 1.0).map_err(|e| e.to_string())?;
        Ok(Self { shape, scale, gamma })
    }
}

impl VolatilityModel for ConstantVol {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn draw(&self, _: &mut dyn RngCore) -> f64 {
        self.sigma2
    }

    fn mean(&self) -> f64 {
        self.sigma2
    }
}

impl VolatilityModel for LogNormalVol {
    fn name(&self) -> &'static str {
        "lognormal"
    }

    fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        (self.mu + self.s * normal(rng)).exp()
    }

    fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.s * self.s).exp()
    }
}

impl VolatilityModel for InverseGammaVol {
    fn name(&self) -> &'static str {
        "inversegamma"
    }

    fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        self.scale / self.gamma.sample(rng)
    }

    fn mean(&self) -> f64 {
        self.scale / (self.shape - 1.0)
    }
}

pub fn vol_models() -> Registry<dyn VolatilityModel> {
    fn constant(p: &Value) -> Result<Box<dyn VolatilityModel>, String> {
        let sigma2 = param_f64(p, "sigma2")?;
        if !(sigma2 >= 0.0) {
            return Err("sigma2 must be non-negative".into());
        }
        Ok(Box::new(ConstantVol { sigma2 }))
    }
    fn lognormal(p: &Value) -> Result<Box<dyn VolatilityModel>, String> {
        let (mu, s) = (param_f64(p, "mu")?, param_f64(p, "s")?);
        if !(s > 0.0) || !mu.is_finite() {
            return Err("lognormal needs finite mu and s > 0".into());
        }
        Ok(Box::new(LogNormalVol { mu, s }))
    }
    fn inverse_gamma(p: &Value) -> Result<Box<dyn VolatilityModel>, String> {
        Ok(Box::new(InverseGammaVol::new(param_f64(p, "shape")?, param_f64(p, "scale")?)?))
    }
    let mut r = Registry::new("volatility model");
    r.register("constant", constant).register("lognormal", lognormal).register("inversegamma", inverse_gamma);
    r
}

/// Observation noise applied to one session's true log prices.
pub trait NoiseModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn apply(&self, true_log: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoNoise;

/// `ln P* = ln P + ξ`, `ξ ~ N(0, ω²)` fresh per tick.
#[derive(Debug, Clone, Copy)]
pub struct IidNoise {
    pub omega: f64,
}

/// Trailing moving average of the last `window` true log prices, truncated at the session start.
#[derive(Debug, Clone, Copy)]
pub struct SmoothingNoise {
    pub window: usize,
}

impl NoiseModel for NoNoise {
    fn name(&self) -> &'static str {
        "none"
    }

    fn apply(&self, true_log: &[f64], _: &mut dyn RngCore) -> Vec<f64> {
        true_log.to_vec()
    }
}

impl NoiseModel for IidNoise {
    fn name(&self) -> &'static str {
        "iid"
    }

    fn apply(&self, true_log: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        true_log.iter().map(|&x| x + self.omega * normal(rng)).collect()
    }
}

impl NoiseModel for SmoothingNoise {
    fn name(&self) -> &'static str {
        "smoothing"
    }

    fn apply(&self, true_log: &[f64], _: &mut dyn RngCore) -> Vec<f64> {
        if self.window <= 1 || true_log.is_empty() {
            return true_log.to_vec();
        }
        // averages of offsets from the first price keep the running sum small
        let base = true_log[0];
        let mut out = Vec::with_capacity(true_log.len());
        let mut sum = 0.0;
        for i in 0..true_log.len() {
            sum += true_log[i] - base;
            if i >= self.window {
                sum -= true_log[i - self.window] - base;
            }
            let width = (i + 1).min(self.window) as f64;
            out.push(base + sum / width);
        }
        out
    }
}

pub fn noise_models() -> Registry<dyn NoiseModel> {
    fn none(_: &Value) -> Result<Box<dyn NoiseModel>, String> {
        Ok(Box::new(NoNoise))
    }
    fn iid(p: &Value) -> Result<Box<dyn NoiseModel>, String> {
        let omega = param_f64(p, "omega")?;
        if !(omega >= 0.0) || !omega.is_finite() {
            return Err("omega must be non-negative".into());
        }
        Ok(Box::new(IidNoise { omega }))
    }
    fn smoothing(p: &Value) -> Result<Box<dyn NoiseModel>, String> {
        let window = p.get("window_ticks").and_then(Value::as_u64).ok_or("missing integer `window_ticks`")?;
        if window == 0 {
            return Err("window_ticks must be at least 1".into());
        }
        Ok(Box::new(SmoothingNoise { window: window as usize }))
    }
    let mut r = Registry::new("noise model");
    r.register("none", none).register("iid", iid).register("smoothing", smoothing);
    r
}

/// Expected upward bias `2 n ω²` of RV from i.i.d. noise over `n` returns.
pub fn noise_bias_estimate(n: u64, omega: f64) -> f64 {
    2.0 * n as f64 * omega * omega
}

/// One session variance draw.
pub fn draw_session_variance(model: &dyn VolatilityModel, rng: &mut dyn RngCore) -> f64 {
    model.draw(rng)
}

/// Log-price increments at `tick_interval` spacing over a session of `session_seconds`,
/// each `N(0, σ² dt / T)`.
pub fn simulate_session_path(sigma2: f64, session_seconds: u32, tick_interval: u32, rng: &mut dyn RngCore) -> Vec<f64> {
    let steps = (session_seconds / tick_interval) as usize;
    let sd = (sigma2 * f64::from(tick_interval) / f64::from(session_seconds)).sqrt();
    (0..steps).map(|_| sd * normal(rng)).collect()
}

/// Name plus strategy-specific parameters, e.g. `{"kind": "lognormal", "mu": -9.2, "s": 0.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: String,
    #[serde(flatten)]
    pub params: Map<String, Value>,
}

impl StrategySpec {
    pub fn new(kind: &str, params: Value) -> Self {
        Self { kind: kind.to_string(), params: params.as_object().cloned().unwrap_or_default() }
    }

    pub fn params_value(&self) -> Value {
        Value::Object(self.params.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub days: usize,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    /// Session windows; the TSE morning and afternoon sessions when absent.
    #[serde(default)]
    pub sessions: Option<Vec<SessionConfig>>,
    #[serde(default = "default_tick_interval")]
    pub tick_interval_seconds: u32,
    pub vol_model: StrategySpec,
    #[serde(default = "default_noise")]
    pub noise_model: StrategySpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_log_price")]
    pub initial_log_price: f64,
    /// Overnight jump variance as a multiple of the mean session variance.
    #[serde(default = "default_overnight")]
    pub overnight_jump_factor: f64,
    /// Lunch-break jump variance as a multiple of the mean session variance.
    #[serde(default = "default_lunch")]
    pub lunch_jump_factor: f64,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2006, 5, 1).expect("valid date")
}
fn default_tick_interval() -> u32 {
    60
}
fn default_noise() -> StrategySpec {
    StrategySpec::new("none", json!({}))
}
fn default_log_price() -> f64 {
    15000f64.ln()
}
fn default_overnight() -> f64 {
    0.1
}
fn default_lunch() -> f64 {
    0.01
}

impl SimConfig {
    pub fn new(days: usize, vol_model: StrategySpec, seed: u64) -> Self {
        Self {
            days,
            start_date: default_start(),
            sessions: None,
            tick_interval_seconds: default_tick_interval(),
            vol_model,
            noise_model: default_noise(),
            seed,
            initial_log_price: default_log_price(),
            overnight_jump_factor: default_overnight(),
            lunch_jump_factor: default_lunch(),
        }
    }

    pub fn session_specs(&self) -> Result<Vec<SessionSpec>, SimError> {
        let specs = match &self.sessions {
            None => tse_sessions(),
            Some(list) => {
                let cal = crate::market_data::CalendarConfig {
                    timezone: "Asia/Tokyo".into(),
                    sessions: list.clone(),
                    days: crate::market_data::DaysConfig::List(vec![]),
                };
                cal.build().map_err(|e| SimError::ConfigInvalid(e.to_string()))?.sessions().to_vec()
            }
        };
        let labels: Vec<SessionLabel> = specs.iter().map(|s| s.label).collect();
        if labels != [SessionLabel::MS, SessionLabel::AS] {
            return Err(SimError::ConfigInvalid("simulation needs an MS and an AS session".into()));
        }
        Ok(specs)
    }

    /// Weekdays from `start_date`.
    pub fn trading_days(&self) -> Vec<NaiveDate> {
        self.start_date.iter_days().filter(|d| !is_weekend(*d)).take(self.days).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPrices {
    pub ms_open: f64,
    pub ms_close: f64,
    pub as_open: f64,
    pub as_close: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthDay {
    pub date: NaiveDate,
    pub ms_sigma2: f64,
    pub as_sigma2: f64,
    pub boundary_prices: BoundaryPrices,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimTruth {
    pub days: Vec<TruthDay>,
}

impl SimTruth {
    pub fn sigma2(&self, date: NaiveDate, label: SessionLabel) -> Option<f64> {
        let i = self.days.binary_search_by_key(&date, |d| d.date).ok()?;
        Some(match label {
            SessionLabel::MS => self.days[i].ms_sigma2,
            SessionLabel::AS => self.days[i].as_sigma2,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSession {
    pub spec: SessionSpec,
    pub true_log: Vec<f64>,
    pub observed_log: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDay {
    pub date: NaiveDate,
    pub sessions: [SimSession; 2],
    pub sigma2: [f64; 2],
}

/// Generated ticks plus the truth they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub days: Vec<SimDay>,
    pub tick_interval_seconds: u32,
}

impl SimDataset {
    pub fn tick_count(&self) -> usize {
        self.days.iter().flat_map(|d| d.sessions.iter()).map(|s| s.observed_log.len()).sum()
    }

    pub fn truth(&self) -> SimTruth {
        SimTruth {
            days: self
                .days
                .iter()
                .map(|d| {
                    let [ms, af] = &d.sessions;
                    TruthDay {
                        date: d.date,
                        ms_sigma2: d.sigma2[0],
                        as_sigma2: d.sigma2[1],
                        boundary_prices: BoundaryPrices {
                            ms_open: ms.true_log[0].exp(),
                            ms_close: ms.true_log[ms.true_log.len() - 1].exp(),
                            as_open: af.true_log[0].exp(),
                            as_close: af.true_log[af.true_log.len() - 1].exp(),
                        },
                    }
                })
                .collect(),
        }
    }

    fn tick_times(&self, date: NaiveDate, s: &SimSession) -> impl Iterator<Item = NaiveDateTime> + '_ {
        let open = date.and_time(s.spec.open);
        let step = i64::from(self.tick_interval_seconds);
        (0..s.observed_log.len() as i64).map(move |i| open + Duration::seconds(i * step))
    }

    pub fn to_tick_series(&self) -> TickSeries {
        let mut ticks = Vec::with_capacity(self.tick_count());
        for d in &self.days {
            for s in &d.sessions {
                for (t, x) in self.tick_times(d.date, s).zip(&s.observed_log) {
                    ticks.push(Tick { timestamp: t, price: x.exp() });
                }
            }
        }
        TickSeries::new(ticks).expect("simulated ticks are ordered and positive")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "timestamp,price")?;
        for d in &self.days {
            for s in &d.sessions {
                for (t, x) in self.tick_times(d.date, s).zip(&s.observed_log) {
                    writeln!(out, "{},{}", t.format(TIMESTAMP_FORMAT), fmt_price(x.exp()))?;
                }
            }
        }
        Ok(())
    }
}

/// Draws the dataset described by `cfg`. Deterministic in `cfg.seed`.
pub fn generate_dataset(cfg: &SimConfig) -> Result<SimDataset, SimError> {
    if cfg.days == 0 {
        return Err(SimError::ConfigInvalid("days must be positive".into()));
    }
    if cfg.tick_interval_seconds == 0 {
        return Err(SimError::ConfigInvalid("tick_interval_seconds must be positive".into()));
    }
    if !cfg.initial_log_price.is_finite() {
        return Err(SimError::ConfigInvalid("initial_log_price must be finite".into()));
    }
    if !(cfg.overnight_jump_factor >= 0.0) || !(cfg.lunch_jump_factor >= 0.0) {
        return Err(SimError::ConfigInvalid("jump factors must be non-negative".into()));
    }
    let specs = cfg.session_specs()?;
    for s in &specs {
        if s.length_seconds() % i64::from(cfg.tick_interval_seconds) != 0 {
            return Err(SimError::ConfigInvalid(format!(
                "tick interval {} s does not divide the {} session",
                cfg.tick_interval_seconds, s.label
            )));
        }
    }
    let vol = vol_models().build(&cfg.vol_model.kind, &cfg.vol_model.params_value())?;
    let noise = noise_models().build(&cfg.noise_model.kind, &cfg.noise_model.params_value())?;

    let mean_var = vol.mean();
    let on_sd = (cfg.overnight_jump_factor * mean_var).sqrt();
    let lb_sd = (cfg.lunch_jump_factor * mean_var).sqrt();
    let dt = cfg.tick_interval_seconds;

    // Each day is generated relative to the previous afternoon close, then offset sequentially.
    let relative: Vec<SimDay> = cfg
        .trading_days()
        .into_par_iter()
        .map(|date| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(date.num_days_from_ce() as u64);
            let rng: &mut dyn RngCore = &mut rng;

            let mut level = on_sd * normal(rng);
            let mut sigma2 = [0.0; 2];
            let mut true_paths: Vec<Vec<f64>> = Vec::with_capacity(2);
            for (k, spec) in specs.iter().enumerate() {
                if k > 0 {
                    level += lb_sd * normal(rng);
                }
                sigma2[k] = vol.draw(rng);
                let incs = simulate_session_path(sigma2[k], spec.length_seconds() as u32, dt, rng);
                let mut path = Vec::with_capacity(incs.len() + 1);
                path.push(level);
                for inc in incs {
                    level += inc;
                    path.push(level);
                }
                true_paths.push(path);
            }
            let sessions: Vec<SimSession> = true_paths
                .into_iter()
                .zip(&specs)
                .map(|(true_log, spec)| {
                    let observed_log = noise.apply(&true_log, rng);
                    SimSession { spec: *spec, true_log, observed_log }
                })
                .collect();
            let sessions: [SimSession; 2] = sessions.try_into().expect("two sessions");
            SimDay { date, sessions, sigma2 }
        })
        .collect();

    let mut days = relative;
    let mut base = cfg.initial_log_price;
    for (i, day) in days.iter_mut().enumerate() {
        // first day opens at the initial price: no overnight jump
        let shift = if i == 0 { base - day.sessions[0].true_log[0] } else { base };
        for s in day.sessions.iter_mut() {
            s.true_log.iter_mut().for_each(|x| *x += shift);
            s.observed_log.iter_mut().for_each(|x| *x += shift);
        }
        base = *day.sessions[1].true_log.last().expect("non-empty session");
    }
    Ok(SimDataset { days, tick_interval_seconds: dt })
}
