//! End-to-end analysis: session slicing, resampling, realized volatility,
//! standardized-return moments and decay-curve fits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::fitting::{decay_models, fit_curve, CurvePoint, FitError, FitOptions, FitResult};
use crate::io::{write_moments, write_rv_table, write_signature, write_zones};
use crate::market_data::{split_sessions, SessionCalendar, SessionLabel, SessionSlice, TickSeries};
use crate::moments::{
    sample_mean, sample_moments, theoretical_profile, MomentProfile, MomentsError, StandardizedSeries,
};
use crate::registry::{Registry, RegistryError};
use crate::rv::{realized_volatility, signature_curve, zone_table, RvError, RvRecord, SignatureCurve, ZoneReturns};
use crate::sampling::{intraday_returns, return_count, sample_grid_prices, ReturnSeries, SamplingError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<RegistryError> for PipelineError {
    fn from(e: RegistryError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<SamplingError> for PipelineError {
    fn from(e: SamplingError) -> Self {
        match e {
            SamplingError::EmptySlice => PipelineError::Data(e.to_string()),
            _ => PipelineError::Config(e.to_string()),
        }
    }
}

impl From<RvError> for PipelineError {
    fn from(e: RvError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<MomentsError> for PipelineError {
    fn from(e: MomentsError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<FitError> for PipelineError {
    fn from(e: FitError) -> Self {
        PipelineError::Numerical(e.to_string())
    }
}

/// Which session return is divided by `sqrt(RV)`.
pub trait SessionReturnRule: Send + Sync {
    fn name(&self) -> &'static str;
    fn session_return(&self, sampled: &ReturnSeries, slice: &SessionSlice) -> f64;
}

/// Sum of the same Δ-sampled returns that build RV (first to last grid price).
#[derive(Debug, Clone, Copy, Default)]
pub struct Telescoped;

/// Last minus first trade log price inside the session window.
#[derive(Debug, Clone, Copy, Default)]
pub struct OpenClose;

impl SessionReturnRule for Telescoped {
    fn name(&self) -> &'static str {
        "telescoped"
    }

    fn session_return(&self, sampled: &ReturnSeries, _: &SessionSlice) -> f64 {
        sampled.telescoped()
    }
}

impl SessionReturnRule for OpenClose {
    fn name(&self) -> &'static str {
        "openclose"
    }

    fn session_return(&self, _: &ReturnSeries, slice: &SessionSlice) -> f64 {
        match (slice.first(), slice.last()) {
            (Some(a), Some(b)) => b.log_price() - a.log_price(),
            _ => 0.0,
        }
    }
}

pub fn standardization_rules() -> Registry<dyn SessionReturnRule> {
    fn telescoped(_: &Value) -> Result<Box<dyn SessionReturnRule>, String> {
        Ok(Box::new(Telescoped))
    }
    fn openclose(_: &Value) -> Result<Box<dyn SessionReturnRule>, String> {
        Ok(Box::new(OpenClose))
    }
    let mut r = Registry::new("standardization mode");
    r.register("telescoped", telescoped).register("openclose", openclose);
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub calendar: Option<PathBuf>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<u32>,
    #[serde(default = "default_sessions")]
    pub sessions: Vec<SessionLabel>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_std_mode")]
    pub std_mode: String,
    /// Smallest Δ used in the decay fits.
    #[serde(default = "default_delta_min")]
    pub delta_min: u32,
    /// Weight fit points by inverse squared standard error.
    #[serde(default)]
    pub weighted: bool,
}

fn default_deltas() -> Vec<u32> {
    (1..=40).collect()
}
fn default_sessions() -> Vec<SessionLabel> {
    vec![SessionLabel::MS, SessionLabel::AS]
}
fn default_std_mode() -> String {
    "telescoped".into()
}
fn default_delta_min() -> u32 {
    1
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            calendar: None,
            deltas: default_deltas(),
            sessions: default_sessions(),
            out: None,
            std_mode: default_std_mode(),
            delta_min: default_delta_min(),
            weighted: false,
        }
    }
}

impl AnalysisConfig {
    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.deltas.is_empty() {
            return Err(PipelineError::Config("delta list is empty".into()));
        }
        if self.deltas.contains(&0) {
            return Err(PipelineError::Config("deltas must be at least 1 minute".into()));
        }
        if self.deltas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PipelineError::Config("deltas must be strictly increasing".into()));
        }
        if self.sessions.is_empty() {
            return Err(PipelineError::Config("no sessions selected".into()));
        }
        if !standardization_rules().contains(&self.std_mode) {
            return Err(PipelineError::Config(format!("unknown std mode `{}`", self.std_mode)));
        }
        Ok(())
    }
}

/// Parses `1..40`, `1,5,10` or a mix such as `1..5,10,30`.
pub fn parse_delta_list(s: &str) -> Result<Vec<u32>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u32 = a.trim().parse().map_err(|_| format!("bad delta range `{part}`"))?;
            let b: u32 = b.trim().trim_start_matches('=').parse().map_err(|_| format!("bad delta range `{part}`"))?;
            if a > b {
                return Err(format!("empty delta range `{part}`"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad delta `{part}`"))?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionFits {
    pub session: SessionLabel,
    pub kurtosis: FitResult,
    pub m6: FitResult,
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub rv_records: Vec<RvRecord>,
    pub signature: Vec<SignatureCurve>,
    pub zones: Vec<ZoneReturns>,
    pub moments: Vec<MomentProfile>,
    pub theory: Vec<MomentProfile>,
    pub fits: Vec<SessionFits>,
    pub summary: Value,
    pub warnings: Vec<String>,
}

/// Runs the whole analysis on in-memory ticks.
pub fn analyze(
    ticks: &TickSeries,
    cal: &SessionCalendar,
    cfg: &AnalysisConfig,
) -> Result<AnalysisReport, PipelineError> {
    cfg.validate()?;
    let rule = standardization_rules().build(&cfg.std_mode, &Value::Null)?;
    let mut warnings = Vec::new();

    for &label in &cfg.sessions {
        let spec =
            cal.session(label).ok_or_else(|| PipelineError::Config(format!("calendar has no {label} session")))?;
        let max = *cfg.deltas.last().expect("validated non-empty");
        if i64::from(max) * 60 >= spec.length_seconds() {
            return Err(PipelineError::Config(format!("delta {max} min is not shorter than the {label} session")));
        }
    }

    let split = split_sessions(ticks, cal);
    for d in &split.empty_days {
        warnings.push(format!("{d}: no ticks in any session"));
    }
    let (zones, zone_errors) = zone_table(&split.slices);
    for e in &zone_errors {
        warnings.push(format!("zone returns skipped: {e}"));
    }

    let selected: Vec<&SessionSlice> = split.slices.iter().filter(|s| cfg.sessions.contains(&s.label())).collect();
    if selected.is_empty() {
        return Err(PipelineError::Data("no ticks fall inside the selected sessions".into()));
    }

    // (RV record, session return) per slice and Δ, in slice order then Δ order.
    let per_slice: Vec<Vec<(RvRecord, f64)>> = selected
        .par_iter()
        .map(|slice| {
            cfg.deltas
                .iter()
                .map(|&delta| {
                    let sampled = intraday_returns(&sample_grid_prices(slice, delta)?);
                    Ok((realized_volatility(&sampled), rule.session_return(&sampled, slice)))
                })
                .collect::<Result<Vec<_>, SamplingError>>()
        })
        .collect::<Result<_, _>>()?;

    let rv_records: Vec<RvRecord> = per_slice.iter().flatten().map(|(r, _)| *r).collect();

    let mut signature = Vec::new();
    let mut moments = Vec::new();
    let mut theory = Vec::new();
    let mut fits = Vec::new();
    let mut means = serde_json::Map::new();
    let mut zero_rv = 0usize;
    let models = decay_models();

    for &label in &cfg.sessions {
        if !selected.iter().any(|s| s.label() == label) {
            warnings.push(format!("no {label} slices"));
            continue;
        }
        signature.push(signature_curve(&rv_records, label, &cfg.deltas)?);

        let mut rows = Vec::new();
        let mut label_means = serde_json::Map::new();
        for (k, &delta) in cfg.deltas.iter().enumerate() {
            let mut series = StandardizedSeries::new(label, delta);
            for (slice, recs) in selected.iter().zip(&per_slice) {
                if slice.label() != label {
                    continue;
                }
                let (rec, r) = &recs[k];
                series.push(slice.date, *r, rec)?;
            }
            zero_rv += series.zero_rv_days;
            let raw = series.raw();
            match sample_moments(delta, &raw) {
                Ok(row) => {
                    label_means.insert(delta.to_string(), json!(sample_mean(&raw)));
                    rows.push(row);
                }
                Err(e) => warnings.push(format!("{label} delta {delta}: moments skipped: {e}")),
            }
        }
        means.insert(label.to_string(), Value::Object(label_means));

        let spec = cal.session(label).expect("checked above");
        let n_per_delta: BTreeMap<u32, u64> =
            cfg.deltas.iter().map(|&d| (d, return_count(spec.length_seconds(), d) as u64)).collect();
        theory.push(theoretical_profile(label, &n_per_delta));

        let profile = MomentProfile { session: label, rows };
        let kurt_points = curve_points(&profile, cfg, |r| (r.kurtosis, r.se_kurt), &mut warnings);
        let m6_points = curve_points(&profile, cfg, |r| (r.m6, r.se_m6), &mut warnings);
        // two parameters need at least three Δ values; a short Δ list still gets its tables
        if kurt_points.len() < 3 {
            warnings.push(format!("{label}: {} Δ values at or above delta_min, decay fits skipped", kurt_points.len()));
            moments.push(profile);
            continue;
        }
        let kurtosis =
            fit_curve(&kurt_points, models.build("kurtosis", &Value::Null)?.as_ref(), None, FitOptions::default())
                .map_err(|e| PipelineError::Numerical(format!("{label} kurtosis fit: {e}")))?;
        let m6 = fit_curve(&m6_points, models.build("m6", &Value::Null)?.as_ref(), None, FitOptions::default())
            .map_err(|e| PipelineError::Numerical(format!("{label} sixth-moment fit: {e}")))?;
        for f in [&kurtosis, &m6] {
            if !f.converged {
                warnings.push(format!("{label} {:?} fit did not converge", f.model));
            }
        }
        fits.push(SessionFits { session: label, kurtosis, m6 });
        moments.push(profile);
    }

    let summary = json!({
        "config": cfg,
        "calendar": {
            "timezone": cal.timezone().name(),
            "sessions": cal.sessions().iter().map(|s| json!({"label": s.label, "open": s.open.to_string(), "close": s.close.to_string()})).collect::<Vec<_>>(),
            "trading_days": cal.trading_days().len(),
        },
        "counts": {
            "ticks": ticks.len(),
            "excluded_ticks": split.excluded,
            "slices": split.slices.len(),
            "empty_days": split.empty_days.len(),
            "zone_days": zones.len(),
            "zone_errors": zone_errors.len(),
            "rv_records": rv_records.len(),
            "zero_rv_days": zero_rv,
        },
        "standardized_means": means,
        "warnings": warnings,
    });

    Ok(AnalysisReport { rv_records, signature, zones, moments, theory, fits, summary, warnings })
}

fn curve_points(
    profile: &MomentProfile,
    cfg: &AnalysisConfig,
    pick: impl Fn(&crate::moments::MomentRow) -> (f64, f64),
    warnings: &mut Vec<String>,
) -> Vec<CurvePoint> {
    let rows: Vec<_> = profile.rows.iter().filter(|r| r.delta >= cfg.delta_min).collect();
    let weighted = cfg.weighted
        && rows.iter().all(|r| {
            let se = pick(r).1;
            se > 0.0 && se.is_finite()
        });
    if cfg.weighted && !weighted {
        warnings.push(format!("{}: zero standard error present, fitting unweighted", profile.session));
    }
    rows.iter()
        .map(|r| {
            let (y, se) = pick(r);
            CurvePoint { delta: f64::from(r.delta), y, weight: if weighted { 1.0 / (se * se) } else { 1.0 } }
        })
        .collect()
}

/// Output file names written by [`write_reports`].
pub const REPORT_FILES: [&str; 8] = [
    "rv_table.csv",
    "signature.csv",
    "zones.csv",
    "moments.csv",
    "moments_theory.csv",
    "fit_kurtosis.json",
    "fit_m6.json",
    "summary.json",
];

fn fits_json(fits: &[SessionFits], pick: impl Fn(&SessionFits) -> &FitResult) -> Value {
    let mut m = serde_json::Map::new();
    for f in fits {
        m.insert(f.session.to_string(), pick(f).to_json());
    }
    Value::Object(m)
}

/// Writes every report into `dir`. On failure, files written so far are removed.
pub fn write_reports(report: &AnalysisReport, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let result = (|| -> std::io::Result<()> {
        let mut emit = |name: &str, f: &dyn Fn(&mut dyn Write) -> std::io::Result<()>| -> std::io::Result<()> {
            let path = dir.join(name);
            written.push(path.clone());
            let mut w = BufWriter::new(File::create(&path)?);
            f(&mut w)?;
            w.flush()
        };
        emit("rv_table.csv", &|w| write_rv_table(w, &report.rv_records))?;
        emit("signature.csv", &|w| write_signature(w, &report.signature))?;
        emit("zones.csv", &|w| write_zones(w, &report.zones))?;
        emit("moments.csv", &|w| write_moments(w, &report.moments))?;
        emit("moments_theory.csv", &|w| write_moments(w, &report.theory))?;
        emit("fit_kurtosis.json", &|w| write_json(w, &fits_json(&report.fits, |f| &f.kurtosis)))?;
        emit("fit_m6.json", &|w| write_json(w, &fits_json(&report.fits, |f| &f.m6)))?;
        emit("summary.json", &|w| write_json(w, &report.summary))?;
        Ok(())
    })();
    if let Err(e) = result {
        remove_all(&written);
        return Err(e.into());
    }
    Ok(written)
}

pub fn remove_all(paths: &[PathBuf]) {
    for p in paths {
        let _ = std::fs::remove_file(p);
    }
}

pub fn write_json(w: &mut dyn Write, v: &Value) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, v)?;
    writeln!(w)
}

/// Fits both decay curves to each profile of a moments file.
pub fn fit_profiles(
    profiles: &[MomentProfile],
    cfg: &AnalysisConfig,
) -> Result<(Vec<SessionFits>, Vec<String>), PipelineError> {
    let models = decay_models();
    let mut warnings = Vec::new();
    let mut fits = Vec::new();
    for p in profiles.iter().filter(|p| cfg.sessions.contains(&p.session)) {
        let kp = curve_points(p, cfg, |r| (r.kurtosis, r.se_kurt), &mut warnings);
        let mp = curve_points(p, cfg, |r| (r.m6, r.se_m6), &mut warnings);
        fits.push(SessionFits {
            session: p.session,
            kurtosis: fit_curve(&kp, models.build("kurtosis", &Value::Null)?.as_ref(), None, FitOptions::default())?,
            m6: fit_curve(&mp, models.build("m6", &Value::Null)?.as_ref(), None, FitOptions::default())?,
        });
    }
    Ok((fits, warnings))
}

pub fn write_fit_files(fits: &[SessionFits], dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, v) in
        [("fit_kurtosis.json", fits_json(fits, |f| &f.kurtosis)), ("fit_m6.json", fits_json(fits, |f| &f.m6))]
    {
        let path = dir.join(name);
        written.push(path.clone());
        let res = File::create(&path).and_then(|f| {
            let mut w = BufWriter::new(f);
            write_json(&mut w, &v)?;
            w.flush()
        });
        if let Err(e) = res {
            remove_all(&written);
            return Err(e.into());
        }
    }
    Ok(written)
}
