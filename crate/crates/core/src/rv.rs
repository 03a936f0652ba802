//! Per-session realized volatility, zone returns and signature curves.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{SessionCalendar, SessionLabel, SessionSlice, TickSeries};
use crate::sampling::ReturnSeries;

#[derive(Debug, Error, PartialEq)]
pub enum RvError {
    #[error("{date}: no {label} ticks")]
    MissingSession { date: NaiveDate, label: SessionLabel },
    #[error("{label}: no realized volatility records for delta {delta}")]
    NoData { label: SessionLabel, delta: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RvRecord {
    pub date: NaiveDate,
    pub session: SessionLabel,
    pub delta: u32,
    pub rv: f64,
    pub n_returns: usize,
}

/// Sum of squared sampled returns.
pub fn realized_volatility(rs: &ReturnSeries) -> RvRecord {
    RvRecord {
        date: rs.date,
        session: rs.label,
        delta: rs.delta_minutes,
        rv: rs.returns.iter().map(|r| r * r).sum(),
        n_returns: rs.n(),
    }
}

/// Log returns over the four zones of a trading day, each end minus start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneReturns {
    pub date: NaiveDate,
    pub r_ms: f64,
    pub r_lb: f64,
    pub r_as: f64,
    /// Absent when no earlier afternoon close is available.
    pub r_on: Option<f64>,
    /// Log boundary prices: MS open, MS close, AS open, AS close.
    #[serde(skip)]
    pub boundaries: [f64; 4],
}

impl ZoneReturns {
    pub fn session(&self, label: SessionLabel) -> f64 {
        match label {
            SessionLabel::MS => self.r_ms,
            SessionLabel::AS => self.r_as,
        }
    }

    pub fn as_close_log(&self) -> f64 {
        self.boundaries[3]
    }

    fn from_boundaries(date: NaiveDate, b: [f64; 4], prev_as_close_log: Option<f64>) -> Self {
        ZoneReturns {
            date,
            r_ms: b[1] - b[0],
            r_lb: b[2] - b[1],
            r_as: b[3] - b[2],
            r_on: prev_as_close_log.map(|c| b[0] - c),
            boundaries: b,
        }
    }
}

/// Zone returns for one day of ticks. Open and close prices are the first and
/// last trades inside each session window.
pub fn zone_returns(
    day: &TickSeries,
    cal: &SessionCalendar,
    prev_as_close: Option<f64>,
) -> Result<ZoneReturns, RvError> {
    let date = day.ticks().first().map(|t| t.timestamp.date()).unwrap_or_default();
    let mut bounds = [0.0; 4];
    for (k, label) in [SessionLabel::MS, SessionLabel::AS].into_iter().enumerate() {
        let spec = cal.session(label).ok_or(RvError::MissingSession { date, label })?;
        let mut inside = day.ticks().iter().filter(|t| spec.contains(t.timestamp.time()));
        let first = inside.next().ok_or(RvError::MissingSession { date, label })?;
        let last = inside.next_back().unwrap_or(first);
        bounds[2 * k] = first.log_price();
        bounds[2 * k + 1] = last.log_price();
    }
    Ok(ZoneReturns::from_boundaries(date, bounds, prev_as_close.map(f64::ln)))
}

/// Zone returns for every day in a session split, with failures collected per day.
pub fn zone_table(slices: &[SessionSlice]) -> (Vec<ZoneReturns>, Vec<RvError>) {
    let mut by_day: BTreeMap<NaiveDate, [Option<&SessionSlice>; 2]> = BTreeMap::new();
    for s in slices {
        let idx = match s.label() {
            SessionLabel::MS => 0,
            SessionLabel::AS => 1,
        };
        by_day.entry(s.date).or_default()[idx] = Some(s);
    }

    let mut zones = Vec::with_capacity(by_day.len());
    let mut errors = Vec::new();
    let mut prev_close: Option<f64> = None;
    for (date, [ms, af]) in by_day {
        let close_today = af.and_then(|s| s.last()).map(|t| t.log_price());
        match (ms, af) {
            (Some(ms), Some(af)) if !ms.ticks.is_empty() && !af.ticks.is_empty() => {
                let b = [
                    ms.ticks[0].log_price(),
                    ms.ticks[ms.ticks.len() - 1].log_price(),
                    af.ticks[0].log_price(),
                    af.ticks[af.ticks.len() - 1].log_price(),
                ];
                zones.push(ZoneReturns::from_boundaries(date, b, prev_close));
            }
            (ms, _) => {
                let label = if ms.is_none() { SessionLabel::MS } else { SessionLabel::AS };
                errors.push(RvError::MissingSession { date, label });
            }
        }
        if close_today.is_some() {
            prev_close = close_today;
        }
    }
    (zones, errors)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignaturePoint {
    pub delta: u32,
    pub mean_rv: f64,
    pub day_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureCurve {
    pub session: SessionLabel,
    pub points: Vec<SignaturePoint>,
}

/// Arithmetic mean of RV over days for each requested Δ, summed in date order.
pub fn signature_curve(records: &[RvRecord], session: SessionLabel, deltas: &[u32]) -> Result<SignatureCurve, RvError> {
    let mut points = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let mut picked: Vec<&RvRecord> = records.iter().filter(|r| r.session == session && r.delta == delta).collect();
        if picked.is_empty() {
            return Err(RvError::NoData { label: session, delta });
        }
        picked.sort_by_key(|r| r.date);
        let sum: f64 = picked.iter().map(|r| r.rv).sum();
        points.push(SignaturePoint { delta, mean_rv: sum / picked.len() as f64, day_count: picked.len() });
    }
    Ok(SignatureCurve { session, points })
}
