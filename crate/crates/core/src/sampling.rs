//! Previous-tick resampling of session ticks onto a fixed minute grid.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use thiserror::Error;

use crate::market_data::{SessionLabel, SessionSlice};

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("sampling interval must be at least one minute")]
    ZeroDelta,
    #[error("sampling interval {delta} min is not shorter than the {session_minutes} min session")]
    DeltaTooLarge { delta: u32, session_minutes: f64 },
    #[error("session slice has no ticks")]
    EmptySlice,
}

/// Prices at `open, open + Δ, …` and at the close when Δ does not divide the session.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPrices {
    pub date: NaiveDate,
    pub label: SessionLabel,
    pub delta_minutes: u32,
    pub grid_times: Vec<NaiveDateTime>,
    pub prices: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub date: NaiveDate,
    pub label: SessionLabel,
    pub delta_minutes: u32,
    pub returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn n(&self) -> usize {
        self.returns.len()
    }

    /// First-to-last grid log return, as the sum of the sampled returns.
    pub fn telescoped(&self) -> f64 {
        self.returns.iter().sum()
    }
}

/// Number of returns a session of `session_seconds` yields at interval Δ.
pub fn return_count(session_seconds: i64, delta_minutes: u32) -> usize {
    let step = i64::from(delta_minutes) * 60;
    let full = session_seconds / step;
    (full + i64::from(session_seconds % step != 0)) as usize
}

pub fn sample_grid_prices(slice: &SessionSlice, delta_minutes: u32) -> Result<GridPrices, SamplingError> {
    if delta_minutes == 0 {
        return Err(SamplingError::ZeroDelta);
    }
    let session = slice.spec.length_seconds();
    let step = i64::from(delta_minutes) * 60;
    if step >= session {
        return Err(SamplingError::DeltaTooLarge { delta: delta_minutes, session_minutes: session as f64 / 60.0 });
    }
    let ticks = &slice.ticks;
    if ticks.is_empty() {
        return Err(SamplingError::EmptySlice);
    }

    let open = slice.open_instant();
    let mut grid_times: Vec<NaiveDateTime> = (0..=session / step).map(|i| open + Duration::seconds(i * step)).collect();
    if session % step != 0 {
        grid_times.push(slice.close_instant());
    }

    // `next` is the index of the first tick strictly after the current grid instant.
    let mut next = 0;
    let prices = grid_times
        .iter()
        .map(|&g| {
            while next < ticks.len() && ticks[next].timestamp <= g {
                next += 1;
            }
            if next == 0 {
                ticks[0].price
            } else {
                ticks[next - 1].price
            }
        })
        .collect();

    Ok(GridPrices { date: slice.date, label: slice.label(), delta_minutes, grid_times, prices })
}

pub fn intraday_returns(grid: &GridPrices) -> ReturnSeries {
    let logs: Vec<f64> = grid.prices.iter().map(|p| p.ln()).collect();
    ReturnSeries {
        date: grid.date,
        label: grid.label,
        delta_minutes: grid.delta_minutes,
        returns: logs.windows(2).map(|w| w[1] - w[0]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{tse_sessions, Tick, TIMESTAMP_FORMAT};
    use proptest::prelude::*;

    fn ms_slice(rows: &[(&str, f64)]) -> SessionSlice {
        SessionSlice {
            date: NaiveDate::from_ymd_opt(2009, 1, 5).unwrap(),
            spec: tse_sessions()[0],
            ticks: rows
                .iter()
                .map(|(t, p)| Tick {
                    timestamp: NaiveDateTime::parse_from_str(&format!("2009-01-05T{t}.000"), TIMESTAMP_FORMAT).unwrap(),
                    price: *p,
                })
                .collect(),
        }
    }

    fn minute_slice(prices: &[f64]) -> SessionSlice {
        let mut s = ms_slice(&[]);
        let open = s.open_instant();
        s.ticks = prices
            .iter()
            .enumerate()
            .map(|(i, &p)| Tick { timestamp: open + Duration::seconds(60 * i as i64), price: p })
            .collect();
        s
    }

    #[test]
    fn divisor_delta_grid() {
        let s = minute_slice(&vec![100.0; 121]);
        let g = sample_grid_prices(&s, 30).unwrap();
        let clock: Vec<String> = g.grid_times.iter().map(|t| t.format("%H:%M").to_string()).collect();
        assert_eq!(clock, ["09:00", "09:30", "10:00", "10:30", "11:00"]);
        assert_eq!(intraday_returns(&g).n(), 4);
    }

    #[test]
    fn non_divisor_delta_appends_close() {
        let s = minute_slice(&vec![100.0; 121]);
        let g = sample_grid_prices(&s, 50).unwrap();
        let clock: Vec<String> = g.grid_times.iter().map(|t| t.format("%H:%M").to_string()).collect();
        assert_eq!(clock, ["09:00", "09:50", "10:40", "11:00"]);
    }

    #[test]
    fn single_tick_fills_everything() {
        let s = ms_slice(&[("09:37:00", 123.5)]);
        let g = sample_grid_prices(&s, 60).unwrap();
        assert_eq!(g.prices, vec![123.5, 123.5, 123.5]);
    }

    #[test]
    fn previous_tick_not_next_tick() {
        let s = ms_slice(&[("09:00:10", 1.0), ("09:29:59", 2.0), ("09:30:00", 3.0), ("09:30:01", 4.0)]);
        let g = sample_grid_prices(&s, 30).unwrap();
        // open falls before the first tick, so the first tick fills it
        assert_eq!(&g.prices[..3], &[1.0, 3.0, 4.0]);
    }

    #[test]
    fn delta_errors() {
        let s = minute_slice(&[100.0]);
        assert_eq!(sample_grid_prices(&s, 0), Err(SamplingError::ZeroDelta));
        assert!(matches!(sample_grid_prices(&s, 120), Err(SamplingError::DeltaTooLarge { .. })));
        assert_eq!(sample_grid_prices(&ms_slice(&[]), 5), Err(SamplingError::EmptySlice));
    }

    #[test]
    fn constant_and_exact_log_returns() {
        let s = minute_slice(&vec![50.0; 121]);
        let r = intraday_returns(&sample_grid_prices(&s, 7).unwrap());
        assert!(r.returns.iter().all(|&x| x == 0.0));

        let g = GridPrices {
            date: s.date,
            label: SessionLabel::MS,
            delta_minutes: 60,
            grid_times: vec![s.open_instant(); 3],
            prices: vec![1f64.exp().powi(0), 1f64.exp(), 2f64.exp()],
        };
        let r = intraday_returns(&g);
        assert!((r.returns[0] - 1.0).abs() < 1e-15 && (r.returns[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn return_count_matches_grid() {
        let s = minute_slice(&vec![100.0; 121]);
        for delta in 1..=40 {
            let n = intraday_returns(&sample_grid_prices(&s, delta).unwrap()).n();
            assert_eq!(n, return_count(7200, delta));
            let expected = if 120 % delta == 0 { 120 / delta } else { 120 / delta + 1 };
            assert_eq!(n as u32, expected);
        }
    }

    proptest! {
        #[test]
        fn telescoping(prices in prop::collection::vec(1.0f64..1e5, 121), delta in 1u32..60) {
            let g = sample_grid_prices(&minute_slice(&prices), delta).unwrap();
            let r = intraday_returns(&g);
            let direct = g.prices.last().unwrap().ln() - g.prices[0].ln();
            let scale = direct.abs().max(1.0);
            prop_assert!((r.telescoped() - direct).abs() <= 1e-12 * scale);
        }

        #[test]
        fn coarse_returns_aggregate_fine_returns(prices in prop::collection::vec(1.0f64..1e5, 121)) {
            let s = minute_slice(&prices);
            let fine = intraday_returns(&sample_grid_prices(&s, 5).unwrap());
            let coarse = intraday_returns(&sample_grid_prices(&s, 20).unwrap());
            for (k, c) in coarse.returns.iter().enumerate() {
                let block: f64 = fine.returns[4 * k..4 * k + 4].iter().sum();
                prop_assert!((block - c).abs() <= 1e-12);
            }
        }
    }
}
