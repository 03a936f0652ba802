//! Standardized session returns and the exact finite-sample law they follow
//! when realized volatility is built from `n` Gaussian returns.
//!
//! For `R_s = R / sqrt(RV)` with `RV` the sum of `n` i.i.d. squared normal
//! returns and `R` their sum, the density is
//!
//! ```text
//! f(x) = Γ(n/2) / (sqrt(πn) Γ((n-1)/2)) · (1 - x²/n)^((n-3)/2),   |x| ≤ sqrt(n)
//! ```
//!
//! and the even moments are
//!
//! ```text
//! m_2k(n) = n^k (2k-1)!! / ((n+2k-2)(n+2k-4)…n)
//! ```
//!
//! so the variance is exactly 1 for every `n`, the kurtosis is `3n/(n+2)`
//! and the sixth moment `15n²/((n+2)(n+4))`.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::SessionLabel;
use crate::rv::RvRecord;

#[derive(Debug, Error, PartialEq)]
pub enum MomentsError {
    #[error("{date} {session}: realized volatility is zero")]
    ZeroVolatilityDay { date: NaiveDate, session: SessionLabel },
    #[error("return keyed ({0}) does not match realized volatility keyed ({1})")]
    MismatchedKeys(String, String),
    #[error("need at least 2 standardized values, got {0}")]
    InsufficientData(usize),
    #[error("finite-sample density needs n >= 2, got {0}")]
    UnsupportedN(u64),
    #[error("{date} {session} delta {delta}: |R_s| = {value} exceeds sqrt({n})")]
    SupportViolation { date: NaiveDate, session: SessionLabel, delta: u32, value: f64, n: usize },
}

/// Slack allowed on the `|R_s| <= sqrt(n)` support bound for rounding.
pub const SUPPORT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardizedValue {
    pub date: NaiveDate,
    pub value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedSeries {
    pub session: SessionLabel,
    pub delta: u32,
    pub values: Vec<StandardizedValue>,
    /// Days dropped because their realized volatility was zero.
    pub zero_rv_days: usize,
}

impl StandardizedSeries {
    pub fn new(session: SessionLabel, delta: u32) -> Self {
        Self { session, delta, values: Vec::new(), zero_rv_days: 0 }
    }

    /// Adds `R / sqrt(RV)` for one day, enforcing finiteness and the support bound.
    /// Zero-RV days are counted and skipped.
    pub fn push(&mut self, date: NaiveDate, session_return: f64, rv: &RvRecord) -> Result<(), MomentsError> {
        if rv.session != self.session || rv.delta != self.delta || rv.date != date {
            return Err(MomentsError::MismatchedKeys(
                format!("{date} {} {}", self.session, self.delta),
                format!("{} {} {}", rv.date, rv.session, rv.delta),
            ));
        }
        match standardize(session_return, rv) {
            Ok(value) => {
                if value.abs() > (rv.n_returns as f64).sqrt() + SUPPORT_TOLERANCE {
                    return Err(MomentsError::SupportViolation {
                        date,
                        session: self.session,
                        delta: self.delta,
                        value,
                        n: rv.n_returns,
                    });
                }
                self.values.push(StandardizedValue { date, value, n: rv.n_returns });
                Ok(())
            }
            Err(MomentsError::ZeroVolatilityDay { .. }) => {
                self.zero_rv_days += 1;
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    pub fn raw(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.value).collect()
    }
}

/// `R / sqrt(RV)`.
pub fn standardize(session_return: f64, rv: &RvRecord) -> Result<f64, MomentsError> {
    if rv.rv <= 0.0 {
        return Err(MomentsError::ZeroVolatilityDay { date: rv.date, session: rv.session });
    }
    Ok(session_return / rv.rv.sqrt())
}

/// One Δ of a moment profile. Moments are raw (uncentered); kurtosis and the
/// sixth moment are normalized by powers of the second moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub delta: u32,
    pub variance: f64,
    pub kurtosis: f64,
    pub m6: f64,
    pub count: usize,
    pub se_var: f64,
    pub se_kurt: f64,
    pub se_m6: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentProfile {
    pub session: SessionLabel,
    pub rows: Vec<MomentRow>,
}

/// Raw sample moments and delta-method standard errors under i.i.d. sampling.
pub fn sample_moments(delta: u32, values: &[f64]) -> Result<MomentRow, MomentsError> {
    let count = values.len();
    if count < 2 {
        return Err(MomentsError::InsufficientData(count));
    }
    // raw even moments m2..m12
    let mut m = [0.0f64; 7];
    for &x in values {
        let x2 = x * x;
        let mut p = 1.0;
        for slot in m.iter_mut().skip(1) {
            p *= x2;
            *slot += p;
        }
    }
    let nf = count as f64;
    for slot in m.iter_mut().skip(1) {
        *slot /= nf;
    }
    let (m2, m4, m6, m8, m12) = (m[1], m[2], m[3], m[4], m[6]);

    let kurtosis = m4 / (m2 * m2);
    let sixth = m6 / (m2 * m2 * m2);

    // Covariances of the sample means of x^a and x^b: (m_{a+b} - m_a m_b) / N.
    let c22 = (m4 - m2 * m2) / nf;
    let c24 = (m6 - m2 * m4) / nf;
    let c44 = (m8 - m4 * m4) / nf;
    let c26 = (m8 - m2 * m6) / nf;
    let c66 = (m12 - m6 * m6) / nf;

    let (ga, gb) = (-2.0 * m4 / (m2 * m2 * m2), 1.0 / (m2 * m2));
    let var_kurt = ga * ga * c22 + 2.0 * ga * gb * c24 + gb * gb * c44;
    let (ha, hb) = (-3.0 * m6 / (m2 * m2 * m2 * m2), 1.0 / (m2 * m2 * m2));
    let var_m6 = ha * ha * c22 + 2.0 * ha * hb * c26 + hb * hb * c66;

    Ok(MomentRow {
        delta,
        variance: m2,
        kurtosis,
        m6: sixth,
        count,
        se_var: c22.max(0.0).sqrt(),
        se_kurt: var_kurt.max(0.0).sqrt(),
        se_m6: var_m6.max(0.0).sqrt(),
    })
}

pub fn sample_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Even moment `m_2k` of the standardized return built from `n` returns.
pub fn finite_sample_moment(n: u64, k: u32) -> f64 {
    assert!(n >= 1 && k >= 1, "finite_sample_moment needs n >= 1 and k >= 1");
    let nf = n as f64;
    (1..=k).fold(1.0, |acc, j| {
        let odd = f64::from(2 * j - 1);
        acc * (nf * odd) / (nf + f64::from(2 * j - 2))
    })
}

/// Normalizing constant `Γ(n/2) / (sqrt(πn) Γ((n-1)/2))`, in logs.
fn log_density_constant(n: f64) -> f64 {
    libm::lgamma(n / 2.0) - libm::lgamma((n - 1.0) / 2.0) - 0.5 * (std::f64::consts::PI * n).ln()
}

/// Density of the standardized return for `n` intraday returns; zero outside `[-sqrt(n), sqrt(n)]`.
pub fn finite_sample_density(x: f64, n: u64) -> Result<f64, MomentsError> {
    if n < 2 {
        return Err(MomentsError::UnsupportedN(n));
    }
    let nf = n as f64;
    if x.abs() > nf.sqrt() || x.is_nan() {
        return Ok(0.0);
    }
    let u = x * x / nf;
    // at the edge the kernel is 0 for n > 3, 1 for n = 3 and diverges for n = 2
    let log_kernel = if u >= 1.0 {
        match n {
            2 => return Ok(f64::INFINITY),
            3 => 0.0,
            _ => return Ok(0.0),
        }
    } else {
        0.5 * (nf - 3.0) * (-u).ln_1p()
    };
    Ok((log_density_constant(nf) + log_kernel).exp())
}

/// Density mass per radian under `x = sqrt(n) sin θ`, finite on the whole of `[-π/2, π/2]`.
pub fn finite_sample_density_angle(theta: f64, n: u64) -> Result<f64, MomentsError> {
    if n < 2 {
        return Err(MomentsError::UnsupportedN(n));
    }
    if theta.abs() > std::f64::consts::FRAC_PI_2 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let c = theta.cos().max(0.0);
    // f(x) dx/dθ = C sqrt(n) cos^(n-2) θ
    let log_c = log_density_constant(nf) + 0.5 * nf.ln();
    if n == 2 {
        return Ok(log_c.exp());
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    Ok((log_c + (nf - 2.0) * c.ln()).exp())
}

/// Exact `(1, m4(n), m6(n))` per Δ.
pub fn theoretical_profile(session: SessionLabel, n_per_delta: &BTreeMap<u32, u64>) -> MomentProfile {
    MomentProfile {
        session,
        rows: n_per_delta
            .iter()
            .map(|(&delta, &n)| MomentRow {
                delta,
                variance: finite_sample_moment(n, 1),
                kurtosis: finite_sample_moment(n, 2),
                m6: finite_sample_moment(n, 3),
                count: n as usize,
                se_var: 0.0,
                se_kurt: 0.0,
                se_m6: 0.0,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(rv: f64, n: usize) -> RvRecord {
        RvRecord {
            date: NaiveDate::from_ymd_opt(2009, 1, 5).unwrap(),
            session: SessionLabel::MS,
            delta: 1,
            rv,
            n_returns: n,
        }
    }

    #[test]
    fn single_return_standardizes_to_unit() {
        assert_eq!(standardize(-0.013, &rec(0.013 * 0.013, 1)).unwrap(), -1.0);
        assert_eq!(standardize(0.5, &rec(0.25, 1)).unwrap(), 1.0);
    }

    #[test]
    fn equal_returns_hit_support_edge() {
        let r = 0.003;
        let v = standardize(4.0 * r, &rec(4.0 * r * r, 4)).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let mut s = StandardizedSeries::new(SessionLabel::MS, 1);
        s.push(rec(0.0, 4).date, 4.0 * r, &rec(4.0 * r * r, 4)).unwrap();
        assert_eq!(s.values.len(), 1);
    }

    #[test]
    fn series_rejects_bad_input() {
        let mut s = StandardizedSeries::new(SessionLabel::MS, 1);
        let date = rec(0.0, 1).date;
        s.push(date, 0.0, &rec(0.0, 4)).unwrap();
        assert_eq!(s.zero_rv_days, 1);
        assert!(s.values.is_empty());
        assert!(matches!(s.push(date, 1.0, &rec(0.01, 4)), Err(MomentsError::SupportViolation { .. })));
        let mut other = rec(1.0, 4);
        other.session = SessionLabel::AS;
        assert!(matches!(s.push(date, 0.1, &other), Err(MomentsError::MismatchedKeys(..))));
        assert_eq!(
            standardize(1.0, &rec(0.0, 1)),
            Err(MomentsError::ZeroVolatilityDay { date, session: SessionLabel::MS })
        );
    }

    #[test]
    fn two_point_law_moments() {
        let vals: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let row = sample_moments(3, &vals).unwrap();
        assert_eq!((row.variance, row.kurtosis, row.m6), (1.0, 1.0, 1.0));
        assert_eq!(row.count, 100);
        assert_eq!(sample_moments(1, &[1.0]), Err(MomentsError::InsufficientData(1)));
    }

    #[test]
    fn moment_formula_values() {
        for n in [1, 2, 7, 120, 1_000_000] {
            assert_eq!(finite_sample_moment(n, 1), 1.0);
        }
        assert!((finite_sample_moment(1_000_000_000, 2) - 3.0).abs() < 1e-6);
        assert!((finite_sample_moment(1_000_000_000, 3) - 15.0).abs() < 1e-5);
        assert!((finite_sample_moment(4, 2) - 2.0).abs() < 1e-15);
        // 15 n² / ((n + 2)(n + 4)) at n = 4
        assert!((finite_sample_moment(4, 3) - 5.0).abs() < 1e-14);
        assert!((finite_sample_moment(120, 2) - 360.0 / 122.0).abs() < 1e-15);
        assert!((finite_sample_moment(5, 2) - 15.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn limit_moments_increase_monotonically() {
        let mut prev = (0.0, 0.0);
        for n in 1..=10_000u64 {
            let cur = (finite_sample_moment(n, 2), finite_sample_moment(n, 3));
            assert!(cur.0 > prev.0 && cur.1 > prev.1, "n={n}");
            assert!(cur.0 < 3.0 && cur.1 < 15.0);
            prev = cur;
        }
    }

    #[test]
    fn density_values() {
        // Γ(3/2) / (sqrt(3π) Γ(1)) = 1 / (2 sqrt 3)
        let f = finite_sample_density(0.0, 3).unwrap();
        assert!((f - 1.0 / (2.0 * 3f64.sqrt())).abs() < 1e-14);
        for n in [2u64, 3, 5, 120, 240] {
            assert_eq!(finite_sample_density((n as f64).sqrt() + 0.001, n).unwrap(), 0.0);
            assert_eq!(finite_sample_density(-(n as f64).sqrt() - 0.001, n).unwrap(), 0.0);
        }
        assert_eq!(finite_sample_density(0.0, 1), Err(MomentsError::UnsupportedN(1)));
        assert!(finite_sample_density(0.0, 240).unwrap().is_finite());
        // n = 2: 1 / (π sqrt(2 - x²))
        let x: f64 = 0.7;
        let f2 = finite_sample_density(x, 2).unwrap();
        assert!((f2 - 1.0 / (std::f64::consts::PI * (2.0 - x * x).sqrt())).abs() < 1e-14);
    }

    #[test]
    fn angle_density_agrees_with_density() {
        for n in [2u64, 3, 4, 17, 240] {
            for theta in [-1.3, -0.2, 0.0, 0.9, 1.5] {
                let x = (n as f64).sqrt() * f64::sin(theta);
                let direct = finite_sample_density(x, n).unwrap() * (n as f64).sqrt() * f64::cos(theta);
                let angle = finite_sample_density_angle(theta, n).unwrap();
                // 1 - x²/n loses digits near the edge when formed from x
                assert!((direct - angle).abs() <= 1e-10 * direct.max(1e-300), "n={n} θ={theta}");
            }
        }
    }

    #[test]
    fn theory_rows() {
        let map: BTreeMap<u32, u64> = [(1, 120), (30, 4)].into_iter().collect();
        let p = theoretical_profile(SessionLabel::MS, &map);
        assert!((p.rows[0].kurtosis - 2.950819672131147).abs() < 1e-12);
        assert_eq!(p.rows[1].kurtosis, 2.0);
        assert_eq!(p.rows[1].variance, 1.0);
        let map: BTreeMap<u32, u64> = [(30, 5)].into_iter().collect();
        assert!((theoretical_profile(SessionLabel::AS, &map).rows[0].kurtosis - 2.142857142857143).abs() < 1e-12);
    }
}
