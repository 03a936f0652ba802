//! Decay curves of the standardized-return moments in Δ and their
//! least-squares fit.
//!
//! Both curves are the finite-sample moment formula with `n` replaced by a
//! free scale `B/Δ`, so their Δ → 0 intercept is the amplitude parameter.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::registry::Registry;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    InsufficientPoints(usize),
    #[error("normal equations are singular (fewer than two distinct deltas or degenerate model)")]
    SingularJacobian,
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("malformed fit result: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayKind {
    Kurt4,
    Mom6,
}

/// A two-parameter decay curve `y(Δ; amplitude, scale)` with `scale > 0`.
pub trait DecayModel: Send + Sync {
    fn kind(&self) -> DecayKind;

    /// Names of (amplitude, scale).
    fn param_names(&self) -> [&'static str; 2];

    fn eval(&self, delta: f64, amplitude: f64, scale: f64) -> f64;

    /// Partial derivatives with respect to (amplitude, scale).
    fn gradient(&self, delta: f64, amplitude: f64, scale: f64) -> [f64; 2];
}

/// `K (1 - 2 / (B4/Δ + 2))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct KurtosisDecay;

/// `M6 L² / ((L + 4)(L + 2))` with `L = B6/Δ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SixthMomentDecay;

pub fn kurt_model(delta: f64, k: f64, b4: f64) -> f64 {
    k * (1.0 - 2.0 / (b4 / delta + 2.0))
}

pub fn m6_model(delta: f64, m6: f64, b6: f64) -> f64 {
    let l = b6 / delta;
    m6 * l * l / ((l + 4.0) * (l + 2.0))
}

impl DecayModel for KurtosisDecay {
    fn kind(&self) -> DecayKind {
        DecayKind::Kurt4
    }

    fn param_names(&self) -> [&'static str; 2] {
        ["K", "B4"]
    }

    fn eval(&self, delta: f64, amplitude: f64, scale: f64) -> f64 {
        kurt_model(delta, amplitude, scale)
    }

    fn gradient(&self, delta: f64, amplitude: f64, scale: f64) -> [f64; 2] {
        let n = scale / delta;
        let d = n + 2.0;
        [n / d, amplitude * 2.0 / (d * d * delta)]
    }
}

impl DecayModel for SixthMomentDecay {
    fn kind(&self) -> DecayKind {
        DecayKind::Mom6
    }

    fn param_names(&self) -> [&'static str; 2] {
        ["M6", "B6"]
    }

    fn eval(&self, delta: f64, amplitude: f64, scale: f64) -> f64 {
        m6_model(delta, amplitude, scale)
    }

    fn gradient(&self, delta: f64, amplitude: f64, scale: f64) -> [f64; 2] {
        let l = scale / delta;
        let q = (l + 4.0) * (l + 2.0);
        let dg_dl = l * (6.0 * l + 16.0) / (q * q);
        [l * l / q, amplitude * dg_dl / delta]
    }
}

pub fn decay_models() -> Registry<dyn DecayModel> {
    fn kurt(_: &Value) -> Result<Box<dyn DecayModel>, String> {
        Ok(Box::new(KurtosisDecay))
    }
    fn sixth(_: &Value) -> Result<Box<dyn DecayModel>, String> {
        Ok(Box::new(SixthMomentDecay))
    }
    let mut r = Registry::new("decay model");
    r.register("kurtosis", kurt).register("kurt4", kurt).register("m6", sixth).register("mom6", sixth);
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub delta: f64,
    pub y: f64,
    pub weight: f64,
}

impl CurvePoint {
    pub fn new(delta: f64, y: f64) -> Self {
        Self { delta, y, weight: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub rss_rel_tol: f64,
    pub gradient_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 500, rss_rel_tol: 1e-12, gradient_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: DecayKind,
    pub param_names: [&'static str; 2],
    /// (amplitude, scale)
    pub params: [f64; 2],
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Approximate, from the Gauss-Newton Hessian at the optimum.
    pub standard_errors: [f64; 2],
}

impl FitResult {
    pub fn to_json(&self) -> Value {
        let [a, b] = self.param_names;
        json!({
            "model": self.model,
            "params": { a: self.params[0], b: self.params[1] },
            "rss": self.rss,
            "converged": self.converged,
            "iterations": self.iterations,
            "se": { a: self.standard_errors[0], b: self.standard_errors[1] },
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, FitError> {
        let bad = |m: &str| FitError::Malformed(m.to_string());
        let model: DecayKind = serde_json::from_value(v.get("model").cloned().ok_or_else(|| bad("model"))?)
            .map_err(|e| bad(&e.to_string()))?;
        let names = match model {
            DecayKind::Kurt4 => KurtosisDecay.param_names(),
            DecayKind::Mom6 => SixthMomentDecay.param_names(),
        };
        let pair = |key: &str| -> Result<[f64; 2], FitError> {
            let obj: &Map<String, Value> = v.get(key).and_then(Value::as_object).ok_or_else(|| bad(key))?;
            let get = |n: &str| obj.get(n).and_then(Value::as_f64).ok_or_else(|| bad(n));
            Ok([get(names[0])?, get(names[1])?])
        };
        Ok(FitResult {
            model,
            param_names: names,
            params: pair("params")?,
            rss: v.get("rss").and_then(Value::as_f64).ok_or_else(|| bad("rss"))?,
            iterations: v.get("iterations").and_then(Value::as_u64).ok_or_else(|| bad("iterations"))? as usize,
            converged: v.get("converged").and_then(Value::as_bool).ok_or_else(|| bad("converged"))?,
            gradient_norm: f64::NAN,
            standard_errors: pair("se")?,
        })
    }
}

fn weighted_rss(model: &dyn DecayModel, points: &[CurvePoint], amp: f64, scale: f64) -> f64 {
    points
        .iter()
        .map(|p| {
            let r = p.y - model.eval(p.delta, amp, scale);
            p.weight * r * r
        })
        .sum()
}

/// Solves the 2x2 system `m x = v`.
fn solve2(m: [[f64; 2]; 2], v: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = (m[0][0] * m[1][1]).abs().max((m[0][1] * m[1][0]).abs());
    if !(det.is_finite()) || det.abs() <= 1e-14 * scale || det == 0.0 {
        return None;
    }
    Some([(v[0] * m[1][1] - m[0][1] * v[1]) / det, (m[0][0] * v[1] - m[1][0] * v[0]) / det])
}

/// Normal matrix and gradient `Aᵀr` in (amplitude, ln scale) coordinates.
fn normal_equations(model: &dyn DecayModel, points: &[CurvePoint], amp: f64, scale: f64) -> ([[f64; 2]; 2], [f64; 2]) {
    let mut h = [[0.0; 2]; 2];
    let mut g = [0.0; 2];
    for p in points {
        let [da, db] = model.gradient(p.delta, amp, scale);
        let row = [da, db * scale];
        let r = p.y - model.eval(p.delta, amp, scale);
        for i in 0..2 {
            g[i] += p.weight * row[i] * r;
            for j in 0..2 {
                h[i][j] += p.weight * row[i] * row[j];
            }
        }
    }
    (h, g)
}

/// Weighted least-squares fit by Levenberg-Marquardt on (amplitude, ln scale).
///
/// Defaults when `init` is `None`: amplitude = y at the smallest Δ, scale = largest Δ.
pub fn fit_curve(
    points: &[CurvePoint],
    model: &dyn DecayModel,
    init: Option<[f64; 2]>,
    opts: FitOptions,
) -> Result<FitResult, FitError> {
    if points.len() < 3 {
        return Err(FitError::InsufficientPoints(points.len()));
    }
    for p in points {
        if !(p.delta > 0.0) || !p.y.is_finite() || !(p.weight > 0.0) || !p.weight.is_finite() {
            return Err(FitError::InvalidPoint(format!("{p:?}")));
        }
    }
    let first = points[0].delta;
    if points.iter().all(|p| p.delta == first) {
        return Err(FitError::SingularJacobian);
    }

    let [mut amp, scale0] = init.unwrap_or_else(|| {
        let smallest = points.iter().min_by(|a, b| a.delta.total_cmp(&b.delta)).expect("non-empty");
        let largest = points.iter().map(|p| p.delta).fold(f64::MIN, f64::max);
        [smallest.y, largest]
    });
    if !(scale0 > 0.0) {
        return Err(FitError::InvalidPoint(format!("initial scale {scale0} must be positive")));
    }
    let mut log_scale = scale0.ln();
    let mut rss = weighted_rss(model, points, amp, scale0);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_norm;

    loop {
        let (h, g) = normal_equations(model, points, amp, log_scale.exp());
        grad_norm = g[0].abs().max(g[1].abs());
        if rss == 0.0 || grad_norm < opts.gradient_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let mut stuck = false;
        loop {
            let damped = [[h[0][0] * (1.0 + lambda), h[0][1]], [h[1][0], h[1][1] * (1.0 + lambda)]];
            let Some(step) = solve2(damped, g) else {
                if h[0][0] * h[1][1] - h[0][1] * h[1][0] <= 0.0 && lambda < 1.0 {
                    return Err(FitError::SingularJacobian);
                }
                lambda *= 10.0;
                if lambda > 1e20 {
                    stuck = true;
                    break;
                }
                continue;
            };
            let (trial_amp, trial_log) = (amp + step[0], log_scale + step[1]);
            let trial_rss = weighted_rss(model, points, trial_amp, trial_log.exp());
            if trial_rss.is_finite() && trial_rss < rss {
                let rel = (rss - trial_rss) / rss;
                amp = trial_amp;
                log_scale = trial_log;
                rss = trial_rss;
                lambda = (lambda / 10.0).max(1e-15);
                if rel < opts.rss_rel_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                stuck = true;
                break;
            }
        }
        if converged || stuck {
            let (_, g) = normal_equations(model, points, amp, log_scale.exp());
            grad_norm = g[0].abs().max(g[1].abs());
            if stuck {
                converged = grad_norm < opts.gradient_tol || rss == 0.0;
            }
            break;
        }
    }

    let scale = log_scale.exp();
    Ok(FitResult {
        model: model.kind(),
        param_names: model.param_names(),
        params: [amp, scale],
        rss,
        iterations,
        converged: converged && amp > 0.0,
        gradient_norm: grad_norm,
        standard_errors: standard_errors(model, points, amp, scale, rss),
    })
}

fn standard_errors(model: &dyn DecayModel, points: &[CurvePoint], amp: f64, scale: f64, rss: f64) -> [f64; 2] {
    let mut h = [[0.0; 2]; 2];
    for p in points {
        let d = model.gradient(p.delta, amp, scale);
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] += p.weight * d[i] * d[j];
            }
        }
    }
    let dof = points.len() as f64 - 2.0;
    let s2 = rss / dof;
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if det <= 0.0 || !det.is_finite() {
        return [f64::NAN, f64::NAN];
    }
    [(s2 * h[1][1] / det).max(0.0).sqrt(), (s2 * h[0][0] / det).max(0.0).sqrt()]
}
