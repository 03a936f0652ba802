//! Composite Gauss-Legendre quadrature, used as an independent oracle.

use std::f64::consts::PI;

/// Nodes and weights of the `m`-point rule on [-1, 1] (Newton on P_m).
pub fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// ∫_a^b f using `panels` equal panels of the 20-point rule.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre(20);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let part: f64 = rule.iter().map(|&(x, w)| w * f(mid + 0.5 * h * x)).sum();
        total += 0.5 * h * part;
    }
    total
}

/// ∫ x^(2k) f(x) dx over [-sqrt n, sqrt n] for the density `f`, with the
/// substitution x = sqrt(n) sin θ so the edge behaviour at small n is smooth.
pub fn density_moment(f: impl Fn(f64) -> f64, n: u64, k: u32) -> f64 {
    let root = (n as f64).sqrt();
    integrate(
        |theta| {
            let x = root * theta.sin();
            f(x) * root * theta.cos() * x.powi(2 * k as i32)
        },
        -PI / 2.0,
        PI / 2.0,
        64,
    )
}
