mod common;

use common::quadrature::{density_moment, gauss_legendre, integrate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sessionrv::moments::{finite_sample_density, finite_sample_moment, sample_moments};

#[test]
fn quadrature_oracle_is_sound() {
    let w: f64 = gauss_legendre(20).iter().map(|p| p.1).sum();
    assert!((w - 2.0).abs() < 1e-14);
    let v = integrate(|x| x.exp(), 0.0, 1.0, 4);
    assert!((v - (1f64.exp() - 1.0)).abs() < 1e-14);
}

#[test]
fn density_normalizes_for_every_n() {
    for n in 2..=240u64 {
        let mass = density_moment(|x| finite_sample_density(x, n).unwrap(), n, 0);
        assert!((mass - 1.0).abs() < 1e-9, "n={n}: mass {mass}");
    }
}

#[test]
fn quadrature_moments_match_closed_form() {
    for n in 2..=240u64 {
        for k in 1..=3 {
            let q = density_moment(|x| finite_sample_density(x, n).unwrap(), n, k);
            let exact = finite_sample_moment(n, k);
            assert!((q - exact).abs() < 1e-8, "n={n} k={k}: {q} vs {exact}");
        }
    }
    // the two worked values
    let f4 = |x: f64| finite_sample_density(x, 4).unwrap();
    assert!((density_moment(f4, 4, 2) - 2.0).abs() < 1e-10);
    assert!((density_moment(f4, 4, 3) - 5.0).abs() < 1e-10);
}

#[test]
fn density_at_origin_for_three_returns() {
    // Γ(3/2) = sqrt(π)/2, Γ(1) = 1
    let oracle = (std::f64::consts::PI.sqrt() / 2.0) / (3.0 * std::f64::consts::PI).sqrt();
    assert!((finite_sample_density(0.0, 3).unwrap() - oracle).abs() < 1e-15);
    assert!((oracle - 0.288675).abs() < 1e-6);
}

fn draw_standardized(n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        sum += z;
        sq += z * z;
    }
    sum / sq.sqrt()
}

#[test]
fn standard_normal_moments_within_three_se() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let row = sample_moments(0, &draws).unwrap();
    assert!((row.variance - 1.0).abs() < 3.0 * row.se_var, "{row:?}");
    assert!((row.kurtosis - 3.0).abs() < 3.0 * row.se_kurt, "{row:?}");
    assert!((row.m6 - 15.0).abs() < 3.0 * row.se_m6, "{row:?}");
}

#[test]
fn finite_sample_draws_match_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in [4usize, 12] {
        let draws: Vec<f64> = (0..200_000).map(|_| draw_standardized(n, &mut rng)).collect();
        assert!(draws.iter().all(|x| x.abs() <= (n as f64).sqrt() + 1e-9));
        let row = sample_moments(0, &draws).unwrap();
        let m4 = finite_sample_moment(n as u64, 2);
        let m6 = finite_sample_moment(n as u64, 3);
        assert!((row.kurtosis - m4).abs() < 3.0 * row.se_kurt, "n={n} {row:?} vs {m4}");
        assert!((row.m6 - m6).abs() < 3.0 * row.se_m6, "n={n} {row:?} vs {m6}");
        assert!((row.variance - 1.0).abs() < 3.0 * row.se_var, "n={n} {row:?}");
    }
}
