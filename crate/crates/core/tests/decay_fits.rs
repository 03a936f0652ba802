use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sessionrv::fitting::{
    fit_curve, kurt_model, m6_model, CurvePoint, DecayModel, FitOptions, KurtosisDecay, SixthMomentDecay,
};

fn points(mut f: impl FnMut(f64) -> f64) -> Vec<CurvePoint> {
    (1..=40).map(|d| CurvePoint::new(d as f64, f(d as f64))).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn recovers_generating_parameters() {
    // (model, amplitude, scale) at index-scale values
    let cases: [(&dyn DecayModel, f64, f64); 4] = [
        (&KurtosisDecay, 2.42, 216.5),
        (&KurtosisDecay, 2.86, 216.7),
        (&SixthMomentDecay, 9.17, 176.2),
        (&SixthMomentDecay, 11.6, 219.7),
    ];
    for (model, a, b) in cases {
        let pts = points(|d| model.eval(d, a, b));
        let fit = fit_curve(&pts, model, None, FitOptions::default()).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert!(rel(fit.params[0], a) < 1e-6 && rel(fit.params[1], b) < 1e-6, "{fit:?}");
    }
}

#[test]
fn finite_sample_curve_gives_gaussian_intercept() {
    let pts = points(|d| {
        let n = 120.0 / d;
        3.0 * n / (n + 2.0)
    });
    let fit = fit_curve(&pts, &KurtosisDecay, None, FitOptions::default()).unwrap();
    assert!(rel(fit.params[0], 3.0) < 1e-6 && rel(fit.params[1], 120.0) < 1e-6, "{fit:?}");

    let pts = points(|d| {
        let n = 120.0 / d;
        15.0 * n * n / ((n + 2.0) * (n + 4.0))
    });
    let fit = fit_curve(&pts, &SixthMomentDecay, None, FitOptions::default()).unwrap();
    assert!(rel(fit.params[0], 15.0) < 1e-6 && rel(fit.params[1], 120.0) < 1e-6, "{fit:?}");
}

fn noisy(seed: u64, f: impl Fn(f64) -> f64) -> Vec<CurvePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    points(|d| f(d) + rng.random_range(-0.05..0.05))
}

#[test]
fn refit_from_optimum_is_stable() {
    for (model, pts) in [
        (&KurtosisDecay as &dyn DecayModel, noisy(1, |d| kurt_model(d, 2.9, 150.0))),
        (&SixthMomentDecay, noisy(2, |d| m6_model(d, 12.0, 200.0))),
    ] {
        let first = fit_curve(&pts, model, None, FitOptions::default()).unwrap();
        assert!(first.converged);
        let again = fit_curve(&pts, model, Some(first.params), FitOptions::default()).unwrap();
        assert!((again.rss - first.rss).abs() <= 1e-14 * first.rss, "{} vs {}", again.rss, first.rss);
        assert!(first.standard_errors.iter().all(|s| s.is_finite() && *s > 0.0));
    }
}

#[test]
fn amplitude_scales_with_data() {
    for (model, pts) in [
        (&KurtosisDecay as &dyn DecayModel, noisy(3, |d| kurt_model(d, 2.5, 200.0))),
        (&SixthMomentDecay, noisy(4, |d| m6_model(d, 10.0, 180.0))),
    ] {
        let base = fit_curve(&pts, model, None, FitOptions::default()).unwrap();
        let doubled: Vec<CurvePoint> = pts.iter().map(|p| CurvePoint { y: 2.0 * p.y, ..*p }).collect();
        let fit = fit_curve(&doubled, model, None, FitOptions::default()).unwrap();
        assert!(rel(fit.params[0], 2.0 * base.params[0]) < 1e-8, "{fit:?} vs {base:?}");
        assert!(rel(fit.params[1], base.params[1]) < 1e-8, "{fit:?} vs {base:?}");
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for model in [&KurtosisDecay as &dyn DecayModel, &SixthMomentDecay] {
        for _ in 0..100 {
            let delta = rng.random_range(0.5..60.0);
            let a = rng.random_range(0.5..20.0);
            let b = rng.random_range(5.0..500.0);
            let g = model.gradient(delta, a, b);
            let (ha, hb) = (1e-6 * a, 1e-6 * b);
            let fd = [
                (model.eval(delta, a + ha, b) - model.eval(delta, a - ha, b)) / (2.0 * ha),
                (model.eval(delta, a, b + hb) - model.eval(delta, a, b - hb)) / (2.0 * hb),
            ];
            for i in 0..2 {
                assert!((g[i] - fd[i]).abs() <= 1e-6 * g[i].abs(), "{:?} {i}: {} vs {}", model.kind(), g[i], fd[i]);
            }
        }
    }
}

#[test]
fn weights_change_the_fit() {
    let mut pts = noisy(6, |d| kurt_model(d, 2.8, 180.0));
    let plain = fit_curve(&pts, &KurtosisDecay, None, FitOptions::default()).unwrap();
    for p in pts.iter_mut().take(5) {
        p.weight = 100.0;
    }
    let weighted = fit_curve(&pts, &KurtosisDecay, None, FitOptions::default()).unwrap();
    assert!(weighted.converged);
    assert_ne!(weighted.params, plain.params);
}
