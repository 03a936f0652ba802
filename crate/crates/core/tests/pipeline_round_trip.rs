use std::fs::File;

use serde_json::{json, Value};
use sessionrv::io::{read_moments, read_rv_table, read_signature, read_zones};
use sessionrv::pipeline::{write_reports, REPORT_FILES};
use sessionrv::synth::{generate_dataset, SimConfig, StrategySpec};
use sessionrv::{analyze, AnalysisConfig, SessionCalendar, SessionLabel};

fn dataset() -> (sessionrv::synth::SimDataset, SessionCalendar) {
    let cfg = SimConfig::new(60, StrategySpec::new("lognormal", json!({"mu": -9.2, "s": 0.5})), 7);
    let data = generate_dataset(&cfg).unwrap();
    let cal = SessionCalendar::tse(cfg.trading_days());
    (data, cal)
}

#[test]
fn zone_returns_match_truth() {
    let (data, cal) = dataset();
    let report = analyze(&data.to_tick_series(), &cal, &AnalysisConfig::default()).unwrap();
    let truth = data.truth();
    assert_eq!(report.zones.len(), truth.days.len());
    let mut prev_close: Option<f64> = None;
    for (z, t) in report.zones.iter().zip(&truth.days) {
        let b = t.boundary_prices;
        let close = |a: f64, e: f64| (a - e).abs() < 1e-10;
        assert!(close(z.r_ms, (b.ms_close / b.ms_open).ln()));
        assert!(close(z.r_lb, (b.as_open / b.ms_close).ln()));
        assert!(close(z.r_as, (b.as_close / b.as_open).ln()));
        match (z.r_on, prev_close) {
            (Some(on), Some(p)) => assert!(close(on, (b.ms_open / p).ln())),
            (None, None) => {}
            other => panic!("overnight mismatch {other:?}"),
        }
        prev_close = Some(b.as_close);
    }
}

#[test]
fn one_minute_rv_is_sum_of_true_increments() {
    let (data, cal) = dataset();
    let cfg = AnalysisConfig { deltas: vec![1, 2, 30], ..AnalysisConfig::default() };
    let report = analyze(&data.to_tick_series(), &cal, &cfg).unwrap();
    for r in report.rv_records.iter().filter(|r| r.delta == 1) {
        let day = data.days.iter().find(|d| d.date == r.date).unwrap();
        let k = if r.session == SessionLabel::MS { 0 } else { 1 };
        let path = &day.sessions[k].true_log;
        let expect: f64 = path.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        assert!((r.rv - expect).abs() <= 1e-9 * expect, "{} vs {expect}", r.rv);
        assert_eq!(r.n_returns, path.len() - 1);
    }
}

#[test]
fn reports_read_back_identically() {
    let (data, cal) = dataset();
    let report = analyze(&data.to_tick_series(), &cal, &AnalysisConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_reports(&report, dir.path()).unwrap();
    assert_eq!(written.len(), REPORT_FILES.len());
    for name in REPORT_FILES {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let open = |n: &str| File::open(dir.path().join(n)).unwrap();
    assert_eq!(read_rv_table(open("rv_table.csv")).unwrap(), report.rv_records);
    assert_eq!(read_signature(open("signature.csv")).unwrap(), report.signature);
    assert_eq!(read_moments(open("moments.csv")).unwrap(), report.moments);
    assert_eq!(read_moments(open("moments_theory.csv")).unwrap(), report.theory);
    let zones = read_zones(open("zones.csv")).unwrap();
    assert_eq!(zones.len(), report.zones.len());
    assert!(zones.iter().zip(&report.zones).all(|(a, b)| a.r_ms == b.r_ms && a.r_on == b.r_on));

    let fit: Value = serde_json::from_reader(open("fit_kurtosis.json")).unwrap();
    for label in ["MS", "AS"] {
        let k = fit[label]["params"]["K"].as_f64().unwrap();
        assert_eq!(k, report.fits.iter().find(|f| f.session.as_str() == label).unwrap().kurtosis.params[0]);
    }
    let summary: Value = serde_json::from_reader(open("summary.json")).unwrap();
    assert_eq!(summary["counts"]["slices"], json!(120));
}

#[test]
fn moment_profile_invariants() {
    let (data, cal) = dataset();
    let report = analyze(&data.to_tick_series(), &cal, &AnalysisConfig::default()).unwrap();
    for p in &report.moments {
        for r in &p.rows {
            assert!(r.variance > 0.0 && r.kurtosis >= 1.0 && r.m6 >= 0.0);
            assert_eq!(r.count, 60);
        }
    }
}

#[test]
fn short_delta_list_skips_fits_but_keeps_tables() {
    let (data, cal) = dataset();
    let cfg = AnalysisConfig { deltas: vec![1, 30], ..AnalysisConfig::default() };
    let report = analyze(&data.to_tick_series(), &cal, &cfg).unwrap();
    assert!(report.fits.is_empty());
    assert_eq!(report.moments.len(), 2);
    assert!(report.warnings.iter().any(|w| w.contains("decay fits skipped")));
}
