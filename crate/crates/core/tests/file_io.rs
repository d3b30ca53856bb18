use taurus::harness::{
    self, estimate_from_file, estimate_signal, sidecar_path, write_signal, ExperimentConfig, PointCase, SignalMetadata,
};
use taurus::physics::{finish, SampledSignal};
use taurus::preprocess::{apply_timing, MarkerWindow};

fn received(cfg: &ExperimentConfig, slew_z: f64) -> (PointCase, SampledSignal) {
    let case = PointCase::new(cfg, slew_z, 0.0);
    let sc = &cfg.scanner;
    let dec = case.decimated(sc).unwrap();
    (case, finish(sc, &dec, None).unwrap().received)
}

fn meta(cfg: &ExperimentConfig, slew_z: f64) -> SignalMetadata {
    SignalMetadata {
        slew_z,
        ..SignalMetadata::new(&cfg.scanner, 0.0)
    }
}

#[test]
fn file_round_trip_is_bitwise() {
    let cfg = ExperimentConfig::default();
    let (_, sig) = received(&cfg, 20.0);
    let m = meta(&cfg, 20.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sig.bin");
    write_signal(&path, &sig, Some(&m)).unwrap();
    let csv = dir.path().join("est.csv");
    let from_file = estimate_from_file(&path, &sidecar_path(&path), &cfg, Some(&csv)).unwrap();
    let in_memory = estimate_signal(&sig, &m, &cfg.scanner, &cfg.estimator, None).unwrap();
    assert_eq!(from_file.estimates.len(), in_memory.estimates.len());
    for (a, b) in from_file.estimates.iter().zip(&in_memory.estimates) {
        assert_eq!(a.tau.to_bits(), b.tau.to_bits());
    }
    let rows = harness::read_estimates_csv(&csv).unwrap();
    assert_eq!(rows.len(), in_memory.estimates.len());
    for (r, e) in rows.iter().zip(&in_memory.estimates) {
        assert_eq!(r.tau, e.tau);
    }
}

#[test]
fn trailing_half_period_is_ignored() {
    let cfg = ExperimentConfig::default();
    let (_, sig) = received(&cfg, 0.0);
    let period = 2 * cfg.scanner.half_period_samples(sig.rate);
    let full = sig.len() / period;
    let cut = SampledSignal::new(
        sig.samples[..(full - 1) * period + period / 2 + 7].to_vec(),
        sig.rate,
        0.0,
    )
    .unwrap();
    let est = estimate_signal(&cut, &meta(&cfg, 0.0), &cfg.scanner, &cfg.estimator, None).unwrap();
    assert_eq!(est.estimates.len(), full - 1);
}

#[test]
fn sample_rate_mismatch_is_rejected() {
    let cfg = ExperimentConfig::default();
    let (_, sig) = received(&cfg, 0.0);
    let mut m = meta(&cfg, 0.0);
    m.sample_rate = 1e6;
    assert!(estimate_signal(&sig, &m, &cfg.scanner, &cfg.estimator, None).is_err());
    let mut m = meta(&cfg, 0.0);
    m.drive_frequency = 25e3;
    assert!(estimate_signal(&sig, &m, &cfg.scanner, &cfg.estimator, None).is_err());
}

#[test]
fn marker_calibration_removes_subsample_delay() {
    let cfg = ExperimentConfig::default();
    let slew = 20.0;
    let (case, sig) = received(&cfg, slew);
    let fs = sig.rate;
    let delayed = apply_timing(&sig, -0.8 / fs);

    let clean = estimate_signal(&sig, &meta(&cfg, slew), &cfg.scanner, &cfg.estimator, None).unwrap();
    let mut m = meta(&cfg, slew);
    m.marker = Some(MarkerWindow {
        first_period: case.analyzed - 2,
        periods: 5,
        slew_z: slew,
    });
    m.timing_search_range = Some(1.5 / fs);
    let cal = estimate_signal(&delayed, &m, &cfg.scanner, &cfg.estimator, None).unwrap();
    let uncal = estimate_signal(&delayed, &meta(&cfg, slew), &cfg.scanner, &cfg.estimator, None).unwrap();

    assert!(
        (cal.timing_offset * fs - 0.8).abs() < 0.05,
        "offset {} samples",
        cal.timing_offset * fs
    );
    let pick = |e: &harness::FileEstimate| e.estimates.iter().find(|p| p.period == case.analyzed).unwrap().tau;
    let (t0, t1, t2) = (pick(&clean), pick(&cal), pick(&uncal));
    assert!((t1 - t0).abs() < 0.02 * t0, "calibrated {t1} vs {t0}");
    // the uncalibrated delay is what the calibration has to fix
    assert!((t2 - t0).abs() > (t1 - t0).abs());
}
