use std::ffi::{CStr, CString};
use std::ptr;

use taurus::estimator::{self, CorrectionMode, EstimatorConfig, Method};
use taurus::harness::{sidecar_path, write_signal, ExperimentConfig, PointCase, SignalMetadata};
use taurus::physics::finish;
use taurus_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    unsafe { taurus_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn correction_matches_library() {
    let sc = taurus_scanner_default();
    let mut c = TaurusCorrection {
        dt: 0.0,
        alpha: 0.0,
        t0: 0.0,
        slew: 0.0,
    };
    assert_eq!(unsafe { taurus_sr_correction(sc, 20.0, &mut c) }, TaurusStatus::Ok);
    let want = estimator::sr_correction_params(&Default::default(), 20.0).unwrap();
    assert_eq!(c.dt.to_bits(), want.dt.to_bits());
    assert_eq!(c.alpha.to_bits(), want.alpha.to_bits());
    assert!(c.dt < 0.0 && c.alpha > 1.0);

    assert_eq!(
        unsafe { taurus_sr_correction(sc, -900.0, &mut c) },
        TaurusStatus::NoShiftRoot
    );
    assert!(last_error().contains("no root"));
    unsafe { taurus_scanner_free(sc) };
}

#[test]
fn pair_estimate_matches_library() {
    let cfg = ExperimentConfig::default();
    let sc = &cfg.scanner;
    let case = PointCase::new(&cfg, 20.0, 0.0);
    let received = finish(sc, &case.decimated(sc).unwrap(), None).unwrap().received;
    let pair = case.pair(sc, &received).unwrap();
    let corr = case.correction(sc).unwrap();

    for (method, m) in [(TaurusMethod::Taurus, Method::Taurus), (TaurusMethod::Wls, Method::Wls)] {
        let ec = EstimatorConfig {
            n_rep: 6,
            method: m,
            timing_offset: 0.0,
            correction: CorrectionMode::Full,
        };
        let want = estimator::estimate_pair(&pair, &corr, &ec).unwrap().tau;
        let c = TaurusCorrection {
            dt: corr.dt,
            alpha: corr.alpha,
            t0: corr.t0,
            slew: corr.slew,
        };
        let mut tau = f64::NAN;
        let st = unsafe {
            taurus_estimate_pair(
                pair.neg.samples.as_ptr(),
                pair.pos.samples.as_ptr(),
                pair.pos.len(),
                pair.pos.rate,
                &c,
                6,
                method,
                &mut tau,
            )
        };
        assert_eq!(st, TaurusStatus::Ok);
        assert_eq!(tau.to_bits(), want.to_bits());
    }
}

#[test]
fn relaxation_round_trip_in_place() {
    let n = 2000;
    let orig: Vec<f64> = (0..n)
        .map(|i| (i as f64 * 0.031).sin() * (-((i as f64 - 1000.0) / 300.0).powi(2)).exp())
        .collect();
    let mut buf = orig.clone();
    let p = buf.as_mut_ptr();
    assert_eq!(unsafe { taurus_apply_relaxation(p, n, 2e6, 3e-6, p) }, TaurusStatus::Ok);
    assert!(buf.iter().zip(&orig).any(|(a, b)| (a - b).abs() > 1e-3));
    assert_eq!(unsafe { taurus_deconvolve(p, n, 2e6, 3e-6, p) }, TaurusStatus::Ok);
    for (a, b) in buf.iter().zip(&orig) {
        assert!((a - b).abs() < 1e-9);
    }
    assert_ne!(unsafe { taurus_deconvolve(p, n, 0.0, 3e-6, p) }, TaurusStatus::Ok);
}

#[test]
fn file_estimation_through_handles() {
    let cfg = ExperimentConfig::default();
    let sc = &cfg.scanner;
    let case = PointCase::new(&cfg, 0.0, 0.0);
    let received = finish(sc, &case.decimated(sc).unwrap(), None).unwrap().received;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sig.bin");
    write_signal(&path, &received, Some(&SignalMetadata::new(sc, 0.0))).unwrap();
    let csv = dir.path().join("est.csv");

    let toml = CString::new(cfg.to_toml()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(
        unsafe { taurus_config_from_toml(toml.as_ptr(), &mut handle) },
        TaurusStatus::Ok
    );
    let sig = CString::new(path.to_str().unwrap()).unwrap();
    let meta = CString::new(sidecar_path(&path).to_str().unwrap()).unwrap();
    let out_csv = CString::new(csv.to_str().unwrap()).unwrap();
    let mut est = ptr::null_mut();
    let st = unsafe { taurus_estimate_file(handle, sig.as_ptr(), meta.as_ptr(), out_csv.as_ptr(), &mut est) };
    assert_eq!(st, TaurusStatus::Ok, "{}", last_error());
    assert!(csv.exists());

    let n = unsafe { taurus_estimates_len(est) };
    assert!(n > case.analyzed);
    assert_eq!(unsafe { taurus_estimates_timing_offset(est) }, 0.0);
    let mut item = TaurusPeriodEstimate {
        period: 0,
        center: [0.0; 3],
        tau: 0.0,
        weight: 0.0,
        mirror_mse: 0.0,
    };
    assert_eq!(
        unsafe { taurus_estimates_get(est, case.analyzed, &mut item) },
        TaurusStatus::Ok
    );
    assert_eq!(item.period, case.analyzed);
    assert!(
        (item.tau - cfg.source.tau).abs() < 0.1 * cfg.source.tau,
        "tau {}",
        item.tau
    );
    assert_eq!(unsafe { taurus_estimates_get(est, n, &mut item) }, TaurusStatus::Domain);

    let missing = CString::new(dir.path().join("none.bin").to_str().unwrap()).unwrap();
    let mut est2 = ptr::null_mut();
    let st = unsafe { taurus_estimate_file(handle, missing.as_ptr(), meta.as_ptr(), ptr::null(), &mut est2) };
    assert_eq!(st, TaurusStatus::Io);
    assert!(est2.is_null());

    unsafe {
        taurus_estimates_free(est);
        taurus_config_free(handle);
    }
}

#[test]
fn null_arguments_are_rejected() {
    let mut tau = 0.0;
    let x = [0.0; 4];
    let st = unsafe {
        taurus_estimate_pair(
            ptr::null(),
            x.as_ptr(),
            4,
            2e6,
            ptr::null(),
            0,
            TaurusMethod::Wls,
            &mut tau,
        )
    };
    assert_eq!(st, TaurusStatus::NullPointer);
    assert!(last_error().contains("neg"));
    let st = unsafe { taurus_sr_correction(ptr::null(), 20.0, ptr::null_mut()) };
    assert_eq!(st, TaurusStatus::NullPointer);
    assert_eq!(unsafe { taurus_estimates_len(ptr::null()) }, 0);
    assert!(unsafe { taurus_estimates_timing_offset(ptr::null()) }.is_nan());
    unsafe {
        taurus_estimates_free(ptr::null_mut());
        taurus_scanner_free(ptr::null_mut());
        taurus_config_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/taurus.h")).unwrap();
    assert!(h.contains("#ifndef TAURUS_FFI_H"));
    for name in [
        "taurus_estimate_pair",
        "taurus_estimate_file",
        "taurus_sr_correction",
        "taurus_last_error",
        "TAURUS_STATUS_NO_SHIFT_ROOT",
    ] {
        assert!(h.contains(name), "{name} missing from header");
    }
}
