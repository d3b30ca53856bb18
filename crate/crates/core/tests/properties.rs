use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use taurus::error::Error;
use taurus::estimator::{
    deconvolve, estimate_taurus, estimate_wls, extend_replicate, spectra, sr_correction_params, sr_residual,
    HalfCyclePair, SpectrumPair, SrCorrection, WlsProblem,
};
use taurus::mapping::{estimates_to_map, GridSpec, KernelScale, TauEstimate};
use taurus::physics::{apply_relaxation, simulate_adiabatic, MnpSpecies, Phantom, SampledSignal, Window};
use taurus::preprocess::{zero_phase_filter, FilterSpec};
use taurus::trajectory::{ScannerConfig, TrajectorySpec};

/// S_pos = H R and S_neg = -conj(H) R with R the Debye response, on signed bins.
fn debye_pair(tau: f64, n: usize, width: f64, skew: f64) -> SpectrumPair {
    let df = 2e4 / 7.0;
    let mut s_pos = Vec::with_capacity(n);
    let mut s_neg = Vec::with_capacity(n);
    for k in 0..n {
        let kk = if k <= (n - 1) / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        };
        let f = kk * df;
        let h = Complex64::new((-(f / width).powi(2)).exp(), skew * f / width);
        let r = 1.0 / Complex64::new(1.0, 2.0 * PI * f * tau);
        s_pos.push(h * r);
        s_neg.push(-h.conj() * r);
    }
    SpectrumPair {
        s_pos,
        s_neg,
        bin_width: df,
        corrected: true,
    }
}

fn burst(n: usize, seed: u64) -> Vec<f64> {
    // deterministic smooth pulse train with a seed-dependent phase
    let ph = (seed % 97) as f64 * 0.1;
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            (-(((t - 0.5) / 0.12).powi(2))).exp() * (2.0 * PI * 9.0 * t + ph).sin()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn zero_slew_signal_is_mirror_symmetric(
        x in -3e-3..3e-3f64,
        z in -4e-3..4e-3f64,
        fx in -5e-3..5e-3f64,
        fz in -5e-3..5e-3f64,
    ) {
        let sc = ScannerConfig::default();
        let spec = TrajectorySpec::ramp(&sc, [fx, 0.0, fz], [0.0; 3], 3e-4);
        let ph = Phantom::point([x, 0.0, z], MnpSpecies::new("m", 25e-9, 0.0));
        let s = simulate_adiabatic(&sc, &spec, &ph, &Window::periods(&sc, 1, 1)).unwrap();
        let n = s.len() / 2;
        let peak = s.peak();
        prop_assume!(peak > 0.0);
        for i in 0..n {
            prop_assert!((s.samples[n + i] + s.samples[(n - i) % n]).abs() < 1e-9 * peak);
        }
    }
}

proptest! {
    #[test]
    fn correction_root_residual(slew in -940.0..940.0f64) {
        let sc = ScannerConfig::default();
        match sr_correction_params(&sc, slew) {
            Ok(c) => {
                prop_assert!(sr_residual(&sc, &c).abs() < 1e-15);
                prop_assert!(c.alpha > 0.0);
                prop_assert!(c.dt.abs() < 0.5 / sc.drive_frequency);
                prop_assert!(c.dt * slew <= 0.0);
            }
            // only a strong negative slew can leave the shift equation without a root
            Err(Error::NoShiftRoot { .. }) => prop_assert!(slew < -100.0),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn correction_is_monotone_in_slew(a in -100.0..940.0f64, b in -100.0..940.0f64) {
        prop_assume!((a - b).abs() > 1e-3);
        let sc = ScannerConfig::default();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let cl = sr_correction_params(&sc, lo).unwrap();
        let ch = sr_correction_params(&sc, hi).unwrap();
        prop_assert!(ch.dt < cl.dt);
        prop_assert!(ch.alpha > cl.alpha);
    }

    #[test]
    fn relaxation_round_trip(tau in 0.0..5e-6f64, seed in 0u64..1000) {
        let rate = 2e6;
        let x = SampledSignal::new(burst(4000, seed), rate, 0.0).unwrap();
        let y = apply_relaxation(&x, tau);
        let back = deconvolve(&y, tau);
        let peak = x.peak();
        for (a, b) in x.samples.iter().zip(&back.samples) {
            prop_assert!((a - b).abs() < 1e-6 * peak);
        }
    }

    #[test]
    fn estimate_is_scale_invariant(tau in 5e-7..5e-6f64, c in 1e-6..1e6f64) {
        let sp = debye_pair(tau, 140, 4e4, 0.3);
        let scaled = SpectrumPair {
            s_pos: sp.s_pos.iter().map(|v| v * c).collect(),
            s_neg: sp.s_neg.iter().map(|v| v * c).collect(),
            ..sp.clone()
        };
        for f in [estimate_taurus, estimate_wls] {
            let a = f(&sp).unwrap();
            let b = f(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn estimators_agree_on_ideal_pairs(tau in 0.0..8e-6f64, width in 1e4..2e5f64, skew in -1.0..1.0f64) {
        let sp = debye_pair(tau, 140, width, skew);
        let t = estimate_taurus(&sp).unwrap();
        let w = estimate_wls(&sp).unwrap();
        prop_assert!((t - tau).abs() < 1e-9);
        prop_assert!((w - tau).abs() < 1e-9);
        prop_assert!((t - w).abs() < 1e-9);
    }

    #[test]
    fn identity_weights_give_least_squares(tau in 1e-7..6e-6f64, noise in 0.0..0.2f64) {
        let mut sp = debye_pair(tau, 70, 5e4, 0.2);
        for (k, v) in sp.s_neg.iter_mut().enumerate() {
            *v += Complex64::new(noise * (k as f64 * 1.3).sin(), noise * (k as f64 * 0.7).cos());
        }
        let p = WlsProblem::new(&sp);
        let ones: Vec<f64> = (0..p.a.len()).map(|k| if k == 0 { 0.0 } else { 1.0 }).collect();
        let got = p.solve_weighted(&ones).unwrap();
        // normal equation of min ||a t - b||^2 over real t
        let num: f64 = p.a.iter().zip(&p.b).skip(1).map(|(a, b)| (a.conj() * b).re).sum();
        let den: f64 = p.a.iter().skip(1).map(|a| a.norm_sqr()).sum();
        prop_assert!((got - num / den).abs() <= 1e-12 * (num / den).abs().max(1e-12));
    }

    #[test]
    fn replication_preserves_mirror_relation(nrep in 0usize..10, seed in 0u64..1000) {
        // a turning point at the start, as in a real half-cycle
        let mut s = burst(100, seed);
        s[0] = 0.0;
        let neg: Vec<f64> = (0..100).map(|i| -s[(100 - i) % 100]).collect();
        let mk = |v: Vec<f64>| SampledSignal::new(v, 2e6, 0.0).unwrap();
        let pair = HalfCyclePair { neg: mk(neg), pos: mk(s), period: 0, center: None };
        let ext = extend_replicate(&pair, nrep);
        let n = ext.pos.len();
        prop_assert_eq!(n, 100 * (nrep + 1));
        for i in 0..n {
            prop_assert!((ext.pos.samples[i] + ext.neg.samples[(n - i) % n]).abs() < 1e-15);
        }
        let sp = spectra(&ext, &SrCorrection::identity());
        prop_assert!((sp.bin_width - 2e4 / (nrep + 1) as f64).abs() < 1e-9);
    }

    #[test]
    fn filtering_is_linear(c in -1e3..1e3f64, seed in 0u64..1000) {
        let x = SampledSignal::new(burst(2000, seed), 2e6, 0.0).unwrap();
        let spec = FilterSpec::feedthrough(&ScannerConfig::default());
        let a = zero_phase_filter(&x.scaled(c), &spec).unwrap();
        let b = zero_phase_filter(&x, &spec).unwrap().scaled(c);
        let peak = a.peak().max(f64::MIN_POSITIVE);
        for (u, v) in a.samples.iter().zip(&b.samples) {
            prop_assert!((u - v).abs() <= 1e-12 * peak);
        }
    }

    #[test]
    fn uniform_tau_grids_to_uniform_map(tau in 1e-6..5e-6f64, w in 0.1..10.0f64) {
        let est: Vec<TauEstimate> = (0..25)
            .map(|i| TauEstimate { center: [(i % 5) as f64 * 1e-3, 0.0, (i / 5) as f64 * 1e-3], tau, weight: w })
            .collect();
        let grid = GridSpec { origin: [0.0, 0.0], pixel: 2.5e-4, shape: [17, 17] };
        let map = estimates_to_map(&est, &grid, 1e-3, KernelScale::Image).unwrap();
        for v in map.values.iter().filter(|v| v.is_finite()) {
            prop_assert!((v - tau).abs() <= 1e-12 * tau);
        }
    }
}
