//! FIR design and convolution helpers shared by the physics and preprocessing stages.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..500 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn kaiser_beta(atten: f64) -> f64 {
    if atten > 50.0 {
        0.1102 * (atten - 8.7)
    } else if atten >= 21.0 {
        0.5842 * (atten - 21.0).powf(0.4) + 0.07886 * (atten - 21.0)
    } else {
        0.0
    }
}

/// Kaiser-windowed sinc low-pass with unit DC gain and odd length.
pub fn lowpass_kernel(cutoff: f64, transition: f64, atten_db: f64, rate: f64) -> Vec<f64> {
    let dw = 2.0 * PI * transition / rate;
    let mut n = ((atten_db - 7.95) / (2.285 * dw)).ceil() as usize + 1;
    if n.is_multiple_of(2) {
        n += 1;
    }
    let m = (n / 2) as f64;
    let beta = kaiser_beta(atten_db);
    let i0b = bessel_i0(beta);
    let fc = 2.0 * cutoff / rate;
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let k = i as f64 - m;
            let sinc = if k == 0.0 {
                1.0
            } else {
                (PI * fc * k).sin() / (PI * fc * k)
            };
            let r = if m > 0.0 { k / m } else { 0.0 };
            fc * sinc * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b
        })
        .collect();
    let s: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= s);
    h
}

/// Spectral inversion of `lowpass_kernel`.
pub fn highpass_kernel(cutoff: f64, transition: f64, atten_db: f64, rate: f64) -> Vec<f64> {
    let mut h = lowpass_kernel(cutoff, transition, atten_db, rate);
    h.iter_mut().for_each(|v| *v = -*v);
    let c = h.len() / 2;
    h[c] += 1.0;
    h
}

/// Magnitude response of a symmetric kernel at frequency `f`.
pub fn kernel_gain(h: &[f64], f: f64, rate: f64) -> f64 {
    let c = (h.len() / 2) as f64;
    let w = 2.0 * PI * f / rate;
    h.iter()
        .enumerate()
        .map(|(i, v)| v * (w * (i as f64 - c)).cos())
        .sum::<f64>()
        .abs()
}

/// Index into a signal mirrored about its end samples (edge sample not repeated).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let p = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(p);
    if j >= n as isize {
        j = p - j;
    }
    j as usize
}

pub(crate) fn fft_plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

pub(crate) fn fft_real(x: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    fft_plan(n, false).process(&mut buf);
    buf
}

/// Inverse DFT scaled by 1/n, returning the real part.
pub(crate) fn ifft_real(mut spec: Vec<Complex64>) -> Vec<f64> {
    let n = spec.len();
    fft_plan(n, true).process(&mut spec);
    spec.iter().map(|c| c.re / n as f64).collect()
}

/// Signed frequency of DFT bin k for an n-point transform.
#[inline]
pub(crate) fn signed_bin(k: usize, n: usize) -> f64 {
    if k <= (n - 1) / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Centered convolution with reflect padding; output length equals input length.
pub fn zero_phase_conv(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    let l = h.len();
    if n == 0 {
        return Vec::new();
    }
    let m = (l / 2) as isize;
    if (n as f64) * (l as f64) < 4e7 {
        let mut y = vec![0.0; n];
        for (i, yi) in y.iter_mut().enumerate() {
            let base = i as isize - m;
            let mut acc = 0.0;
            if base >= 0 && base as usize + l <= n {
                let s = &x[base as usize..base as usize + l];
                for k in 0..l {
                    acc += h[k] * s[k];
                }
            } else {
                for (k, hk) in h.iter().enumerate() {
                    acc += hk * x[reflect(base + k as isize, n)];
                }
            }
            *yi = acc;
        }
        return y;
    }
    let padded: Vec<f64> = (-m..n as isize + m).map(|i| x[reflect(i, n)]).collect();
    let nfft = (padded.len() + l - 1).next_power_of_two();
    let a = fft_real(&padded, nfft);
    let b = fft_real(h, nfft);
    let full = ifft_real(a.iter().zip(&b).map(|(p, q)| p * q).collect());
    // full[j] = sum_k h[k] padded[j-k]; symmetric h makes this the centered response
    (0..n).map(|i| full[i + 2 * m as usize]).collect()
}

/// Zero-phase filtering evaluated only at every `factor`-th sample.
pub fn zero_phase_decimate(x: &[f64], h: &[f64], factor: usize) -> Vec<f64> {
    let n = x.len();
    let l = h.len();
    let m = (l / 2) as isize;
    (0..n)
        .step_by(factor)
        .map(|i| {
            let base = i as isize - m;
            if base >= 0 && base as usize + l <= n {
                h.iter().zip(&x[base as usize..]).map(|(a, b)| a * b).sum()
            } else {
                h.iter()
                    .enumerate()
                    .map(|(k, hk)| hk * x[reflect(base + k as isize, n)])
                    .sum()
            }
        })
        .collect()
}

/// Circular centered convolution for periodic signals, optionally decimated.
pub fn circular_filter(x: &[f64], h: &[f64], factor: usize) -> Vec<f64> {
    let n = x.len() as isize;
    let m = (h.len() / 2) as isize;
    (0..n)
        .step_by(factor)
        .map(|i| {
            h.iter()
                .enumerate()
                .map(|(k, hk)| hk * x[(i - m + k as isize).rem_euclid(n) as usize])
                .sum()
        })
        .collect()
}

const INTERP_HALF: isize = 64;
const INTERP_BETA: f64 = 10.0;

/// Kaiser-windowed sinc taps evaluating a sequence at `frac` in [0, 1) past a sample: tap `j`
/// multiplies sample `j - INTERP_HALF + 1` relative to it. Normalized to unit DC gain.
fn interp_taps(frac: f64) -> Vec<f64> {
    let i0b = bessel_i0(INTERP_BETA);
    let h = INTERP_HALF as f64;
    let mut taps: Vec<f64> = (-INTERP_HALF + 1..=INTERP_HALF)
        .map(|k| {
            let d = frac - k as f64;
            let r = d / h;
            if r.abs() >= 1.0 {
                return 0.0;
            }
            let s = if d == 0.0 { 1.0 } else { (PI * d).sin() / (PI * d) };
            s * bessel_i0(INTERP_BETA * (1.0 - r * r).sqrt()) / i0b
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

fn apply_taps(x: &[f64], base: isize, taps: &[f64]) -> f64 {
    let n = x.len();
    let lo = base - INTERP_HALF + 1;
    if lo >= 0 && (lo as usize) + taps.len() <= n {
        taps.iter().zip(&x[lo as usize..]).map(|(a, b)| a * b).sum()
    } else {
        taps.iter()
            .enumerate()
            .map(|(j, t)| t * x[reflect(lo + j as isize, n)])
            .sum()
    }
}

/// Band-limited advance y[n] = x(n + shift) by windowed-sinc interpolation with reflected
/// edges; accurate for content below about 0.45 of the sampling rate.
pub fn fractional_shift(x: &[f64], shift: f64) -> Vec<f64> {
    if x.is_empty() || shift == 0.0 {
        return x.to_vec();
    }
    let whole = shift.floor();
    let frac = shift - whole;
    let whole = whole as isize;
    let n = x.len();
    if frac == 0.0 {
        return (0..n as isize).map(|i| x[reflect(i + whole, n)]).collect();
    }
    let taps = interp_taps(frac);
    (0..n as isize).map(|i| apply_taps(x, i + whole, &taps)).collect()
}

/// Band-limited upsampling by an integer factor (polyphase windowed sinc).
pub fn upsample(x: &[f64], factor: usize) -> Vec<f64> {
    let n = x.len();
    if factor <= 1 || n == 0 {
        return x.to_vec();
    }
    let phases: Vec<Vec<f64>> = (1..factor).map(|p| interp_taps(p as f64 / factor as f64)).collect();
    let mut y = vec![0.0; n * factor];
    for i in 0..n {
        y[i * factor] = x[i];
        for (p, taps) in phases.iter().enumerate() {
            y[i * factor + p + 1] = apply_taps(x, i as isize, taps);
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i0_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.2660658777520082).abs() < 1e-14);
        assert!((bessel_i0(5.0) - 27.239871823604442).abs() < 1e-11);
    }

    #[test]
    fn feedthrough_highpass_spec() {
        let h = highpass_kernel(15e3, 10e3, 65.0, 2e6);
        assert!(h.len() % 2 == 1);
        let at_fd = 20.0 * kernel_gain(&h, 10e3, 2e6).log10();
        assert!(at_fd <= -60.0, "{at_fd}");
        for f in [20e3, 30e3, 100e3, 500e3] {
            let g = 20.0 * kernel_gain(&h, f, 2e6).log10();
            assert!(g.abs() <= 0.1, "{f} {g}");
        }
    }

    #[test]
    fn reflect_indices() {
        let n = 5;
        let got: Vec<usize> = (-3..8).map(|i| reflect(i, n)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
    }

    #[test]
    fn direct_and_fft_paths_agree() {
        let x: Vec<f64> = (0..6000)
            .map(|i| ((i as f64) * 0.013).sin() + ((i * 7 % 13) as f64) * 0.01)
            .collect();
        let h = lowpass_kernel(50e3, 20e3, 60.0, 2e6);
        let direct = zero_phase_conv(&x, &h);
        let big: Vec<f64> = x.iter().cycle().take(x.len() * 20).cloned().collect();
        let fast = zero_phase_conv(&big, &h);
        // the middle of the long signal sees the same neighbourhood as the middle of the short one
        let off = 6000 * 10;
        for i in 1000..5000 {
            assert!((direct[i] - fast[off + i]).abs() < 1e-9);
        }
    }

    #[test]
    fn decimate_matches_full() {
        let x: Vec<f64> = (0..3000).map(|i| ((i as f64) * 0.002).cos()).collect();
        let h = lowpass_kernel(1e5, 5e4, 60.0, 1e7);
        let full = zero_phase_conv(&x, &h);
        let dec = zero_phase_decimate(&x, &h, 7);
        for (j, v) in dec.iter().enumerate() {
            assert!((v - full[7 * j]).abs() < 1e-12);
        }
    }

    fn burst(t: f64, f: f64, center: f64) -> f64 {
        (-((t - center) / 150.0).powi(2)).exp() * (2.0 * PI * f * t).sin()
    }

    // the 128-tap Kaiser (beta 10) interpolator has passband ripple near 1e-5
    #[test]
    fn shift_of_bandlimited_burst() {
        let x: Vec<f64> = (0..4000).map(|i| burst(i as f64, 0.01, 2000.0)).collect();
        let y = fractional_shift(&x, 0.37);
        for (i, v) in y.iter().enumerate() {
            assert!(
                (v - burst(i as f64 + 0.37, 0.01, 2000.0)).abs() < 2e-5,
                "{i} {}",
                (v - burst(i as f64 + 0.37, 0.01, 2000.0)).abs()
            );
        }
    }

    #[test]
    fn shift_near_band_edge() {
        let x: Vec<f64> = (0..3000).map(|i| burst(i as f64, 0.4, 1500.0)).collect();
        let y = fractional_shift(&x, -2.6);
        for (i, v) in y.iter().enumerate() {
            assert!((v - burst(i as f64 - 2.6, 0.4, 1500.0)).abs() < 1e-4, "{i}");
        }
    }

    #[test]
    fn upsampled_burst() {
        let x: Vec<f64> = (0..2000).map(|i| burst(i as f64, 0.02, 1000.0)).collect();
        let y = upsample(&x, 5);
        assert_eq!(y.len(), 10000);
        for (j, v) in y.iter().enumerate() {
            assert!(
                (v - burst(j as f64 / 5.0, 0.02, 1000.0)).abs() < 2e-5,
                "{j} {}",
                (v - burst(j as f64 / 5.0, 0.02, 1000.0)).abs()
            );
        }
    }
}
