//! Relaxation time estimation from the mirror symmetry of back-and-forth half-cycles.
//!
//! Frequencies are signed DFT frequencies throughout: bin k of an N-point transform maps to
//! `k * df` for `k <= (N-1)/2` and to `(k - N) * df` above. The slew-rate correction phase
//! and the `i 2 pi f` factor of the tau profile both use that convention, so the upper half of
//! the spectrum mirrors the lower half instead of pretending to be high frequencies.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{fft_real, signed_bin};
use crate::error::{Error, Result};
use crate::physics::{decay, SampledSignal};
use crate::trajectory::ScannerConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct HalfCyclePair {
    pub neg: SampledSignal,
    pub pos: SampledSignal,
    pub period: usize,
    pub center: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumPair {
    pub s_pos: Vec<Complex64>,
    pub s_neg: Vec<Complex64>,
    /// Bin width, Hz.
    pub bin_width: f64,
    pub corrected: bool,
}

impl SpectrumPair {
    pub fn len(&self) -> usize {
        self.s_pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_pos.is_empty()
    }

    /// Signed frequency of bin k.
    pub fn frequency(&self, k: usize) -> f64 {
        signed_bin(k, self.len()) * self.bin_width
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrCorrection {
    /// Time shift applied to the negative half-cycle, s.
    pub dt: f64,
    /// Speed ratio applied to the negative half-cycle.
    pub alpha: f64,
    /// Quarter period reference point, s.
    pub t0: f64,
    /// Focus-field slew R_s,z the correction was computed for, T/s.
    pub slew: f64,
}

impl SrCorrection {
    pub fn identity() -> Self {
        SrCorrection {
            dt: 0.0,
            alpha: 1.0,
            t0: 0.0,
            slew: 0.0,
        }
    }

    pub fn shift_only(&self) -> Self {
        SrCorrection { alpha: 1.0, ..*self }
    }

    pub fn amplitude_only(&self) -> Self {
        SrCorrection { dt: 0.0, ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Taurus,
    Wls,
}

/// Which parts of the slew-rate correction to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMode {
    None,
    AmplitudeOnly,
    ShiftOnly,
    Full,
}

impl CorrectionMode {
    pub fn select(&self, c: &SrCorrection) -> SrCorrection {
        match self {
            CorrectionMode::None => SrCorrection::identity(),
            CorrectionMode::AmplitudeOnly => c.amplitude_only(),
            CorrectionMode::ShiftOnly => c.shift_only(),
            CorrectionMode::Full => *c,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CorrectionMode::None => "none",
            CorrectionMode::AmplitudeOnly => "amplitude-only",
            CorrectionMode::ShiftOnly => "shift-only",
            CorrectionMode::Full => "full",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub n_rep: usize,
    pub method: Method,
    /// Acquisition timing offset t_i, s.
    pub timing_offset: f64,
    pub correction: CorrectionMode,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            n_rep: 6,
            method: Method::Wls,
            timing_offset: 0.0,
            correction: CorrectionMode::Full,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WlsProblem {
    pub a: Vec<Complex64>,
    pub b: Vec<Complex64>,
    pub w: Vec<f64>,
}

impl WlsProblem {
    pub fn new(sp: &SpectrumPair) -> Self {
        let n = sp.len();
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for k in 0..n {
            let p = sp.s_pos[k].conj();
            let q = sp.s_neg[k];
            let iw = Complex64::new(0.0, 2.0 * PI * sp.frequency(k));
            a.push(iw * (p - q));
            b.push(p + q);
            w.push(if k == 0 { 0.0 } else { sp.s_pos[k].norm_sqr() });
        }
        WlsProblem { a, b, w }
    }

    /// Re{(a^H W a)^-1 a^H W b}.
    pub fn solve(&self) -> Result<f64> {
        self.solve_weighted(&self.w)
    }

    pub fn solve_weighted(&self, w: &[f64]) -> Result<f64> {
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for ((a, b), wk) in self.a.iter().zip(&self.b).zip(w) {
            num += a.conj() * b * wk;
            den += a.norm_sqr() * wk;
        }
        if !(den > 0.0) || !num.re.is_finite() {
            return Err(Error::Degenerate("a^H W a vanishes".into()));
        }
        Ok(num.re / den)
    }
}

/// Splits a drive-phase aligned signal into one (neg, pos) pair per complete period.
pub fn segment(signal: &SampledSignal, scanner: &ScannerConfig) -> Result<Vec<HalfCyclePair>> {
    let fd = scanner.drive_frequency;
    let half_f = signal.rate / (2.0 * fd);
    let half = half_f.round() as usize;
    if half == 0 || (half_f - half as f64).abs() > 1e-6 * half_f {
        return Err(Error::Config(format!(
            "rate {} does not give whole half-cycles",
            signal.rate
        )));
    }
    let first = (signal.t0 * fd - 1e-9).ceil();
    let lead = (first / fd - signal.t0) * signal.rate;
    let n0 = lead.round() as usize;
    if (lead - n0 as f64).abs() > 1e-6 {
        return Err(Error::Config(
            "signal start is not on the sample grid of the drive phase".into(),
        ));
    }
    let count = signal.len().saturating_sub(n0) / (2 * half);
    if count == 0 {
        return Err(Error::TooShort(format!(
            "{} samples hold no complete drive period of {} samples",
            signal.len(),
            2 * half
        )));
    }
    let dt = 1.0 / signal.rate;
    Ok((0..count)
        .map(|j| {
            let o = n0 + 2 * half * j;
            let t = signal.t0 + o as f64 * dt;
            HalfCyclePair {
                neg: SampledSignal {
                    samples: signal.samples[o..o + half].to_vec(),
                    rate: signal.rate,
                    t0: t,
                },
                pos: SampledSignal {
                    samples: signal.samples[o + half..o + 2 * half].to_vec(),
                    rate: signal.rate,
                    t0: t + half as f64 * dt,
                },
                period: first as usize + j,
                center: None,
            }
        })
        .collect())
}

/// Time shift and speed ratio that undo a focus-field slew of `slew` T/s.
pub fn sr_correction_params(scanner: &ScannerConfig, slew: f64) -> Result<SrCorrection> {
    let fd = scanner.drive_frequency;
    let bp = scanner.drive_amplitude;
    let w = scanner.drive_slew();
    let t0 = 1.0 / (4.0 * fd);
    if !(slew.abs() < w) {
        return Err(Error::Dominance {
            drive: w,
            slew: slew.abs(),
        });
    }
    if slew == 0.0 {
        return Ok(SrCorrection {
            dt: 0.0,
            alpha: 1.0,
            t0,
            slew,
        });
    }
    let f = |dt: f64| bp * (2.0 * PI * fd * dt).sin() + slew * dt + slew / (2.0 * fd);
    let df = |dt: f64| w * (2.0 * PI * fd * dt).cos() + slew;
    // f is monotone between 0 and its turning point dt_m (where df = 0), so the root nearest zero
    // is bracketed there. -T/2 is a spurious root. For a negative slew f can stay below zero on
    // the whole interval and then no shift exists.
    let dt_m = if slew > 0.0 {
        -(-slew / w).acos()
    } else {
        (-slew / w).acos()
    } / (2.0 * PI * fd);
    if slew < 0.0 && f(dt_m) < 0.0 {
        return Err(Error::NoShiftRoot { slew });
    }
    let (mut lo, mut hi) = if slew > 0.0 { (dt_m, 0.0) } else { (0.0, dt_m) };
    let mut x = (-slew / (2.0 * fd) / (w + slew)).clamp(lo.min(hi), lo.max(hi));
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            break;
        }
        if (fx < 0.0) == (f(lo) < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / df(x);
        let next = if newton > lo.min(hi) && newton < lo.max(hi) {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == x || (hi - lo).abs() <= f64::EPSILON * x.abs() {
            break;
        }
        x = next;
    }
    let alpha = (w * (2.0 * PI * fd * x).cos() + slew).abs() / (slew - w).abs();
    Ok(SrCorrection { dt: x, alpha, t0, slew })
}

/// Residual of the shift equation in tesla.
pub fn sr_residual(scanner: &ScannerConfig, c: &SrCorrection) -> f64 {
    let fd = scanner.drive_frequency;
    scanner.drive_amplitude * (2.0 * PI * fd * c.dt).sin() + c.slew * c.dt + c.slew / (2.0 * fd)
}

/// Extends both half-cycles to (n_rep + 1) half periods: the negative half keeps its samples at
/// the start and the positive half at the end, with the added span zero-filled. This keeps the
/// extended pair mirror symmetric and refines the bin width to 2 fd / (n_rep + 1).
pub fn extend_replicate(pair: &HalfCyclePair, n_rep: usize) -> HalfCyclePair {
    if n_rep == 0 {
        return pair.clone();
    }
    let n = pair.neg.len();
    let mut neg = pair.neg.samples.clone();
    neg.resize(n * (n_rep + 1), 0.0);
    let mut pos = vec![0.0; n * n_rep];
    pos.extend_from_slice(&pair.pos.samples);
    let rate = pair.pos.rate;
    HalfCyclePair {
        neg: SampledSignal {
            samples: neg,
            rate,
            t0: pair.neg.t0,
        },
        pos: SampledSignal {
            samples: pos,
            rate,
            t0: pair.pos.t0 - (n * n_rep) as f64 / rate,
        },
        period: pair.period,
        center: pair.center,
    }
}

/// DFTs of both halves with the correction applied to the negative half.
pub fn spectra(pair: &HalfCyclePair, c: &SrCorrection) -> SpectrumPair {
    let n = pair.pos.len();
    let s_pos = fft_real(&pair.pos.samples, n);
    let mut s_neg = fft_real(&pair.neg.samples, n);
    let df = pair.pos.rate / n as f64;
    let identity = c.dt == 0.0 && c.alpha == 1.0;
    if !identity {
        for (k, s) in s_neg.iter_mut().enumerate() {
            let f = signed_bin(k, n) * df;
            *s *= Complex64::from_polar(c.alpha, 2.0 * PI * f * c.dt);
        }
    }
    SpectrumPair {
        s_pos,
        s_neg,
        bin_width: df,
        corrected: true,
    }
}

/// Per-bin tau(f); bin 0 is set to 0 and division by zero leaves a non-finite entry.
pub fn tau_profile(sp: &SpectrumPair) -> Vec<Complex64> {
    (0..sp.len())
        .map(|k| {
            if k == 0 {
                return Complex64::new(0.0, 0.0);
            }
            let p = sp.s_pos[k].conj();
            let q = sp.s_neg[k];
            let den = Complex64::new(0.0, 2.0 * PI * sp.frequency(k)) * (p - q);
            if den.norm_sqr() == 0.0 {
                Complex64::new(f64::NAN, f64::NAN)
            } else {
                (p + q) / den
            }
        })
        .collect()
}

/// |S_pos|-weighted mean of Re tau(f).
pub fn estimate_taurus(sp: &SpectrumPair) -> Result<f64> {
    let prof = tau_profile(sp);
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, t) in prof.iter().enumerate().skip(1) {
        if t.re.is_finite() {
            let w = sp.s_pos[k].norm();
            num += w * t.re;
            den += w;
        }
    }
    if !(den > 0.0) {
        return Err(Error::Degenerate("all TAURUS weights are zero".into()));
    }
    Ok(num / den)
}

pub fn estimate_wls(sp: &SpectrumPair) -> Result<f64> {
    WlsProblem::new(sp).solve()
}

pub fn estimate(sp: &SpectrumPair, method: Method) -> Result<f64> {
    match method {
        Method::Taurus => estimate_taurus(sp),
        Method::Wls => estimate_wls(sp),
    }
}

/// Inverts the discrete relaxation response at the signal rate:
/// x[n] = (y[n] - a y[n-1]) / (1 - a) with a = exp(-1/(tau fs)). Its frequency response
/// (1 - a e^{-i w})/(1 - a) is bounded and tends to 1 + i 2 pi f tau for fs tau >> 1.
pub fn deconvolve(signal: &SampledSignal, tau: f64) -> SampledSignal {
    let a = decay(tau, signal.rate);
    if a == 0.0 {
        return signal.clone();
    }
    let g = 1.0 / (1.0 - a);
    let mut prev = 0.0;
    let out = signal
        .samples
        .iter()
        .map(|&y| {
            let x = g * (y - a * prev);
            prev = y;
            x
        })
        .collect();
    SampledSignal {
        samples: out,
        rate: signal.rate,
        t0: signal.t0,
    }
}

/// Mean of (pos[n] + neg[(N - n) mod N])^2.
pub fn mirror_mse(pair: &HalfCyclePair) -> f64 {
    let n = pair.pos.len();
    if n == 0 {
        return 0.0;
    }
    let neg = &pair.neg.samples;
    pair.pos
        .samples
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = p + neg[(n - i) % n];
            d * d
        })
        .sum::<f64>()
        / n as f64
}

/// Estimate for one period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeriodEstimate {
    pub period: usize,
    pub center: Option<[f64; 3]>,
    pub tau: f64,
    /// Energy of the positive half-cycle, used as a gridding weight.
    pub weight: f64,
    pub mirror_mse: f64,
}

/// Extends, corrects and estimates one pair.
pub fn estimate_pair(pair: &HalfCyclePair, c: &SrCorrection, cfg: &EstimatorConfig) -> Result<PeriodEstimate> {
    let ext = extend_replicate(pair, cfg.n_rep);
    let sp = spectra(&ext, &cfg.correction.select(c));
    let tau = estimate(&sp, cfg.method)?;
    Ok(PeriodEstimate {
        period: pair.period,
        center: pair.center,
        tau,
        weight: pair.pos.samples.iter().map(|v| v * v).sum(),
        mirror_mse: mirror_mse(pair),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sig(v: Vec<f64>) -> SampledSignal {
        SampledSignal {
            samples: v,
            rate: 2e6,
            t0: 0.0,
        }
    }

    /// Spectra of an ideal Debye pair: S_neg = -conj(H) R and S_pos = H R with R = 1/(1 + i 2 pi f tau).
    pub(crate) fn ideal_pair(tau: f64, n: usize) -> SpectrumPair {
        let df = 2857.142857142857;
        let mut s_pos = Vec::new();
        let mut s_neg = Vec::new();
        for k in 0..n {
            let f = signed_bin(k, n) * df;
            let h = Complex64::new((-(f / 4e4).powi(2)).exp(), 0.3 * f / 1e5);
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

    #[test]
    fn segment_counts() {
        let sc = ScannerConfig::default();
        let s = sig(vec![1.0; 2000]);
        assert_eq!(segment(&s, &sc).unwrap().len(), 10);
        let s = sig(vec![1.0; 2100]);
        let p = segment(&s, &sc).unwrap();
        assert_eq!(p.len(), 10);
        assert_eq!(p[3].period, 3);
        assert_eq!(p[3].pos.len(), 100);
        assert!(segment(&sig(vec![0.0; 150]), &sc).is_err());
    }

    #[test]
    fn segment_skips_to_period_boundary() {
        let sc = ScannerConfig::default();
        let mut s = sig((0..500).map(|i| i as f64).collect());
        s.t0 = 2.5e-5;
        let p = segment(&s, &sc).unwrap();
        assert_eq!(p[0].period, 1);
        assert_eq!(p[0].neg.samples[0], 150.0);
    }

    #[test]
    fn correction_values() {
        let sc = ScannerConfig::default();
        let c = sr_correction_params(&sc, 0.0).unwrap();
        assert_eq!((c.dt, c.alpha), (0.0, 1.0));
        let c = sr_correction_params(&sc, 20.0).unwrap();
        assert!((c.dt + 1.0397e-6).abs() < 1e-10, "{}", c.dt);
        assert!((c.alpha - 1.0412).abs() < 1e-3);
        assert!(sr_residual(&sc, &c).abs() < 1e-15);
        let taylor = -20.0 / 2e4 / (sc.drive_slew() + 20.0);
        assert!((taylor + 1.039e-6).abs() < 1e-9);
        // a negative slew moves the root into (0, T/4); the equation is not odd in R
        let m = sr_correction_params(&sc, -20.0).unwrap();
        assert!(m.dt > 0.0 && m.dt < 0.25e-4);
        assert!(sr_residual(&sc, &m).abs() < 1e-15);
        assert!(matches!(
            sr_correction_params(&sc, 1000.0),
            Err(Error::Dominance { .. })
        ));
    }

    #[test]
    fn extension_layout() {
        let pair = HalfCyclePair {
            neg: sig(vec![1.0, 2.0, 3.0]),
            pos: sig(vec![4.0, 5.0, 6.0]),
            period: 0,
            center: None,
        };
        assert_eq!(extend_replicate(&pair, 0), pair);
        let e = extend_replicate(&pair, 2);
        assert_eq!(e.neg.samples, vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(e.pos.samples, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0, 5.0, 6.0]);
        let sp = spectra(
            &extend_replicate(
                &HalfCyclePair {
                    neg: sig(vec![0.0; 100]),
                    pos: sig(vec![0.0; 100]),
                    ..pair
                },
                6,
            ),
            &SrCorrection::identity(),
        );
        assert_relative_eq!(sp.bin_width, 2857.142857, epsilon = 1e-5);
    }

    #[test]
    fn extension_keeps_mirror_relation() {
        let n = 40;
        let pos: Vec<f64> = (0..n)
            .map(|i| (PI * i as f64 / n as f64).sin().powi(3) + 0.1 * i as f64 / n as f64)
            .collect();
        let neg: Vec<f64> = (0..n).map(|i| -pos[(n - i) % n]).collect();
        let pair = HalfCyclePair {
            neg: sig(neg),
            pos: sig(pos),
            period: 0,
            center: None,
        };
        let e = extend_replicate(&pair, 6);
        assert_eq!(mirror_mse(&pair), 0.0);
        let m = e.pos.len();
        for i in 0..m {
            let want = if i == 0 || i >= m - n {
                -e.neg.samples[(m - i) % m]
            } else {
                0.0
            };
            if i == m - n {
                // the first positive sample faces the zero fill; both vanish for a turning point
                continue;
            }
            assert_eq!(e.pos.samples[i], want, "{i}");
        }
    }

    #[test]
    fn shift_theorem() {
        let n = 64;
        let m: Vec<f64> = (0..n).map(|i| (-((i as f64 - 20.0) / 4.0).powi(2)).exp()).collect();
        let rate = 2e6;
        let d = 3.0 / rate;
        let neg: Vec<f64> = (0..n).map(|i| m[(i + n - 3) % n]).collect();
        let pair = HalfCyclePair {
            neg: SampledSignal {
                samples: neg,
                rate,
                t0: 0.0,
            },
            pos: SampledSignal {
                samples: m.clone(),
                rate,
                t0: 0.0,
            },
            period: 0,
            center: None,
        };
        let c = SrCorrection {
            dt: d,
            alpha: 1.0,
            t0: 0.0,
            slew: 1.0,
        };
        let sp = spectra(&pair, &c);
        let want = fft_real(&m, n);
        for (k, (got, w)) in sp.s_neg.iter().zip(&want).enumerate() {
            if k == n / 2 {
                continue;
            }
            assert!((got - w).norm() < 1e-10);
        }
        let id = spectra(&pair, &SrCorrection::identity());
        assert_eq!(id.s_pos, sp.s_pos);
    }

    #[test]
    fn ideal_debye_pair() {
        let sp = ideal_pair(3e-6, 350);
        let prof = tau_profile(&sp);
        for t in prof.iter().skip(1) {
            assert!((t.re / 3e-6 - 1.0).abs() < 1e-9 && t.im.abs() < 1e-9 * 3e-6);
        }
        let a = estimate_taurus(&sp).unwrap();
        let b = estimate_wls(&sp).unwrap();
        assert!((a - 3e-6).abs() < 1e-9 && (b - 3e-6).abs() < 1e-12);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn adiabatic_profile_vanishes() {
        let sp = ideal_pair(0.0, 100);
        assert!(tau_profile(&sp).iter().skip(1).all(|t| t.norm() < 1e-15));
    }

    #[test]
    fn identity_weights_give_plain_least_squares() {
        let mut sp = ideal_pair(2e-6, 120);
        for (k, s) in sp.s_neg.iter_mut().enumerate() {
            *s += Complex64::new(1e-3 * (k as f64).sin(), 2e-3 * (k as f64 * 0.7).cos());
        }
        let p = WlsProblem::new(&sp);
        let ones = vec![1.0; p.a.len()];
        let got = p.solve_weighted(&ones).unwrap();
        let num: Complex64 = p.a.iter().zip(&p.b).map(|(a, b)| a.conj() * b).sum();
        let den: f64 = p.a.iter().map(|a| a.norm_sqr()).sum();
        assert_eq!(got, (num / den).re);
    }

    #[test]
    fn empty_spectra_fail() {
        let sp = SpectrumPair {
            s_pos: vec![Complex64::new(0.0, 0.0); 8],
            s_neg: vec![Complex64::new(0.0, 0.0); 8],
            bin_width: 1.0,
            corrected: true,
        };
        assert!(estimate_taurus(&sp).is_err());
        assert!(estimate_wls(&sp).is_err());
    }

    #[test]
    fn mirror_mse_constant_offset() {
        let neg = vec![0.5, -1.0, 2.0, 0.25];
        let n = neg.len();
        let pos: Vec<f64> = (0..n).map(|i| -neg[(n - i) % n] + 0.3).collect();
        let pair = HalfCyclePair {
            neg: sig(neg),
            pos: sig(pos),
            period: 0,
            center: None,
        };
        assert_relative_eq!(mirror_mse(&pair), 0.09, max_relative = 1e-12);
    }

    #[test]
    fn deconvolve_identity_at_zero() {
        let s = sig(vec![1.0, 2.0, -3.0]);
        assert_eq!(deconvolve(&s, 0.0), s);
    }
}
