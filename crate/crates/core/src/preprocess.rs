//! Conditioning of long or recorded acquisitions: zero-phase FIR filtering, baseline
//! alignment and subtraction, and sub-sample timing calibration.

use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::estimator::{self, EstimatorConfig, HalfCyclePair};
use crate::physics::SampledSignal;
use crate::trajectory::ScannerConfig;

/// Rate of the sub-sample grid used for delay and timing searches.
pub const FINE_RATE: f64 = 100e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Lowpass,
    Highpass,
}

/// Kaiser-windowed FIR specification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub band: Band,
    pub cutoff: f64,
    /// Full transition width centered on the cutoff, Hz.
    pub transition: f64,
    pub attenuation_db: f64,
}

impl FilterSpec {
    /// Feedthrough high-pass: cutoff 1.5 fd with the stopband edge at fd and passband from 2 fd.
    pub fn feedthrough(scanner: &ScannerConfig) -> Self {
        let fd = scanner.drive_frequency;
        FilterSpec {
            band: Band::Highpass,
            cutoff: 1.5 * fd,
            transition: fd,
            attenuation_db: 65.0,
        }
    }

    /// 120 kHz low-pass for recorded data.
    pub fn lowpass_120k() -> Self {
        FilterSpec {
            band: Band::Lowpass,
            cutoff: 120e3,
            transition: 40e3,
            attenuation_db: 60.0,
        }
    }

    pub fn lowpass(cutoff: f64) -> Self {
        FilterSpec {
            band: Band::Lowpass,
            cutoff,
            transition: cutoff / 3.0,
            attenuation_db: 60.0,
        }
    }

    pub fn highpass(cutoff: f64) -> Self {
        FilterSpec {
            band: Band::Highpass,
            cutoff,
            transition: cutoff * 2.0 / 3.0,
            attenuation_db: 60.0,
        }
    }

    pub fn kernel(&self, rate: f64) -> Result<Vec<f64>> {
        let nyquist = 0.5 * rate;
        if !(self.cutoff > 0.0) || self.cutoff >= nyquist || self.cutoff + 0.5 * self.transition > nyquist {
            return Err(Error::Cutoff {
                cutoff: self.cutoff,
                nyquist,
            });
        }
        if !(self.transition > 0.0) || self.transition > 2.0 * self.cutoff {
            return Err(Error::Config(format!(
                "transition width {} Hz is invalid",
                self.transition
            )));
        }
        Ok(match self.band {
            Band::Lowpass => dsp::lowpass_kernel(self.cutoff, self.transition, self.attenuation_db, rate),
            Band::Highpass => dsp::highpass_kernel(self.cutoff, self.transition, self.attenuation_db, rate),
        })
    }
}

/// Symmetric-kernel FIR filtering with reflect padding at both ends.
pub fn zero_phase_filter(signal: &SampledSignal, spec: &FilterSpec) -> Result<SampledSignal> {
    let h = spec.kernel(signal.rate)?;
    Ok(signal.with_samples(dsp::zero_phase_conv(&signal.samples, &h)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignedSignal {
    pub signal: SampledSignal,
    /// Delay of the baseline relative to the received signal, s.
    pub delay: f64,
    /// Set when a second correlation peak lies within 1% of the maximum.
    pub ambiguous: bool,
}

fn cross_correlation(a: &[f64], b: &[f64]) -> Vec<f64> {
    // c[l] = sum_n a[n + l] b[n] for l in -(nb-1)..na, stored from index 0 = lag -(nb-1)
    let n = (a.len() + b.len() - 1).next_power_of_two();
    let fa = dsp::fft_real(a, n);
    let rb: Vec<f64> = b.iter().rev().cloned().collect();
    let fb = dsp::fft_real(&rb, n);
    let full = dsp::ifft_real(fa.iter().zip(&fb).map(|(x, y)| x * y).collect());
    full[..a.len() + b.len() - 1].to_vec()
}

/// Kaiser-windowed sinc interpolation of a sequence at fractional index `x`.
fn sinc_interp(c: &[f64], x: f64, half: isize) -> f64 {
    let beta = 8.0;
    let i0b = dsp::bessel_i0(beta);
    let base = x.floor() as isize;
    let mut acc = 0.0;
    for j in base - half + 1..=base + half {
        if j < 0 || j as usize >= c.len() {
            continue;
        }
        let d = x - j as f64;
        let r = d / half as f64;
        if r.abs() >= 1.0 {
            continue;
        }
        let s = if d == 0.0 {
            1.0
        } else {
            (std::f64::consts::PI * d).sin() / (std::f64::consts::PI * d)
        };
        acc += c[j as usize] * s * dsp::bessel_i0(beta * (1.0 - r * r).sqrt()) / i0b;
    }
    acc
}

/// Delays the baseline onto the received signal at 100 MS/s resolution and subtracts it.
///
/// The cross-correlation of the band-limited signals is evaluated on the fine grid by
/// interpolating the fs-rate correlation, which equals correlating the upsampled signals.
pub fn align_baseline(received: &SampledSignal, baseline: &SampledSignal) -> Result<AlignedSignal> {
    if received.rate != baseline.rate {
        return Err(Error::Config("received and baseline rates differ".into()));
    }
    if received.is_empty() || baseline.is_empty() {
        return Err(Error::TooShort("empty signal".into()));
    }
    let c = cross_correlation(&received.samples, &baseline.samples);
    let zero = baseline.len() as isize - 1;
    let (imax, cmax) = c
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |m, (i, v)| if *v > m.1 { (i, *v) } else { m });
    let up = (FINE_RATE / received.rate).round().max(1.0) as usize;
    let mut best = (imax as f64, cmax);
    for s in -(up as isize)..=(up as isize) {
        let x = imax as f64 + s as f64 / up as f64;
        let v = sinc_interp(&c, x, 32);
        if v > best.1 {
            best = (x, v);
        }
    }
    let lag = best.0 - zero as f64;
    // a separate local maximum within 1% of the peak makes the delay ambiguous
    let ambiguous = cmax > 0.0
        && c.iter().enumerate().any(|(i, v)| {
            (i as isize - imax as isize).abs() > 1
                && *v >= 0.99 * cmax
                && i > 0
                && i + 1 < c.len()
                && *v >= c[i - 1]
                && *v >= c[i + 1]
        });
    let shifted = dsp::fractional_shift(&baseline.samples, -lag);
    let n = received.len();
    let residual = (0..n)
        .map(|i| received.samples[i] - shifted.get(i).copied().unwrap_or(0.0))
        .collect();
    Ok(AlignedSignal {
        signal: received.with_samples(residual),
        delay: -lag / received.rate,
        ambiguous,
    })
}

/// Periods of a single-species marker used for timing calibration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerWindow {
    pub first_period: usize,
    pub periods: usize,
    /// Focus-field slew during the window, T/s.
    #[serde(default)]
    pub slew_z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingCalibration {
    /// The acquisition lags the drive by this offset, s; advance it to calibrate.
    pub offset: f64,
    pub search_range: f64,
    pub curve: Vec<(f64, f64)>,
}

/// Advances a signal by `offset` seconds with band-limited interpolation.
pub fn apply_timing(signal: &SampledSignal, offset: f64) -> SampledSignal {
    signal.with_samples(dsp::fractional_shift(&signal.samples, offset * signal.rate))
}

/// Mirror-symmetry search over candidate offsets on the 100 MS/s grid within +-`search_range`.
pub fn fine_tune_timing(
    signal: &SampledSignal,
    scanner: &ScannerConfig,
    marker: &MarkerWindow,
    search_range: f64,
    cfg: &EstimatorConfig,
) -> Result<TimingCalibration> {
    let period_len = 2 * scanner.half_period_samples(signal.rate);
    let pairs = estimator::segment(signal, scanner)?;
    let first = pairs[0].period;
    if marker.periods == 0 || marker.first_period < first || marker.first_period + marker.periods > first + pairs.len()
    {
        return Err(Error::Config("marker window lies outside the signal".into()));
    }
    // one guard period on each side absorbs the candidate shifts and interpolation edges
    let lo = marker.first_period.saturating_sub(1).max(first);
    let hi = (marker.first_period + marker.periods + 1).min(first + pairs.len());
    let start = (lo - first) * period_len;
    let offset_samples = ((first as f64 / scanner.drive_frequency - signal.t0) * signal.rate).round() as usize;
    let slice = &signal.samples[offset_samples + start..offset_samples + (hi - first) * period_len];
    let factor = (FINE_RATE / signal.rate).round().max(1.0) as usize;
    let fine_rate = signal.rate * factor as f64;
    let fine = dsp::upsample(slice, factor);
    let half = scanner.half_period_samples(fine_rate);
    let marker_start = (marker.first_period - lo) * 2 * half;
    let correction = estimator::sr_correction_params(scanner, marker.slew_z)?;
    let steps = (search_range * fine_rate).round() as isize;
    let mut curve = Vec::with_capacity((2 * steps + 1) as usize);
    for c in -steps..=steps {
        let mut mse = 0.0;
        for p in 0..marker.periods {
            let o = marker_start as isize + (p * 2 * half) as isize + c;
            if o < 0 || o as usize + 2 * half > fine.len() {
                return Err(Error::Config("timing search range exceeds the guard periods".into()));
            }
            let o = o as usize;
            let seg = SampledSignal {
                samples: fine[o..o + 2 * half].to_vec(),
                rate: fine_rate,
                t0: 0.0,
            };
            let pair = HalfCyclePair {
                neg: seg.with_samples(seg.samples[..half].to_vec()),
                pos: seg.with_samples(seg.samples[half..].to_vec()),
                period: p,
                center: None,
            };
            let tau = estimator::estimate_pair(&pair, &correction, cfg)?.tau.max(0.0);
            // deconvolve with the preceding context so the recursion starts in steady state
            let ctx = o.min(2 * half);
            let wide = SampledSignal {
                samples: fine[o - ctx..o + 2 * half].to_vec(),
                rate: fine_rate,
                t0: 0.0,
            };
            let d = estimator::deconvolve(&wide, tau);
            // a slewed marker is only mirror symmetric after the negative half is corrected
            let neg = if correction.dt == 0.0 && correction.alpha == 1.0 {
                d.samples[ctx..ctx + half].to_vec()
            } else {
                let shifted = dsp::fractional_shift(&d.samples[..ctx + half], correction.dt * fine_rate);
                shifted[ctx..].iter().map(|v| correction.alpha * v).collect()
            };
            let dp = HalfCyclePair {
                neg: seg.with_samples(neg),
                pos: seg.with_samples(d.samples[ctx + half..].to_vec()),
                period: p,
                center: None,
            };
            mse += estimator::mirror_mse(&dp);
        }
        curve.push((c as f64 / fine_rate, mse / marker.periods as f64));
    }
    let (ibest, &(tbest, mbest)) = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .ok_or_else(|| Error::Config("empty timing search".into()))?;
    let ties: Vec<f64> = curve
        .iter()
        .enumerate()
        .filter(|(i, (_, m))| {
            (*i as isize - ibest as isize).abs() > 1 && (*m - mbest).abs() <= 1e-12 * mbest.max(f64::MIN_POSITIVE)
        })
        .map(|(_, (t, _))| *t)
        .collect();
    if !ties.is_empty() {
        let mut all = vec![tbest];
        all.extend(ties);
        return Err(Error::AmbiguousTiming(all));
    }
    Ok(TimingCalibration {
        offset: tbest,
        search_range,
        curve,
    })
}
