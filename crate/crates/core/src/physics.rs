//! Signal synthesis: Langevin magnetization, Debye relaxation, decimation, noise and the
//! feedthrough high-pass.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::preprocess::{zero_phase_filter, FilterSpec};
use crate::trajectory::{ffp_state_unchecked, ScannerConfig, TrajectorySpec};

pub const BOLTZMANN: f64 = 1.380649e-23;
/// Saturation magnetization of bulk magnetite, A/m.
pub const SATURATION_MAGNETIZATION: f64 = 446e3;
pub const DEFAULT_TEMPERATURE: f64 = 300.0;
/// Default spacing of the point grid used to render extended sources, m.
pub const DEFAULT_RENDER_STEP: f64 = 0.5e-3;

const SERIES_LIMIT: f64 = 0.2;
const SATURATED: f64 = 22.0;

/// L(xi) = coth(xi) - 1/xi.
pub fn langevin(xi: f64) -> f64 {
    let a = xi.abs();
    if a < SERIES_LIMIT {
        let x2 = xi * xi;
        xi * (1.0 / 3.0
            + x2 * (-1.0 / 45.0
                + x2 * (2.0 / 945.0
                    + x2 * (-1.0 / 4725.0
                        + x2 * (2.0 / 93555.0 + x2 * (-1382.0 / 638512875.0 + x2 * (4.0 / 18243225.0)))))))
    } else if a > SATURATED {
        xi.signum() * (1.0 - 1.0 / a)
    } else {
        1.0 / xi.tanh() - 1.0 / xi
    }
}

/// dL/dxi = 1/xi^2 - 1/sinh^2(xi).
pub fn langevin_derivative(xi: f64) -> f64 {
    let a = xi.abs();
    if a < SERIES_LIMIT {
        let x2 = xi * xi;
        1.0 / 3.0
            + x2 * (-1.0 / 15.0
                + x2 * (2.0 / 189.0
                    + x2 * (-1.0 / 675.0
                        + x2 * (2.0 / 10395.0 + x2 * (-15202.0 / 638512875.0 + x2 * (52.0 / 18243225.0))))))
    } else if a > SATURATED {
        1.0 / (a * a)
    } else {
        let s = xi.sinh();
        1.0 / (xi * xi) - 1.0 / (s * s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnpSpecies {
    pub name: String,
    /// Core diameter, m.
    pub diameter: f64,
    /// Debye relaxation time constant, s.
    pub tau: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

impl MnpSpecies {
    pub fn new(name: &str, diameter: f64, tau: f64) -> Self {
        MnpSpecies {
            name: name.to_string(),
            diameter,
            tau,
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.diameter > 0.0) || !(self.tau >= 0.0) || !(self.temperature > 0.0) {
            return Err(Error::Config(format!("invalid species {}", self.name)));
        }
        Ok(())
    }

    /// Magnetic moment, A m^2.
    pub fn moment(&self) -> f64 {
        SATURATION_MAGNETIZATION * PI * self.diameter.powi(3) / 6.0
    }

    /// Langevin argument per tesla, m / (kB T).
    pub fn beta(&self) -> f64 {
        self.moment() / (BOLTZMANN * self.temperature)
    }

    fn same_physics(&self, other: &MnpSpecies) -> bool {
        self.diameter == other.diameter && self.tau == other.tau && self.temperature == other.temperature
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    pub position: [f64; 3],
    /// Rectangular footprint (x, z) in m; zero for a point source.
    #[serde(default)]
    pub extent: [f64; 2],
    pub species: MnpSpecies,
    pub concentration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phantom {
    pub sources: Vec<Source>,
    /// Point-grid spacing used to render extended sources, m.
    #[serde(default = "default_render_step")]
    pub render_step: f64,
}

fn default_render_step() -> f64 {
    DEFAULT_RENDER_STEP
}

/// Rendered point with its concentration weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMass {
    pub position: [f64; 3],
    pub weight: f64,
}

impl Phantom {
    pub fn new(sources: Vec<Source>) -> Self {
        Phantom {
            sources,
            render_step: DEFAULT_RENDER_STEP,
        }
    }

    pub fn point(position: [f64; 3], species: MnpSpecies) -> Self {
        Self::new(vec![Source {
            position,
            extent: [0.0; 2],
            species,
            concentration: 1.0,
        }])
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::Config("phantom has no sources".into()));
        }
        if !(self.render_step > 0.0) {
            return Err(Error::Config("render step must be positive".into()));
        }
        for s in &self.sources {
            s.species.validate()?;
            if s.extent.iter().any(|e| !(*e >= 0.0)) || !s.concentration.is_finite() {
                return Err(Error::Config("source extents must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Cell-centered points of one source; weights sum to its concentration.
    pub fn render_source(&self, s: &Source) -> Vec<PointMass> {
        let n = s
            .extent
            .map(|e| ((e / self.render_step) - 1e-9).ceil().max(1.0) as usize);
        let w = s.concentration / (n[0] * n[1]) as f64;
        let mut out = Vec::with_capacity(n[0] * n[1]);
        for i in 0..n[0] {
            for j in 0..n[1] {
                let dx = s.extent[0] * ((i as f64 + 0.5) / n[0] as f64 - 0.5);
                let dz = s.extent[1] * ((j as f64 + 0.5) / n[1] as f64 - 0.5);
                out.push(PointMass {
                    position: [s.position[0] + dx, s.position[1], s.position[2] + dz],
                    weight: w,
                });
            }
        }
        out
    }

    /// Sources grouped by species physics, each group rendered to points.
    pub fn species_groups(&self) -> Vec<(MnpSpecies, Vec<PointMass>)> {
        let mut groups: Vec<(MnpSpecies, Vec<PointMass>)> = Vec::new();
        for s in &self.sources {
            let pts = self.render_source(s);
            match groups.iter_mut().find(|(sp, _)| sp.same_physics(&s.species)) {
                Some(g) => g.1.extend(pts),
                None => groups.push((s.species.clone(), pts)),
            }
        }
        groups
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    pub samples: Vec<f64>,
    /// Sampling rate, samples/s.
    pub rate: f64,
    /// Time of the first sample, s.
    pub t0: f64,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, rate: f64, t0: f64) -> Result<Self> {
        if !(rate > 0.0) || !t0.is_finite() {
            return Err(Error::Config("sampling rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite sample at index {i}")));
        }
        Ok(SampledSignal { samples, rate, t0 })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        SampledSignal {
            samples: self.samples.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        SampledSignal {
            samples,
            rate: self.rate,
            t0: self.t0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr: f64,
    pub seed: u64,
}

/// Simulation interval [start, start + duration).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub start: f64,
    pub duration: f64,
}

impl Window {
    pub fn periods(scanner: &ScannerConfig, first: usize, count: usize) -> Self {
        Window {
            start: first as f64 * scanner.period(),
            duration: count as f64 * scanner.period(),
        }
    }

    /// Whole trajectory.
    pub fn full(spec: &TrajectorySpec) -> Self {
        Window {
            start: 0.0,
            duration: spec.scan_time,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub received: SampledSignal,
    pub noisefree_peak: f64,
}

/// dMz/dt of a unit point for applied field `b` changing at `db`.
#[inline]
fn magnetization_rate(b: [f64; 3], db: [f64; 3], beta: f64) -> f64 {
    let u2 = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
    let u = u2.sqrt();
    let x = beta * u;
    // Mz = g(u) Bz with g(u) = L(beta u)/u
    let (g, gp) = if x < 1e-4 {
        let b3 = beta * beta * beta;
        (beta / 3.0 - b3 * u2 / 45.0, -2.0 * b3 * u / 45.0)
    } else {
        let l = langevin(x);
        (l / u, (beta * langevin_derivative(x) * u - l) / u2)
    };
    let dudt = if u > 0.0 {
        (b[0] * db[0] + b[1] * db[1] + b[2] * db[2]) / u
    } else {
        0.0
    };
    g * db[2] + b[2] * gp * dudt
}

fn adiabatic_points(
    scanner: &ScannerConfig,
    spec: &TrajectorySpec,
    points: &[PointMass],
    beta: f64,
    start: f64,
    n: usize,
    rate: f64,
) -> Vec<f64> {
    let g = scanner.gradients;
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let t = start + i as f64 / rate;
        let (x, v) = ffp_state_unchecked(scanner, spec, t.min(spec.scan_time));
        let db = [-g[0] * v[0], -g[1] * v[1], -g[2] * v[2]];
        let mut acc = 0.0;
        for p in points {
            let b = [
                g[0] * (p.position[0] - x[0]),
                g[1] * (p.position[1] - x[1]),
                g[2] * (p.position[2] - x[2]),
            ];
            acc += p.weight * magnetization_rate(b, db, beta);
        }
        *o = acc;
    }
    out
}

fn window_samples(scanner: &ScannerConfig, spec: &TrajectorySpec, w: &Window) -> Result<usize> {
    let n = (w.duration * scanner.sample_rate).round() as usize * scanner.decimation();
    let eps = 1e-9 * scanner.period();
    if w.start < -eps || n == 0 || w.start + (n - 1) as f64 / scanner.oversample_rate > spec.scan_time + eps {
        return Err(Error::Domain {
            t: w.start + w.duration,
            end: spec.scan_time,
        });
    }
    Ok(n)
}

/// Noise-free adiabatic z-channel signal at fs_hi.
pub fn simulate_adiabatic(
    scanner: &ScannerConfig,
    spec: &TrajectorySpec,
    phantom: &Phantom,
    window: &Window,
) -> Result<SampledSignal> {
    scanner.validate()?;
    phantom.validate()?;
    let n = window_samples(scanner, spec, window)?;
    let mut out = vec![0.0; n];
    for (species, points) in phantom.species_groups() {
        let s = adiabatic_points(
            scanner,
            spec,
            &points,
            species.beta(),
            window.start,
            n,
            scanner.oversample_rate,
        );
        out.iter_mut().zip(s).for_each(|(o, v)| *o += v);
    }
    Ok(SampledSignal {
        samples: out,
        rate: scanner.oversample_rate,
        t0: window.start,
    })
}

/// Samples of (1/tau) exp(-t/tau) u(t) normalized to unit sum; a unit impulse for tau = 0.
pub fn relaxation_kernel(tau: f64, rate: f64, length: usize) -> SampledSignal {
    let length = length.max(1);
    let mut k = vec![0.0; length];
    let a = decay(tau, rate);
    if a == 0.0 {
        k[0] = 1.0;
    } else {
        let mut v = 1.0;
        for x in k.iter_mut() {
            *x = v;
            v *= a;
        }
        let s: f64 = k.iter().sum();
        k.iter_mut().for_each(|x| *x /= s);
    }
    SampledSignal {
        samples: k,
        rate,
        t0: 0.0,
    }
}

/// Per-sample decay factor exp(-1/(tau rate)).
pub(crate) fn decay(tau: f64, rate: f64) -> f64 {
    if tau <= 0.0 {
        0.0
    } else {
        (-1.0 / (tau * rate)).exp()
    }
}

/// Causal convolution with `relaxation_kernel(tau, rate, len)`, truncated to the input length.
pub fn apply_relaxation(signal: &SampledSignal, tau: f64) -> SampledSignal {
    let a = decay(tau, signal.rate);
    if a == 0.0 {
        return signal.clone();
    }
    let n = signal.len();
    // the truncated kernel sums (1 - a^n)/(1 - a); fold its normalization into the recursion gain
    let gain = (1.0 - a) / (1.0 - a.powi(n as i32));
    let mut y = 0.0;
    let out = signal
        .samples
        .iter()
        .map(|&x| {
            y = a * y + x;
            gain * y
        })
        .collect();
    signal.with_samples(out)
}

/// Steady-state relaxation of one period of a periodic signal.
pub(crate) fn relax_periodic(x: &[f64], tau: f64, rate: f64) -> Vec<f64> {
    let a = decay(tau, rate);
    if a == 0.0 {
        return x.to_vec();
    }
    let mut y = 0.0;
    for &v in x {
        y = a * y + (1.0 - a) * v;
    }
    // one more pass starts from the state left by the previous period; a^n is far below eps
    let mut settle = 0;
    let mut out = vec![0.0; x.len()];
    loop {
        for (o, &v) in out.iter_mut().zip(x) {
            y = a * y + (1.0 - a) * v;
            *o = y;
        }
        settle += 1;
        if a.powi((settle * x.len()) as i32) < 1e-18 || settle > 64 {
            break;
        }
    }
    out
}

pub(crate) fn antialias_kernel(scanner: &ScannerConfig) -> Vec<f64> {
    let fs = scanner.sample_rate;
    dsp::lowpass_kernel(0.45 * fs, 0.1 * fs, 80.0, scanner.oversample_rate)
}

/// Relaxed, anti-aliased and decimated noise-free signal at fs (before the high-pass).
pub fn simulate_decimated(
    scanner: &ScannerConfig,
    spec: &TrajectorySpec,
    phantom: &Phantom,
    window: &Window,
) -> Result<SampledSignal> {
    scanner.validate()?;
    phantom.validate()?;
    let n = window_samples(scanner, spec, window)?;
    let rate = scanner.oversample_rate;
    let mut acc = vec![0.0; n];
    for (species, points) in phantom.species_groups() {
        let s = adiabatic_points(scanner, spec, &points, species.beta(), window.start, n, rate);
        let r = apply_relaxation(
            &SampledSignal {
                samples: s,
                rate,
                t0: window.start,
            },
            species.tau,
        );
        acc.iter_mut().zip(r.samples).for_each(|(o, v)| *o += v);
    }
    let d = scanner.decimation();
    let samples = if d == 1 {
        acc
    } else {
        dsp::zero_phase_decimate(&acc, &antialias_kernel(scanner), d)
    };
    Ok(SampledSignal {
        samples,
        rate: scanner.sample_rate,
        t0: window.start,
    })
}

/// Noise injection (std = peak/SNR) followed by the feedthrough high-pass.
pub fn finish(scanner: &ScannerConfig, decimated: &SampledSignal, noise: Option<&NoiseSpec>) -> Result<Synthesis> {
    let peak = decimated.peak();
    let mut samples = decimated.samples.clone();
    if let Some(ns) = noise {
        if !(ns.snr > 0.0) {
            return Err(Error::Config("SNR must be positive".into()));
        }
        add_noise(&mut samples, peak / ns.snr, ns.seed);
    }
    let received = zero_phase_filter(&decimated.with_samples(samples), &FilterSpec::feedthrough(scanner))?;
    Ok(Synthesis {
        received,
        noisefree_peak: peak,
    })
}

pub fn add_noise(samples: &mut [f64], std: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in samples.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += std * z;
    }
}

/// Full synthesis chain on `window`, returning the received signal at fs.
pub fn synthesize(
    scanner: &ScannerConfig,
    spec: &TrajectorySpec,
    phantom: &Phantom,
    noise: Option<&NoiseSpec>,
    window: &Window,
) -> Result<Synthesis> {
    let dec = simulate_decimated(scanner, spec, phantom, window)?;
    finish(scanner, &dec, noise)
}

/// Noise-free steady-state signal of drive period `period` with the focus field frozen at its
/// midpoint value, processed circularly (relaxation, decimation and high-pass) so that the
/// result equals any period of an infinitely long constant-field acquisition.
pub fn steady_state_period(
    scanner: &ScannerConfig,
    spec: &TrajectorySpec,
    phantom: &Phantom,
    period: usize,
) -> Result<SampledSignal> {
    scanner.validate()?;
    phantom.validate()?;
    let t_start = period as f64 * scanner.period();
    let tm = t_start + 0.5 * scanner.period();
    let (center, _) = spec.focus_state(scanner, tm);
    let g = scanner.gradients;
    let frozen = TrajectorySpec::ramp(scanner, [0, 1, 2].map(|i| g[i] * center[i]), [0.0; 3], f64::MAX);
    let rate = scanner.oversample_rate;
    let n = 2 * scanner.half_period_samples(rate);
    let mut acc = vec![0.0; n];
    for (species, points) in phantom.species_groups() {
        let s = adiabatic_points(scanner, &frozen, &points, species.beta(), 0.0, n, rate);
        let r = relax_periodic(&s, species.tau, rate);
        acc.iter_mut().zip(r).for_each(|(o, v)| *o += v);
    }
    let d = scanner.decimation();
    let dec = if d == 1 {
        acc
    } else {
        dsp::circular_filter(&acc, &antialias_kernel(scanner), d)
    };
    let hp = FilterSpec::feedthrough(scanner).kernel(scanner.sample_rate)?;
    let samples = dsp::circular_filter(&dec, &hp, 1);
    Ok(SampledSignal {
        samples,
        rate: scanner.sample_rate,
        t0: t_start,
    })
}
