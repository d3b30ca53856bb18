//! Config-driven experiments: slew-rate sweeps, Monte Carlo noise studies, N_rep studies,
//! color-phantom runs and estimation from recorded signal files.
//!
//! Every repetition draws its noise from `derive_seed(base_seed, cell indices, repetition)`, so
//! results do not depend on scheduling and parallel runs match serial ones bit for bit.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::{
    estimate_pair, segment, sr_correction_params, CorrectionMode, EstimatorConfig, HalfCyclePair, Method,
    PeriodEstimate, SrCorrection,
};
use crate::mapping::{
    self, estimates_to_map, hue, image_kernel_sigma, mask_map, overlay, Colormap, GridSpec, ImageAccumulator,
    ImageGrid, KernelScale, Overlay, TauEstimate, TauMap,
};
use crate::physics::{
    finish, simulate_decimated, steady_state_period, synthesize, MnpSpecies, NoiseSpec, Phantom, SampledSignal, Source,
    Window,
};
use crate::preprocess::{align_baseline, apply_timing, fine_tune_timing, zero_phase_filter, FilterSpec, MarkerWindow};
use crate::trajectory::{
    build_trajectory, pfov_center, ScannerConfig, TrajectoryKind, TrajectoryParams, TrajectorySpec,
};

pub const SIGNAL_MAGIC: [u8; 4] = *b"MPIS";
pub const SIGNAL_VERSION: u32 = 1;
pub const SIGNAL_HEADER_LEN: u64 = 24;

// ---------------------------------------------------------------------------------------------
// configuration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scanner: ScannerConfig,
    pub trajectory: TrajectoryBlock,
    pub source: PointSourceConfig,
    pub estimator: EstimatorConfig,
    pub noise: NoiseConfig,
    pub sweep: SweepConfig,
    pub nrep: NrepConfig,
    pub phantom: PhantomConfig,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scanner: ScannerConfig::default(),
            trajectory: TrajectoryBlock::default(),
            source: PointSourceConfig::default(),
            estimator: EstimatorConfig::default(),
            noise: NoiseConfig::default(),
            sweep: SweepConfig::default(),
            nrep: NrepConfig::default(),
            phantom: PhantomConfig::default(),
            output: PathBuf::from("out"),
        }
    }
}

/// Trajectory used by `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryBlock {
    pub kind: TrajectoryKind,
    pub params: TrajectoryParams,
}

impl Default for TrajectoryBlock {
    fn default() -> Self {
        TrajectoryBlock {
            kind: TrajectoryKind::Llt,
            params: llt_params(),
        }
    }
}

/// Point source used by the slew-rate, noise and N_rep studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointSourceConfig {
    pub tau: f64,
    pub diameter: f64,
    pub position: [f64; 3],
    /// Simulated drive periods per case; the source passes the middle one.
    pub periods: usize,
}

impl Default for PointSourceConfig {
    fn default() -> Self {
        PointSourceConfig {
            tau: 3e-6,
            diameter: 25e-9,
            position: [0.0; 3],
            periods: 21,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub snr: Vec<f64>,
    pub slew_z: Vec<f64>,
    /// Repetitions for SNR at or below `low_snr_max`.
    pub reps_low: usize,
    pub reps_high: usize,
    pub low_snr_max: f64,
    pub full_reps_low: usize,
    pub full_reps_high: usize,
    pub base_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            snr: vec![1.0, 2.0, 5.0, 10.0, 20.0],
            slew_z: vec![20.0],
            reps_low: 500,
            reps_high: 200,
            low_snr_max: 5.0,
            full_reps_low: 10_000,
            full_reps_high: 1_000,
            base_seed: 0x5eed,
        }
    }
}

impl NoiseConfig {
    pub fn reps_for(&self, snr: f64) -> usize {
        if snr <= self.low_snr_max {
            self.reps_low
        } else {
            self.reps_high
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub slew_z: Vec<f64>,
    pub slew_x: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let axis: Vec<f64> = (0..=10).map(|i| 2.0 * i as f64).collect();
        SweepConfig {
            slew_z: axis.clone(),
            slew_x: axis,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NrepConfig {
    pub values: Vec<usize>,
    /// Noisy SNR levels; the noise-free curve is always included.
    pub snr: Vec<f64>,
    pub slew_z: f64,
}

impl Default for NrepConfig {
    fn default() -> Self {
        NrepConfig {
            values: (0..=10).collect(),
            snr: vec![10.0, 2.0],
            slew_z: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    /// Phantom file (TOML); the built-in six-patch color phantom when absent.
    pub path: Option<PathBuf>,
    pub kinds: Vec<TrajectoryKind>,
    pub pwt: TrajectoryParams,
    pub llt: TrajectoryParams,
    pub triangle: TrajectoryParams,
    pub pixel: f64,
    pub mask_threshold: f64,
    /// Extra reach beyond pFOV and patch edges when selecting periods to simulate, m.
    pub margin: f64,
    /// Periods simulated on each side of an active run to absorb filter edges.
    pub guard_periods: usize,
    pub snr: Option<f64>,
    pub render_step: Option<f64>,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            path: None,
            kinds: vec![
                TrajectoryKind::Pwt,
                TrajectoryKind::Llt,
                TrajectoryKind::TriangleRaster2D,
            ],
            pwt: TrajectoryParams {
                points_x: 50,
                points_z: 50,
                ..TrajectoryParams::default()
            },
            llt: llt_params(),
            triangle: TrajectoryParams {
                slew_z: 0.01,
                slew_x: 1.0,
                ..TrajectoryParams::default()
            },
            pixel: 1e-4,
            mask_threshold: 0.10,
            margin: 2e-3,
            guard_periods: 5,
            snr: None,
            render_step: None,
        }
    }
}

fn llt_params() -> TrajectoryParams {
    TrajectoryParams {
        points_x: 100,
        slew_z: 2.0,
        ..TrajectoryParams::default()
    }
}

impl ExperimentConfig {
    /// Parses TOML; syntax and schema errors report the byte offset.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            offset: e.span().map(|s| s.start as u64).unwrap_or(0),
            msg: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Repetition counts and PWT raster of the full-size studies.
    pub fn full_scale(&mut self) {
        self.noise.reps_low = self.noise.full_reps_low;
        self.noise.reps_high = self.noise.full_reps_high;
        self.phantom.pwt.points_x = 100;
        self.phantom.pwt.points_z = 100;
    }

    pub fn validate(&self) -> Result<()> {
        self.scanner.validate()?;
        if self.noise.reps_low == 0 || self.noise.reps_high == 0 {
            return Err(Error::Config("repetition counts must be at least 1".into()));
        }
        if self.noise.snr.iter().any(|s| !(*s > 0.0)) || self.nrep.snr.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("SNR values must be positive".into()));
        }
        if self.source.periods < 3 {
            return Err(Error::Config("point-source cases need at least 3 periods".into()));
        }
        MnpSpecies::new("source", self.source.diameter, self.source.tau).validate()
    }

    pub fn point_species(&self) -> MnpSpecies {
        MnpSpecies::new("source", self.source.diameter, self.source.tau)
    }

    pub fn load_phantom(&self) -> Result<Phantom> {
        let mut ph = match &self.phantom.path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str::<Phantom>(&text).map_err(|e| Error::Parse {
                    offset: e.span().map(|s| s.start as u64).unwrap_or(0),
                    msg: e.message().to_string(),
                })?
            }
            None => color_phantom(),
        };
        if let Some(step) = self.phantom.render_step {
            ph.render_step = step;
        }
        ph.validate()?;
        Ok(ph)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Six 2 x 2 mm patches with tau from 2 to 4 us in two columns of three.
pub fn color_phantom() -> Phantom {
    let taus = [2.0e-6, 2.4e-6, 2.8e-6, 3.2e-6, 3.6e-6, 4.0e-6];
    let xs = [-12.5e-3, 12.5e-3];
    let zs = [-20e-3, 0.0, 20e-3];
    let mut sources = Vec::new();
    for (i, tau) in taus.iter().enumerate() {
        sources.push(Source {
            position: [xs[i / 3], 0.0, zs[i % 3]],
            extent: [2e-3, 2e-3],
            species: MnpSpecies::new(&format!("tau{:.1}us", tau * 1e6), 25e-9, *tau),
            concentration: 1.0,
        });
    }
    Phantom::new(sources)
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-repetition seed; a pure function of the base seed, cell indices and repetition.
pub fn derive_seed(base: u64, cell: &[u64], rep: u64) -> u64 {
    let mut h = mix(base);
    for c in cell {
        h = mix(h ^ mix(*c));
    }
    mix(h ^ mix(rep ^ 0xa5a5_a5a5))
}

// ---------------------------------------------------------------------------------------------
// point-source cases

/// A point source crossed by a linear ramp whose pFOV center meets it mid-window.
#[derive(Clone, Debug)]
pub struct PointCase {
    pub spec: TrajectorySpec,
    pub phantom: Phantom,
    pub window: Window,
    pub analyzed: usize,
    pub slew_z: f64,
}

impl PointCase {
    pub fn new(cfg: &ExperimentConfig, slew_z: f64, slew_x: f64) -> Self {
        let sc = &cfg.scanner;
        let g = sc.gradients;
        let periods = cfg.source.periods;
        let analyzed = periods / 2;
        let slew = [slew_x * g[0].signum(), 0.0, slew_z * g[2].signum()];
        PointCase {
            spec: TrajectorySpec::ramp_through(sc, cfg.source.position, slew, analyzed, periods),
            phantom: Phantom::point(cfg.source.position, cfg.point_species()),
            window: Window::periods(sc, 0, periods),
            analyzed,
            slew_z: slew[2],
        }
    }

    /// Noise-free decimated signal, before noise and the high-pass.
    pub fn decimated(&self, sc: &ScannerConfig) -> Result<SampledSignal> {
        simulate_decimated(sc, &self.spec, &self.phantom, &self.window)
    }

    pub fn pair(&self, sc: &ScannerConfig, received: &SampledSignal) -> Result<HalfCyclePair> {
        let pairs = segment(received, sc)?;
        pairs
            .into_iter()
            .find(|p| p.period == self.analyzed)
            .ok_or_else(|| Error::TooShort("analyzed period missing".into()))
    }

    pub fn correction(&self, sc: &ScannerConfig) -> Result<SrCorrection> {
        sr_correction_params(sc, self.slew_z)
    }
}

/// |tau_hat - tau| / tau in percent together with the signed value.
fn rel_err(tau_hat: f64, tau: f64) -> (f64, f64) {
    let e = 100.0 * (tau_hat - tau) / tau;
    (e.abs(), e)
}

// ---------------------------------------------------------------------------------------------
// results and CSV

/// One cell of a study: error statistics of one estimator variant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    #[serde(rename = "slew_z_T_per_s")]
    pub slew_z: f64,
    #[serde(rename = "slew_x_T_per_s")]
    pub slew_x: f64,
    /// Infinite for noise-free cells.
    pub snr: f64,
    pub n_rep: usize,
    pub method: String,
    pub correction: String,
    #[serde(rename = "mean_abs_err_pct")]
    pub mean_err: f64,
    #[serde(rename = "std_abs_err_pct")]
    pub std_err: f64,
    #[serde(rename = "mean_signed_err_pct")]
    pub bias: f64,
    #[serde(rename = "mean_tau_s")]
    pub mean_tau: f64,
    pub reps: usize,
    pub failures: usize,
    pub converged: bool,
    /// Dominance violated or the simulation failed.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub axes: Vec<Axis>,
    pub rows: Vec<ErrorRow>,
    pub wall_time: f64,
}

impl SweepResult {
    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn find(&self, pred: impl Fn(&ErrorRow) -> bool) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| pred(r))
    }
}

/// Writes rows after a comment line carrying the config hash; column names carry units.
pub fn write_csv<T: Serialize>(path: &Path, config_hash: &str, rows: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# config_sha256={config_hash} units=SI")?;
    {
        let mut w = csv::Writer::from_writer(&mut f);
        for r in rows {
            w.serialize(r).map_err(|e| Error::Config(format!("csv: {e}")))?;
        }
        w.flush()?;
    }
    f.flush()?;
    Ok(())
}

struct Stats {
    mean: f64,
    std: f64,
    bias: f64,
    mean_tau: f64,
    n: usize,
    failures: usize,
    converged: bool,
}

/// Aggregates per-repetition estimates in repetition order.
fn stats(taus: &[Option<f64>], truth: f64) -> Stats {
    let ok: Vec<f64> = taus.iter().flatten().cloned().filter(|t| t.is_finite()).collect();
    let failures = taus.len() - ok.len();
    let n = ok.len();
    if n == 0 {
        return Stats {
            mean: f64::NAN,
            std: f64::NAN,
            bias: f64::NAN,
            mean_tau: f64::NAN,
            n,
            failures,
            converged: false,
        };
    }
    let errs: Vec<(f64, f64)> = ok.iter().map(|t| rel_err(*t, truth)).collect();
    let mean = errs.iter().map(|e| e.0).sum::<f64>() / n as f64;
    let bias = errs.iter().map(|e| e.1).sum::<f64>() / n as f64;
    let std = if n > 1 {
        (errs.iter().map(|e| (e.0 - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    // running mean over the last tenth of the repetitions stays within 1% of the final mean
    let mut converged = true;
    let mut acc = 0.0;
    for (i, e) in errs.iter().enumerate() {
        acc += e.0;
        if i + 1 >= n - n / 10 && (acc / (i + 1) as f64 - mean).abs() > 0.01 * mean {
            converged = false;
        }
    }
    Stats {
        mean,
        std,
        bias,
        mean_tau: ok.iter().sum::<f64>() / n as f64,
        n,
        failures,
        converged,
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Taurus => "taurus",
        Method::Wls => "wls",
    }
}

const METHODS: [Method; 2] = [Method::Taurus, Method::Wls];
const MODES: [CorrectionMode; 4] = [
    CorrectionMode::None,
    CorrectionMode::AmplitudeOnly,
    CorrectionMode::ShiftOnly,
    CorrectionMode::Full,
];

// ---------------------------------------------------------------------------------------------
// studies

/// Noise-free slew-rate sweep over every correction variant and both estimators.
pub fn run_sr_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let start = Instant::now();
    let sc = &cfg.scanner;
    let cells: Vec<(f64, f64)> = cfg
        .sweep
        .slew_z
        .iter()
        .flat_map(|z| cfg.sweep.slew_x.iter().map(move |x| (*z, *x)))
        .collect();
    let per_cell: Vec<Vec<ErrorRow>> = cells
        .par_iter()
        .map(|&(rz, rx)| {
            let case = PointCase::new(cfg, rz, rx);
            let est = (|| -> Result<(HalfCyclePair, SrCorrection)> {
                let dec = case.decimated(sc)?;
                let syn = finish(sc, &dec, None)?;
                Ok((case.pair(sc, &syn.received)?, case.correction(sc)?))
            })();
            let mut rows = Vec::new();
            for mode in MODES {
                for method in METHODS {
                    let tau = est.as_ref().ok().and_then(|(pair, c)| {
                        let ec = EstimatorConfig {
                            method,
                            correction: mode,
                            ..cfg.estimator
                        };
                        estimate_pair(pair, c, &ec).ok().map(|e| e.tau)
                    });
                    let s = stats(&[tau], cfg.source.tau);
                    rows.push(ErrorRow {
                        slew_z: rz,
                        slew_x: rx,
                        snr: f64::INFINITY,
                        n_rep: cfg.estimator.n_rep,
                        method: method_name(method).into(),
                        correction: mode.name().into(),
                        mean_err: s.mean,
                        std_err: s.std,
                        bias: s.bias,
                        mean_tau: s.mean_tau,
                        reps: s.n,
                        failures: s.failures,
                        converged: s.converged,
                        flagged: est.is_err(),
                    });
                }
            }
            rows
        })
        .collect();
    Ok(SweepResult {
        axes: vec![
            Axis {
                name: "slew_z".into(),
                unit: "T/s".into(),
                values: cfg.sweep.slew_z.clone(),
            },
            Axis {
                name: "slew_x".into(),
                unit: "T/s".into(),
                values: cfg.sweep.slew_x.clone(),
            },
        ],
        rows: per_cell.into_iter().flatten().collect(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Estimates of one noisy repetition for each requested (n_rep, method) combination.
fn noisy_estimates(
    sc: &ScannerConfig,
    case: &PointCase,
    dec: &SampledSignal,
    noise: Option<NoiseSpec>,
    c: &SrCorrection,
    base: &EstimatorConfig,
    nreps: &[usize],
) -> Vec<Option<f64>> {
    let pair = finish(sc, dec, noise.as_ref()).and_then(|s| case.pair(sc, &s.received));
    let mut out = Vec::with_capacity(nreps.len() * METHODS.len());
    for &n_rep in nreps {
        for method in METHODS {
            let ec = EstimatorConfig { n_rep, method, ..*base };
            out.push(
                pair.as_ref()
                    .ok()
                    .and_then(|p| estimate_pair(p, c, &ec).ok().map(|e| e.tau)),
            );
        }
    }
    out
}

/// Monte Carlo study over SNR and slew rate for both estimators with the configured correction.
pub fn run_noise_mc(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let start = Instant::now();
    let sc = &cfg.scanner;
    let nreps = [cfg.estimator.n_rep];
    let mut rows = Vec::new();
    for (iz, &rz) in cfg.noise.slew_z.iter().enumerate() {
        let case = PointCase::new(cfg, rz, 0.0);
        let prepared = case.decimated(sc).and_then(|d| Ok((d, case.correction(sc)?)));
        let (dec, c) = match prepared {
            Ok(v) => v,
            Err(_) => {
                for method in METHODS {
                    for &snr in std::iter::once(&f64::INFINITY).chain(&cfg.noise.snr) {
                        rows.push(flagged_row(rz, snr, cfg, method));
                    }
                }
                continue;
            }
        };
        let levels: Vec<Option<f64>> = std::iter::once(None)
            .chain(cfg.noise.snr.iter().map(|s| Some(*s)))
            .collect();
        for (is, level) in levels.iter().enumerate() {
            let reps = level.map(|s| cfg.noise.reps_for(s)).unwrap_or(1);
            let per_rep: Vec<Vec<Option<f64>>> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let noise = level.map(|snr| NoiseSpec {
                        snr,
                        seed: derive_seed(cfg.noise.base_seed, &[iz as u64, is as u64], r as u64),
                    });
                    noisy_estimates(sc, &case, &dec, noise, &c, &cfg.estimator, &nreps)
                })
                .collect();
            for (im, method) in METHODS.iter().enumerate() {
                let taus: Vec<Option<f64>> = per_rep.iter().map(|v| v[im]).collect();
                let s = stats(&taus, cfg.source.tau);
                rows.push(ErrorRow {
                    slew_z: rz,
                    slew_x: 0.0,
                    snr: level.unwrap_or(f64::INFINITY),
                    n_rep: cfg.estimator.n_rep,
                    method: method_name(*method).into(),
                    correction: cfg.estimator.correction.name().into(),
                    mean_err: s.mean,
                    std_err: s.std,
                    bias: s.bias,
                    mean_tau: s.mean_tau,
                    reps: s.n,
                    failures: s.failures,
                    converged: s.converged,
                    flagged: false,
                });
            }
        }
    }
    let mut snr_axis = vec![f64::INFINITY];
    snr_axis.extend(&cfg.noise.snr);
    Ok(SweepResult {
        axes: vec![
            Axis {
                name: "snr".into(),
                unit: "1".into(),
                values: snr_axis,
            },
            Axis {
                name: "slew_z".into(),
                unit: "T/s".into(),
                values: cfg.noise.slew_z.clone(),
            },
        ],
        rows,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn flagged_row(rz: f64, snr: f64, cfg: &ExperimentConfig, method: Method) -> ErrorRow {
    ErrorRow {
        slew_z: rz,
        slew_x: 0.0,
        snr,
        n_rep: cfg.estimator.n_rep,
        method: method_name(method).into(),
        correction: cfg.estimator.correction.name().into(),
        mean_err: f64::NAN,
        std_err: f64::NAN,
        bias: f64::NAN,
        mean_tau: f64::NAN,
        reps: 0,
        failures: 0,
        converged: false,
        flagged: true,
    }
}

/// Error against N_rep for the noise-free case and each configured SNR. The same noise
/// realizations are reused for every N_rep so the curves differ only through the estimator.
pub fn run_nrep_study(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let start = Instant::now();
    let sc = &cfg.scanner;
    let rz = cfg.nrep.slew_z;
    let case = PointCase::new(cfg, rz, 0.0);
    let dec = case.decimated(sc)?;
    let c = case.correction(sc)?;
    let nreps = &cfg.nrep.values;
    let levels: Vec<Option<f64>> = std::iter::once(None)
        .chain(cfg.nrep.snr.iter().map(|s| Some(*s)))
        .collect();
    let mut rows = Vec::new();
    for (is, level) in levels.iter().enumerate() {
        let reps = level.map(|s| cfg.noise.reps_for(s)).unwrap_or(1);
        let per_rep: Vec<Vec<Option<f64>>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let noise = level.map(|snr| NoiseSpec {
                    snr,
                    seed: derive_seed(cfg.noise.base_seed ^ 0x4e52_4550, &[is as u64], r as u64),
                });
                noisy_estimates(sc, &case, &dec, noise, &c, &cfg.estimator, nreps)
            })
            .collect();
        for (ir, n_rep) in nreps.iter().enumerate() {
            for (im, method) in METHODS.iter().enumerate() {
                let taus: Vec<Option<f64>> = per_rep.iter().map(|v| v[ir * METHODS.len() + im]).collect();
                let s = stats(&taus, cfg.source.tau);
                rows.push(ErrorRow {
                    slew_z: rz,
                    slew_x: 0.0,
                    snr: level.unwrap_or(f64::INFINITY),
                    n_rep: *n_rep,
                    method: method_name(*method).into(),
                    correction: cfg.estimator.correction.name().into(),
                    mean_err: s.mean,
                    std_err: s.std,
                    bias: s.bias,
                    mean_tau: s.mean_tau,
                    reps: s.n,
                    failures: s.failures,
                    converged: s.converged,
                    flagged: false,
                });
            }
        }
    }
    let mut snr_axis = vec![f64::INFINITY];
    snr_axis.extend(&cfg.nrep.snr);
    Ok(SweepResult {
        axes: vec![
            Axis {
                name: "snr".into(),
                unit: "1".into(),
                values: snr_axis,
            },
            Axis {
                name: "n_rep".into(),
                unit: "1".into(),
                values: nreps.iter().map(|v| *v as f64).collect(),
            },
        ],
        rows,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------------------------
// phantom runs

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatchStats {
    pub name: String,
    #[serde(rename = "x_m")]
    pub x: f64,
    #[serde(rename = "z_m")]
    pub z: f64,
    #[serde(rename = "tau_true_s")]
    pub tau_true: f64,
    #[serde(rename = "tau_mean_s")]
    pub tau_mean: f64,
    #[serde(rename = "tau_std_s")]
    pub tau_std: f64,
    #[serde(rename = "mean_abs_err_pct")]
    pub err_mean: f64,
    #[serde(rename = "std_abs_err_pct")]
    pub err_std: f64,
    pub pixels: usize,
    /// Mean overlay hue over the patch, degrees.
    #[serde(rename = "hue_deg")]
    pub hue: f64,
}

#[derive(Clone, Debug)]
pub struct PhantomResult {
    pub kind: TrajectoryKind,
    pub patches: Vec<PatchStats>,
    /// Mean over patches of the per-patch mean error, percent.
    pub mean_err: f64,
    /// Overlay hue decreases strictly with true tau across patches.
    pub hue_ordered: bool,
    pub estimates: Vec<TauEstimate>,
    pub image: ImageGrid,
    pub map: TauMap,
    pub masked: TauMap,
    pub overlay: Overlay,
    pub colormap: Colormap,
    pub simulated_periods: usize,
    pub wall_time: f64,
}

pub fn kind_name(kind: TrajectoryKind) -> &'static str {
    match kind {
        TrajectoryKind::Pwt => "pwt",
        TrajectoryKind::Llt => "llt",
        TrajectoryKind::TriangleRaster2D => "2dtt",
        TrajectoryKind::Custom => "custom",
    }
}

fn near_sources(phantom: &Phantom, center: [f64; 3], half_pfov: f64, margin: f64) -> u64 {
    let mut bits = 0u64;
    for (i, s) in phantom.sources.iter().enumerate().take(64) {
        let dx = (center[0] - s.position[0]).abs();
        let dz = (center[2] - s.position[2]).abs();
        if dx <= 0.5 * s.extent[0] + margin && dz <= 0.5 * s.extent[1] + half_pfov + margin {
            bits |= 1 << i;
        }
    }
    bits
}

fn sub_phantom(phantom: &Phantom, bits: u64) -> Phantom {
    Phantom {
        sources: phantom
            .sources
            .iter()
            .enumerate()
            .filter(|(i, _)| bits >> i & 1 == 1)
            .map(|(_, s)| s.clone())
            .collect(),
        render_step: phantom.render_step,
    }
}

struct RunOutput {
    estimates: Vec<TauEstimate>,
    image: ImageAccumulator,
    periods: usize,
}

/// Simulates and estimates the periods whose pFOV lies near a source. Periods elsewhere carry
/// only distant Langevin tails and are skipped; the image and tau-map stay empty there.
fn phantom_signals(
    cfg: &ExperimentConfig,
    spec: &TrajectorySpec,
    phantom: &Phantom,
    grid: &GridSpec,
) -> Result<RunOutput> {
    let sc = &cfg.scanner;
    let pc = &cfg.phantom;
    let count = spec.period_count(sc);
    let half = 0.5 * sc.pfov_width();
    let near: Vec<u64> = (0..count)
        .map(|p| {
            near_sources(
                phantom,
                spec.focus_state(sc, (p as f64 + 0.5) * sc.period()).0,
                half,
                pc.margin,
            )
        })
        .collect();
    let ec = cfg.estimator;

    if spec.kind == TrajectoryKind::Pwt {
        let active: Vec<usize> = (0..count).filter(|p| near[*p] != 0).collect();
        let parts: Vec<Result<(TauEstimate, SampledSignal)>> = active
            .par_iter()
            .map(|&p| {
                let sub = sub_phantom(phantom, near[p]);
                let s = steady_state_period(sc, spec, &sub, p)?;
                let pair = segment(&s, sc)?.remove(0);
                let e = estimate_pair(&pair, &SrCorrection::identity(), &ec)?;
                let center = pfov_center(sc, spec, p)?;
                Ok((
                    TauEstimate {
                        center,
                        tau: e.tau,
                        weight: e.weight,
                    },
                    s,
                ))
            })
            .collect();
        let mut image = ImageAccumulator::new(*grid);
        let mut estimates = Vec::new();
        for part in parts {
            let (e, s) = part?;
            image.add(&s, sc, spec)?;
            estimates.push(e);
        }
        return Ok(RunOutput {
            estimates,
            image,
            periods: active.len(),
        });
    }

    // contiguous runs of active periods, widened by guard periods
    let g = pc.guard_periods;
    let mut runs: Vec<(usize, usize, u64)> = Vec::new();
    for p in (0..count).filter(|p| near[*p] != 0) {
        let lo = p.saturating_sub(g);
        let hi = (p + g + 1).min(count);
        match runs.last_mut() {
            Some(r) if lo <= r.1 => {
                r.1 = hi;
                r.2 |= near[p];
            }
            _ => runs.push((lo, hi, near[p])),
        }
    }
    let corrections: std::sync::Mutex<HashMap<u64, SrCorrection>> = Default::default();
    let outputs: Vec<Result<(Vec<TauEstimate>, ImageAccumulator, usize)>> = runs
        .par_iter()
        .enumerate()
        .map(|(ir, &(lo, hi, bits))| {
            let sub = sub_phantom(phantom, bits);
            let window = Window::periods(sc, lo, hi - lo);
            let noise = pc.snr.map(|snr| NoiseSpec {
                snr,
                seed: derive_seed(cfg.noise.base_seed, &[ir as u64], 0),
            });
            let syn = synthesize(sc, spec, &sub, noise.as_ref(), &window)?;
            let pairs = segment(&syn.received, sc)?;
            let mut est = Vec::new();
            let mut image = ImageAccumulator::new(*grid);
            let mut used = 0;
            for pair in &pairs {
                let p = pair.period;
                let inner = (p >= lo + g || lo == 0) && (p + g < hi || hi == count);
                if !inner || near[p] == 0 || !spec.period_within_segment(sc, p) {
                    continue;
                }
                let slew = spec.period_slew_z(sc, p);
                let key = slew.to_bits();
                let cached = corrections.lock().unwrap().get(&key).copied();
                let c = match cached {
                    Some(c) => c,
                    None => {
                        let c = sr_correction_params(sc, slew)?;
                        corrections.lock().unwrap().insert(key, c);
                        c
                    }
                };
                let e = estimate_pair(pair, &c, &ec)?;
                est.push(TauEstimate {
                    center: pfov_center(sc, spec, p)?,
                    tau: e.tau,
                    weight: e.weight,
                });
                let whole = SampledSignal {
                    samples: [pair.neg.samples.as_slice(), pair.pos.samples.as_slice()].concat(),
                    rate: pair.neg.rate,
                    t0: pair.neg.t0,
                };
                image.add(&whole, sc, spec)?;
                used += 1;
            }
            Ok((est, image, used))
        })
        .collect();
    let mut image = ImageAccumulator::new(*grid);
    let mut estimates = Vec::new();
    let mut periods = 0;
    for o in outputs {
        let (e, im, n) = o?;
        image.merge(&im);
        estimates.extend(e);
        periods += n;
    }
    Ok(RunOutput {
        estimates,
        image,
        periods,
    })
}

fn trajectory_params(cfg: &ExperimentConfig, kind: TrajectoryKind) -> TrajectoryParams {
    match kind {
        TrajectoryKind::Pwt => cfg.phantom.pwt.clone(),
        TrajectoryKind::Llt => cfg.phantom.llt.clone(),
        TrajectoryKind::TriangleRaster2D => cfg.phantom.triangle.clone(),
        TrajectoryKind::Custom => cfg.trajectory.params.clone(),
    }
}

/// Full phantom pipeline for one trajectory: simulation, per-period estimates, amplitude
/// image, tau-map, mask, overlay and per-patch statistics over each patch footprint.
pub fn run_phantom(cfg: &ExperimentConfig, kind: TrajectoryKind) -> Result<PhantomResult> {
    cfg.validate()?;
    let start = Instant::now();
    let sc = &cfg.scanner;
    let phantom = cfg.load_phantom()?;
    let params = trajectory_params(cfg, kind);
    let spec = build_trajectory(kind, sc, &params)?;
    let grid = GridSpec::covering(params.fov_x, params.fov_z, cfg.phantom.pixel);
    let out = phantom_signals(cfg, &spec, &phantom, &grid)?;
    if out.estimates.is_empty() {
        return Err(Error::Degenerate("no trajectory period passes near the phantom".into()));
    }
    let centers: Vec<[f64; 2]> = out.estimates.iter().map(|e| [e.center[0], e.center[2]]).collect();
    let sigma = image_kernel_sigma(&centers, grid.pixel);
    let image = out.image.finish(sigma);
    let map = estimates_to_map(&out.estimates, &grid, sigma, KernelScale::Quarter)?;
    let masked = mask_map(&map, &image, cfg.phantom.mask_threshold)?;
    let taus: Vec<f64> = phantom.sources.iter().map(|s| s.species.tau).collect();
    let colormap = Colormap {
        tau_min: taus.iter().cloned().fold(f64::MAX, f64::min),
        tau_max: taus.iter().cloned().fold(f64::MIN, f64::max),
    };
    let ov = overlay(&image, &masked, &colormap)?;
    let patches = patch_stats(&phantom, &masked, &ov);
    let valid: Vec<&PatchStats> = patches.iter().filter(|p| p.pixels > 0).collect();
    let mean_err = if valid.len() == patches.len() {
        valid.iter().map(|p| p.err_mean).sum::<f64>() / valid.len() as f64
    } else {
        f64::NAN
    };
    let mut order: Vec<&PatchStats> = patches.iter().collect();
    order.sort_by(|a, b| a.tau_true.total_cmp(&b.tau_true));
    let hue_ordered = order.windows(2).all(|w| w[1].hue < w[0].hue);
    Ok(PhantomResult {
        kind,
        patches,
        mean_err,
        hue_ordered,
        estimates: out.estimates,
        image,
        map,
        masked,
        overlay: ov,
        colormap,
        simulated_periods: out.periods,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn patch_stats(phantom: &Phantom, map: &TauMap, ov: &Overlay) -> Vec<PatchStats> {
    let g = &map.grid;
    phantom
        .sources
        .iter()
        .map(|s| {
            let tau = s.species.tau;
            let mut vals = Vec::new();
            let mut rgb = [0.0; 3];
            for iz in 0..g.shape[1] {
                for ix in 0..g.shape[0] {
                    let p = g.position(ix, iz);
                    if (p[0] - s.position[0]).abs() >= 0.5 * s.extent[0].max(g.pixel)
                        || (p[1] - s.position[2]).abs() >= 0.5 * s.extent[1].max(g.pixel)
                    {
                        continue;
                    }
                    let i = iz * g.shape[0] + ix;
                    if map.mask[i] {
                        vals.push(map.values[i]);
                        for (acc, v) in rgb.iter_mut().zip(ov.rgb[i]) {
                            *acc += v;
                        }
                    }
                }
            }
            let n = vals.len().max(1) as f64;
            let tau_mean = vals.iter().sum::<f64>() / n;
            let tau_std = (vals.iter().map(|v| (v - tau_mean).powi(2)).sum::<f64>() / n).sqrt();
            let errs: Vec<f64> = vals.iter().map(|v| rel_err(*v, tau).0).collect();
            let err_mean = errs.iter().sum::<f64>() / n;
            let err_std = (errs.iter().map(|e| (e - err_mean).powi(2)).sum::<f64>() / n).sqrt();
            PatchStats {
                name: s.species.name.clone(),
                x: s.position[0],
                z: s.position[2],
                tau_true: tau,
                tau_mean: if vals.is_empty() { f64::NAN } else { tau_mean },
                tau_std,
                err_mean: if vals.is_empty() { f64::NAN } else { err_mean },
                err_std,
                pixels: vals.len(),
                hue: hue(rgb).unwrap_or(f64::NAN),
            }
        })
        .collect()
}

/// Writes rasters, the overlay PNG and the per-patch CSV under `dir`.
pub fn export_phantom(res: &PhantomResult, dir: &Path, config_hash: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let k = kind_name(res.kind);
    let g = &res.image.grid;
    mapping::write_raster(
        &dir.join(format!("{k}_image.f32")),
        &res.image.values,
        g,
        "a.u.",
        res.image.kernel_sigma,
    )?;
    mapping::write_raster(
        &dir.join(format!("{k}_tau.f32")),
        &res.map.values,
        g,
        "s",
        res.map.kernel_sigma,
    )?;
    mapping::write_raster(
        &dir.join(format!("{k}_tau_masked.f32")),
        &res.masked.values,
        g,
        "s",
        res.masked.kernel_sigma,
    )?;
    mapping::write_png(&dir.join(format!("{k}_overlay.png")), &res.overlay)?;
    write_csv(&dir.join(format!("{k}_patches.csv")), config_hash, &res.patches)
}

// ---------------------------------------------------------------------------------------------
// signal files

/// JSON sidecar describing a recorded or simulated acquisition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalMetadata {
    pub sample_rate: f64,
    pub drive_frequency: f64,
    #[serde(default)]
    pub t0: f64,
    /// Trajectory for pFOV centers and per-period slew; otherwise `slew_z` applies throughout.
    #[serde(default)]
    pub trajectory: Option<TrajectoryBlock>,
    #[serde(default)]
    pub slew_z: f64,
    /// Empty-scanner recording subtracted after alignment.
    #[serde(default)]
    pub baseline: Option<PathBuf>,
    #[serde(default)]
    pub filters: Vec<FilterSpec>,
    #[serde(default)]
    pub marker: Option<MarkerWindow>,
    /// Half-width of the timing search, s; one sample when absent.
    #[serde(default)]
    pub timing_search_range: Option<f64>,
}

impl SignalMetadata {
    pub fn new(scanner: &ScannerConfig, t0: f64) -> Self {
        SignalMetadata {
            sample_rate: scanner.sample_rate,
            drive_frequency: scanner.drive_frequency,
            t0,
            trajectory: None,
            slew_z: 0.0,
            baseline: None,
            filters: Vec::new(),
            marker: None,
            timing_search_range: None,
        }
    }
}

pub fn sidecar_path(signal_path: &Path) -> PathBuf {
    signal_path.with_extension("json")
}

/// Writes the binary samples and, when given, the JSON sidecar next to them.
pub fn write_signal(path: &Path, signal: &SampledSignal, meta: Option<&SignalMetadata>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&SIGNAL_MAGIC)?;
    f.write_all(&SIGNAL_VERSION.to_le_bytes())?;
    f.write_all(&signal.rate.to_le_bytes())?;
    f.write_all(&(signal.len() as u64).to_le_bytes())?;
    for v in &signal.samples {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    if let Some(m) = meta {
        let json = serde_json::to_string_pretty(m).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(sidecar_path(path), json)?;
    }
    Ok(())
}

/// Parses the binary format; `t0` comes from the sidecar.
pub fn parse_signal(bytes: &[u8], t0: f64) -> Result<SampledSignal> {
    let err = |offset: u64, msg: &str| Error::Parse {
        offset,
        msg: msg.to_string(),
    };
    if bytes.len() < SIGNAL_HEADER_LEN as usize {
        return Err(err(bytes.len() as u64, "truncated header"));
    }
    if bytes[0..4] != SIGNAL_MAGIC {
        return Err(err(0, "bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SIGNAL_VERSION {
        return Err(err(4, &format!("unsupported version {version}")));
    }
    let rate = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(err(8, "sample rate must be positive"));
    }
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let body = &bytes[SIGNAL_HEADER_LEN as usize..];
    let expected = count.checked_mul(8).ok_or_else(|| err(16, "sample count overflows"))?;
    if body.len() as u64 != expected {
        let at = SIGNAL_HEADER_LEN + (body.len() as u64).min(expected) / 8 * 8;
        return Err(err(
            at,
            &format!("header promises {count} samples, body holds {} bytes", body.len()),
        ));
    }
    let samples = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    SampledSignal::new(samples, rate, t0)
}

/// Byte offset of a (1-based) line and column in `text`.
fn line_col_offset(text: &str, line: usize, col: usize) -> u64 {
    let mut off = 0usize;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (off + col.saturating_sub(1)) as u64;
        }
        off += l.len();
    }
    off as u64
}

pub fn parse_metadata(text: &str) -> Result<SignalMetadata> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        offset: line_col_offset(text, e.line(), e.column()),
        msg: e.to_string(),
    })
}

pub fn read_metadata(path: &Path) -> Result<SignalMetadata> {
    parse_metadata(&std::fs::read_to_string(path)?)
}

pub fn read_signal(path: &Path, t0: f64) -> Result<SampledSignal> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_signal(&bytes, t0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FileEstimate {
    pub estimates: Vec<PeriodEstimate>,
    /// Timing offset that was removed, s.
    pub timing_offset: f64,
    pub baseline_delay: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct EstimateRow {
    period: usize,
    #[serde(rename = "center_x_m")]
    x: f64,
    #[serde(rename = "center_y_m")]
    y: f64,
    #[serde(rename = "center_z_m")]
    z: f64,
    #[serde(rename = "tau_s")]
    tau: f64,
    #[serde(rename = "weight_V2")]
    weight: f64,
    #[serde(rename = "mirror_mse_V2")]
    mirror_mse: f64,
}

/// In-memory counterpart of `estimate_from_file`: preprocessing, segmentation, correction and
/// estimation of every complete period.
pub fn estimate_signal(
    signal: &SampledSignal,
    meta: &SignalMetadata,
    scanner: &ScannerConfig,
    cfg: &EstimatorConfig,
    baseline: Option<&SampledSignal>,
) -> Result<FileEstimate> {
    let rel = |a: f64, b: f64| (a - b).abs() > 1e-9 * b.abs();
    if rel(meta.sample_rate, scanner.sample_rate) || rel(signal.rate, scanner.sample_rate) {
        return Err(Error::Config(format!(
            "sample rate {} does not match the scanner's {}",
            meta.sample_rate, scanner.sample_rate
        )));
    }
    if rel(meta.drive_frequency, scanner.drive_frequency) {
        return Err(Error::Config(format!(
            "drive frequency {} does not match the scanner's {}",
            meta.drive_frequency, scanner.drive_frequency
        )));
    }
    let mut s = signal.clone();
    let mut baseline_delay = None;
    if let Some(b) = baseline {
        let a = align_baseline(&s, b)?;
        baseline_delay = Some(a.delay);
        s = a.signal;
    }
    for f in &meta.filters {
        s = zero_phase_filter(&s, f)?;
    }
    let spec = match &meta.trajectory {
        Some(t) => Some(build_trajectory(t.kind, scanner, &t.params)?),
        None => None,
    };
    let mut offset = cfg.timing_offset;
    if let Some(m) = &meta.marker {
        let range = meta.timing_search_range.unwrap_or(1.0 / s.rate);
        offset = fine_tune_timing(&s, scanner, m, range, cfg)?.offset;
    }
    if offset != 0.0 {
        s = apply_timing(&s, offset);
    }
    let mut out = Vec::new();
    let mut cache: HashMap<u64, SrCorrection> = HashMap::new();
    for mut pair in segment(&s, scanner)? {
        let p = pair.period;
        let slew = match &spec {
            Some(sp) => sp.period_slew_z(scanner, p),
            None => meta.slew_z,
        };
        let c = match cache.get(&slew.to_bits()) {
            Some(c) => *c,
            None => {
                let c = sr_correction_params(scanner, slew)?;
                cache.insert(slew.to_bits(), c);
                c
            }
        };
        pair.center = spec.as_ref().and_then(|sp| pfov_center(scanner, sp, p).ok());
        out.push(estimate_pair(&pair, &c, cfg)?);
    }
    Ok(FileEstimate {
        estimates: out,
        timing_offset: offset,
        baseline_delay,
    })
}

/// Reads a signal and its sidecar, estimates every period and writes the per-period CSV when
/// `csv_out` is given.
pub fn estimate_from_file(
    signal_path: &Path,
    metadata_path: &Path,
    cfg: &ExperimentConfig,
    csv_out: Option<&Path>,
) -> Result<FileEstimate> {
    let meta = read_metadata(metadata_path)?;
    let signal = read_signal(signal_path, meta.t0)?;
    let baseline = match &meta.baseline {
        Some(p) => {
            let p = if p.is_relative() {
                metadata_path.parent().unwrap_or(Path::new(".")).join(p)
            } else {
                p.clone()
            };
            Some(read_signal(&p, meta.t0)?)
        }
        None => None,
    };
    let res = estimate_signal(&signal, &meta, &cfg.scanner, &cfg.estimator, baseline.as_ref())?;
    if let Some(path) = csv_out {
        let rows: Vec<EstimateRow> = res
            .estimates
            .iter()
            .map(|e| {
                let c = e.center.unwrap_or([f64::NAN; 3]);
                EstimateRow {
                    period: e.period,
                    x: c[0],
                    y: c[1],
                    z: c[2],
                    tau: e.tau,
                    weight: e.weight,
                    mirror_mse: e.mirror_mse,
                }
            })
            .collect();
        write_csv(path, &cfg.hash(), &rows)?;
    }
    Ok(res)
}

/// Reads a per-period estimate CSV written by `estimate_from_file`.
pub fn read_estimates_csv(path: &Path) -> Result<Vec<TauEstimate>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Config(format!("csv: {e}")))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse {
            offset: e.position().map(|p| p.byte()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    offset: rec.position().map(|p| p.byte()).unwrap_or(0),
                    msg: format!("column {i}"),
                })
        };
        out.push(TauEstimate {
            center: [get(1)?, get(2)?, get(3)?],
            tau: get(4)?,
            weight: get(5)?,
        });
    }
    Ok(out)
}

/// Simulates the configured trajectory over the built-in or configured phantom.
pub fn simulate(cfg: &ExperimentConfig, noise: Option<NoiseSpec>) -> Result<(SampledSignal, SignalMetadata)> {
    let sc = &cfg.scanner;
    let spec = build_trajectory(cfg.trajectory.kind, sc, &cfg.trajectory.params)?;
    let phantom = match &cfg.phantom.path {
        Some(_) => cfg.load_phantom()?,
        None => Phantom::point(cfg.source.position, cfg.point_species()),
    };
    let syn = synthesize(sc, &spec, &phantom, noise.as_ref(), &Window::full(&spec))?;
    let mut meta = SignalMetadata::new(sc, syn.received.t0);
    meta.trajectory = Some(cfg.trajectory.clone());
    Ok((syn.received, meta))
}
