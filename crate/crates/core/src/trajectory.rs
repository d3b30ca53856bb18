//! Scanner parameters and field-free-point kinematics.
//!
//! Positions are in metres, fields in tesla and slew rates in T/s. The FFP sits where
//! `G_i * x_i = B_F,i`, with the sinusoidal drive field acting on z only:
//! `z(t) = (B_F,z(t) + Bp cos(2 pi fd t)) / Gz`. The first half of every drive period is the
//! negative (backward) half-cycle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScannerConfig {
    /// Selection-field gradients (Gx, Gy, Gz) in T/m.
    pub gradients: [f64; 3],
    /// Drive amplitude Bp in T.
    pub drive_amplitude: f64,
    /// Drive frequency fd in Hz.
    pub drive_frequency: f64,
    /// Simulation rate fs_hi in samples/s.
    pub oversample_rate: f64,
    /// Acquisition rate fs in samples/s.
    pub sample_rate: f64,
}

impl Default for ScannerConfig {
    fn default() -> Self {
        ScannerConfig {
            gradients: [-4.8, 2.4, 2.4],
            drive_amplitude: 15e-3,
            drive_frequency: 10e3,
            oversample_rate: 100e6,
            sample_rate: 2e6,
        }
    }
}

impl ScannerConfig {
    pub fn validate(&self) -> Result<()> {
        let fd = self.drive_frequency;
        if !(fd > 0.0) || !(self.drive_amplitude > 0.0) {
            return Err(Error::Config("drive frequency and amplitude must be positive".into()));
        }
        if self.gradients[2] == 0.0 || !self.gradients.iter().all(|g| g.is_finite()) {
            return Err(Error::Config("Gz must be nonzero and all gradients finite".into()));
        }
        // the high-pass keeps harmonics from 2 fd upward, so at least those must be representable
        if !(self.sample_rate > 4.0 * fd) || self.oversample_rate < self.sample_rate {
            return Err(Error::Config(format!(
                "need fs_hi >= fs > 4 fd (fs_hi = {}, fs = {}, fd = {})",
                self.oversample_rate, self.sample_rate, fd
            )));
        }
        let ratio = self.oversample_rate / self.sample_rate;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!("fs_hi/fs = {ratio} is not an integer")));
        }
        for rate in [self.sample_rate, self.oversample_rate] {
            let half = rate / (2.0 * fd);
            if (half - half.round()).abs() > 1e-9 * half {
                return Err(Error::Config(format!(
                    "a half drive period must span a whole number of samples at {rate} samples/s"
                )));
            }
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.drive_frequency
    }

    /// W_p = 2 Bp / |Gz|.
    pub fn pfov_width(&self) -> f64 {
        2.0 * self.drive_amplitude / self.gradients[2].abs()
    }

    pub fn decimation(&self) -> usize {
        (self.oversample_rate / self.sample_rate).round() as usize
    }

    /// Samples in half a drive period at `rate`.
    pub fn half_period_samples(&self, rate: f64) -> usize {
        (rate / (2.0 * self.drive_frequency)).round() as usize
    }

    /// Peak drive slew Bp * 2 pi fd in T/s.
    pub fn drive_slew(&self) -> f64 {
        self.drive_amplitude * 2.0 * PI * self.drive_frequency
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    /// Piecewise constant focus fields stepped over a point grid.
    Pwt,
    /// Lines along z with a linear focus-field ramp, stepped in x.
    Llt,
    /// Linear z ramp with a triangle wave along x.
    #[serde(rename = "2dtt")]
    TriangleRaster2D,
    /// A single linear ramp on every axis.
    Custom,
}

/// Focus field on one time interval: `B_F(t) = field0 + slew * (t - start)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub duration: f64,
    pub field0: [f64; 3],
    pub slew: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub frequency: f64,
    pub fov: f64,
}

impl Triangle {
    /// Position and velocity of `FOV/pi * asin(sin(2 pi f t))`, right-sided at the corners.
    fn state(&self, t: f64) -> (f64, f64) {
        let u = (self.frequency * t + 0.25).rem_euclid(1.0);
        let v = 2.0 * self.fov * self.frequency;
        if u < 0.5 {
            (self.fov * (2.0 * u - 0.5), v)
        } else {
            (self.fov * (1.5 - 2.0 * u), -v)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    /// FOV extents (x, z) in m.
    pub fov: [f64; 2],
    /// Stepped counts (x, z): PWT points, LLT lines in x.
    pub counts: [usize; 2],
    /// Ordered, contiguous focus-field segments covering [0, scan_time].
    pub segments: Vec<Segment>,
    pub triangle: Option<Triangle>,
    /// Active scan time T_s in s.
    pub scan_time: f64,
    /// Idle time spent stepping between segments, reported separately from T_s.
    pub idle_time: f64,
    pub pfov_width: f64,
    pub overlap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryParams {
    pub fov_x: f64,
    pub fov_z: f64,
    /// PWT grid points along x, or LLT line count.
    pub points_x: usize,
    /// PWT grid points along z.
    pub points_z: usize,
    /// z slew rate R_s,z in T/s.
    pub slew_z: f64,
    /// x slew rate R_s,x in T/s (triangle raster and custom ramps).
    pub slew_x: f64,
    /// Drive periods acquired per PWT point.
    pub periods_per_point: usize,
    pub idle_per_step: f64,
    /// Alternate the z direction on every other PWT column.
    pub serpentine: bool,
    /// Custom ramp: initial focus fields in T.
    pub field0: [f64; 3],
    /// Custom ramp duration in s.
    pub duration: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        TrajectoryParams {
            fov_x: 0.05,
            fov_z: 0.06,
            points_x: 100,
            points_z: 100,
            slew_z: 0.0,
            slew_x: 0.0,
            periods_per_point: 1,
            idle_per_step: 0.0,
            serpentine: false,
            field0: [0.0; 3],
            duration: 0.0,
        }
    }
}

fn cell_centers(fov: f64, n: usize) -> Vec<f64> {
    let step = fov / n as f64;
    (0..n).map(|i| -0.5 * fov + (i as f64 + 0.5) * step).collect()
}

/// Overlap of consecutive pFOVs for a continuous z ramp.
pub fn ramp_overlap(scanner: &ScannerConfig, slew_z: f64) -> f64 {
    let shift = slew_z.abs() / (scanner.drive_frequency * scanner.gradients[2].abs());
    1.0 - shift / scanner.pfov_width()
}

pub fn build_trajectory(kind: TrajectoryKind, scanner: &ScannerConfig, p: &TrajectoryParams) -> Result<TrajectorySpec> {
    scanner.validate()?;
    let [gx, _, gz] = scanner.gradients;
    let wp = scanner.pfov_width();
    let bad = |m: &str| Err(Error::Config(m.to_string()));
    if p.slew_z < 0.0 || p.slew_x < 0.0 || p.idle_per_step < 0.0 {
        return bad("slew rates and idle time must be non-negative");
    }
    if kind != TrajectoryKind::Custom && !(p.fov_x > 0.0 && p.fov_z > 0.0) {
        return bad("FOV extents must be positive");
    }
    // z ramp that starts at -FOVz/2 and moves toward +z
    let z_start_field = -0.5 * p.fov_z * gz.abs();
    let z_slew = p.slew_z * gz.signum();
    let z_start_field = z_start_field * gz.signum();

    let spec = match kind {
        TrajectoryKind::Pwt => {
            if p.points_x == 0 || p.points_z == 0 || p.periods_per_point == 0 {
                return bad("PWT needs at least one point per axis and one period per point");
            }
            let xs = cell_centers(p.fov_x, p.points_x);
            let zs = cell_centers(p.fov_z, p.points_z);
            let dwell = p.periods_per_point as f64 / scanner.drive_frequency;
            let mut segments = Vec::with_capacity(xs.len() * zs.len());
            for (i, &x) in xs.iter().enumerate() {
                let reverse = p.serpentine && i % 2 == 1;
                for j in 0..zs.len() {
                    let z = if reverse { zs[zs.len() - 1 - j] } else { zs[j] };
                    segments.push(Segment {
                        start: segments.len() as f64 * dwell,
                        duration: dwell,
                        field0: [gx * x, 0.0, gz * z],
                        slew: [0.0; 3],
                    });
                }
            }
            let n = segments.len();
            TrajectorySpec {
                kind,
                fov: [p.fov_x, p.fov_z],
                counts: [p.points_x, p.points_z],
                segments,
                triangle: None,
                scan_time: n as f64 * dwell,
                idle_time: (n - 1) as f64 * p.idle_per_step,
                pfov_width: wp,
                overlap: 1.0 - (p.fov_z / p.points_z as f64) / wp,
            }
        }
        TrajectoryKind::Llt => {
            if p.points_x == 0 {
                return bad("LLT needs at least one line");
            }
            if !(p.slew_z > 0.0) {
                return bad("LLT needs a positive z slew rate");
            }
            let line = p.fov_z * gz.abs() / p.slew_z;
            let segments: Vec<Segment> = cell_centers(p.fov_x, p.points_x)
                .into_iter()
                .enumerate()
                .map(|(i, x)| Segment {
                    start: i as f64 * line,
                    duration: line,
                    field0: [gx * x, 0.0, z_start_field],
                    slew: [0.0, 0.0, z_slew],
                })
                .collect();
            TrajectorySpec {
                kind,
                fov: [p.fov_x, p.fov_z],
                counts: [p.points_x, 1],
                scan_time: line * p.points_x as f64,
                idle_time: (p.points_x - 1) as f64 * p.idle_per_step,
                segments,
                triangle: None,
                pfov_width: wp,
                overlap: ramp_overlap(scanner, p.slew_z),
            }
        }
        TrajectoryKind::TriangleRaster2D => {
            if !(p.slew_x > 0.0) || !(p.slew_z > 0.0) {
                return bad("triangle raster needs positive x and z slew rates");
            }
            let ts = p.fov_z * gz.abs() / p.slew_z;
            TrajectorySpec {
                kind,
                fov: [p.fov_x, p.fov_z],
                counts: [1, 1],
                segments: vec![Segment {
                    start: 0.0,
                    duration: ts,
                    field0: [0.0, 0.0, z_start_field],
                    slew: [0.0, 0.0, z_slew],
                }],
                triangle: Some(Triangle {
                    frequency: p.slew_x / (2.0 * p.fov_x * gx.abs()),
                    fov: p.fov_x,
                }),
                scan_time: ts,
                idle_time: 0.0,
                pfov_width: wp,
                overlap: ramp_overlap(scanner, p.slew_z),
            }
        }
        TrajectoryKind::Custom => {
            if !(p.duration > 0.0) {
                return bad("custom ramp needs a positive duration");
            }
            let slew = [p.slew_x * gx.signum(), 0.0, z_slew];
            TrajectorySpec::ramp(scanner, p.field0, slew, p.duration)
        }
    };
    Ok(spec)
}

impl TrajectorySpec {
    /// Single linear ramp `B_F(t) = field0 + slew * t` on [0, duration].
    pub fn ramp(scanner: &ScannerConfig, field0: [f64; 3], slew: [f64; 3], duration: f64) -> Self {
        TrajectorySpec {
            kind: TrajectoryKind::Custom,
            fov: [0.0, 0.0],
            counts: [1, 1],
            segments: vec![Segment {
                start: 0.0,
                duration,
                field0,
                slew,
            }],
            triangle: None,
            scan_time: duration,
            idle_time: 0.0,
            pfov_width: scanner.pfov_width(),
            overlap: ramp_overlap(scanner, slew[2]),
        }
    }

    /// Ramp whose pFOV center passes `center` at the midpoint of drive period `period`.
    pub fn ramp_through(
        scanner: &ScannerConfig,
        center: [f64; 3],
        slew: [f64; 3],
        period: usize,
        periods: usize,
    ) -> Self {
        let tm = (period as f64 + 0.5) * scanner.period();
        let g = scanner.gradients;
        let field0 = [0, 1, 2].map(|i| g[i] * center[i] - slew[i] * tm);
        Self::ramp(scanner, field0, slew, periods as f64 * scanner.period())
    }

    /// Number of complete drive periods in [0, T_s].
    pub fn period_count(&self, scanner: &ScannerConfig) -> usize {
        (self.scan_time * scanner.drive_frequency + 1e-9).floor() as usize
    }

    fn segment_at(&self, t: f64) -> &Segment {
        let i = self.segments.partition_point(|s| s.start <= t);
        &self.segments[i.saturating_sub(1)]
    }

    /// Focus-field position and velocity (drive term removed).
    pub fn focus_state(&self, scanner: &ScannerConfig, t: f64) -> ([f64; 3], [f64; 3]) {
        let s = self.segment_at(t);
        let g = scanner.gradients;
        let dt = t - s.start;
        let mut pos = [0.0; 3];
        let mut vel = [0.0; 3];
        for i in 0..3 {
            if g[i] != 0.0 {
                pos[i] = (s.field0[i] + s.slew[i] * dt) / g[i];
                vel[i] = s.slew[i] / g[i];
            }
        }
        if let Some(tri) = &self.triangle {
            let (x, vx) = tri.state(t);
            pos[0] += x;
            vel[0] += vx;
        }
        (pos, vel)
    }

    /// z focus-field slew in T/s at time t.
    pub fn slew_z_at(&self, t: f64) -> f64 {
        self.segment_at(t).slew[2]
    }

    /// Slew of the focus field at the midpoint of period `p`.
    pub fn period_slew_z(&self, scanner: &ScannerConfig, p: usize) -> f64 {
        self.slew_z_at((p as f64 + 0.5) * scanner.period())
    }

    /// Whether period `p` lies inside a single segment.
    pub fn period_within_segment(&self, scanner: &ScannerConfig, p: usize) -> bool {
        let t0 = p as f64 * scanner.period();
        let t1 = t0 + scanner.period();
        let s = self.segment_at(t0);
        let eps = 1e-9 * scanner.period();
        t0 >= s.start - eps && t1 <= s.start + s.duration + eps
    }
}

/// FFP position and velocity at time t.
pub fn ffp_state(scanner: &ScannerConfig, spec: &TrajectorySpec, t: f64) -> Result<([f64; 3], [f64; 3])> {
    if !(t >= 0.0 && t <= spec.scan_time) {
        return Err(Error::Domain { t, end: spec.scan_time });
    }
    Ok(ffp_state_unchecked(scanner, spec, t))
}

pub(crate) fn ffp_state_unchecked(scanner: &ScannerConfig, spec: &TrajectorySpec, t: f64) -> ([f64; 3], [f64; 3]) {
    let (mut pos, mut vel) = spec.focus_state(scanner, t);
    let w = 2.0 * PI * scanner.drive_frequency;
    let a = scanner.drive_amplitude / scanner.gradients[2];
    pos[2] += a * (w * t).cos();
    vel[2] -= a * w * (w * t).sin();
    (pos, vel)
}

/// FF-only FFP position at the temporal midpoint of drive period `period_index`.
pub fn pfov_center(scanner: &ScannerConfig, spec: &TrajectorySpec, period_index: usize) -> Result<[f64; 3]> {
    let count = spec.period_count(scanner);
    if period_index >= count {
        return Err(Error::PeriodIndex {
            index: period_index,
            count,
        });
    }
    let t = (period_index as f64 + 0.5) * scanner.period();
    Ok(spec.focus_state(scanner, t).0)
}

/// Bp 2 pi fd / max |R_s,z|; infinite for a trajectory without z slew.
pub fn dominance_ratio(scanner: &ScannerConfig, spec: &TrajectorySpec) -> f64 {
    let max = spec.segments.iter().map(|s| s.slew[2].abs()).fold(0.0, f64::max);
    if max == 0.0 {
        f64::INFINITY
    } else {
        scanner.drive_slew() / max
    }
}
