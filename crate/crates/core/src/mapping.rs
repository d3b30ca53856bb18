//! Gridding of per-period estimates into tau-maps, a simplified x-space amplitude image,
//! masking and color overlays.
//!
//! Rasters are stored row-major with rows along z and columns along x: the value at column
//! `ix`, row `iz` sits at `(origin[0] + ix * pixel, origin[1] + iz * pixel)`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::SampledSignal;
use crate::trajectory::{ffp_state, ScannerConfig, TrajectorySpec};

/// Value carried by masked tau-map pixels.
pub const MASKED: f64 = f64::NAN;
/// Gaussian kernels are cut at this many standard deviations.
pub const KERNEL_SUPPORT: f64 = 3.0;
/// Pixels whose summed kernel weight falls below this fraction of the largest sum are masked.
pub const WEIGHT_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Center of pixel (0, 0) as (x, z), m.
    pub origin: [f64; 2],
    pub pixel: f64,
    /// (columns along x, rows along z).
    pub shape: [usize; 2],
}

impl GridSpec {
    /// Grid centered on the origin that tiles an `fov_x` by `fov_z` field of view.
    pub fn covering(fov_x: f64, fov_z: f64, pixel: f64) -> Self {
        let nx = (fov_x / pixel).round().max(1.0) as usize;
        let nz = (fov_z / pixel).round().max(1.0) as usize;
        GridSpec {
            origin: [
                -0.5 * nx as f64 * pixel + 0.5 * pixel,
                -0.5 * nz as f64 * pixel + 0.5 * pixel,
            ],
            pixel,
            shape: [nx, nz],
        }
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn position(&self, ix: usize, iz: usize) -> [f64; 2] {
        [
            self.origin[0] + ix as f64 * self.pixel,
            self.origin[1] + iz as f64 * self.pixel,
        ]
    }

    /// Fractional (column, row) of a point.
    pub fn locate(&self, x: f64, z: f64) -> (f64, f64) {
        ((x - self.origin[0]) / self.pixel, (z - self.origin[1]) / self.pixel)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    pub center: [f64; 3],
    pub tau: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TauMap {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    /// True where the pixel carries an estimate.
    pub mask: Vec<bool>,
    /// Gaussian kernel standard deviation used for gridding, m.
    pub kernel_sigma: f64,
    pub provenance: Vec<TauEstimate>,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub kernel_sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelScale {
    /// The image-gridding kernel.
    Image,
    /// One quarter of the image kernel, the default for tau-maps.
    Quarter,
    Custom(f64),
}

impl KernelScale {
    pub fn factor(&self) -> f64 {
        match self {
            KernelScale::Image => 1.0,
            KernelScale::Quarter => 0.25,
            KernelScale::Custom(f) => *f,
        }
    }
}

/// Median distance from each center to its nearest distinct neighbour in the x-z plane.
pub fn median_nn_spacing(centers: &[[f64; 2]]) -> Option<f64> {
    if centers.len() < 2 {
        return None;
    }
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for c in centers {
        for i in 0..2 {
            lo[i] = lo[i].min(c[i]);
            hi[i] = hi[i].max(c[i]);
        }
    }
    let area = ((hi[0] - lo[0]) * (hi[1] - lo[1])).max(1e-18);
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let n = centers.len() as f64;
    // sqrt(area/n) tracks the spacing of 2D layouts and span/n that of collinear ones
    let cell = (area / n).sqrt().max(span / n).max(1e-12);
    let dims = [0, 1].map(|i| (((hi[i] - lo[i]) / cell).floor() as usize) + 1);
    let key = |c: &[f64; 2]| [0, 1].map(|i| (((c[i] - lo[i]) / cell).floor() as usize).min(dims[i] - 1));
    let mut buckets: std::collections::HashMap<[usize; 2], Vec<usize>> = std::collections::HashMap::new();
    for (i, c) in centers.iter().enumerate() {
        buckets.entry(key(c)).or_default().push(i);
    }
    let mut nn: Vec<f64> = Vec::with_capacity(centers.len());
    for (i, c) in centers.iter().enumerate() {
        let k = key(c);
        let mut best = f64::MAX;
        let mut ring = 0usize;
        loop {
            let r = ring as isize;
            let mut visit = |dx: isize, dz: isize| {
                let bx = k[0] as isize + dx;
                let bz = k[1] as isize + dz;
                if bx < 0 || bz < 0 {
                    return;
                }
                if let Some(v) = buckets.get(&[bx as usize, bz as usize]) {
                    for &j in v {
                        let d = ((centers[j][0] - c[0]).powi(2) + (centers[j][1] - c[1]).powi(2)).sqrt();
                        if j != i && d > 0.0 && d < best {
                            best = d;
                        }
                    }
                }
            };
            if r == 0 {
                visit(0, 0);
            } else {
                for d in -r..=r {
                    visit(d, -r);
                    visit(d, r);
                }
                for d in -r + 1..r {
                    visit(-r, d);
                    visit(r, d);
                }
            }
            // every bucket outside the ring is at least ring * cell away
            if best <= ring as f64 * cell || ring > dims[0].max(dims[1]) {
                break;
            }
            ring += 1;
        }
        if best < f64::MAX {
            nn.push(best);
        }
    }
    if nn.is_empty() {
        return None;
    }
    nn.sort_by(f64::total_cmp);
    Some(nn[nn.len() / 2])
}

/// Image kernel: 1.5 x median pFOV-center spacing, but never narrower than four pixels so
/// that the quarter-width tau kernel still spans a pixel.
pub fn image_kernel_sigma(centers: &[[f64; 2]], pixel: f64) -> f64 {
    let nn = median_nn_spacing(centers).unwrap_or(0.0);
    (1.5 * nn).max(4.0 * pixel)
}

/// Weight-normalized truncated-Gaussian gridding of scattered estimates.
pub fn estimates_to_map(
    estimates: &[TauEstimate],
    grid: &GridSpec,
    image_sigma: f64,
    scale: KernelScale,
) -> Result<TauMap> {
    if estimates.is_empty() {
        return Err(Error::Config("no estimates to grid".into()));
    }
    let sigma = image_sigma * scale.factor();
    if !(sigma > 0.0) {
        return Err(Error::Config("kernel width must be positive".into()));
    }
    let n = grid.len();
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    let reach = (KERNEL_SUPPORT * sigma / grid.pixel).ceil() as isize;
    let inv = 1.0 / (2.0 * sigma * sigma);
    for e in estimates {
        if !(e.tau.is_finite() && e.weight > 0.0) {
            continue;
        }
        let (fx, fz) = grid.locate(e.center[0], e.center[2]);
        let (cx, cz) = (fx.round() as isize, fz.round() as isize);
        for iz in (cz - reach).max(0)..=(cz + reach).min(grid.shape[1] as isize - 1) {
            for ix in (cx - reach).max(0)..=(cx + reach).min(grid.shape[0] as isize - 1) {
                let p = grid.position(ix as usize, iz as usize);
                let d2 = (p[0] - e.center[0]).powi(2) + (p[1] - e.center[2]).powi(2);
                if d2 > (KERNEL_SUPPORT * sigma).powi(2) {
                    continue;
                }
                let g = e.weight * (-d2 * inv).exp();
                let i = iz as usize * grid.shape[0] + ix as usize;
                num[i] += g * e.tau;
                den[i] += g;
            }
        }
    }
    let dmax = den.iter().cloned().fold(0.0, f64::max);
    let mut values = vec![MASKED; n];
    let mut mask = vec![false; n];
    for i in 0..n {
        if dmax > 0.0 && den[i] >= WEIGHT_FLOOR * dmax {
            values[i] = num[i] / den[i];
            mask[i] = true;
        }
    }
    Ok(TauMap {
        grid: *grid,
        values,
        mask,
        kernel_sigma: sigma,
        provenance: estimates.to_vec(),
        warning: if dmax > 0.0 {
            None
        } else {
            Some("no estimate reached the grid".into())
        },
    })
}

/// Accumulates speed-compensated signal magnitudes at FFP positions.
///
/// The image is `G * sum |s| / G * sum |v|` where the sums splat bilinearly onto the raster and
/// `G` is a separable Gaussian blur: every sample contributes its x-space estimate `|s|/|v|`
/// with density-compensation weight `|v|`.
#[derive(Clone, Debug)]
pub struct ImageAccumulator {
    pub grid: GridSpec,
    num: Vec<f64>,
    den: Vec<f64>,
}

impl ImageAccumulator {
    pub fn new(grid: GridSpec) -> Self {
        ImageAccumulator {
            grid,
            num: vec![0.0; grid.len()],
            den: vec![0.0; grid.len()],
        }
    }

    fn splat(&mut self, x: f64, z: f64, a: f64, b: f64) {
        let (fx, fz) = self.grid.locate(x, z);
        let (x0, z0) = (fx.floor(), fz.floor());
        let (tx, tz) = (fx - x0, fz - z0);
        for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
            for (dz, wz) in [(0, 1.0 - tz), (1, tz)] {
                let ix = x0 as isize + dx;
                let iz = z0 as isize + dz;
                if ix < 0 || iz < 0 || ix >= self.grid.shape[0] as isize || iz >= self.grid.shape[1] as isize {
                    continue;
                }
                let i = iz as usize * self.grid.shape[0] + ix as usize;
                let w = wx * wz;
                self.num[i] += w * a;
                self.den[i] += w * b;
            }
        }
    }

    pub fn add(&mut self, signal: &SampledSignal, scanner: &ScannerConfig, spec: &TrajectorySpec) -> Result<()> {
        for (i, s) in signal.samples.iter().enumerate() {
            let t = signal.t0 + i as f64 / signal.rate;
            let (p, v) = ffp_state(scanner, spec, t)
                .map_err(|_| Error::Config(format!("signal sample {i} at t = {t} s lies beyond the trajectory")))?;
            let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            self.splat(p[0], p[2], s.abs(), speed);
        }
        Ok(())
    }

    /// Adds another accumulator on the same raster.
    pub fn merge(&mut self, other: &ImageAccumulator) {
        for (a, b) in self.num.iter_mut().zip(&other.num) {
            *a += b;
        }
        for (a, b) in self.den.iter_mut().zip(&other.den) {
            *a += b;
        }
    }

    pub fn finish(&self, sigma: f64) -> ImageGrid {
        let num = gaussian_blur(&self.num, &self.grid, sigma);
        let den = gaussian_blur(&self.den, &self.grid, sigma);
        let dmax = den.iter().cloned().fold(0.0, f64::max);
        let values = num
            .iter()
            .zip(&den)
            .map(|(a, b)| {
                if dmax > 0.0 && *b > 1e-6 * dmax {
                    (a / b).max(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        ImageGrid {
            grid: self.grid,
            values,
            kernel_sigma: sigma,
        }
    }
}

fn gaussian_blur(v: &[f64], grid: &GridSpec, sigma: f64) -> Vec<f64> {
    let s = sigma / grid.pixel;
    let r = (KERNEL_SUPPORT * s).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i as f64).powi(2) / (2.0 * s * s)).exp()).collect();
    let [nx, nz] = grid.shape;
    let mut tmp = vec![0.0; v.len()];
    for iz in 0..nz {
        for ix in 0..nx {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                let x = ix as isize + j as isize - r;
                if x >= 0 && (x as usize) < nx {
                    acc += kj * v[iz * nx + x as usize];
                }
            }
            tmp[iz * nx + ix] = acc;
        }
    }
    let mut out = vec![0.0; v.len()];
    for iz in 0..nz {
        for ix in 0..nx {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                let z = iz as isize + j as isize - r;
                if z >= 0 && (z as usize) < nz {
                    acc += kj * tmp[z as usize * nx + ix];
                }
            }
            out[iz * nx + ix] = acc;
        }
    }
    out
}

/// Amplitude image of one signal along its trajectory.
pub fn reconstruct_amplitude_image(
    signal: &SampledSignal,
    scanner: &ScannerConfig,
    spec: &TrajectorySpec,
    grid: &GridSpec,
    sigma: f64,
) -> Result<ImageGrid> {
    let mut acc = ImageAccumulator::new(*grid);
    acc.add(signal, scanner, spec)?;
    Ok(acc.finish(sigma))
}

/// Masks pixels where the image falls below `threshold` of its maximum (values at the
/// threshold are kept).
pub fn mask_map(map: &TauMap, image: &ImageGrid, threshold: f64) -> Result<TauMap> {
    if map.grid.shape != image.grid.shape {
        return Err(Error::Config("tau-map and image rasters differ".into()));
    }
    let max = image.values.iter().cloned().fold(0.0, f64::max);
    let mut out = map.clone();
    for i in 0..out.values.len() {
        if !(max > 0.0 && image.values[i] >= threshold * max) {
            out.values[i] = MASKED;
            out.mask[i] = false;
        }
    }
    if !out.mask.iter().any(|m| *m) {
        out.warning = Some("every pixel is masked".into());
    }
    Ok(out)
}

/// Bilinear resampling of a tau-map onto another raster; a target pixel stays masked unless
/// all contributing source pixels are valid.
pub fn resample_bilinear(map: &TauMap, target: &GridSpec) -> TauMap {
    let g = &map.grid;
    let mut values = vec![MASKED; target.len()];
    let mut mask = vec![false; target.len()];
    for iz in 0..target.shape[1] {
        for ix in 0..target.shape[0] {
            let p = target.position(ix, iz);
            let (fx, fz) = g.locate(p[0], p[1]);
            let fx = fx.clamp(0.0, (g.shape[0] - 1) as f64);
            let fz = fz.clamp(0.0, (g.shape[1] - 1) as f64);
            let (x0, z0) = (fx.floor() as usize, fz.floor() as usize);
            let (x1, z1) = ((x0 + 1).min(g.shape[0] - 1), (z0 + 1).min(g.shape[1] - 1));
            let (tx, tz) = (fx - x0 as f64, fz - z0 as f64);
            let mut acc = 0.0;
            let mut ok = true;
            for (xx, wx) in [(x0, 1.0 - tx), (x1, tx)] {
                for (zz, wz) in [(z0, 1.0 - tz), (z1, tz)] {
                    let w = wx * wz;
                    if w == 0.0 {
                        continue;
                    }
                    let i = zz * g.shape[0] + xx;
                    if !map.mask[i] {
                        ok = false;
                    }
                    acc += w * map.values[i];
                }
            }
            if ok {
                let i = iz * target.shape[0] + ix;
                values[i] = acc;
                mask[i] = true;
            }
        }
    }
    TauMap {
        grid: *target,
        values,
        mask,
        ..map.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Colormap {
    pub tau_min: f64,
    pub tau_max: f64,
}

/// RGB color for tau: hue runs from blue at `tau_min` to red at `tau_max`.
pub fn colorize(tau: f64, cm: &Colormap) -> [f64; 3] {
    let span = cm.tau_max - cm.tau_min;
    let u = if span > 0.0 {
        ((tau - cm.tau_min) / span).clamp(0.0, 1.0)
    } else {
        0.5
    };
    hsv_to_rgb(240.0 * (1.0 - u), 1.0, 1.0)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Hue in degrees of an RGB triple; None for gray.
pub fn hue(rgb: [f64; 3]) -> Option<f64> {
    let max = rgb.iter().cloned().fold(f64::MIN, f64::max);
    let min = rgb.iter().cloned().fold(f64::MAX, f64::min);
    let d = max - min;
    if d <= 0.0 {
        return None;
    }
    let [r, g, b] = rgb;
    let h = if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    Some(h)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Overlay {
    pub shape: [usize; 2],
    pub rgb: Vec<[f64; 3]>,
    pub warning: Option<String>,
}

/// Colorized tau-map multiplied channel by channel with the normalized image.
pub fn overlay(image: &ImageGrid, map: &TauMap, cm: &Colormap) -> Result<Overlay> {
    if map.grid.shape != image.grid.shape {
        return Err(Error::Config("tau-map and image rasters differ".into()));
    }
    let max = image.values.iter().cloned().fold(0.0, f64::max);
    let rgb = map
        .values
        .iter()
        .zip(&map.mask)
        .zip(&image.values)
        .map(|((t, m), v)| {
            if !*m || !(max > 0.0) {
                return [0.0; 3];
            }
            let g = (v / max).clamp(0.0, 1.0);
            colorize(*t, cm).map(|c| c * g)
        })
        .collect();
    let warning = if cm.tau_max > cm.tau_min {
        None
    } else {
        Some("degenerate tau range, single hue".into())
    };
    Ok(Overlay {
        shape: map.grid.shape,
        rgb,
        warning,
    })
}

#[derive(Serialize)]
struct RasterSidecar<'a> {
    shape: [usize; 2],
    layout: &'a str,
    pixel_size_m: f64,
    origin_m: [f64; 2],
    units: &'a str,
    dtype: &'a str,
    kernel_sigma_m: f64,
    masked_value: &'a str,
}

/// Writes little-endian f32 samples plus a JSON sidecar at `path` with extension `.json`.
pub fn write_raster(path: &Path, values: &[f64], grid: &GridSpec, units: &str, kernel_sigma: f64) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in values {
        f.write_all(&(*v as f32).to_le_bytes())?;
    }
    f.flush()?;
    let side = RasterSidecar {
        shape: grid.shape,
        layout: "row-major, rows along z, columns along x",
        pixel_size_m: grid.pixel,
        origin_m: grid.origin,
        units,
        dtype: "float32-le",
        kernel_sigma_m: kernel_sigma,
        masked_value: "NaN",
    };
    let json = serde_json::to_string_pretty(&side).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path.with_extension("json"), json)?;
    Ok(())
}

/// 8-bit RGB PNG with z increasing upward.
pub fn write_png(path: &Path, ov: &Overlay) -> Result<()> {
    let [nx, nz] = ov.shape;
    let mut img = image::RgbImage::new(nx as u32, nz as u32);
    for iz in 0..nz {
        for ix in 0..nx {
            let c = ov.rgb[iz * nx + ix].map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
            img.put_pixel(ix as u32, (nz - 1 - iz) as u32, image::Rgb(c));
        }
    }
    img.save(path).map_err(|e| Error::Config(format!("png: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec {
            origin: [0.0, 0.0],
            pixel: 1e-4,
            shape: [21, 21],
        }
    }

    fn est(x: f64, z: f64, tau: f64, w: f64) -> TauEstimate {
        TauEstimate {
            center: [x, 0.0, z],
            tau,
            weight: w,
        }
    }

    #[test]
    fn single_estimate_on_node() {
        let m = estimates_to_map(&[est(1e-3, 1e-3, 2.5e-6, 3.0)], &grid(), 8e-4, KernelScale::Quarter).unwrap();
        assert_eq!(m.values[10 * 21 + 10], 2.5e-6);
        assert_eq!(m.kernel_sigma, 2e-4);
        assert!(m.mask[10 * 21 + 11]);
        assert!(!m.mask[0]);
        assert!(m.values[0].is_nan());
    }

    #[test]
    fn equal_estimates_fill_equal() {
        let e: Vec<_> = (0..7)
            .map(|i| est(i as f64 * 3e-4, 1e-3, 3e-6, 1.0 + i as f64))
            .collect();
        let m = estimates_to_map(&e, &grid(), 1e-3, KernelScale::Image).unwrap();
        for (v, k) in m.values.iter().zip(&m.mask) {
            if *k {
                assert!((v / 3e-6 - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equidistant_pair_gives_mean() {
        let e = [est(0.8e-3, 1e-3, 2e-6, 1.0), est(1.2e-3, 1e-3, 4e-6, 1.0)];
        let m = estimates_to_map(&e, &grid(), 1e-3, KernelScale::Image).unwrap();
        assert!((m.values[10 * 21 + 10] - 3e-6).abs() < 1e-18);
    }

    #[test]
    fn weight_scale_invariance() {
        let e = [est(0.3e-3, 1e-3, 2e-6, 1.0), est(1.2e-3, 0.7e-3, 4e-6, 2.5)];
        let e2: Vec<_> = e
            .iter()
            .map(|x| TauEstimate {
                weight: x.weight * 1e7,
                ..*x
            })
            .collect();
        let a = estimates_to_map(&e, &grid(), 1e-3, KernelScale::Image).unwrap();
        let b = estimates_to_map(&e2, &grid(), 1e-3, KernelScale::Image).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!(x.is_nan() && y.is_nan() || (x - y).abs() <= 1e-12 * x.abs());
        }
        assert!(estimates_to_map(&[], &grid(), 1e-3, KernelScale::Image).is_err());
    }

    #[test]
    fn nn_spacing() {
        let pts: Vec<[f64; 2]> = (0..30)
            .flat_map(|i| (0..20).map(move |j| [i as f64 * 1e-3, j as f64 * 2e-4]))
            .collect();
        assert!((median_nn_spacing(&pts).unwrap() - 2e-4).abs() < 1e-12);
        let dup = vec![[0.0, 0.0], [0.0, 0.0], [1e-3, 0.0]];
        assert!((median_nn_spacing(&dup).unwrap() - 1e-3).abs() < 1e-15);
    }

    fn image(values: Vec<f64>) -> ImageGrid {
        ImageGrid {
            grid: grid(),
            values,
            kernel_sigma: 1.0,
        }
    }

    #[test]
    fn mask_threshold_inclusive() {
        let m = estimates_to_map(&[est(1e-3, 1e-3, 2e-6, 1.0)], &grid(), 2e-3, KernelScale::Image).unwrap();
        let mut v = vec![1.0; 441];
        v[220] = 0.1;
        v[221] = 0.09;
        let out = mask_map(&m, &image(v), 0.10).unwrap();
        assert!(out.mask[220] && !out.mask[221]);
        assert_eq!(out.values[220], m.values[220]);
        let all = mask_map(&m, &image(vec![1.0; 441]), 0.1).unwrap();
        assert_eq!(all.mask, m.mask);
        let none = mask_map(&m, &image(vec![0.0; 441]), 0.1).unwrap();
        assert!(none.mask.iter().all(|k| !k) && none.warning.is_some());
    }

    #[test]
    fn overlay_identities() {
        let e: Vec<_> = (0..21)
            .map(|i| est(i as f64 * 1e-4, 1e-3, 2e-6 + i as f64 * 1e-7, 1.0))
            .collect();
        let m = estimates_to_map(&e, &grid(), 2e-3, KernelScale::Image).unwrap();
        let cm = Colormap {
            tau_min: 2e-6,
            tau_max: 4e-6,
        };
        let white = overlay(&image(vec![1.0; 441]), &m, &cm).unwrap();
        for i in 0..441 {
            if m.mask[i] {
                assert_eq!(white.rgb[i], colorize(m.values[i], &cm));
            }
            assert!(white.rgb[i].iter().all(|c| (0.0..=1.0).contains(c)));
        }
        let black = overlay(&image(vec![0.0; 441]), &m, &cm).unwrap();
        assert!(black.rgb.iter().all(|c| *c == [0.0; 3]));
        let flat = overlay(
            &image(vec![1.0; 441]),
            &m,
            &Colormap {
                tau_min: 3e-6,
                tau_max: 3e-6,
            },
        )
        .unwrap();
        assert!(flat.warning.is_some());
    }

    #[test]
    fn hue_is_monotone_in_tau() {
        let cm = Colormap {
            tau_min: 2e-6,
            tau_max: 4e-6,
        };
        let hs: Vec<f64> = (0..=10)
            .map(|i| hue(colorize(2e-6 + i as f64 * 2e-7, &cm)).unwrap())
            .collect();
        assert!(hs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn bilinear_reproduces_plane() {
        let g = GridSpec {
            origin: [0.0, 0.0],
            pixel: 1e-3,
            shape: [5, 4],
        };
        let values: Vec<f64> = (0..20).map(|i| (i % 5) as f64 * 2.0 + (i / 5) as f64).collect();
        let m = TauMap {
            grid: g,
            values,
            mask: vec![true; 20],
            kernel_sigma: 1.0,
            provenance: vec![],
            warning: None,
        };
        let t = GridSpec {
            origin: [0.0, 0.0],
            pixel: 0.25e-3,
            shape: [17, 13],
        };
        let r = resample_bilinear(&m, &t);
        for iz in 0..13 {
            for ix in 0..17 {
                let want = ix as f64 * 0.25 * 2.0 + iz as f64 * 0.25;
                assert!((r.values[iz * 17 + ix] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_signal_zero_image() {
        let sc = ScannerConfig::default();
        let spec = TrajectorySpec::ramp(&sc, [0.0; 3], [0.0; 3], 1e-3);
        let s = SampledSignal {
            samples: vec![0.0; 2000],
            rate: 2e6,
            t0: 0.0,
        };
        let g = GridSpec::covering(0.01, 0.02, 2e-4);
        let img = reconstruct_amplitude_image(&s, &sc, &spec, &g, 8e-4).unwrap();
        assert!(img.values.iter().all(|v| *v == 0.0));
        let long = SampledSignal {
            samples: vec![0.0; 2100],
            rate: 2e6,
            t0: 0.0,
        };
        assert!(reconstruct_amplitude_image(&long, &sc, &spec, &g, 8e-4).is_err());
    }
}
