use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use taurus::harness::{self, ExperimentConfig, SweepResult};
use taurus::mapping::{self, Colormap, GridSpec, KernelScale};
use taurus::physics::NoiseSpec;
use taurus::trajectory::TrajectoryKind;

#[derive(Parser)]
#[command(name = "taurus", version, about = "Relaxation-time estimation for color MPI")]
struct Cli {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Full-size repetition counts and rasters.
    #[arg(long, global = true)]
    full_scale: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the configured trajectory and write a signal file with its sidecar.
    Simulate {
        /// Peak-to-noise ratio; noise-free when omitted.
        #[arg(long)]
        snr: Option<f64>,
        /// File name inside the output directory.
        #[arg(long, default_value = "signal.bin")]
        name: String,
    },
    /// Estimate every period of a signal file.
    Estimate {
        /// Signal file as written by `simulate`.
        signal: PathBuf,
        /// Sidecar; defaults to the signal path with a .json extension.
        #[arg(long)]
        metadata: Option<PathBuf>,
    },
    /// Noise-free slew-rate sweep over all correction variants.
    SweepSr,
    /// Monte Carlo noise study.
    SweepNoise,
    /// Error against the replication count.
    NrepStudy,
    /// Color-phantom runs for the configured trajectories.
    Phantom {
        /// Restrict to one trajectory: pwt, llt or 2dtt.
        #[arg(long)]
        kind: Option<String>,
    },
    /// Grid a per-period estimate CSV into a tau-map raster.
    Map {
        estimates: PathBuf,
        /// Field of view along x, m, centered on the origin.
        #[arg(long, default_value_t = 0.05)]
        fov_x: f64,
        /// Field of view along z, m.
        #[arg(long, default_value_t = 0.06)]
        fov_z: f64,
        /// Pixel pitch, m.
        #[arg(long, default_value_t = 1e-4)]
        pixel: f64,
    },
}

fn parse_kind(s: &str) -> Result<TrajectoryKind> {
    Ok(match s {
        "pwt" => TrajectoryKind::Pwt,
        "llt" => TrajectoryKind::Llt,
        "2dtt" => TrajectoryKind::TriangleRaster2D,
        _ => bail!("unknown trajectory {s}"),
    })
}

fn write_sweep(dir: &Path, name: &str, hash: &str, r: &SweepResult) -> Result<()> {
    let path = dir.join(name);
    harness::write_csv(&path, hash, &r.rows)?;
    eprintln!(
        "{} rows over {} cells in {:.1} s -> {}",
        r.rows.len(),
        r.cell_count(),
        r.wall_time,
        path.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.noise.base_seed = s;
    }
    if cli.full_scale {
        cfg.full_scale();
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    cfg.validate()?;
    let out = cfg.output.clone();
    std::fs::create_dir_all(&out)?;
    let hash = cfg.hash();
    std::fs::write(out.join("config.toml"), cfg.to_toml())?;

    match cli.cmd {
        Cmd::Simulate { snr, name } => {
            let noise = snr.map(|snr| NoiseSpec {
                snr,
                seed: cfg.noise.base_seed,
            });
            let (sig, meta) = harness::simulate(&cfg, noise)?;
            let path = out.join(name);
            harness::write_signal(&path, &sig, Some(&meta))?;
            eprintln!("{} samples at {} S/s -> {}", sig.len(), sig.rate, path.display());
        }
        Cmd::Estimate { signal, metadata } => {
            let meta = metadata.unwrap_or_else(|| harness::sidecar_path(&signal));
            let csv = out.join("estimates.csv");
            let res = harness::estimate_from_file(&signal, &meta, &cfg, Some(&csv))?;
            eprintln!(
                "{} periods, timing offset {:.3e} s -> {}",
                res.estimates.len(),
                res.timing_offset,
                csv.display()
            );
        }
        Cmd::SweepSr => write_sweep(&out, "sweep_sr.csv", &hash, &harness::run_sr_sweep(&cfg)?)?,
        Cmd::SweepNoise => write_sweep(&out, "sweep_noise.csv", &hash, &harness::run_noise_mc(&cfg)?)?,
        Cmd::NrepStudy => write_sweep(&out, "nrep_study.csv", &hash, &harness::run_nrep_study(&cfg)?)?,
        Cmd::Phantom { kind } => {
            let kinds = match kind {
                Some(k) => vec![parse_kind(&k)?],
                None => cfg.phantom.kinds.clone(),
            };
            for k in kinds {
                let r = harness::run_phantom(&cfg, k)?;
                harness::export_phantom(&r, &out, &hash)?;
                eprintln!(
                    "{}: mean patch error {:.2}%, hue ordered {}, {} periods, {:.1} s",
                    harness::kind_name(k),
                    r.mean_err,
                    r.hue_ordered,
                    r.simulated_periods,
                    r.wall_time
                );
            }
        }
        Cmd::Map {
            estimates,
            fov_x,
            fov_z,
            pixel,
        } => {
            let est = harness::read_estimates_csv(&estimates)?;
            let grid = GridSpec::covering(fov_x, fov_z, pixel);
            let centers: Vec<[f64; 2]> = est.iter().map(|e| [e.center[0], e.center[2]]).collect();
            let sigma = mapping::image_kernel_sigma(&centers, pixel);
            let map = mapping::estimates_to_map(&est, &grid, sigma, KernelScale::Quarter)?;
            mapping::write_raster(&out.join("tau.f32"), &map.values, &grid, "s", map.kernel_sigma)?;
            // weights stand in for the amplitude image when no signal is at hand
            let weights = mapping::estimates_to_map(
                &est.iter()
                    .map(|e| mapping::TauEstimate {
                        tau: e.weight,
                        weight: 1.0,
                        ..*e
                    })
                    .collect::<Vec<_>>(),
                &grid,
                sigma,
                KernelScale::Image,
            )?;
            let image = mapping::ImageGrid {
                grid,
                values: weights
                    .values
                    .iter()
                    .map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 })
                    .collect(),
                kernel_sigma: sigma,
            };
            let masked = mapping::mask_map(&map, &image, cfg.phantom.mask_threshold)?;
            let mut valid: Vec<f64> = masked.values.iter().cloned().filter(|v| v.is_finite()).collect();
            valid.sort_by(f64::total_cmp);
            if valid.is_empty() {
                bail!("every pixel is masked");
            }
            let cm = Colormap {
                tau_min: valid[valid.len() / 50],
                tau_max: valid[valid.len() - 1 - valid.len() / 50],
            };
            let ov = mapping::overlay(&image, &masked, &cm)?;
            mapping::write_png(&out.join("overlay.png"), &ov)?;
            eprintln!(
                "{} estimates gridded with sigma {:.3e} m -> {}",
                est.len(),
                map.kernel_sigma,
                out.display()
            );
        }
    }
    Ok(())
}
