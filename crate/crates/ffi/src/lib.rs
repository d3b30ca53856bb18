//! C ABI over the taurus estimator.
//!
//! Every function returns a `TaurusStatus`; results go through out-pointers. On failure the
//! message is kept per thread and can be copied out with `taurus_last_error`. Handles are
//! opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use taurus::error::Error;
use taurus::estimator::{self, CorrectionMode, EstimatorConfig, HalfCyclePair, Method, SrCorrection};
use taurus::harness::{self, ExperimentConfig};
use taurus::physics::{self, SampledSignal};
use taurus::trajectory::ScannerConfig;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaurusStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Domain = 4,
    Dominance = 5,
    NoShiftRoot = 6,
    TooShort = 7,
    Degenerate = 8,
    AmbiguousTiming = 9,
    Parse = 10,
    Io = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaurusMethod {
    Taurus = 0,
    Wls = 1,
}

/// Slew-rate correction applied to the negative half-cycle.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaurusCorrection {
    /// Time shift, s.
    pub dt: f64,
    /// Speed ratio.
    pub alpha: f64,
    /// Quarter-period reference, s.
    pub t0: f64,
    /// Focus-field slew, T/s.
    pub slew: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaurusPeriodEstimate {
    pub period: usize,
    /// pFOV center (x, y, z) in m; NaN when the trajectory is unknown.
    pub center: [f64; 3],
    pub tau: f64,
    pub weight: f64,
    pub mirror_mse: f64,
}

/// Scanner parameters.
pub struct TaurusScanner(ScannerConfig);

/// Experiment configuration.
pub struct TaurusConfig(ExperimentConfig);

/// Per-period estimates of one signal.
pub struct TaurusEstimates {
    items: Vec<TaurusPeriodEstimate>,
    timing_offset: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul bytes were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TaurusStatus {
    match e {
        Error::Config(_) => TaurusStatus::Config,
        Error::Domain { .. } | Error::PeriodIndex { .. } => TaurusStatus::Domain,
        Error::Dominance { .. } => TaurusStatus::Dominance,
        Error::NoShiftRoot { .. } => TaurusStatus::NoShiftRoot,
        Error::TooShort(_) => TaurusStatus::TooShort,
        Error::Degenerate(_) => TaurusStatus::Degenerate,
        Error::Cutoff { .. } => TaurusStatus::Config,
        Error::AmbiguousTiming(_) => TaurusStatus::AmbiguousTiming,
        Error::Parse { .. } => TaurusStatus::Parse,
        Error::Io(_) => TaurusStatus::Io,
    }
}

struct Fail(TaurusStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(TaurusStatus::InvalidArgument, msg.to_string())
}

/// Runs `f`, records its error message and converts panics into `Panic`.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TaurusStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TaurusStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TaurusStatus::Panic
        }
    }
}

fn nonnull<T>(p: *const T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(TaurusStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null-checked and point to a nul-terminated string valid for the call.
unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, Fail> {
    nonnull(p, what)?;
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(&format!("{what} is not UTF-8")))?;
    Ok(Path::new(s))
}

/// # Safety
/// `p` must point to `n` readable doubles when `n > 0`.
unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    nonnull(p, what)?;
    Ok(std::slice::from_raw_parts(p, n))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn taurus_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated, always
/// nul-terminated when `len > 0`) and returns the full message length excluding the nul.
/// Returns 0 when no error has been recorded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn taurus_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Default scanner: G = (-4.8, 2.4, 2.4) T/m, Bp = 15 mT, fd = 10 kHz, 100 MS/s simulation
/// and 2 MS/s acquisition.
#[no_mangle]
pub extern "C" fn taurus_scanner_default() -> *mut TaurusScanner {
    Box::into_raw(Box::new(TaurusScanner(ScannerConfig::default())))
}

/// Validated scanner from explicit parameters.
///
/// # Safety
/// `gradients` must point to 3 doubles and `out` to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn taurus_scanner_new(
    gradients: *const f64,
    drive_amplitude: f64,
    drive_frequency: f64,
    oversample_rate: f64,
    sample_rate: f64,
    out: *mut *mut TaurusScanner,
) -> TaurusStatus {
    guard(|| {
        nonnull(out, "out")?;
        let g = slice_arg(gradients, 3, "gradients")?;
        let sc = ScannerConfig {
            gradients: [g[0], g[1], g[2]],
            drive_amplitude,
            drive_frequency,
            oversample_rate,
            sample_rate,
        };
        sc.validate()?;
        *out = Box::into_raw(Box::new(TaurusScanner(sc)));
        Ok(())
    })
}

/// # Safety
/// `scanner` must be null or a handle from `taurus_scanner_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn taurus_scanner_free(scanner: *mut TaurusScanner) {
    if !scanner.is_null() {
        drop(Box::from_raw(scanner));
    }
}

/// Built-in experiment defaults.
#[no_mangle]
pub extern "C" fn taurus_config_default() -> *mut TaurusConfig {
    Box::into_raw(Box::new(TaurusConfig(ExperimentConfig::default())))
}

/// Parses a TOML experiment configuration; parse errors report a byte offset.
///
/// # Safety
/// `toml` must be a nul-terminated string and `out` writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn taurus_config_from_toml(toml: *const c_char, out: *mut *mut TaurusConfig) -> TaurusStatus {
    guard(|| {
        nonnull(out, "out")?;
        nonnull(toml, "toml")?;
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|_| invalid("config is not UTF-8"))?;
        let cfg = ExperimentConfig::from_toml(text)?;
        cfg.validate()?;
        *out = Box::into_raw(Box::new(TaurusConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle from `taurus_config_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn taurus_config_free(config: *mut TaurusConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Time shift and speed ratio that undo a focus-field slew of `slew` T/s.
///
/// # Safety
/// `scanner` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn taurus_sr_correction(
    scanner: *const TaurusScanner,
    slew: f64,
    out: *mut TaurusCorrection,
) -> TaurusStatus {
    guard(|| {
        nonnull(scanner, "scanner")?;
        nonnull(out, "out")?;
        let c = estimator::sr_correction_params(&(*scanner).0, slew)?;
        *out = TaurusCorrection {
            dt: c.dt,
            alpha: c.alpha,
            t0: c.t0,
            slew: c.slew,
        };
        Ok(())
    })
}

/// Estimates tau from one pair of half-cycles of `n` samples each at `rate`. A null
/// `correction` means no slew-rate correction.
///
/// # Safety
/// `neg` and `pos` must point to `n` doubles, `correction` must be null or valid, and
/// `tau_out` writable.
#[no_mangle]
pub unsafe extern "C" fn taurus_estimate_pair(
    neg: *const f64,
    pos: *const f64,
    n: usize,
    rate: f64,
    correction: *const TaurusCorrection,
    n_rep: usize,
    method: TaurusMethod,
    tau_out: *mut f64,
) -> TaurusStatus {
    guard(|| {
        nonnull(tau_out, "tau_out")?;
        if n == 0 {
            return Err(invalid("half-cycles are empty"));
        }
        let neg = SampledSignal::new(slice_arg(neg, n, "neg")?.to_vec(), rate, 0.0)?;
        let pos = SampledSignal::new(slice_arg(pos, n, "pos")?.to_vec(), rate, 0.0)?;
        let c = if correction.is_null() {
            SrCorrection::identity()
        } else {
            let c = *correction;
            SrCorrection {
                dt: c.dt,
                alpha: c.alpha,
                t0: c.t0,
                slew: c.slew,
            }
        };
        let cfg = EstimatorConfig {
            n_rep,
            method: match method {
                TaurusMethod::Taurus => Method::Taurus,
                TaurusMethod::Wls => Method::Wls,
            },
            timing_offset: 0.0,
            correction: CorrectionMode::Full,
        };
        let pair = HalfCyclePair {
            neg,
            pos,
            period: 0,
            center: None,
        };
        *tau_out = estimator::estimate_pair(&pair, &c, &cfg)?.tau;
        Ok(())
    })
}

/// Convolves `n` samples with the normalized Debye kernel of time constant `tau`.
///
/// # Safety
/// `input` and `output` must each point to `n` doubles; they may alias.
#[no_mangle]
pub unsafe extern "C" fn taurus_apply_relaxation(
    input: *const f64,
    n: usize,
    rate: f64,
    tau: f64,
    output: *mut f64,
) -> TaurusStatus {
    guard(|| {
        nonnull(output, "output")?;
        let s = SampledSignal::new(slice_arg(input, n, "input")?.to_vec(), rate, 0.0)?;
        let r = physics::apply_relaxation(&s, tau);
        ptr::copy_nonoverlapping(r.samples.as_ptr(), output, n);
        Ok(())
    })
}

/// Inverts `taurus_apply_relaxation`.
///
/// # Safety
/// `input` and `output` must each point to `n` doubles; they may alias.
#[no_mangle]
pub unsafe extern "C" fn taurus_deconvolve(
    input: *const f64,
    n: usize,
    rate: f64,
    tau: f64,
    output: *mut f64,
) -> TaurusStatus {
    guard(|| {
        nonnull(output, "output")?;
        let s = SampledSignal::new(slice_arg(input, n, "input")?.to_vec(), rate, 0.0)?;
        let r = estimator::deconvolve(&s, tau);
        ptr::copy_nonoverlapping(r.samples.as_ptr(), output, n);
        Ok(())
    })
}

/// Estimates every period of a signal file described by its JSON sidecar. `csv_path` may be
/// null; otherwise the per-period table is written there.
///
/// # Safety
/// `config` must be a live handle, the paths nul-terminated strings (or null for
/// `csv_path`) and `out` writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn taurus_estimate_file(
    config: *const TaurusConfig,
    signal_path: *const c_char,
    metadata_path: *const c_char,
    csv_path: *const c_char,
    out: *mut *mut TaurusEstimates,
) -> TaurusStatus {
    guard(|| {
        nonnull(config, "config")?;
        nonnull(out, "out")?;
        let signal = path_arg(signal_path, "signal_path")?;
        let meta = path_arg(metadata_path, "metadata_path")?;
        let csv = if csv_path.is_null() {
            None
        } else {
            Some(path_arg(csv_path, "csv_path")?)
        };
        let res = harness::estimate_from_file(signal, meta, &(*config).0, csv)?;
        let items = res
            .estimates
            .iter()
            .map(|e| TaurusPeriodEstimate {
                period: e.period,
                center: e.center.unwrap_or([f64::NAN; 3]),
                tau: e.tau,
                weight: e.weight,
                mirror_mse: e.mirror_mse,
            })
            .collect();
        *out = Box::into_raw(Box::new(TaurusEstimates {
            items,
            timing_offset: res.timing_offset,
        }));
        Ok(())
    })
}

/// Number of periods in an estimate set; 0 for null.
///
/// # Safety
/// `estimates` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn taurus_estimates_len(estimates: *const TaurusEstimates) -> usize {
    if estimates.is_null() {
        0
    } else {
        (*estimates).items.len()
    }
}

/// Timing offset removed before estimation, s; NaN for null.
///
/// # Safety
/// `estimates` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn taurus_estimates_timing_offset(estimates: *const TaurusEstimates) -> f64 {
    if estimates.is_null() {
        f64::NAN
    } else {
        (*estimates).timing_offset
    }
}

/// # Safety
/// `estimates` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn taurus_estimates_get(
    estimates: *const TaurusEstimates,
    index: usize,
    out: *mut TaurusPeriodEstimate,
) -> TaurusStatus {
    guard(|| {
        nonnull(estimates, "estimates")?;
        nonnull(out, "out")?;
        let items = &(*estimates).items;
        *out = *items.get(index).ok_or_else(|| {
            Fail(
                TaurusStatus::Domain,
                format!("index {index} beyond {} periods", items.len()),
            )
        })?;
        Ok(())
    })
}

/// # Safety
/// `estimates` must be null or a handle from `taurus_estimate_file` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn taurus_estimates_free(estimates: *mut TaurusEstimates) {
    if !estimates.is_null() {
        drop(Box::from_raw(estimates));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let mut buf = vec![0 as c_char; 256];
        let n = unsafe { taurus_last_error(buf.as_mut_ptr(), buf.len()) };
        let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned();
        assert_eq!(n, s.len());
        s
    }

    #[test]
    fn null_out_pointer_is_reported() {
        let sc = taurus_scanner_default();
        let st = unsafe { taurus_sr_correction(sc, 20.0, ptr::null_mut()) };
        assert_eq!(st, TaurusStatus::NullPointer);
        assert_eq!(last_error(), "out is null");
        unsafe { taurus_scanner_free(sc) };
    }

    #[test]
    fn error_message_truncates() {
        let bad = CString::new("[scanner\n").unwrap();
        let st = unsafe { taurus_config_from_toml(bad.as_ptr(), &mut ptr::null_mut()) };
        assert_eq!(st, TaurusStatus::Parse);
        let mut buf = [0 as c_char; 8];
        let n = unsafe { taurus_last_error(buf.as_mut_ptr(), buf.len()) };
        assert!(n > 7);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes().len(), 7);
    }

    #[test]
    fn version_is_terminated() {
        let v = unsafe { CStr::from_ptr(taurus_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
