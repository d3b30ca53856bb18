use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("time {t} s outside trajectory domain [0, {end}] s")]
    Domain { t: f64, end: f64 },

    #[error("period index {index} out of range (trajectory has {count} periods)")]
    PeriodIndex { index: usize, count: usize },

    #[error("drive dominance violated: Bp*2*pi*fd = {drive} T/s does not exceed |slew| = {slew} T/s")]
    Dominance { drive: f64, slew: f64 },

    #[error("the shift equation has no root for slew {slew} T/s")]
    NoShiftRoot { slew: f64 },

    #[error("signal too short: {0}")]
    TooShort(String),

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("filter cutoff {cutoff} Hz must lie below Nyquist {nyquist} Hz")]
    Cutoff { cutoff: f64, nyquist: f64 },

    #[error("timing search has multiple equal minima at offsets {0:?} s")]
    AmbiguousTiming(Vec<f64>),

    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
