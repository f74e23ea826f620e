use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported operating point: {speed_khz} kHz at {supply} V (very unreliable bus communication)")]
    UnsupportedOperatingPoint { speed_khz: u32, supply: f64 },

    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("time went backwards: {prev} -> {next}")]
    NonMonotoneTime { prev: u64, next: u64 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("malformed trace: {0}")]
    Format(String),

    #[error("malformed power-mode events: {0}")]
    Events(String),

    #[error("rank-deficient fit input: {0}")]
    RankDeficient(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("writer cannot keep up: flush takes {t_wb} s but a buffer fills in {t_b} s")]
    SustainedOverrun { t_wb: f64, t_b: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("writer thread failed: {0}")]
    Writer(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
