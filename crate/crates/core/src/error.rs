use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("waveform has {len} samples, shorter than one {window}-sample analysis window")]
    WaveformTooShort { len: usize, window: usize },

    #[error("zero divisor at frame {frame}, band {band}")]
    ZeroDivisor { frame: usize, band: usize },

    #[error("nonpositive magnitude {value} at frame {frame}, band {band}")]
    NonPositive {
        frame: usize,
        band: usize,
        value: f64,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("clip {clip_id}: distance {distance} m falls outside every distance bin")]
    OutsideBins { clip_id: String, distance: f64 },

    #[error("distance bin [{lo}, {hi}) m holds {count} clips; calibration needs at least 2")]
    TooFewClips { lo: f64, hi: f64, count: usize },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::ZeroDivisor { .. } | Error::NonPositive { .. })
    }

    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Wav(_) | Error::Json(_) | Error::Format { .. }
        )
    }
}
