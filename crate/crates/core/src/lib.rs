//! Per-channel energy normalization (PCEN) and spectral-flux novelty
//! functions for detecting sound events in long field recordings.
//!
//! The pipeline is `frontend` (waveform to magnitude spectrogram) →
//! `pcen` (adaptive gain control) → `novelty` (one detection value per
//! frame) → `evaluation` (mean time between false alarms at 50% recall).
//! `synthesis` generates calls and noise with spherical spreading,
//! atmospheric absorption and amplitude-modulated engine noise so the whole
//! chain can be exercised without field data.

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod frontend;
pub mod io;
pub mod novelty;
pub mod pcen;
pub mod synthesis;

pub use error::{Error, Result};
pub use frontend::{FreqScale, Spectrogram, SpectrogramConfig, Waveform};
pub use novelty::{Detector, NoveltyCurve};
pub use pcen::PcenParams;
