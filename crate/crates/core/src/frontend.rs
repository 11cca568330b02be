//! Waveform to magnitude spectrogram.
//!
//! Frames start at sample 0 with no centering or padding, so a waveform of
//! `len` samples yields `(len - window_length) / hop_length + 1` frames. Each
//! frame is tapered with a periodic Hann window (no amplitude compensation),
//! zero-padded to `n_fft` and transformed; entries are DFT magnitudes, not
//! powers, so the spectrogram is positively homogeneous in the waveform.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mono audio at a fixed sample rate, full scale ±1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_sec(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|x| x * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Sample-wise sum; the shorter waveform is treated as zero-extended.
    pub fn mix(&self, other: &Waveform) -> Result<Self> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::config(format!(
                "cannot mix {} Hz with {} Hz audio",
                self.sample_rate, other.sample_rate
            )));
        }
        let len = self.len().max(other.len());
        let samples = (0..len)
            .map(|i| {
                self.samples.get(i).copied().unwrap_or(0.0)
                    + other.samples.get(i).copied().unwrap_or(0.0)
            })
            .collect();
        Ok(Self {
            samples,
            sample_rate: self.sample_rate,
        })
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub(crate) fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreqScale {
    Linear,
    Mel,
}

impl std::str::FromStr for FreqScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(FreqScale::Linear),
            "mel" => Ok(FreqScale::Mel),
            other => Err(Error::config(format!(
                "unknown frequency scale {other:?} (expected linear or mel)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramConfig {
    pub sample_rate: u32,
    pub window_length: usize,
    pub hop_length: usize,
    /// Transform size; frames are zero-padded from `window_length` up to it.
    pub n_fft: usize,
    pub window: WindowKind,
    pub n_bands: usize,
    pub freq_scale: FreqScale,
    pub fmin: f64,
    pub fmax: f64,
}

impl SpectrogramConfig {
    /// Bird flight calls: 128 mel bands over 2-11.025 kHz, 12 ms Hann
    /// window, 1.5 ms hop at 22.05 kHz.
    ///
    /// The transform is zero-padded to 512 points; at 256 points the lowest
    /// mel triangles fall between FFT bins and come out empty.
    pub fn avian() -> Self {
        Self {
            sample_rate: 22_050,
            window_length: 256,
            hop_length: 32,
            n_fft: 512,
            window: WindowKind::Hann,
            n_bands: 128,
            freq_scale: FreqScale::Mel,
            fmin: 2_000.0,
            fmax: 11_025.0,
        }
    }

    /// Whale calls: 128 linear STFT bins over 8 Hz-1 kHz, 128 ms Hann window,
    /// 64 ms hop at 2 kHz.
    pub fn marine() -> Self {
        Self {
            sample_rate: 2_000,
            window_length: 256,
            hop_length: 128,
            n_fft: 256,
            window: WindowKind::Hann,
            n_bands: 128,
            freq_scale: FreqScale::Linear,
            fmin: 8.0,
            fmax: 1_000.0,
        }
    }

    pub fn nyquist(&self) -> f64 {
        f64::from(self.sample_rate) / 2.0
    }

    pub fn frame_rate(&self) -> f64 {
        f64::from(self.sample_rate) / self.hop_length as f64
    }

    pub fn n_fft_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frame count for a waveform of `len` samples, or `None` if shorter
    /// than one window.
    pub fn n_frames(&self, len: usize) -> Option<usize> {
        (len >= self.window_length).then(|| (len - self.window_length) / self.hop_length + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::config("sample_rate must be positive"));
        }
        if self.window_length == 0 {
            return Err(Error::config("window_length must be positive"));
        }
        if self.hop_length == 0 || self.hop_length > self.window_length {
            return Err(Error::config(format!(
                "hop_length {} must lie in 1..={}",
                self.hop_length, self.window_length
            )));
        }
        if self.n_fft < self.window_length.max(2) {
            return Err(Error::config(format!(
                "n_fft {} is smaller than window_length {}",
                self.n_fft, self.window_length
            )));
        }
        if self.n_bands == 0 {
            return Err(Error::config("n_bands must be at least 1"));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax) {
            return Err(Error::config(format!(
                "need 0 <= fmin < fmax, got fmin={} fmax={}",
                self.fmin, self.fmax
            )));
        }
        if self.fmax > self.nyquist() {
            return Err(Error::config(format!(
                "fmax {} Hz exceeds the Nyquist frequency {} Hz",
                self.fmax,
                self.nyquist()
            )));
        }
        Ok(())
    }

    /// First FFT bin and bin count kept on the linear scale: the bins
    /// nearest to `fmin` and `fmax` and everything in between.
    pub fn linear_bins(&self) -> Result<(usize, usize)> {
        let df = f64::from(self.sample_rate) / self.n_fft as f64;
        let lo = (self.fmin / df).round() as usize;
        let hi = ((self.fmax / df).round() as usize).min(self.n_fft / 2);
        let count = hi + 1 - lo;
        if count != self.n_bands {
            return Err(Error::config(format!(
                "{}-{} Hz spans FFT bins {lo}..={hi} ({count} bins) at n_fft={}, \
                 but n_bands={}",
                self.fmin, self.fmax, self.n_fft, self.n_bands
            )));
        }
        Ok((lo, count))
    }
}

/// Nonnegative magnitudes indexed by (frame, band).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    values: Array2<f64>,
    frame_rate: f64,
    config: Option<SpectrogramConfig>,
}

impl Spectrogram {
    /// Wraps a precomputed magnitude matrix, e.g. one built analytically.
    pub fn from_values(values: Array2<f64>, frame_rate: f64) -> Result<Self> {
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::config(format!(
                "frame rate {frame_rate} must be positive"
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::config("spectrogram needs at least one band"));
        }
        if let Some(((t, f), v)) = values
            .indexed_iter()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::NonPositive {
                frame: t,
                band: f,
                value: *v,
            });
        }
        Ok(Self {
            values,
            frame_rate,
            config: None,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_bands(&self) -> usize {
        self.values.ncols()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn config(&self) -> Option<&SpectrogramConfig> {
        self.config.as_ref()
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.values.row(t)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        assert!(gain >= 0.0, "spectrogram gain must be nonnegative");
        Self {
            values: &self.values * gain,
            frame_rate: self.frame_rate,
            config: self.config.clone(),
        }
    }
}

const MIN_LOG_HZ: f64 = 1_000.0;
const LINEAR_HZ_PER_MEL: f64 = 200.0 / 3.0;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz >= MIN_LOG_HZ {
        MIN_LOG_HZ / LINEAR_HZ_PER_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    } else {
        hz / LINEAR_HZ_PER_MEL
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    let min_log_mel = MIN_LOG_HZ / LINEAR_HZ_PER_MEL;
    if mel >= min_log_mel {
        MIN_LOG_HZ * (log_step() * (mel - min_log_mel)).exp()
    } else {
        mel * LINEAR_HZ_PER_MEL
    }
}

/// Triangular mel filters stored as contiguous nonzero runs.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    n_fft_bins: usize,
    centers_hz: Vec<f64>,
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    pub fn new(cfg: &SpectrogramConfig, n_fft_bins: usize) -> Result<Self> {
        if cfg.freq_scale != FreqScale::Mel {
            return Err(Error::config(
                "mel filterbank requested for a linear-scale config",
            ));
        }
        cfg.validate()?;
        if n_fft_bins < 2 {
            return Err(Error::config("need at least two FFT bins"));
        }
        let n_fft = 2 * (n_fft_bins - 1);
        let bin_hz = f64::from(cfg.sample_rate) / n_fft as f64;

        let (mel_lo, mel_hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let edges: Vec<f64> = (0..cfg.n_bands + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_bands + 1) as f64))
            .collect();

        let mut filters = Vec::with_capacity(cfg.n_bands);
        for (band, w) in edges.windows(3).enumerate() {
            let (left, center, right) = (w[0], w[1], w[2]);
            let weight = |k: usize| {
                let f = k as f64 * bin_hz;
                let rising = (f - left) / (center - left);
                let falling = (right - f) / (right - center);
                rising.min(falling).max(0.0)
            };
            let support: Vec<usize> = (0..n_fft_bins).filter(|&k| weight(k) > 0.0).collect();
            let (Some(&first), Some(&last)) = (support.first(), support.last()) else {
                return Err(Error::config(format!(
                    "mel band {band} ({left:.1}-{right:.1} Hz) contains no FFT bin at \
                     {bin_hz:.2} Hz resolution; use fewer bands or a larger n_fft"
                )));
            };
            filters.push((first, (first..=last).map(weight).collect()));
        }

        Ok(Self {
            n_fft_bins,
            centers_hz: edges[1..=cfg.n_bands].to_vec(),
            filters,
        })
    }

    pub fn n_bands(&self) -> usize {
        self.filters.len()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Dense `n_bands × n_fft_bins` weight matrix.
    pub fn to_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.filters.len(), self.n_fft_bins));
        for (band, (start, weights)) in self.filters.iter().enumerate() {
            for (k, w) in weights.iter().enumerate() {
                m[[band, start + k]] = *w;
            }
        }
        m
    }

    pub fn apply(&self, magnitudes: &[f64], out: &mut [f64]) {
        for (o, (start, weights)) in out.iter_mut().zip(&self.filters) {
            *o = weights
                .iter()
                .zip(&magnitudes[*start..])
                .map(|(w, m)| w * m)
                .sum();
        }
    }
}

/// Dense mel filterbank matrix (`n_bands × n_fft_bins`).
pub fn mel_filterbank(cfg: &SpectrogramConfig, n_fft_bins: usize) -> Result<Array2<f64>> {
    MelFilterbank::new(cfg, n_fft_bins).map(|fb| fb.to_matrix())
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

#[derive(Clone)]
enum Bands {
    Linear { first_bin: usize },
    Mel(Arc<MelFilterbank>),
}

/// Turns one window of samples into one spectrogram row.
#[derive(Clone)]
pub struct FrameAnalyzer {
    cfg: SpectrogramConfig,
    window: Arc<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
    magnitudes: Vec<f64>,
    bands: Bands,
}

impl FrameAnalyzer {
    pub fn new(cfg: &SpectrogramConfig) -> Result<Self> {
        cfg.validate()?;
        let bands = match cfg.freq_scale {
            FreqScale::Linear => Bands::Linear {
                first_bin: cfg.linear_bins()?.0,
            },
            FreqScale::Mel => Bands::Mel(Arc::new(MelFilterbank::new(cfg, cfg.n_fft_bins())?)),
        };
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Ok(Self {
            cfg: cfg.clone(),
            window: Arc::new(hann(cfg.window_length)),
            fft,
            buf: vec![Complex::default(); cfg.n_fft],
            scratch,
            magnitudes: vec![0.0; cfg.n_fft_bins()],
            bands,
        })
    }

    pub fn config(&self) -> &SpectrogramConfig {
        &self.cfg
    }

    /// `frame` must hold exactly `window_length` samples and `out`
    /// exactly `n_bands` slots.
    pub fn analyze(&mut self, frame: &[f64], out: &mut [f64]) {
        debug_assert_eq!(frame.len(), self.cfg.window_length);
        debug_assert_eq!(out.len(), self.cfg.n_bands);
        for (b, (x, w)) in self
            .buf
            .iter_mut()
            .zip(frame.iter().zip(self.window.iter()))
        {
            *b = Complex::new(x * w, 0.0);
        }
        for b in &mut self.buf[frame.len()..] {
            *b = Complex::default();
        }
        self.fft
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        for (m, c) in self.magnitudes.iter_mut().zip(&self.buf) {
            *m = c.norm();
        }
        match &self.bands {
            Bands::Linear { first_bin } => {
                out.copy_from_slice(&self.magnitudes[*first_bin..*first_bin + out.len()])
            }
            Bands::Mel(fb) => fb.apply(&self.magnitudes, out),
        }
    }
}

/// Frame-at-a-time analysis of a sample stream in bounded memory.
pub struct StreamingAnalyzer {
    analyzer: FrameAnalyzer,
    pending: Vec<f64>,
    row: Vec<f64>,
}

impl StreamingAnalyzer {
    pub fn new(cfg: &SpectrogramConfig) -> Result<Self> {
        let analyzer = FrameAnalyzer::new(cfg)?;
        Ok(Self {
            pending: Vec::with_capacity(2 * cfg.window_length),
            row: vec![0.0; cfg.n_bands],
            analyzer,
        })
    }

    /// Appends samples and calls `on_row` for every frame completed by them.
    pub fn push<E>(
        &mut self,
        samples: &[f64],
        mut on_row: impl FnMut(&[f64]) -> std::result::Result<(), E>,
    ) -> std::result::Result<(), E> {
        let (window, hop) = (
            self.analyzer.cfg.window_length,
            self.analyzer.cfg.hop_length,
        );
        for chunk in samples.chunks(window) {
            self.pending.extend_from_slice(chunk);
            while self.pending.len() >= window {
                self.analyzer
                    .analyze(&self.pending[..window], &mut self.row);
                on_row(&self.row)?;
                self.pending.drain(..hop);
            }
        }
        Ok(())
    }
}

fn check_input(w: &Waveform, cfg: &SpectrogramConfig) -> Result<usize> {
    cfg.validate()?;
    if w.sample_rate() != cfg.sample_rate {
        return Err(Error::config(format!(
            "waveform is sampled at {} Hz but the analysis expects {} Hz",
            w.sample_rate(),
            cfg.sample_rate
        )));
    }
    cfg.n_frames(w.len()).ok_or(Error::WaveformTooShort {
        len: w.len(),
        window: cfg.window_length,
    })
}

/// Magnitude spectrogram for either frequency scale.
///
/// Frames are analyzed in parallel; each row is computed independently, so
/// the result does not depend on scheduling.
pub fn spectrogram(w: &Waveform, cfg: &SpectrogramConfig) -> Result<Spectrogram> {
    let n_frames = check_input(w, cfg)?;
    let proto = FrameAnalyzer::new(cfg)?;
    let mut values = vec![0.0; n_frames * cfg.n_bands];
    values
        .par_chunks_mut(cfg.n_bands)
        .enumerate()
        .for_each_init(
            || proto.clone(),
            |an, (t, row)| {
                let start = t * cfg.hop_length;
                an.analyze(&w.samples()[start..start + cfg.window_length], row);
            },
        );
    let values = Array2::from_shape_vec((n_frames, cfg.n_bands), values)
        .expect("row count matches frame count");
    Ok(Spectrogram {
        values,
        frame_rate: cfg.frame_rate(),
        config: Some(cfg.clone()),
    })
}

/// Linear-frequency STFT magnitudes.
pub fn stft_magnitude(w: &Waveform, cfg: &SpectrogramConfig) -> Result<Spectrogram> {
    if cfg.freq_scale != FreqScale::Linear {
        return Err(Error::config("stft_magnitude needs a linear-scale config"));
    }
    spectrogram(w, cfg)
}

/// STFT magnitudes pooled through the triangular mel filterbank.
pub fn mel_spectrogram(w: &Waveform, cfg: &SpectrogramConfig) -> Result<Spectrogram> {
    if cfg.freq_scale != FreqScale::Mel {
        return Err(Error::config("mel_spectrogram needs a mel-scale config"));
    }
    spectrogram(w, cfg)
}
