//! Synthetic calls and noise for desk-scale evaluation.
//!
//! Positives are chirps propagated to a sensor at a given distance, with
//! 1/d spherical spreading and power-law atmospheric absorption, then mixed
//! into white noise. Negatives are white noise and square-wave amplitude
//! modulated "engine" noise.

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::Waveform;

/// Spherical spreading plus frequency-dependent absorption
/// `a(f) = absorption_at_1khz · (f / 1 kHz)^absorption_exponent` dB/km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationModel {
    /// Distance (m) at which the source waveform is taken as-is.
    pub reference_distance: f64,
    pub absorption_at_1khz: f64,
    pub absorption_exponent: f64,
}

impl PropagationModel {
    /// Two-point power law through 5 dB/km at 1 kHz and 100 dB/km at 10 kHz.
    pub fn atmospheric() -> Self {
        Self {
            reference_distance: 1.0,
            absorption_at_1khz: 5.0,
            absorption_exponent: 20f64.log10(),
        }
    }

    /// Absorption growing with the square of frequency from 5 dB/km at 1 kHz.
    pub fn quadratic() -> Self {
        Self {
            absorption_exponent: 2.0,
            ..Self::atmospheric()
        }
    }

    pub fn absorption_db_per_km(&self, freq_hz: f64) -> f64 {
        self.absorption_at_1khz * (freq_hz / 1_000.0).powf(self.absorption_exponent)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reference_distance > 0.0 && self.reference_distance.is_finite()) {
            return Err(Error::config("reference distance must be positive"));
        }
        if !(self.absorption_at_1khz >= 0.0 && self.absorption_at_1khz.is_finite()) {
            return Err(Error::config("absorption at 1 kHz must be nonnegative"));
        }
        if !self.absorption_exponent.is_finite() {
            return Err(Error::config("absorption exponent must be finite"));
        }
        Ok(())
    }
}

impl Default for PropagationModel {
    fn default() -> Self {
        Self::atmospheric()
    }
}

/// The waveform as received `distance` meters from the source.
///
/// Absorption is applied as a zero-phase gain on the DFT of the whole
/// signal.
pub fn attenuate(w: &Waveform, model: &PropagationModel, distance: f64) -> Result<Waveform> {
    model.validate()?;
    if !(distance >= model.reference_distance && distance.is_finite()) {
        return Err(Error::config(format!(
            "distance {distance} m is closer than the reference distance {} m",
            model.reference_distance
        )));
    }
    let spreading = model.reference_distance / distance;
    let excess_km = (distance - model.reference_distance) / 1_000.0;
    if excess_km == 0.0 || model.absorption_at_1khz == 0.0 || w.is_empty() {
        return Ok(w.scaled(spreading));
    }

    let n = w.len();
    let sr = f64::from(w.sample_rate());
    let mut buf: Vec<Complex<f64>> = w.samples().iter().map(|&x| Complex::new(x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let freq = k.min(n - k) as f64 * sr / n as f64;
        let loss_db = model.absorption_db_per_km(freq) * excess_km;
        *c *= 10f64.powf(-loss_db / 20.0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = spreading / n as f64;
    Waveform::new(buf.iter().map(|c| c.re * scale).collect(), w.sample_rate())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    LinearChirp,
    ToneBurst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CallTemplate {
    pub kind: CallKind,
    pub f_start: f64,
    /// Ignored by tone bursts.
    pub f_end: f64,
    pub duration: f64,
    /// Peak amplitude, full scale.
    pub amplitude: f64,
}

const RAMP_SEC: f64 = 0.005;

/// A chirp or tone with 5 ms raised-cosine on/off ramps, scaled to the
/// template's peak amplitude.
pub fn render_call(tpl: &CallTemplate, sample_rate: u32) -> Result<Waveform> {
    let sr = f64::from(sample_rate);
    let nyquist = sr / 2.0;
    let f_end = match tpl.kind {
        CallKind::LinearChirp => tpl.f_end,
        CallKind::ToneBurst => tpl.f_start,
    };
    for f in [tpl.f_start, f_end] {
        if !(f > 0.0 && f < nyquist) {
            return Err(Error::config(format!(
                "call frequency {f} Hz outside (0, {nyquist}) Hz"
            )));
        }
    }
    if !(tpl.duration > 0.0 && tpl.amplitude >= 0.0) {
        return Err(Error::config(
            "call needs positive duration and nonnegative amplitude",
        ));
    }
    let len = (tpl.duration * sr).round().max(1.0) as usize;
    let ramp = ((RAMP_SEC * sr).round() as usize).clamp(1, len.div_ceil(2));
    let sweep = (f_end - tpl.f_start) / tpl.duration;
    let mut samples: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 / sr;
            let phase = 2.0 * PI * (tpl.f_start * t + 0.5 * sweep * t * t);
            let edge = n.min(len - 1 - n);
            let env = if edge < ramp {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            env * phase.sin()
        })
        .collect();
    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let gain = if peak > 0.0 {
        tpl.amplitude / peak
    } else {
        0.0
    };
    samples.iter_mut().for_each(|x| *x *= gain);
    Waveform::new(samples, sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    AmEngine,
    ImpulseTrain,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::AmEngine => "am_engine",
            NoiseKind::ImpulseTrain => "impulse_train",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScene {
    pub kind: NoiseKind,
    pub duration: f64,
    /// Modulation period of `am_engine`, impulse spacing of `impulse_train`.
    pub am_period: f64,
    /// 0 leaves the noise stationary; 1 silences the low half-period.
    pub modulation_depth: f64,
    /// Gaussian standard deviation, or impulse height.
    pub amplitude: f64,
    pub seed: u64,
    /// Offset into the modulation cycle at t = 0, in periods.
    pub am_phase: f64,
    /// Repeat a block of this many Gaussian samples instead of drawing fresh
    /// ones ("frozen" noise whose short-time spectrum is periodic).
    pub carrier_period: Option<usize>,
}

impl NoiseScene {
    pub fn white(duration: f64, amplitude: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::White,
            duration,
            am_period: 0.1,
            modulation_depth: 0.0,
            amplitude,
            seed,
            am_phase: 0.0,
            carrier_period: None,
        }
    }

    pub fn am_engine(duration: f64, am_period: f64, depth: f64, amplitude: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::AmEngine,
            am_period,
            modulation_depth: depth,
            ..Self::white(duration, amplitude, seed)
        }
    }
}

fn period_samples(period_sec: f64, sr: f64) -> f64 {
    let p = period_sec * sr;
    if (p - p.round()).abs() < 1e-9 {
        p.round()
    } else {
        p
    }
}

pub fn render_noise(scene: &NoiseScene, sample_rate: u32) -> Result<Waveform> {
    if !(scene.duration > 0.0 && scene.amplitude >= 0.0) {
        return Err(Error::config(
            "noise needs positive duration and nonnegative amplitude",
        ));
    }
    if !(0.0..=1.0).contains(&scene.modulation_depth) {
        return Err(Error::config("modulation depth must lie in [0, 1]"));
    }
    if scene.am_period.is_nan() || scene.am_period <= 0.0 {
        return Err(Error::config("modulation period must be positive"));
    }
    if scene.carrier_period == Some(0) {
        return Err(Error::config("carrier period must be at least one sample"));
    }
    let sr = f64::from(sample_rate);
    let len = (scene.duration * sr).round() as usize;
    let period = period_samples(scene.am_period, sr);
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);

    let samples = match scene.kind {
        NoiseKind::White => gaussian(&mut rng, len, scene.amplitude),
        NoiseKind::AmEngine => {
            let carrier = match scene.carrier_period {
                Some(p) => {
                    let block = gaussian(&mut rng, p, scene.amplitude);
                    (0..len).map(|n| block[n % p]).collect()
                }
                None => gaussian(&mut rng, len, scene.amplitude),
            };
            let offset = scene.am_phase * period;
            carrier
                .into_iter()
                .enumerate()
                .map(|(n, x)| {
                    // square(2πt/P) is +1 over the first half-period, where
                    // the envelope sits at 1 - depth
                    let low = ((n as f64 + offset) / period).rem_euclid(1.0) < 0.5;
                    if low {
                        x * (1.0 - scene.modulation_depth)
                    } else {
                        x
                    }
                })
                .collect()
        }
        NoiseKind::ImpulseTrain => {
            let spacing = (period.round() as usize).max(1);
            let offset = ((scene.am_phase.rem_euclid(1.0) * period).round() as usize) % spacing;
            (0..len)
                .map(|n| {
                    if n % spacing == offset {
                        scene.amplitude
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };
    Waveform::new(samples, sample_rate)
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize, sigma: f64) -> Vec<f64> {
    (0..len)
        .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

/// Independent per-item seed from a corpus seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub sample_rate: u32,
    pub seed: u64,
    pub n_calls: usize,
    /// Each call is received at every one of these distances (m).
    pub distances: Vec<f64>,
    pub clip_duration: f64,
    pub call_f_low: f64,
    pub call_f_high: f64,
    pub call_min_duration: f64,
    pub call_max_duration: f64,
    /// Call-to-noise RMS ratio (dB) over the call's support, at the
    /// propagation model's reference distance.
    pub snr_db: f64,
    /// Standard deviation of the white background.
    pub noise_amplitude: f64,
    pub propagation: PropagationModel,
    pub negative_duration: f64,
    pub scene_duration: f64,
    /// Fraction of negative scenes drawn as AM engine noise.
    pub am_fraction: f64,
    pub am_period_min: f64,
    pub am_period_max: f64,
    pub am_depth_min: f64,
    pub am_depth_max: f64,
}

impl CorpusConfig {
    /// 700 ms clips of 2-10 kHz chirps at 30-500 m with ten minutes of
    /// negatives, at the avian sample rate.
    pub fn avian() -> Self {
        Self {
            sample_rate: 22_050,
            seed: 0,
            n_calls: 30,
            distances: vec![30.0, 100.0, 200.0, 300.0, 500.0],
            clip_duration: 0.7,
            call_f_low: 2_000.0,
            call_f_high: 10_000.0,
            call_min_duration: 0.05,
            call_max_duration: 0.3,
            snr_db: 60.0,
            noise_amplitude: 0.01,
            propagation: PropagationModel::atmospheric(),
            negative_duration: 600.0,
            scene_duration: 10.0,
            am_fraction: 0.5,
            am_period_min: 0.05,
            am_period_max: 0.5,
            am_depth_min: 0.5,
            am_depth_max: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.propagation.validate()?;
        let nyquist = f64::from(self.sample_rate) / 2.0;
        let checks = [
            (self.sample_rate > 0, "sample_rate must be positive"),
            (
                self.distances
                    .iter()
                    .all(|d| d.is_finite() && *d >= self.propagation.reference_distance),
                "every distance must be at least the reference distance",
            ),
            (
                0.0 < self.call_f_low
                    && self.call_f_low <= self.call_f_high
                    && self.call_f_high < nyquist,
                "call frequencies must satisfy 0 < low <= high < Nyquist",
            ),
            (
                0.0 < self.call_min_duration && self.call_min_duration <= self.call_max_duration,
                "call durations must satisfy 0 < min <= max",
            ),
            (
                self.call_max_duration < self.clip_duration,
                "clip must be longer than the longest call",
            ),
            (
                self.noise_amplitude > 0.0,
                "noise amplitude must be positive",
            ),
            (self.snr_db.is_finite(), "snr_db must be finite"),
            (
                self.negative_duration >= 0.0,
                "negative duration must be nonnegative",
            ),
            (self.scene_duration > 0.0, "scene duration must be positive"),
            (
                (0.0..=1.0).contains(&self.am_fraction),
                "am_fraction must lie in [0, 1]",
            ),
            (
                0.0 < self.am_period_min && self.am_period_min <= self.am_period_max,
                "AM periods must satisfy 0 < min <= max",
            ),
            (
                0.0 <= self.am_depth_min
                    && self.am_depth_min <= self.am_depth_max
                    && self.am_depth_max <= 1.0,
                "AM depths must satisfy 0 <= min <= max <= 1",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::config(*msg)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PositiveAudio {
    pub clip_id: String,
    pub distance: f64,
    pub seed: u64,
    pub waveform: Waveform,
}

#[derive(Debug, Clone)]
pub struct NegativeAudio {
    pub clip_id: String,
    pub kind: NoiseKind,
    pub seed: u64,
    pub waveform: Waveform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub clip_id: String,
    /// `positive` or the negative's noise kind.
    pub kind: String,
    pub distance_m: Option<f64>,
    pub seed: u64,
    /// Relative to the manifest's directory.
    pub path: String,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub positives: Vec<PositiveAudio>,
    pub negatives: Vec<NegativeAudio>,
}

impl Corpus {
    pub fn manifest(&self) -> Vec<ManifestEntry> {
        let pos = self.positives.iter().map(|p| ManifestEntry {
            clip_id: p.clip_id.clone(),
            kind: "positive".to_string(),
            distance_m: Some(p.distance),
            seed: p.seed,
            path: format!("positives/{}.wav", p.clip_id),
        });
        let neg = self.negatives.iter().map(|n| ManifestEntry {
            clip_id: n.clip_id.clone(),
            kind: n.kind.as_str().to_string(),
            distance_m: None,
            seed: n.seed,
            path: format!("negatives/{}.wav", n.clip_id),
        });
        pos.chain(neg).collect()
    }
}

/// Distance formatted for clip ids: `30m`, `12.5m`.
fn distance_tag(d: f64) -> String {
    format!("{d}m")
}

/// One synthetic call, already placed in a silent clip at the reference
/// distance and scaled to the configured SNR.
fn source_clip(cfg: &CorpusConfig, index: usize) -> Result<(Waveform, u64)> {
    let seed = derive_seed(cfg.seed, 1, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = f64::from(cfg.sample_rate);
    let duration = rng.random_range(cfg.call_min_duration..=cfg.call_max_duration);
    let f_start = rng.random_range(cfg.call_f_low..=cfg.call_f_high);
    let f_end = rng.random_range(cfg.call_f_low..=cfg.call_f_high);
    let call = render_call(
        &CallTemplate {
            kind: CallKind::LinearChirp,
            f_start,
            f_end,
            duration,
            amplitude: 1.0,
        },
        cfg.sample_rate,
    )?;
    let gain = cfg.noise_amplitude * 10f64.powf(cfg.snr_db / 20.0) / call.rms();

    let clip_len = (cfg.clip_duration * sr).round() as usize;
    let latest = clip_len - call.len();
    // keep the onset clear of the first frames so every detector has history
    let earliest = ((0.1 * sr) as usize).min(latest);
    let onset = rng.random_range(earliest..=latest);
    let mut samples = vec![0.0; clip_len];
    for (s, c) in samples[onset..].iter_mut().zip(call.samples()) {
        *s = c * gain;
    }
    Ok((Waveform::new(samples, cfg.sample_rate)?, seed))
}

/// Renders the whole corpus. Every clip draws from its own derived seed, so
/// the output does not depend on thread scheduling.
pub fn build_corpus(cfg: &CorpusConfig) -> Result<Corpus> {
    cfg.validate()?;
    let sources: Vec<(Waveform, u64)> = (0..cfg.n_calls)
        .into_par_iter()
        .map(|i| source_clip(cfg, i))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..cfg.n_calls)
        .flat_map(|i| (0..cfg.distances.len()).map(move |j| (i, j)))
        .collect();
    let positives = jobs
        .par_iter()
        .map(|&(i, j)| {
            let distance = cfg.distances[j];
            let received = attenuate(&sources[i].0, &cfg.propagation, distance)?;
            let seed = derive_seed(cfg.seed, 2, (i * cfg.distances.len() + j) as u64);
            let noise = render_noise(
                &NoiseScene::white(cfg.clip_duration, cfg.noise_amplitude, seed),
                cfg.sample_rate,
            )?;
            Ok(PositiveAudio {
                clip_id: format!("pos{i:03}_{}", distance_tag(distance)),
                distance,
                seed: sources[i].1,
                waveform: received.mix(&noise)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_scenes = (cfg.negative_duration / cfg.scene_duration).ceil() as usize;
    let negatives = (0..n_scenes)
        .into_par_iter()
        .map(|j| {
            let seed = derive_seed(cfg.seed, 3, j as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let duration = cfg
                .scene_duration
                .min(cfg.negative_duration - j as f64 * cfg.scene_duration);
            let scene = if rng.random::<f64>() < cfg.am_fraction {
                NoiseScene {
                    am_phase: rng.random(),
                    ..NoiseScene::am_engine(
                        duration,
                        rng.random_range(cfg.am_period_min..=cfg.am_period_max),
                        rng.random_range(cfg.am_depth_min..=cfg.am_depth_max),
                        cfg.noise_amplitude,
                        seed,
                    )
                }
            } else {
                NoiseScene::white(duration, cfg.noise_amplitude, seed)
            };
            Ok(NegativeAudio {
                clip_id: format!("neg{j:04}"),
                kind: scene.kind,
                seed,
                waveform: render_noise(&scene, cfg.sample_rate)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Corpus {
        positives,
        negatives,
    })
}
