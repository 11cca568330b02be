//! Mean time between false alarms at half recall (MTBFA@50).
//!
//! Stage one calibrates, per distance bin, the threshold that half of the
//! bin's positive clips reach. Stage two counts how often the detection
//! function exceeds each threshold on negative recordings and divides their
//! total duration by that count.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::novelty::{scene_normalize, Detector, NoveltyCurve};

#[derive(Debug, Clone)]
pub struct PositiveClip {
    pub clip_id: String,
    /// Sensor-to-source distance in meters.
    pub distance: f64,
    pub curve: NoveltyCurve,
}

/// Detection score of a clip holding one call: the curve maximum, skipping
/// the warm-up frame.
pub fn clip_score(curve: &NoveltyCurve) -> f64 {
    match curve.values() {
        [] => f64::NEG_INFINITY,
        [only] => *only,
        [_, rest @ ..] => rest.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Half-open distance interval `[lo, hi)` in meters; `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    #[serde(rename = "lo_m")]
    pub lo: f64,
    #[serde(
        rename = "hi_m",
        serialize_with = "ser_inf",
        deserialize_with = "de_inf"
    )]
    pub hi: f64,
}

impl DistanceBin {
    pub fn contains(&self, distance: f64) -> bool {
        self.lo <= distance && distance < self.hi
    }
}

/// Bins `[e0, e1), [e1, e2), …, [e_last, ∞)` from increasing lower edges.
pub fn bins_from_edges(edges: &[f64]) -> Result<Vec<DistanceBin>> {
    if edges.is_empty() {
        return Err(Error::config("at least one distance bin edge is required"));
    }
    if edges.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::config("bin edges must be finite and nonnegative"));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("bin edges must be strictly increasing"));
    }
    Ok(edges
        .iter()
        .enumerate()
        .map(|(i, &lo)| DistanceBin {
            lo,
            hi: edges.get(i + 1).copied().unwrap_or(f64::INFINITY),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountingMode {
    /// Every frame strictly above threshold.
    #[default]
    Frames,
    /// Every local maximum (plateaus count once) strictly above threshold.
    Peaks,
}

impl CountingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CountingMode::Frames => "frames",
            CountingMode::Peaks => "peaks",
        }
    }
}

impl fmt::Display for CountingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CountingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frames" => Ok(CountingMode::Frames),
            "peaks" => Ok(CountingMode::Peaks),
            other => Err(Error::config(format!(
                "unknown counting mode {other:?} (expected frames or peaks)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinThreshold {
    pub bin: DistanceBin,
    pub threshold: f64,
    pub recall: f64,
    pub n_clips: usize,
}

/// Stage-one output as written by `calibrate` and read by `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub detector: Detector,
    pub bins: Vec<BinThreshold>,
}

/// Upper-median threshold over the clips of one bin, so that exactly
/// `⌈n/2⌉` clips score at or above it when scores are distinct.
pub fn calibrate_threshold(bin: DistanceBin, clips: &[&PositiveClip]) -> Result<BinThreshold> {
    if clips.len() < 2 {
        return Err(Error::TooFewClips {
            lo: bin.lo,
            hi: bin.hi,
            count: clips.len(),
        });
    }
    let mut scored: Vec<(f64, &str)> = clips
        .iter()
        .map(|c| (clip_score(&c.curve), c.clip_id.as_str()))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let threshold = scored[clips.len().div_ceil(2) - 1].0;
    let hits = scored.iter().filter(|(s, _)| *s >= threshold).count();
    Ok(BinThreshold {
        bin,
        threshold,
        recall: hits as f64 / clips.len() as f64,
        n_clips: clips.len(),
    })
}

/// Stage one over every bin; each positive must fall in exactly one bin.
pub fn calibrate(positives: &[PositiveClip], bins: &[DistanceBin]) -> Result<Vec<BinThreshold>> {
    let mut grouped: Vec<Vec<&PositiveClip>> = vec![Vec::new(); bins.len()];
    for clip in positives {
        let idx = bins
            .iter()
            .position(|b| b.contains(clip.distance))
            .ok_or_else(|| Error::OutsideBins {
                clip_id: clip.clip_id.clone(),
                distance: clip.distance,
            })?;
        grouped[idx].push(clip);
    }
    bins.iter()
        .zip(&grouped)
        .map(|(bin, clips)| calibrate_threshold(*bin, clips))
        .collect()
}

/// False alarms on one curve, ignoring the warm-up frame.
pub fn count_false_alarms(values: &[f64], threshold: f64, mode: CountingMode) -> u64 {
    let scored = values.get(1..).unwrap_or_default();
    match mode {
        CountingMode::Frames => scored.iter().filter(|&&v| v > threshold).count() as u64,
        CountingMode::Peaks => {
            let mut count = 0;
            let mut start = 0;
            while start < scored.len() {
                let v = scored[start];
                let mut end = start + 1;
                while end < scored.len() && scored[end] == v {
                    end += 1;
                }
                let rises = start == 0 || scored[start - 1] < v;
                let falls = end == scored.len() || scored[end] < v;
                if v > threshold && rises && falls {
                    count += 1;
                }
                start = end;
            }
            count
        }
    }
}

/// Negative-set duration divided by the false-alarm count; infinite when
/// nothing crossed the threshold.
pub fn mtbfa(total_negative_duration: f64, false_alarms: u64) -> Result<f64> {
    if total_negative_duration.is_nan() || total_negative_duration <= 0.0 {
        return Err(Error::config(format!(
            "negative duration must be positive, got {total_negative_duration}"
        )));
    }
    Ok(if false_alarms == 0 {
        f64::INFINITY
    } else {
        total_negative_duration / false_alarms as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    pub counting: CountingMode,
    /// Per-scene minimum subtraction on negatives, in frames.
    pub scene_length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub bin_lo_m: f64,
    #[serde(serialize_with = "ser_inf", deserialize_with = "de_inf")]
    pub bin_hi_m: f64,
    pub threshold: f64,
    pub recall: f64,
    pub n_clips: usize,
    pub false_alarms: u64,
    pub neg_duration_s: f64,
    #[serde(serialize_with = "ser_inf", deserialize_with = "de_inf")]
    pub mtbfa_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub detector: Detector,
    pub options: EvalOptions,
    pub bins: Vec<BinReport>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "bin_lo_m,bin_hi_m,threshold,recall,false_alarms,neg_duration_s,mtbfa_s";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                b.bin_lo_m,
                b.bin_hi_m,
                b.threshold,
                b.recall,
                b.false_alarms,
                b.neg_duration_s,
                b.mtbfa_s
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn mtbfa_by_bin(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.mtbfa_s).collect()
    }
}

/// Stage two: count false alarms for every calibrated bin on all negatives.
pub fn evaluate_thresholds(
    detector: Detector,
    thresholds: &[BinThreshold],
    negatives: &[NoveltyCurve],
    opts: EvalOptions,
) -> Result<EvalReport> {
    if negatives.is_empty() {
        return Err(Error::Empty("negative recordings"));
    }
    let normalized: Vec<Vec<f64>> = negatives
        .par_iter()
        .map(|c| normalize_negative(c, opts.scene_length))
        .collect::<Result<_>>()?;
    let duration: f64 = negatives.iter().map(NoveltyCurve::duration_sec).sum();

    let mut thresholds = thresholds.to_vec();
    thresholds.sort_by(|a, b| a.bin.lo.partial_cmp(&b.bin.lo).unwrap_or(Ordering::Equal));
    let bins = thresholds
        .iter()
        .map(|bt| {
            let false_alarms: u64 = normalized
                .par_iter()
                .map(|v| count_false_alarms(v, bt.threshold, opts.counting))
                .sum();
            Ok(BinReport {
                bin_lo_m: bt.bin.lo,
                bin_hi_m: bt.bin.hi,
                threshold: bt.threshold,
                recall: bt.recall,
                n_clips: bt.n_clips,
                false_alarms,
                neg_duration_s: duration,
                mtbfa_s: mtbfa(duration, false_alarms)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        detector,
        options: opts,
        bins,
    })
}

/// Both stages.
pub fn evaluate(
    detector: Detector,
    positives: &[PositiveClip],
    negatives: &[NoveltyCurve],
    bin_edges: &[f64],
    opts: EvalOptions,
) -> Result<EvalReport> {
    let bins = bins_from_edges(bin_edges)?;
    let thresholds = calibrate(positives, &bins)?;
    evaluate_thresholds(detector, &thresholds, negatives, opts)
}

/// Scene normalization applies to the scored frames (t ≥ 1) only; frame 0
/// is the detectors' fixed zero and would otherwise pin the first scene's
/// minimum.
fn normalize_negative(curve: &NoveltyCurve, scene_length: Option<usize>) -> Result<Vec<f64>> {
    let Some(scene_length) = scene_length else {
        return Ok(curve.values().to_vec());
    };
    if curve.len() < 2 {
        return Ok(curve.values().to_vec());
    }
    let tail = NoveltyCurve::new(
        curve.values()[1..].to_vec(),
        curve.frame_rate(),
        curve.detector(),
    );
    let mut out = vec![curve.values()[0]];
    out.extend_from_slice(scene_normalize(&tail, scene_length)?.values());
    Ok(out)
}

fn ser_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_inf<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        F(f64),
        S(String),
    }
    match Num::deserialize(d)? {
        Num::F(v) => Ok(v),
        Num::S(s) if s == "inf" => Ok(f64::INFINITY),
        Num::S(s) => Err(serde::de::Error::custom(format!(
            "expected a number or \"inf\", got {s:?}"
        ))),
    }
}
