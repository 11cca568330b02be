//! Frame-level detection functions.
//!
//! * `sf_avg`: mean over bands of the rectified log-magnitude increase.
//! * `sf_max`: max over bands of the (unrectified) log-magnitude increase.
//! * `pcen_max`: `ln(1 + max_f E[t,f] / M[t,f])` with `M` the smoother of
//!   [`crate::pcen`], i.e. max-pooled PCEN at `(ε, α, δ, r) = (0, 1, 1, 0)`.
//!
//! All three emit 0 at frame 0, which has no predecessor. The trackers work
//! one frame at a time so arbitrarily long recordings fit in bounded memory.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::Spectrogram;
use crate::pcen::Smoother;

/// Magnitudes below this fraction of the clip maximum are raised to it
/// before taking logarithms. Scaling with the clip keeps flux gain-invariant.
pub const LOG_FLOOR_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    SfAvg,
    SfMax,
    PcenMax,
}

impl Detector {
    pub const ALL: [Detector; 3] = [Detector::SfAvg, Detector::SfMax, Detector::PcenMax];

    pub fn as_str(self) -> &'static str {
        match self {
            Detector::SfAvg => "sf_avg",
            Detector::SfMax => "sf_max",
            Detector::PcenMax => "pcen_max",
        }
    }

    /// Whether the tracker needs the clip maximum up front.
    pub fn needs_clip_max(self) -> bool {
        !matches!(self, Detector::PcenMax)
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Detector::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown detector {s:?} (expected sf_avg, sf_max or pcen_max)"
                ))
            })
    }
}

/// One detection value per spectrogram frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NoveltyCurve {
    values: Vec<f64>,
    frame_rate: f64,
    detector: Detector,
}

impl NoveltyCurve {
    pub fn new(values: Vec<f64>, frame_rate: f64, detector: Detector) -> Self {
        Self {
            values,
            frame_rate,
            detector,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn detector(&self) -> Detector {
        self.detector
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Duration covered by the frames, `len / frame_rate`.
    pub fn duration_sec(&self) -> f64 {
        self.values.len() as f64 / self.frame_rate
    }
}

#[derive(Debug, Clone)]
enum State {
    Silent,
    Flux {
        max_pool: bool,
        floor: f64,
        prev: Vec<f64>,
        cur: Vec<f64>,
    },
    Pcen(Smoother),
}

/// Streaming evaluation of one detector.
#[derive(Debug, Clone)]
pub struct NoveltyTracker {
    state: State,
    frame: usize,
}

impl NoveltyTracker {
    /// `s` is only used by `pcen_max`; `clip_max` (the largest magnitude in
    /// the whole clip) only by the flux detectors.
    pub fn new(detector: Detector, s: f64, clip_max: f64) -> Result<Self> {
        let state = match detector {
            Detector::PcenMax => State::Pcen(Smoother::new(s)?),
            _ if clip_max == 0.0 => State::Silent,
            _ => {
                if !(clip_max > 0.0 && clip_max.is_finite()) {
                    return Err(Error::config(format!("invalid clip maximum {clip_max}")));
                }
                State::Flux {
                    max_pool: detector == Detector::SfMax,
                    floor: LOG_FLOOR_RATIO * clip_max,
                    prev: Vec::new(),
                    cur: Vec::new(),
                }
            }
        };
        Ok(Self { state, frame: 0 })
    }

    pub fn push(&mut self, row: &[f64]) -> Result<f64> {
        let t = self.frame;
        self.frame += 1;
        match &mut self.state {
            State::Silent => Ok(0.0),
            State::Flux {
                max_pool,
                floor,
                prev,
                cur,
            } => {
                cur.clear();
                for (f, &e) in row.iter().enumerate() {
                    let floored = e.max(*floor);
                    if !(floored > 0.0 && floored.is_finite()) {
                        return Err(Error::NonPositive {
                            frame: t,
                            band: f,
                            value: e,
                        });
                    }
                    cur.push(floored.ln());
                }
                let value = if t == 0 {
                    0.0
                } else {
                    let diffs = cur.iter().zip(prev.iter()).map(|(c, p)| c - p);
                    if *max_pool {
                        diffs.fold(f64::NEG_INFINITY, f64::max)
                    } else {
                        compensated_sum(diffs.map(|d| d.max(0.0))) / row.len() as f64
                    }
                };
                std::mem::swap(prev, cur);
                Ok(value)
            }
            State::Pcen(smoother) => {
                let m = smoother.push(row);
                if t == 0 {
                    return Ok(0.0);
                }
                let mut best = 0.0f64;
                for (f, (&e, &m)) in row.iter().zip(m).enumerate() {
                    // a silent band contributes ln(1 + 0) whatever its history
                    if e == 0.0 {
                        continue;
                    }
                    if m <= 0.0 {
                        return Err(Error::ZeroDivisor { frame: t, band: f });
                    }
                    best = best.max(e / m);
                }
                Ok(best.ln_1p())
            }
        }
    }
}

/// Neumaier summation; exact for the sums of equal terms the broadband
/// checks rely on.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Runs `detector` over a whole spectrogram.
pub fn detect(e: &Spectrogram, detector: Detector, s: f64) -> Result<NoveltyCurve> {
    let mut tracker = NoveltyTracker::new(detector, s, e.max_value())?;
    let values = e
        .values()
        .rows()
        .into_iter()
        .map(|row| tracker.push(row.as_slice().expect("standard layout")))
        .collect::<Result<Vec<_>>>()?;
    Ok(NoveltyCurve::new(values, e.frame_rate(), detector))
}

pub fn sf_avg(e: &Spectrogram) -> Result<NoveltyCurve> {
    detect(e, Detector::SfAvg, 1.0)
}

pub fn sf_max(e: &Spectrogram) -> Result<NoveltyCurve> {
    detect(e, Detector::SfMax, 1.0)
}

pub fn pcen_max(e: &Spectrogram, s: f64) -> Result<NoveltyCurve> {
    detect(e, Detector::PcenMax, s)
}

/// Subtracts from every frame the minimum of its scene, scenes being
/// consecutive runs of `scene_length` frames (the last may be shorter).
pub fn scene_normalize(curve: &NoveltyCurve, scene_length: usize) -> Result<NoveltyCurve> {
    if curve.is_empty() {
        return Err(Error::Empty("novelty curve"));
    }
    if scene_length == 0 {
        return Err(Error::config("scene length must be at least one frame"));
    }
    let values = curve
        .values
        .chunks(scene_length)
        .flat_map(|scene| {
            let floor = scene.iter().copied().fold(f64::INFINITY, f64::min);
            scene.iter().map(move |v| v - floor)
        })
        .collect();
    Ok(NoveltyCurve::new(values, curve.frame_rate, curve.detector))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn spec(n_frames: usize, n_bands: usize, f: impl Fn(usize, usize) -> f64) -> Spectrogram {
        Spectrogram::from_values(
            Array2::from_shape_fn((n_frames, n_bands), |(t, b)| f(t, b)),
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn constant_spectrogram_has_no_flux() {
        let e = spec(6, 8, |_, _| 3.0);
        assert!(sf_avg(&e).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(sf_max(&e).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_band_doubling() {
        let e = spec(2, 128, |t, b| if t == 1 && b == 17 { 2.0 } else { 1.0 });
        let avg = sf_avg(&e).unwrap();
        assert!((avg.values()[1] - 2f64.ln() / 128.0).abs() < 1e-12);
        assert!((avg.values()[1] - 0.005415).abs() < 1e-6);
    }

    #[test]
    fn single_band_tripling_independent_of_band_count() {
        for n in [1, 7, 128] {
            let e = spec(3, n, |t, b| if t == 2 && b == n / 2 { 3.0 } else { 1.0 });
            let max = sf_max(&e).unwrap();
            assert!((max.values()[2] - 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn sf_max_keeps_negative_values() {
        let e = spec(2, 4, |t, _| if t == 0 { 4.0 } else { 1.0 });
        let v = sf_max(&e).unwrap().values()[1];
        assert!((v + 4f64.ln()).abs() < 1e-12);
        assert_eq!(sf_avg(&e).unwrap().values()[1], 0.0);
    }

    #[test]
    fn flux_is_gain_invariant() {
        let e = spec(20, 16, |t, b| 0.5 + ((t * 31 + b * 17) % 23) as f64);
        for d in [Detector::SfAvg, Detector::SfMax] {
            let a = detect(&e, d, 1.0).unwrap();
            let b = detect(&e.scaled(7.0), d, 1.0).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_magnitudes_are_floored() {
        let e = spec(3, 2, |t, b| if t == 1 && b == 0 { 0.0 } else { 1.0 });
        let v = sf_max(&e).unwrap();
        assert!((v.values()[2] - (1.0 / LOG_FLOOR_RATIO).ln()).abs() < 1e-9);
    }

    #[test]
    fn silent_spectrogram_gives_zero_curves() {
        let e = spec(5, 3, |_, _| 0.0);
        for d in Detector::ALL {
            let c = detect(&e, d, 0.5).unwrap();
            assert_eq!(c.values(), &[0.0; 5]);
        }
    }

    #[test]
    fn pcen_max_constant_is_ln2() {
        let e = spec(10, 4, |_, _| 5.0);
        let c = pcen_max(&e, 0.5).unwrap();
        assert_eq!(c.values()[0], 0.0);
        assert!(c.values()[1..]
            .iter()
            .all(|v| (v - 2f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn pcen_max_with_s_one_is_softplus_max() {
        let e = spec(12, 6, |t, b| 0.2 + ((t * 7 + b * 5) % 11) as f64);
        let c = pcen_max(&e, 1.0).unwrap();
        let sp = crate::pcen::softplus_flux(&e).unwrap();
        for t in 1..12 {
            let best = sp.row(t).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!((c.values()[t] - best).abs() < 1e-12);
        }
    }

    #[test]
    fn pcen_max_reports_zero_divisor_frame() {
        let e = spec(3, 2, |t, b| if t == 0 || b == 1 { 0.0 } else { 1.0 });
        let err = pcen_max(&e, 0.5).unwrap_err();
        assert!(matches!(err, Error::ZeroDivisor { frame: 1, band: 0 }));
    }

    #[test]
    fn alternating_noise_steady_state() {
        let s = 0.33;
        let e = spec(400, 3, |t, b| if t % 2 == 0 { 1.0 + b as f64 } else { 0.0 });
        let c = pcen_max(&e, s).unwrap();
        let expected = ((2.0 - s) / (1.0 - s)).ln_1p();
        assert!((expected - 1.2506).abs() < 1e-4);
        for t in (300..400).step_by(2) {
            assert!((c.values()[t] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn scene_normalize_examples() {
        let c = NoveltyCurve::new(vec![3.0, 5.0, 4.0, 10.0, 12.0], 1.0, Detector::SfAvg);
        assert_eq!(
            scene_normalize(&c, 3).unwrap().values(),
            &[0.0, 2.0, 1.0, 0.0, 2.0]
        );

        let flat = NoveltyCurve::new(vec![2.5; 7], 1.0, Detector::SfAvg);
        assert!(scene_normalize(&flat, 3)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));

        let empty = NoveltyCurve::new(vec![], 1.0, Detector::SfAvg);
        assert!(scene_normalize(&empty, 3).is_err());
        assert!(scene_normalize(&c, 0).is_err());
    }

    #[test]
    fn detector_names_round_trip() {
        for d in Detector::ALL {
            assert_eq!(d.as_str().parse::<Detector>().unwrap(), d);
        }
        assert!("flux".parse::<Detector>().is_err());
    }
}
