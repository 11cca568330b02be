//! Pipeline configuration: a preset expanded into concrete parameters, with
//! optional overrides from an INI-style file of flat `key = value` pairs.
//!
//! ```ini
//! [pipeline]
//! preset = avian            ; avian | marine | custom
//! detector = pcen_max
//!
//! [frontend]
//! n_fft = 1024
//!
//! [pcen]
//! s = 0.09
//!
//! [evaluation]
//! scene_length_sec = 10     ; or "none"
//! counting = frames
//! bin_edges = 30, 100, 200, 300, 500
//!
//! [synthesis]
//! n_calls = 30
//! ```
//!
//! Unknown sections and keys are rejected. A `custom` preset must spell out
//! every `[frontend]` key, `[pcen] s` and `[evaluation] bin_edges`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{CountingMode, EvalOptions};
use crate::frontend::SpectrogramConfig;
use crate::novelty::Detector;
use crate::pcen::PcenParams;
use crate::synthesis::{CorpusConfig, PropagationModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Avian,
    Marine,
    Custom,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Avian => "avian",
            Preset::Marine => "marine",
            Preset::Custom => "custom",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avian" => Ok(Preset::Avian),
            "marine" => Ok(Preset::Marine),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::config(format!(
                "unknown preset {other:?} (expected avian, marine or custom)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub preset: Preset,
    pub spectrogram: SpectrogramConfig,
    pub pcen: PcenParams,
    pub detector: Detector,
    pub scene_length_sec: Option<f64>,
    pub counting: CountingMode,
    /// Lower edges of the distance bins (m); the last bin is open-ended.
    pub bin_edges: Vec<f64>,
    pub corpus: CorpusConfig,
}

impl PipelineConfig {
    pub fn avian() -> Self {
        Self {
            preset: Preset::Avian,
            spectrogram: SpectrogramConfig::avian(),
            pcen: PcenParams::log_limit(0.09),
            detector: Detector::PcenMax,
            scene_length_sec: Some(10.0),
            counting: CountingMode::Frames,
            bin_edges: vec![30.0, 100.0, 200.0, 300.0, 500.0],
            corpus: CorpusConfig::avian(),
        }
    }

    pub fn marine() -> Self {
        Self {
            preset: Preset::Marine,
            spectrogram: SpectrogramConfig::marine(),
            pcen: PcenParams::log_limit(0.33),
            detector: Detector::PcenMax,
            scene_length_sec: Some(10.0),
            counting: CountingMode::Frames,
            bin_edges: vec![1_000.0, 3_000.0, 6_000.0, 12_000.0],
            corpus: marine_corpus(),
        }
    }

    pub fn load(path: &Path, preset: Option<Preset>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_ini_str(&text, preset)
    }

    /// Parses a config file; `preset` (e.g. from the command line) takes
    /// precedence over the file's `[pipeline] preset`.
    pub fn from_ini_str(text: &str, preset: Option<Preset>) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::config(e.to_string()))?;
        let mut keys = Keys::from_ini(&ini)?;

        let preset = match (preset, keys.take("pipeline", "preset")) {
            (Some(p), _) => p,
            (None, Some(v)) => v.parse()?,
            (None, None) => Preset::Avian,
        };
        let mut cfg = match preset {
            Preset::Avian => Self::avian(),
            Preset::Marine => Self::marine(),
            Preset::Custom => {
                keys.require(
                    "frontend",
                    &[
                        "sample_rate",
                        "window_length",
                        "hop_length",
                        "n_fft",
                        "n_bands",
                        "freq_scale",
                        "fmin",
                        "fmax",
                    ],
                )?;
                keys.require("pcen", &["s"])?;
                keys.require("evaluation", &["bin_edges"])?;
                Self {
                    preset: Preset::Custom,
                    ..Self::avian()
                }
            }
        };
        cfg.apply(&mut keys)?;
        keys.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, k: &mut Keys) -> Result<()> {
        k.set("pipeline", "detector", &mut self.detector)?;

        let sp = &mut self.spectrogram;
        k.set("frontend", "sample_rate", &mut sp.sample_rate)?;
        k.set("frontend", "window_length", &mut sp.window_length)?;
        k.set("frontend", "hop_length", &mut sp.hop_length)?;
        k.set("frontend", "n_fft", &mut sp.n_fft)?;
        k.set("frontend", "n_bands", &mut sp.n_bands)?;
        k.set("frontend", "freq_scale", &mut sp.freq_scale)?;
        k.set("frontend", "fmin", &mut sp.fmin)?;
        k.set("frontend", "fmax", &mut sp.fmax)?;
        if let Some(w) = k.take("frontend", "window") {
            if w != "hann" {
                return Err(Error::config(format!(
                    "unsupported window {w:?}; only hann"
                )));
            }
        }

        let p = &mut self.pcen;
        k.set("pcen", "s", &mut p.s)?;
        k.set("pcen", "epsilon", &mut p.epsilon)?;
        k.set("pcen", "alpha", &mut p.alpha)?;
        k.set("pcen", "delta", &mut p.delta)?;
        k.set("pcen", "r", &mut p.r)?;

        if let Some(v) = k.take("evaluation", "scene_length_sec") {
            self.scene_length_sec = match v.as_str() {
                "none" | "" => None,
                v => Some(parse_value("evaluation", "scene_length_sec", v)?),
            };
        }
        k.set("evaluation", "counting", &mut self.counting)?;
        k.set_list("evaluation", "bin_edges", &mut self.bin_edges)?;

        let c = &mut self.corpus;
        // the corpus is rendered at the analysis rate
        c.sample_rate = self.spectrogram.sample_rate;
        k.set("synthesis", "seed", &mut c.seed)?;
        k.set("synthesis", "n_calls", &mut c.n_calls)?;
        k.set_list("synthesis", "distances", &mut c.distances)?;
        k.set("synthesis", "clip_duration", &mut c.clip_duration)?;
        k.set("synthesis", "call_f_low", &mut c.call_f_low)?;
        k.set("synthesis", "call_f_high", &mut c.call_f_high)?;
        k.set("synthesis", "call_min_duration", &mut c.call_min_duration)?;
        k.set("synthesis", "call_max_duration", &mut c.call_max_duration)?;
        k.set("synthesis", "snr_db", &mut c.snr_db)?;
        k.set("synthesis", "noise_amplitude", &mut c.noise_amplitude)?;
        k.set(
            "synthesis",
            "reference_distance",
            &mut c.propagation.reference_distance,
        )?;
        k.set(
            "synthesis",
            "absorption_at_1khz",
            &mut c.propagation.absorption_at_1khz,
        )?;
        k.set(
            "synthesis",
            "absorption_exponent",
            &mut c.propagation.absorption_exponent,
        )?;
        k.set("synthesis", "negative_duration", &mut c.negative_duration)?;
        k.set("synthesis", "scene_duration", &mut c.scene_duration)?;
        k.set("synthesis", "am_fraction", &mut c.am_fraction)?;
        k.set("synthesis", "am_period_min", &mut c.am_period_min)?;
        k.set("synthesis", "am_period_max", &mut c.am_period_max)?;
        k.set("synthesis", "am_depth_min", &mut c.am_depth_min)?;
        k.set("synthesis", "am_depth_max", &mut c.am_depth_max)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.spectrogram.validate()?;
        self.pcen.validate()?;
        crate::evaluation::bins_from_edges(&self.bin_edges)?;
        if let Some(sec) = self.scene_length_sec {
            if self.scene_length_frames().unwrap_or(0) == 0 {
                return Err(Error::config(format!(
                    "scene length {sec} s is shorter than one frame"
                )));
            }
        }
        self.corpus.validate()
    }

    pub fn frame_rate(&self) -> f64 {
        self.spectrogram.frame_rate()
    }

    pub fn scene_length_frames(&self) -> Option<usize> {
        self.scene_length_sec
            .filter(|s| s.is_finite() && *s > 0.0)
            .map(|s| (s * self.frame_rate()).round() as usize)
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            counting: self.counting,
            scene_length: self.scene_length_frames(),
        }
    }
}

fn marine_corpus() -> CorpusConfig {
    CorpusConfig {
        sample_rate: 2_000,
        distances: vec![1_000.0, 3_000.0, 6_000.0, 12_000.0],
        clip_duration: 2.0,
        call_f_low: 50.0,
        call_f_high: 250.0,
        call_min_duration: 0.5,
        call_max_duration: 1.0,
        snr_db: 100.0,
        propagation: PropagationModel {
            reference_distance: 1.0,
            absorption_at_1khz: 0.06,
            absorption_exponent: 2.0,
        },
        ..CorpusConfig::avian()
    }
}

fn parse_value<T: FromStr>(section: &str, key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::config(format!("[{section}] {key}: cannot parse {v:?}")))
}

/// Key-value pairs not yet consumed, so leftovers can be reported.
struct Keys {
    entries: Vec<(String, String, String)>,
}

impl Keys {
    fn from_ini(ini: &Ini) -> Result<Self> {
        let mut entries = Vec::new();
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                let Some(section) = section else {
                    return Err(Error::config(format!("key {key:?} outside any section")));
                };
                entries.push((
                    section.to_string(),
                    key.to_string(),
                    value.trim().to_string(),
                ));
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        let idx = self
            .entries
            .iter()
            .position(|(s, k, _)| s == section && k == key)?;
        Some(self.entries.remove(idx).2)
    }

    fn set<T: FromStr>(&mut self, section: &str, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(section, key) {
            *slot = parse_value(section, key, &v)?;
        }
        Ok(())
    }

    fn set_list(&mut self, section: &str, key: &str, slot: &mut Vec<f64>) -> Result<()> {
        if let Some(v) = self.take(section, key) {
            *slot = v
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| parse_value(section, key, s))
                .collect::<Result<_>>()?;
        }
        Ok(())
    }

    fn require(&self, section: &str, keys: &[&str]) -> Result<()> {
        let missing: Vec<&str> = keys
            .iter()
            .copied()
            .filter(|k| {
                !self
                    .entries
                    .iter()
                    .any(|(s, key, _)| s == section && key == k)
            })
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!(
                "custom preset needs explicit [{section}] {}",
                missing.join(", ")
            )))
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.first() {
            None => Ok(()),
            Some((s, k, _)) => Err(Error::config(format!("unknown key [{s}] {k}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::FreqScale;

    #[test]
    fn presets_carry_published_parameters() {
        let a = PipelineConfig::from_ini_str("", Some(Preset::Avian)).unwrap();
        let s = &a.spectrogram;
        assert_eq!(
            (
                s.freq_scale,
                s.n_bands,
                s.fmin,
                s.fmax,
                s.window_length,
                s.hop_length,
                s.sample_rate
            ),
            (FreqScale::Mel, 128, 2_000.0, 11_025.0, 256, 32, 22_050)
        );
        assert_eq!(a.pcen.s, 0.09);

        let m = PipelineConfig::from_ini_str("", Some(Preset::Marine)).unwrap();
        let s = &m.spectrogram;
        assert_eq!(
            (s.freq_scale, s.n_bands, s.fmin, s.fmax),
            (FreqScale::Linear, 128, 8.0, 1_000.0)
        );
        // 128 ms window, 64 ms hop
        assert_eq!(s.window_length as f64 / f64::from(s.sample_rate), 0.128);
        assert_eq!(s.hop_length as f64 / f64::from(s.sample_rate), 0.064);
        assert_eq!(m.pcen.s, 0.33);
    }

    #[test]
    fn file_overrides_and_flag_precedence() {
        let text = "[pipeline]\npreset = marine\ndetector = sf_max\n\
                    [evaluation]\ncounting = peaks\nbin_edges = 10, 20\nscene_length_sec = none\n";
        let cfg = PipelineConfig::from_ini_str(text, None).unwrap();
        assert_eq!(cfg.preset, Preset::Marine);
        assert_eq!(cfg.detector, Detector::SfMax);
        assert_eq!(cfg.counting, CountingMode::Peaks);
        assert_eq!(cfg.bin_edges, vec![10.0, 20.0]);
        assert_eq!(cfg.scene_length_sec, None);

        let cfg = PipelineConfig::from_ini_str(text, Some(Preset::Avian)).unwrap();
        assert_eq!(cfg.spectrogram, SpectrogramConfig::avian());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = PipelineConfig::from_ini_str("[pcen]\nsmoothing = 0.1\n", None).unwrap_err();
        assert!(err.to_string().contains("[pcen] smoothing"));
        assert!(PipelineConfig::from_ini_str("stray = 1\n", None).is_err());
    }

    #[test]
    fn custom_requires_everything() {
        let err = PipelineConfig::from_ini_str("[pipeline]\npreset = custom\n", None).unwrap_err();
        assert!(err
            .to_string()
            .contains("custom preset needs explicit [frontend]"));

        let text = "[pipeline]\npreset = custom\n\
                    [frontend]\nsample_rate = 16000\nwindow_length = 512\nhop_length = 256\n\
                    n_fft = 512\nn_bands = 64\nfreq_scale = mel\nfmin = 100\nfmax = 8000\n\
                    [pcen]\ns = 0.05\n[evaluation]\nbin_edges = 0\n\
                    [synthesis]\ncall_f_low = 500\ncall_f_high = 6000\n";
        let cfg = PipelineConfig::from_ini_str(text, None).unwrap();
        assert_eq!(cfg.spectrogram.n_bands, 64);
        assert_eq!(cfg.corpus.sample_rate, 16_000);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(PipelineConfig::from_ini_str("[pcen]\ns = 1.5\n", None).is_err());
        assert!(PipelineConfig::from_ini_str("[frontend]\nfmax = 20000\n", None).is_err());
        assert!(PipelineConfig::from_ini_str("[frontend]\nhop_length = x\n", None).is_err());
    }

    #[test]
    fn scene_length_in_frames() {
        let cfg = PipelineConfig::avian();
        assert_eq!(cfg.scene_length_frames(), Some(6_891));
    }
}
