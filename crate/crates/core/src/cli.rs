//! Subcommand implementations behind the `pcen-detect` binary.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{PipelineConfig, Preset};
use crate::error::{Error, Result};
use crate::evaluation::{self, CountingMode, PositiveClip, ThresholdSet};
use crate::frontend::StreamingAnalyzer;
use crate::io;
use crate::novelty::{Detector, NoveltyTracker};
use crate::synthesis::build_corpus;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Exit code for a failure.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numeric() {
        EXIT_NUMERIC
    } else if err.is_io() {
        EXIT_IO
    } else {
        EXIT_USAGE
    }
}

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub detector: Option<Detector>,
    pub seed: Option<u64>,
    pub counting: Option<CountingMode>,
}

pub fn resolve_config(path: Option<&Path>, ov: &Overrides) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p, ov.preset)?,
        None => PipelineConfig::from_ini_str("", ov.preset)?,
    };
    if let Some(d) = ov.detector {
        cfg.detector = d;
    }
    if let Some(s) = ov.seed {
        cfg.corpus.seed = s;
    }
    if let Some(c) = ov.counting {
        cfg.counting = c;
    }
    Ok(cfg)
}

/// Expands directories to the `.wav` files directly inside them and sorts
/// the result.
pub fn collect_inputs(inputs: &[PathBuf], extension: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            for entry in fs::read_dir(input)? {
                let path = entry?.path();
                if path
                    .extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case(extension))
                {
                    files.push(path);
                }
            }
        } else {
            files.push(input.clone());
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Debug, Default)]
pub struct DetectSummary {
    pub written: Vec<PathBuf>,
    pub failed: Vec<(PathBuf, Error)>,
}

impl DetectSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failed.is_empty() {
            EXIT_OK
        } else if self.failed.iter().any(|(_, e)| e.is_numeric()) {
            EXIT_NUMERIC
        } else {
            EXIT_IO
        }
    }
}

fn curve_name(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(|s| format!("{s}.csv"))
        .ok_or_else(|| Error::format(path, "no usable file name"))
}

/// One novelty-curve CSV per input WAV, named after the input's stem.
///
/// Files are processed in parallel; each streams through the frontend and
/// detector in bounded memory (two passes for the flux detectors, which need
/// the clip maximum for their log floor).
pub fn cmd_detect(cfg: &PipelineConfig, inputs: &[PathBuf], out: &Path) -> Result<DetectSummary> {
    if inputs.is_empty() {
        return Err(Error::config("no input files"));
    }
    cfg.spectrogram.validate()?;
    fs::create_dir_all(out)?;

    let mut by_name: BTreeMap<String, Vec<&PathBuf>> = BTreeMap::new();
    let mut summary = DetectSummary::default();
    for path in inputs {
        match curve_name(path) {
            Ok(name) => by_name.entry(name).or_default().push(path),
            Err(e) => summary.failed.push((path.clone(), e)),
        }
    }
    let mut jobs = Vec::new();
    for (name, paths) in by_name {
        if paths.len() > 1 {
            for p in paths {
                summary.failed.push((
                    p.clone(),
                    Error::format(p, format!("another input also maps to {name}")),
                ));
            }
        } else {
            jobs.push((paths[0].clone(), out.join(name)));
        }
    }

    let results: Vec<(PathBuf, PathBuf, Result<()>)> = jobs
        .into_par_iter()
        .map(|(input, target)| {
            let r = detect_file(cfg, &input, &target);
            (input, target, r)
        })
        .collect();
    for (input, target, r) in results {
        match r {
            Ok(()) => summary.written.push(target),
            Err(e) => summary.failed.push((input, e)),
        }
    }
    summary.failed.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(summary)
}

fn detect_file(cfg: &PipelineConfig, input: &Path, target: &Path) -> Result<()> {
    let sp = &cfg.spectrogram;
    let rate = io::wav_sample_rate(input)?;
    if rate != sp.sample_rate {
        return Err(Error::format(
            input,
            format!(
                "sampled at {rate} Hz but the {} preset expects {} Hz (no resampling is done)",
                cfg.preset, sp.sample_rate
            ),
        ));
    }

    let clip_max = if cfg.detector.needs_clip_max() {
        let mut analyzer = StreamingAnalyzer::new(sp)?;
        let mut max = 0.0f64;
        io::stream_wav(input, |chunk| {
            analyzer.push(chunk, |row| {
                max = row.iter().fold(max, |m, &v| m.max(v));
                Ok::<_, Error>(())
            })
        })?;
        max
    } else {
        0.0
    };

    let mut analyzer = StreamingAnalyzer::new(sp)?;
    let mut tracker = NoveltyTracker::new(cfg.detector, cfg.pcen.s, clip_max)?;
    let partial = target.with_extension("csv.partial");
    let mut writer =
        io::CurveWriter::new(BufWriter::new(File::create(&partial)?), sp.frame_rate())?;
    let mut n_samples = 0usize;
    let mut n_frames = 0usize;
    let streamed = io::stream_wav(input, |chunk| {
        n_samples += chunk.len();
        analyzer.push(chunk, |row| {
            n_frames += 1;
            writer.push(tracker.push(row)?)
        })
    });
    let finished = streamed.and_then(|_| {
        if n_frames == 0 {
            return Err(Error::WaveformTooShort {
                len: n_samples,
                window: sp.window_length,
            });
        }
        writer.finish().map(drop)
    });
    match finished {
        Ok(()) => {
            fs::rename(&partial, target)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&partial);
            Err(e)
        }
    }
}

/// Per-bin thresholds from the positive clips listed in `manifest`, whose
/// curves are read from `curves/<clip_id>.csv`. Writes `thresholds.json`.
pub fn cmd_calibrate(
    cfg: &PipelineConfig,
    manifest: &Path,
    curves: &Path,
    out: &Path,
) -> Result<ThresholdSet> {
    let entries = io::read_manifest(manifest)?;
    let positives = entries
        .iter()
        .filter(|e| e.kind == "positive")
        .map(|e| {
            let distance = e
                .distance_m
                .ok_or_else(|| Error::format(manifest, format!("{} has no distance", e.clip_id)))?;
            let path = curves.join(format!("{}.csv", e.clip_id));
            Ok(PositiveClip {
                clip_id: e.clip_id.clone(),
                distance,
                curve: io::read_curve(&path, cfg.frame_rate(), cfg.detector)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bins = evaluation::bins_from_edges(&cfg.bin_edges)?;
    let set = ThresholdSet {
        detector: cfg.detector,
        bins: evaluation::calibrate(&positives, &bins)?,
    };
    fs::create_dir_all(out)?;
    fs::write(
        out.join("thresholds.json"),
        serde_json::to_string_pretty(&set)? + "\n",
    )?;
    Ok(set)
}

/// Negative curves named by a manifest: every non-positive entry.
pub fn negative_curves_from_manifest(manifest: &Path, curves: &Path) -> Result<Vec<PathBuf>> {
    Ok(io::read_manifest(manifest)?
        .into_iter()
        .filter(|e| e.kind != "positive")
        .map(|e| curves.join(format!("{}.csv", e.clip_id)))
        .collect())
}

/// False alarms and MTBFA for every calibrated bin. Writes `report.json`
/// and `report.csv`.
pub fn cmd_evaluate(
    cfg: &PipelineConfig,
    thresholds: &Path,
    negatives: &[PathBuf],
    out: &Path,
) -> Result<evaluation::EvalReport> {
    let set: ThresholdSet = serde_json::from_str(&fs::read_to_string(thresholds)?)?;
    for bin in evaluation::bins_from_edges(&cfg.bin_edges)? {
        if !set.bins.iter().any(|b| b.bin == bin) {
            return Err(Error::format(
                thresholds,
                format!("no threshold for configured bin [{}, {}) m", bin.lo, bin.hi),
            ));
        }
    }
    if negatives.is_empty() {
        return Err(Error::config("no negative curves"));
    }
    let curves = negatives
        .par_iter()
        .map(|p| io::read_curve(p, cfg.frame_rate(), set.detector))
        .collect::<Result<Vec<_>>>()?;
    let report =
        evaluation::evaluate_thresholds(set.detector, &set.bins, &curves, cfg.eval_options())?;
    fs::create_dir_all(out)?;
    fs::write(out.join("report.json"), report.to_json()?)?;
    fs::write(out.join("report.csv"), report.to_csv())?;
    Ok(report)
}

/// Renders the synthetic corpus: `positives/*.wav`, `negatives/*.wav` and
/// `manifest.csv` under `out`.
pub fn cmd_synth(cfg: &PipelineConfig, out: &Path) -> Result<usize> {
    let corpus = build_corpus(&cfg.corpus)?;
    fs::create_dir_all(out.join("positives"))?;
    fs::create_dir_all(out.join("negatives"))?;
    let manifest = corpus.manifest();
    let waveforms = corpus
        .positives
        .iter()
        .map(|p| &p.waveform)
        .chain(corpus.negatives.iter().map(|n| &n.waveform));
    let jobs: Vec<_> = manifest.iter().zip(waveforms).collect();
    jobs.par_iter()
        .try_for_each(|(entry, w)| io::write_wav(&out.join(&entry.path), w))?;
    io::write_manifest(&out.join("manifest.csv"), &manifest)?;
    Ok(manifest.len())
}
