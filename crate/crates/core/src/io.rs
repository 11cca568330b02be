//! File formats: WAV audio, novelty-curve CSV, the `PCNS` spectrogram
//! container and the corpus manifest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::frontend::{Spectrogram, Waveform};
use crate::novelty::{Detector, NoveltyCurve};
use crate::synthesis::ManifestEntry;

const STREAM_CHUNK: usize = 1 << 14;

/// Sample encoding of an accepted WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Int16,
    Float32,
}

fn open_wav(path: &Path) -> Result<(hound::WavReader<BufReader<File>>, WavEncoding)> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::format(
            path,
            format!("{} channels; only mono input is accepted", spec.channels),
        ));
    }
    let encoding =
        match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Int, 16) => WavEncoding::Int16,
            (hound::SampleFormat::Float, 32) => WavEncoding::Float32,
            (fmt, bits) => return Err(Error::format(
                path,
                format!(
                    "unsupported {bits}-bit {fmt:?} samples; expected 16-bit int or 32-bit float"
                ),
            )),
        };
    Ok((reader, encoding))
}

/// Sample rate of a WAV file, after checking that it is readable.
pub fn wav_sample_rate(path: &Path) -> Result<u32> {
    Ok(open_wav(path)?.0.spec().sample_rate)
}

/// Reads a WAV file in chunks of at most 16k samples, scaled to ±1.0.
pub fn stream_wav<E>(
    path: &Path,
    mut on_chunk: impl FnMut(&[f64]) -> std::result::Result<(), E>,
) -> std::result::Result<u32, E>
where
    E: From<Error>,
{
    let (mut reader, encoding) = open_wav(path)?;
    let sample_rate = reader.spec().sample_rate;
    let mut chunk = Vec::with_capacity(STREAM_CHUNK);
    macro_rules! pump {
        ($ty:ty, $scale:expr) => {
            for s in reader.samples::<$ty>() {
                chunk.push(f64::from(s.map_err(Error::from)?) * $scale);
                if chunk.len() == STREAM_CHUNK {
                    on_chunk(&chunk)?;
                    chunk.clear();
                }
            }
        };
    }
    match encoding {
        WavEncoding::Int16 => pump!(i16, 1.0 / 32_768.0),
        WavEncoding::Float32 => pump!(f32, 1.0),
    }
    if !chunk.is_empty() {
        on_chunk(&chunk)?;
    }
    Ok(sample_rate)
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut samples = Vec::new();
    let sample_rate = stream_wav(path, |c| {
        samples.extend_from_slice(c);
        Ok::<_, Error>(())
    })?;
    Waveform::new(samples, sample_rate)
}

/// Writes 32-bit float mono.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in w.samples() {
        writer.write_sample(s as f32)?;
    }
    writer.finalize()?;
    Ok(())
}

pub const CURVE_HEADER: &str = "frame,time_sec,value";

/// Incremental writer for the curve CSV, so long recordings never sit in
/// memory.
pub struct CurveWriter<W: Write> {
    out: W,
    frame_rate: f64,
    frame: usize,
}

impl<W: Write> CurveWriter<W> {
    pub fn new(mut out: W, frame_rate: f64) -> Result<Self> {
        writeln!(out, "{CURVE_HEADER}")?;
        Ok(Self {
            out,
            frame_rate,
            frame: 0,
        })
    }

    pub fn push(&mut self, value: f64) -> Result<()> {
        writeln!(
            self.out,
            "{},{:.6},{}",
            self.frame,
            self.frame as f64 / self.frame_rate,
            value
        )?;
        self.frame += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_curve(path: &Path, curve: &NoveltyCurve) -> Result<()> {
    let mut w = CurveWriter::new(BufWriter::new(File::create(path)?), curve.frame_rate())?;
    for &v in curve.values() {
        w.push(v)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_curve(path: &Path, frame_rate: f64, detector: Detector) -> Result<NoveltyCurve> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    match lines.next().transpose()? {
        Some(h) if h.trim() == CURVE_HEADER => {}
        _ => {
            return Err(Error::format(
                path,
                format!("missing header {CURVE_HEADER:?}"),
            ))
        }
    }
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parsed = match fields.as_slice() {
            [frame, _, value] => frame
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&f| f == values.len())
                .and(value.trim().parse::<f64>().ok()),
            _ => None,
        };
        values.push(
            parsed.ok_or_else(|| Error::format(path, format!("bad row {}: {line:?}", i + 2)))?,
        );
    }
    Ok(NoveltyCurve::new(values, frame_rate, detector))
}

const PCNS_MAGIC: &[u8; 4] = b"PCNS";
const PCNS_VERSION: u32 = 1;

/// Little-endian `PCNS` container: magic, version, frame and band counts,
/// frame rate, then row-major `f32` magnitudes.
pub fn write_spectrogram<W: Write>(mut out: W, s: &Spectrogram) -> Result<()> {
    out.write_all(PCNS_MAGIC)?;
    out.write_all(&PCNS_VERSION.to_le_bytes())?;
    for dim in [s.n_frames(), s.n_bands()] {
        let dim = u32::try_from(dim)
            .map_err(|_| Error::config(format!("dimension {dim} does not fit in u32")))?;
        out.write_all(&dim.to_le_bytes())?;
    }
    out.write_all(&s.frame_rate().to_le_bytes())?;
    for &v in s.values() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_spectrogram<R: Read>(mut input: R) -> Result<Spectrogram> {
    let bad = |msg: String| Error::format("<spectrogram>", msg);
    let mut header = [0u8; 24];
    input.read_exact(&mut header)?;
    if &header[..4] != PCNS_MAGIC {
        return Err(bad("not a PCNS container".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
    if word(4) != PCNS_VERSION {
        return Err(bad(format!("unsupported PCNS version {}", word(4))));
    }
    let (n_frames, n_bands) = (word(8) as usize, word(12) as usize);
    let frame_rate = f64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
    let mut raw = vec![0u8; n_frames * n_bands * 4];
    input.read_exact(&mut raw)?;
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
        .collect();
    let values =
        Array2::from_shape_vec((n_frames, n_bands), values).map_err(|e| bad(e.to_string()))?;
    Spectrogram::from_values(values, frame_rate)
}

pub const MANIFEST_HEADER: &str = "clip_id,kind,distance_m,seed,path";

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{MANIFEST_HEADER}")?;
    for e in entries {
        let distance = e.distance_m.map(|d| d.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            e.clip_id, e.kind, distance, e.seed, e.path
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    match lines.next().transpose()? {
        Some(h) if h.trim() == MANIFEST_HEADER => {}
        _ => {
            return Err(Error::format(
                path,
                format!("missing header {MANIFEST_HEADER:?}"),
            ))
        }
    }
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::format(path, format!("bad row {}: {line:?}", i + 2));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [clip_id, kind, distance, seed, rel] = fields.as_slice() else {
            return Err(bad());
        };
        let distance_m = match *distance {
            "" => None,
            d => Some(d.parse::<f64>().map_err(|_| bad())?),
        };
        entries.push(ManifestEntry {
            clip_id: clip_id.to_string(),
            kind: kind.to_string(),
            distance_m,
            seed: seed.parse().map_err(|_| bad())?,
            path: rel.to_string(),
        });
    }
    Ok(entries)
}
