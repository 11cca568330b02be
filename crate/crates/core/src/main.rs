use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pcen_detect::cli::{self, Overrides, EXIT_OK, EXIT_USAGE};
use pcen_detect::config::Preset;
use pcen_detect::evaluation::CountingMode;
use pcen_detect::{Detector, Error};

#[derive(Parser, Debug)]
#[command(
    name = "pcen-detect",
    version,
    about = "PCEN and spectral-flux sound event detection"
)]
struct Args {
    /// INI-style pipeline configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse::<Preset>)]
    preset: Option<Preset>,
    #[arg(long, global = true, value_parser = parse::<Detector>)]
    detector: Option<Detector>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse::<CountingMode>)]
    counting: Option<CountingMode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write one novelty-curve CSV per WAV file (directories are expanded).
    Detect {
        #[arg(value_name = "AUDIO")]
        inputs: Vec<PathBuf>,
    },
    /// Calibrate per-distance-bin thresholds at 50% recall.
    Calibrate {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding <clip_id>.csv curves.
        #[arg(long)]
        curves: PathBuf,
    },
    /// Count false alarms on negative curves and report MTBFA@50.
    Evaluate {
        #[arg(long)]
        thresholds: PathBuf,
        /// Take the negatives from a manifest instead of positional paths.
        #[arg(long, requires = "curves")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        curves: Option<PathBuf>,
        #[arg(value_name = "CURVE")]
        negatives: Vec<PathBuf>,
    },
    /// Render the synthetic corpus.
    Synth,
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn run(args: Args) -> Result<i32, Error> {
    let overrides = Overrides {
        preset: args.preset,
        detector: args.detector,
        seed: args.seed,
        counting: args.counting,
    };
    let cfg = cli::resolve_config(args.config.as_deref(), &overrides)?;
    let out = args
        .out
        .ok_or_else(|| Error::Config("--out DIR is required".into()))?;

    match args.command {
        Command::Detect { inputs } => {
            let files = cli::collect_inputs(&inputs, "wav")?;
            let summary = cli::cmd_detect(&cfg, &files, &out)?;
            for (path, err) in &summary.failed {
                eprintln!("{}: {err}", path.display());
            }
            eprintln!(
                "{} curves written, {} failed",
                summary.written.len(),
                summary.failed.len()
            );
            Ok(summary.exit_code())
        }
        Command::Calibrate { manifest, curves } => {
            let set = cli::cmd_calibrate(&cfg, &manifest, &curves, &out)?;
            for b in &set.bins {
                eprintln!(
                    "[{}, {}) m: threshold {} (recall {}, {} clips)",
                    b.bin.lo, b.bin.hi, b.threshold, b.recall, b.n_clips
                );
            }
            Ok(EXIT_OK)
        }
        Command::Evaluate {
            thresholds,
            manifest,
            curves,
            negatives,
        } => {
            let mut paths = cli::collect_inputs(&negatives, "csv")?;
            if let (Some(m), Some(c)) = (manifest, curves) {
                paths.extend(cli::negative_curves_from_manifest(&m, &c)?);
            }
            let report = cli::cmd_evaluate(&cfg, &thresholds, &paths, &out)?;
            eprint!("{}", report.to_csv());
            Ok(EXIT_OK)
        }
        Command::Synth => {
            let n = cli::cmd_synth(&cfg, &out)?;
            eprintln!("{n} clips written to {}", out.display());
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match run(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            cli::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
