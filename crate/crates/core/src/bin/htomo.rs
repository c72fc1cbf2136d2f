use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heralded_tomography::config::ExperimentConfig;
use heralded_tomography::parallel::{workers_from_env, WORKERS_ENV};
use heralded_tomography::pipeline::{self, AnalyzeOptions, Correction, ReconstructOptions, SimulateOptions};

/// Simulation and analysis of a heralded single-photon source measured by
/// homodyne tomography and photon counting.
#[derive(Parser)]
#[command(name = "htomo", version, after_help = "Worker threads: set HTOMO_WORKERS (default: all cores).\n\
    Exit codes: 0 success, 1 usage error, 2 runtime error.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate quadratures, traces, click records and a decay scan.
    Simulate {
        /// Config file (TOML, or a manifest.json). Defaults to the built-in preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of click-counting trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Number of quadrature samples.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Reconstruct photon-number populations and Wigner functions.
    Reconstruct {
        #[command(flatten)]
        io: DatasetArgs,
        /// Only the detector-corrected reconstruction.
        #[arg(long, conflicts_with = "raw")]
        correct: bool,
        /// Only the raw reconstruction.
        #[arg(long)]
        raw: bool,
        /// Phase-space grid as lo,hi,step.
        #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
        grid: Option<[f64; 3]>,
        /// Bootstrap resamples for error bars.
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Photon statistics, arrival histograms, filter scan and decay fit.
    Analyze {
        #[command(flatten)]
        io: DatasetArgs,
        #[arg(long)]
        g2: bool,
        #[arg(long)]
        histogram: bool,
        #[arg(long)]
        filter_scan: bool,
        #[arg(long)]
        decay: bool,
    },
    /// Print a text summary of a config and any results.
    Report {
        /// Config file. Defaults to the dataset manifest, then the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset or results directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DatasetArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    config: PathBuf,
    /// Results directory (defaults to the dataset directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(v).map_err(|_| "expected lo,hi,step".to_string())
}

fn dataset_dir(p: &Path) -> PathBuf {
    if p.is_file() {
        p.parent().map(PathBuf::from).unwrap_or_default()
    } else {
        p.to_path_buf()
    }
}

fn run(cli: Cli) -> anyhow::Result<String> {
    let mut text = String::new();
    match cli.command {
        Command::Simulate { config, out, seed, trials, samples } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::experiment(),
            };
            let m = pipeline::simulate(&cfg, &out, &SimulateOptions { seed, trials, samples })?;
            for f in &m.files {
                writeln!(text, "{} {} rows sha256 {}", f.name, f.rows, f.sha256)?;
            }
        }
        Command::Reconstruct { io, correct, raw, grid, bootstrap } => {
            let data = dataset_dir(&io.config);
            let out = io.out.unwrap_or_else(|| data.clone());
            let correction = match (correct, raw) {
                (true, _) => Correction::Corrected,
                (_, true) => Correction::Raw,
                _ => Correction::Both,
            };
            let r = pipeline::reconstruct(&data, &out, &ReconstructOptions { correction, wigner_grid: grid, bootstrap })?;
            for (label, e) in [("raw", &r.raw), ("corrected", &r.corrected)] {
                if let Some(e) = e {
                    writeln!(text, "{label}: populations {:?} W(0,0) {:.5}", e.populations, e.wigner_origin)?;
                }
            }
        }
        Command::Analyze { io, g2, histogram, filter_scan, decay } => {
            let data = dataset_dir(&io.config);
            let out = io.out.unwrap_or_else(|| data.clone());
            let s = pipeline::analyze(&data, &out, &AnalyzeOptions { g2, histogram, filter_scan, decay })?;
            writeln!(text, "{}", serde_json::to_string_pretty(&s)?)?;
        }
        Command::Report { config, out } => {
            let cfg = match (&config, &out) {
                (Some(p), _) => ExperimentConfig::load(p)?,
                (None, Some(d)) if d.join("manifest.json").exists() => ExperimentConfig::load(&d.join("manifest.json"))?,
                _ => ExperimentConfig::experiment(),
            };
            text = pipeline::report(&cfg, out.as_deref())?;
        }
    }
    Ok(text)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = workers_from_env() {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {WORKERS_ENV}: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(text) => {
            // A closed stdout (e.g. piped into `head`) is not a failure.
            let _ = std::io::stdout().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
