//! Runs simulate, reconstruct, analyze and report on a reduced preset, the
//! same steps as the `htomo` subcommands.
//!
//! cargo run --release --example full_pipeline [output-dir]

use std::path::PathBuf;

use heralded_tomography::config::ExperimentConfig;
use heralded_tomography::pipeline::{self, AnalyzeOptions, ReconstructOptions, SimulateOptions};

fn main() -> anyhow::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("htomo-pipeline"), PathBuf::from);
    let mut cfg = ExperimentConfig::experiment();
    cfg.counts.quadratures = 50_000;
    cfg.counts.traces = 10_000;
    cfg.counts.click_trials = 500_000;

    let manifest = pipeline::simulate(&cfg, &dir, &SimulateOptions::default())?;
    for f in &manifest.files {
        println!("{:<16} {:>8} rows  {}", f.name, f.rows, &f.sha256[..16]);
    }
    let opts = ReconstructOptions {
        bootstrap: Some(0),
        ..Default::default()
    };
    pipeline::reconstruct(&dir, &dir, &opts)?;
    pipeline::analyze(&dir, &dir, &AnalyzeOptions::default())?;
    println!("\n{}", pipeline::report(&cfg, Some(&dir))?);
    println!("outputs in {}", dir.display());
    Ok(())
}
