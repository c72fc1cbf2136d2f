//! Photon-counting trials on the two detectors, second-order correlation
//! across trial offsets and the arrival-time profile.
//!
//! cargo run --release --example photon_counting_g2 [trials]

use heralded_tomography::config::ExperimentConfig;
use heralded_tomography::counting::{
    arrival_histogram, fit_arrival_profile, g2_theory, Detector, G2Accumulator, G2Options, DEFAULT_TAUS,
};
use heralded_tomography::sampler::{sample_clicks, RngSeed};

fn main() -> anyhow::Result<()> {
    let trials: usize = std::env::args().nth(1).map_or(Ok(2_000_000), |s| s.parse())?;
    let cfg = ExperimentConfig::experiment();
    let source = cfg.source_model()?;
    let records = sample_clicks(&source, &cfg.chain, trials, RngSeed(cfg.seed))?;

    let mut acc = G2Accumulator::new(DEFAULT_TAUS);
    acc.extend(&records);
    println!("g2 from {trials} trials (source value {:.4})", g2_theory(&source.state)?);
    for e in acc.estimates(&G2Options::default())? {
        println!("  tau {:+2}  {:.4} ± {:.4}", e.tau, e.value, e.stderr);
    }

    let hist = arrival_histogram(&records, Detector::Both, 220);
    let fit = fit_arrival_profile(&hist)?;
    println!(
        "{} clicks, arrival center {:.1} ns, 1/e half-width {:.1} ns",
        hist.total(),
        fit.center * 1e9,
        fit.half_width * 1e9
    );
    Ok(())
}
