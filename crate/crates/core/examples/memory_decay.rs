//! Cavity retrieval limit, motional dephasing time and a fit to a noisy
//! storage-time scan.
//!
//! cargo run --example memory_decay

use heralded_tomography::config::ExperimentConfig;
use heralded_tomography::pipeline::synth_decay;
use heralded_tomography::physics::{cooperativity, doppler_time, eta_max, fit_gaussian_decay};
use heralded_tomography::sampler::RngSeed;

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig::experiment();
    if let Some(cavity) = &cfg.cavity {
        let c = cooperativity(cavity)?;
        println!("cooperativity {c:.2}, retrieval limit {:.4}", eta_max(c)?);
    }
    for c in [1.0, 5.0, 15.0, 50.0] {
        println!("  C = {c:4}  C/(1+C) = {:.4}", eta_max(c)?);
    }

    let tau = doppler_time(&cfg.atoms)?;
    println!(
        "\nDoppler dephasing time at {:.0} uK: {:.1} ns",
        cfg.atoms.temperature * 1e6,
        tau * 1e9
    );

    let decay = cfg.decay.as_ref().expect("preset has a decay scan");
    let curve = synth_decay(&cfg, decay, RngSeed(cfg.seed))?;
    println!("\ndelay (ns)  efficiency");
    for (t, e) in curve.delays.iter().zip(&curve.efficiencies) {
        println!("{:10.0}  {:.4}", t * 1e9, e);
    }
    let fit = fit_gaussian_decay(&curve)?;
    println!(
        "fit: eta0 {:.3}, tau {:.1} ns, {:?} after {} iterations",
        fit.eta0,
        fit.tau * 1e9,
        fit.status,
        fit.iterations
    );
    Ok(())
}
