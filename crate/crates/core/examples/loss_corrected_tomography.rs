//! Maximum-likelihood reconstruction of homodyne data, raw and with the
//! detector efficiency and electronic noise corrected.
//!
//! cargo run --release --example loss_corrected_tomography [samples]

use heralded_tomography::config::ExperimentConfig;
use heralded_tomography::fock::wigner_origin;
use heralded_tomography::sampler::{sample_quadratures, RngSeed};
use heralded_tomography::tomography::reconstruct_with_errors;

fn main() -> anyhow::Result<()> {
    let count: usize = std::env::args().nth(1).map_or(Ok(100_000), |s| s.parse())?;
    let cfg = ExperimentConfig::experiment();
    let samples = sample_quadratures(&cfg.state()?, &cfg.chain, count, RngSeed(cfg.seed))?;
    println!("{count} quadratures, effective efficiency {:.4}", cfg.chain.eta_det());

    for corrected in [false, true] {
        let settings = cfg.reconstruction_settings(corrected)?;
        let r = reconstruct_with_errors(&samples, &settings, 20, cfg.seed)?;
        let err = r.errorbars.as_deref().unwrap_or(&[]);
        println!(
            "\n{} (eta {:.4}, nu {:.3}): {} EM iterations, log-likelihood {:.6}",
            if corrected { "corrected" } else { "raw" },
            settings.eta_assumed,
            settings.nu_assumed,
            r.iterations,
            r.loglik
        );
        for n in 0..4 {
            println!("  p{n} = {:.4} ± {:.4}", r.state.population(n), err.get(n).copied().unwrap_or(0.0));
        }
        println!("  W(0,0) = {:+.4}", wigner_origin(&r.state));
    }
    Ok(())
}
