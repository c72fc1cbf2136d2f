//! Fock-state wavefunctions, the loss channel and Wigner negativity.
//!
//! cargo run --example fock_and_wigner

use heralded_tomography::fock::{apply_loss, fock_wavefunction, quadrature_pdf, wigner, wigner_origin, DiagonalState};

fn main() -> heralded_tomography::Result<()> {
    println!("  x      psi0     psi1     psi2");
    for i in 0..=8 {
        let x = -2.0 + 0.5 * i as f64;
        println!(
            "{x:5.2} {:8.5} {:8.5} {:8.5}",
            fock_wavefunction(0, x)?,
            fock_wavefunction(1, x)?,
            fock_wavefunction(2, x)?
        );
    }

    let photon = DiagonalState::fock(1, 4)?;
    println!("\nW(0,0) of a single photon through a lossy channel");
    println!("  eta    p1      W(0,0)");
    for eta in [1.0, 0.9, 0.7, 0.5, 0.3] {
        let s = apply_loss(&photon, eta)?;
        println!("{eta:5.2} {:7.4} {:+8.5}", s.population(1), wigner_origin(&s));
    }

    // Source state from the preset after the homodyne efficiency.
    let source = DiagonalState::new(vec![0.1652, 0.82, 0.0148])?;
    let seen = apply_loss(&source, 0.69488)?;
    println!("\nquadrature density and Wigner cut of the detected state");
    for i in 0..=12 {
        let x = 0.25 * i as f64;
        let bar = "#".repeat((quadrature_pdf(&seen, x) * 80.0) as usize);
        println!("{x:5.2} {:+8.5} {bar}", wigner(&seen, x, 0.0));
    }
    Ok(())
}
