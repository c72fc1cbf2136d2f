mod common;

use common::*;
use heralded_tomography::fock::{apply_loss, DiagonalState};
use heralded_tomography::sampler::{sample_quadratures, DetectionChain, RngSeed};
use heralded_tomography::tomography::*;

fn target() -> DiagonalState {
    DiagonalState::new(vec![0.42, 0.57, 0.01]).unwrap()
}

fn ideal_samples(state: &DiagonalState, count: usize, seed: u64) -> Vec<f64> {
    sample_quadratures(state, &DetectionChain::ideal(), count, RngSeed(seed)).unwrap()
}

#[test]
fn recovers_the_generating_state() {
    let truth = target();
    let x = ideal_samples(&truth, 100_000, 1);
    let r = maxlik_diagonal(&x, &ReconstructionSettings::raw()).unwrap();
    assert!(r.converged);
    for n in 0..=10 {
        let d = (r.state.population(n) - truth.population(n)).abs();
        assert!(d < 0.01, "p{n}: {} vs {}", r.state.population(n), truth.population(n));
    }
}

#[test]
fn corrected_reconstruction_undoes_the_chain() {
    let source = DiagonalState::new(vec![0.18, 0.82]).unwrap();
    let chain = DetectionChain::experiment();
    let x = sample_quadratures(&source, &chain, 100_000, RngSeed(2)).unwrap();
    let corrected = maxlik_diagonal(&x, &ReconstructionSettings::corrected(chain.eta_det(), chain.nu)).unwrap();
    assert!((corrected.state.population(1) - 0.82).abs() < 0.02, "{}", corrected.state.population(1));

    // Raw fit of the same data ≈ corrected fit pushed back through the loss.
    let raw = maxlik_diagonal(&x, &ReconstructionSettings::raw()).unwrap();
    let pushed = apply_loss(&corrected.state, chain.eta_det()).unwrap();
    for n in 0..=10 {
        let d = (raw.state.population(n) - pushed.population(n)).abs();
        assert!(d < 0.02, "p{n}: {} vs {}", raw.state.population(n), pushed.population(n));
    }
}

#[test]
fn lossy_single_photon_has_small_two_photon_part() {
    // Loss only: unmodeled electronic noise would itself mimic n ≥ 2.
    let chain = DetectionChain::new(0.82, 0.965, 0.91, 0.0, 0.37).unwrap();
    let x = sample_quadratures(&DiagonalState::fock(1, 2).unwrap(), &chain, 100_000, RngSeed(3)).unwrap();
    let r = maxlik_diagonal(&x, &ReconstructionSettings::raw()).unwrap();
    assert!(r.state.population(2) <= 0.01, "{}", r.state.population(2));
}

#[test]
fn truth_is_a_fixed_point_in_expectation() {
    let truth = target().with_cutoff(10).unwrap();
    let x = ideal_samples(&truth, 1_000_000, 4);
    let settings = ReconstructionSettings::raw();
    let next = em_step(&truth, &x, &settings.kernel().unwrap()).unwrap();
    for n in 0..=10 {
        let d = (next.population(n) - truth.population(n)).abs();
        assert!(d < 0.005, "p{n} moved by {d}");
    }
}

#[test]
fn truth_outscores_perturbed_states() {
    let truth = target().with_cutoff(10).unwrap();
    let x = ideal_samples(&truth, 100_000, 5);
    let kernel = ReconstructionSettings::raw().kernel().unwrap();
    let base = loglikelihood(&truth, &x, &kernel).unwrap();
    for n in 0..=3 {
        for delta in [-0.1, 0.1] {
            let mut p = truth.populations().to_vec();
            p[n] += delta;
            if p[n] < 0.0 {
                continue;
            }
            let other = DiagonalState::from_weights(p).unwrap();
            let ll = loglikelihood(&other, &x, &kernel).unwrap();
            assert!(base >= ll, "p{n}{delta:+}: {ll} > {base}");
        }
    }
}

#[test]
fn loglikelihood_never_decreases() {
    let mut r = rng(6);
    for k in 0..5 {
        let truth = random_state(&mut r, 4, 1.5);
        let x = ideal_samples(&truth, 20_000, 60 + k);
        let res = maxlik_diagonal(&x, &ReconstructionSettings::raw()).unwrap();
        for w in res.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "dataset {k}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn em_step_preserves_normalization() {
    let x = ideal_samples(&target(), 5_000, 7);
    let kernel = ReconstructionSettings::raw().kernel().unwrap();
    let mut s = DiagonalState::from_weights(vec![1.0; 11]).unwrap();
    for _ in 0..50 {
        s = em_step(&s, &x, &kernel).unwrap();
        assert!((s.populations().iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }
}

#[test]
fn bootstrap_errors_scale_with_sample_size() {
    let truth = target();
    let settings = ReconstructionSettings::raw();
    let x = ideal_samples(&truth, 100_000, 8);
    let big = bootstrap_errors(&x, &settings, 50, 1).unwrap();
    assert!(big[1] <= 0.01, "σ(p1) = {}", big[1]);
    let small = bootstrap_errors(&x[..25_000], &settings, 50, 2).unwrap();
    let ratio = small[1] / big[1];
    assert!((ratio - 2.0).abs() < 0.6, "ratio {ratio}");
}
