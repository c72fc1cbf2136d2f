mod common;

use common::*;
use heralded_tomography::counting::{arrival_histogram, fit_arrival_profile, Detector};
use heralded_tomography::fock::{apply_loss, quadrature_pdf, DiagonalState, XGrid};
use heralded_tomography::parallel::with_workers;
use heralded_tomography::sampler::*;
use heralded_tomography::temporal::{gaussian_mode, TimeGrid};
use rand_distr::{Binomial, Distribution};

fn source(state: DiagonalState) -> SourceModel {
    let grid = TimeGrid::default();
    let mode = gaussian_mode(grid, 1.0e-6, 40e-9 * 2f64.sqrt()).unwrap();
    SourceModel::new(state, mode, 1e-3).unwrap()
}

#[test]
fn quadratures_follow_the_state_density() {
    let state = DiagonalState::new(vec![0.3, 0.5, 0.2]).unwrap();
    let x = sample_quadratures(&state, &DetectionChain::ideal(), 100_000, RngSeed(3)).unwrap();
    let grid = XGrid::new(-9.0, 9.0, 0.001).unwrap();
    let mut cum = vec![0.0; grid.len];
    for i in 1..grid.len {
        let (a, b) = (grid.x(i - 1), grid.x(i));
        cum[i] = cum[i - 1] + 0.5 * (quadrature_pdf(&state, a) + quadrature_pdf(&state, b)) * grid.step;
    }
    let cdf = |v: f64| {
        let u = (v - grid.lo) / grid.step;
        let i = (u.floor() as usize).min(grid.len - 2);
        cum[i] + (u - i as f64) * (cum[i + 1] - cum[i])
    };
    let p = ks_one_sample(&x, cdf);
    assert!(p > 0.01, "KS p = {p}");
}

#[test]
fn thinning_commutes_with_loss() {
    let mut r = rng(11);
    let state = random_state(&mut r, 6, 2.0);
    let eta = 0.37;
    let degraded = QuadratureSampler::new(&apply_loss(&state, eta).unwrap());
    let full = QuadratureSampler::new(&state);
    let mut a = vec![0u64; 7];
    let mut b = vec![0u64; 7];
    for _ in 0..100_000 {
        a[degraded.fock_number(&mut r)] += 1;
        let n = full.fock_number(&mut r);
        let k = Binomial::new(n as u64, eta).unwrap().sample(&mut r);
        b[k as usize] += 1;
    }
    let p = chi2_homogeneity(&a, &b);
    assert!(p > 0.01, "χ² p = {p}");
}

#[test]
fn filtering_the_signal_mode_reproduces_direct_sampling() {
    let src = source(DiagonalState::new(vec![0.1652, 0.82, 0.0148]).unwrap());
    let chain = DetectionChain::experiment();
    let grid = TimeGrid::default();
    let filtered = synth_filtered_quadratures(&src, &chain, &grid, &[&src.mode], 100_000, RngSeed(5)).unwrap();
    let direct = sample_quadratures(&src.state, &chain, 100_000, RngSeed(6)).unwrap();
    let p = ks_two_sample(&filtered[0], &direct);
    assert!(p > 0.01, "KS p = {p}");
}

#[test]
fn filtered_variance_identity() {
    let mut r = rng(21);
    let chain = DetectionChain::experiment();
    let grid = TimeGrid::default();
    for k in 0..3 {
        let state = random_state(&mut r, 4, 2.0);
        let src = source(state.clone());
        let q = synth_filtered_quadratures(&src, &chain, &grid, &[&src.mode], 100_000, RngSeed(40 + k)).unwrap();
        let (_, var) = mean_var(&q[0]);
        let expected = 0.5 + chain.eta_det() * state.mean_photon_number() + chain.nu / 2.0;
        assert!((var - expected).abs() < 0.02, "state {k}: {var} vs {expected}");
    }
}

#[test]
fn single_photon_variance_through_the_chain() {
    let state = DiagonalState::fock(1, 2).unwrap();
    let chain = DetectionChain::new(0.82, 0.965, 0.91, 0.01, 0.37).unwrap();
    let x = sample_quadratures(&state, &chain, 100_000, RngSeed(9)).unwrap();
    let (_, var) = mean_var(&x);
    let expected = 0.5 + chain.eta_det() + 0.005;
    assert!((var - expected).abs() < 0.02, "{var} vs {expected}");
}

#[test]
fn arrival_profile_has_the_envelope_width() {
    let src = source(DiagonalState::fock(1, 2).unwrap());
    let recs = sample_clicks(&src, &DetectionChain::experiment(), 200_000, RngSeed(13)).unwrap();
    let fit = fit_arrival_profile(&arrival_histogram(&recs, Detector::Both, 220)).unwrap();
    assert!((fit.half_width - 40e-9).abs() < 2e-9, "{}", fit.half_width);
    assert!((fit.center - 1.0e-6).abs() < 2e-9, "{}", fit.center);
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let src = source(DiagonalState::new(vec![0.2, 0.7, 0.1]).unwrap());
    let chain = DetectionChain::experiment();
    let grid = TimeGrid::default();
    let run = || {
        (
            sample_quadratures(&src.state, &chain, 20_000, RngSeed(1)).unwrap(),
            synth_traces(&src, &chain, &grid, 7, 50, RngSeed(1)).unwrap(),
            sample_clicks(&src, &chain, 50_000, RngSeed(1)).unwrap(),
        )
    };
    let one = with_workers(1, run);
    let four = with_workers(4, run);
    assert!(one.0.iter().zip(&four.0).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(one.1, four.1);
    assert_eq!(one.2, four.2);
}
