mod common;

use common::*;
use heralded_tomography::fock::DiagonalState;
use heralded_tomography::sampler::*;
use heralded_tomography::temporal::*;
use heralded_tomography::tomography::{maxlik_diagonal, ReconstructionSettings};

const CENTER: f64 = 1.0e-6;

fn photon_source(state: DiagonalState) -> SourceModel {
    let mode = gaussian_mode(TimeGrid::default(), CENTER, 40e-9 * 2f64.sqrt()).unwrap();
    SourceModel::new(state, mode, 1e-3).unwrap()
}

fn ideal() -> DetectionChain {
    DetectionChain::ideal()
}

#[test]
fn vacuum_traces_have_half_variance() {
    let src = photon_source(DiagonalState::vacuum(2).unwrap());
    let grid = TimeGrid::default();
    let filter = gaussian_mode(grid, 0.7e-6, 80e-9).unwrap();
    let q = synth_filtered_quadratures(&src, &ideal(), &grid, &[&filter], 100_000, RngSeed(1)).unwrap();
    let (_, var) = mean_var(&q[0]);
    assert!((var - 0.5).abs() < 0.01, "{var}");
}

#[test]
fn shifted_reference_reconstructs_vacuum() {
    let src = photon_source(DiagonalState::fock(1, 2).unwrap());
    let grid = TimeGrid::default();
    let filter = gaussian_mode(grid, CENTER, 55e-9).unwrap();
    let reference = reference_mode(&filter, 600e-9).unwrap();
    assert!(mode_overlap(&reference, &src.mode).unwrap().abs() < ORTHOGONALITY_THRESHOLD);
    let q = synth_filtered_quadratures(&src, &ideal(), &grid, &[&reference], 100_000, RngSeed(2)).unwrap();
    let r = maxlik_diagonal(&q[0], &ReconstructionSettings::raw()).unwrap();
    assert!(r.state.population(0) >= 0.99, "{:?}", &r.state.populations()[..3]);
}

#[test]
fn scan_selects_sqrt2_wider_filter() {
    let src = photon_source(DiagonalState::fock(1, 2).unwrap());
    let grid = TimeGrid::default();
    let traces = synth_traces(&src, &ideal(), &grid, 0, MIN_SCAN_TRACES, RngSeed(3)).unwrap();
    let widths = [40e-9, 48e-9, 56e-9, 64e-9, 72e-9];
    let scan = optimize_filter_width(&traces, CENTER, &widths).unwrap();
    assert_eq!(scan.optimum, 56e-9, "{:?}", scan.variances);

    let off = optimize_filter_width(&traces, CENTER + 40e-9, &widths).unwrap();
    let best = |s: &FilterScan| s.variances.iter().cloned().fold(f64::MIN, f64::max);
    assert!(best(&off) < best(&scan), "{} vs {}", best(&off), best(&scan));
}

#[test]
fn mode_mismatch_acts_as_loss() {
    let src = photon_source(DiagonalState::fock(1, 2).unwrap());
    let grid = TimeGrid::default();
    let shifted = src.mode.shifted(40e-9).unwrap();
    let overlap = mode_overlap(&shifted, &src.mode).unwrap();
    assert!(overlap > 0.6 && overlap < 0.9, "{overlap}");
    let q = synth_filtered_quadratures(&src, &ideal(), &grid, &[&src.mode, &shifted], 100_000, RngSeed(4)).unwrap();
    let matched = maxlik_diagonal(&q[0], &ReconstructionSettings::raw()).unwrap();
    let mismatched = maxlik_diagonal(&q[1], &ReconstructionSettings::raw()).unwrap();
    let expected = overlap * overlap * matched.state.population(1);
    let got = mismatched.state.population(1);
    assert!((got - expected).abs() < 0.02, "{got} vs {expected}");
}

#[test]
fn extraction_is_linear_in_the_filter() {
    let src = photon_source(DiagonalState::fock(1, 2).unwrap());
    let grid = TimeGrid::default();
    let trace = synth_trace(&src, &ideal(), &grid, RngSeed(5), 0).unwrap();
    let f = gaussian_mode(grid, CENTER, 50e-9).unwrap();
    let g = gaussian_mode(grid, CENTER + 300e-9, 70e-9).unwrap();
    let (a, b) = (0.3, -1.7);
    let combo: Vec<f64> = f.amplitudes().iter().zip(g.amplitudes()).map(|(x, y)| a * x + b * y).collect();
    let norm = combo.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h = TemporalMode::from_amplitudes(grid, combo.iter().map(|v| v / norm).collect()).unwrap();
    let lhs = extract_quadrature(&trace, &h).unwrap() * norm;
    let rhs = a * extract_quadrature(&trace, &f).unwrap() + b * extract_quadrature(&trace, &g).unwrap();
    assert!((lhs - rhs).abs() < 1e-12, "{lhs} {rhs}");
}

#[test]
fn vacuum_scan_falls_back_to_smallest_width() {
    let src = photon_source(DiagonalState::vacuum(2).unwrap());
    let grid = TimeGrid::default();
    let traces = synth_traces(&src, &ideal(), &grid, 0, MIN_SCAN_TRACES, RngSeed(6)).unwrap();
    let widths = [40e-9, 48e-9, 56e-9, 64e-9, 72e-9];
    let scan = optimize_filter_width(&traces, CENTER, &widths).unwrap();
    assert_eq!(scan.optimum, 40e-9, "{:?}", scan.variances);
    assert!(matches!(
        optimize_filter_width(&traces[..MIN_SCAN_TRACES - 1], CENTER, &widths),
        Err(heralded_tomography::Error::InvalidParameter { .. })
    ));
}
