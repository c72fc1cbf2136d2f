//! Temporal modes on a sampled time grid.
//!
//! A quadrature in mode `f` is the inner product of a photocurrent record with
//! the unit-norm samples of `f`. Because filters are normalized in the
//! discrete sense, white vacuum noise of variance 1/2 per sample yields
//! quadratures of variance exactly 1/2 under any filter.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Overlap below which a shifted filter is accepted as a vacuum reference.
pub const ORTHOGONALITY_THRESHOLD: f64 = 1e-3;

/// Largest fraction of a Gaussian mode's norm allowed outside the grid.
pub const CLIP_TOLERANCE: f64 = 1e-6;

/// Minimum number of traces for a filter-width scan.
pub const MIN_SCAN_TRACES: usize = 10_000;


/// Uniformly sampled acquisition window starting at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    n_samples: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_samples: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("{dt}")));
        }
        if n_samples < 2 {
            return Err(invalid("n_samples", format!("{n_samples} < 2")));
        }
        Ok(Self { dt, n_samples })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.n_samples as f64 * self.dt
    }

    fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                dt_a: self.dt,
                dt_b: other.dt,
                n_a: self.n_samples,
                n_b: other.n_samples,
            })
        }
    }
}

impl Default for TimeGrid {
    /// 2.2 µs at 250 MHz.
    fn default() -> Self {
        Self {
            dt: 4e-9,
            n_samples: 550,
        }
    }
}

/// Unit-norm amplitude envelope on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalMode {
    grid: TimeGrid,
    amplitudes: Vec<f64>,
    center: f64,
    /// 1/e amplitude half-width, for Gaussian modes.
    sigma: Option<f64>,
}

impl TemporalMode {
    /// Normalizes arbitrary samples. The center is the intensity centroid.
    pub fn from_amplitudes(grid: TimeGrid, amplitudes: Vec<f64>) -> Result<Self> {
        if amplitudes.len() != grid.n_samples {
            return Err(invalid(
                "amplitudes",
                format!("{} samples on a {}-sample grid", amplitudes.len(), grid.n_samples),
            ));
        }
        let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(invalid("amplitudes", "zero or non-finite norm"));
        }
        let amplitudes: Vec<f64> = amplitudes.into_iter().map(|a| a / norm).collect();
        let center = amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| grid.time(i) * a * a)
            .sum();
        Ok(Self {
            grid,
            amplitudes,
            center,
            sigma: None,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    /// Normalized intensity `|f(t_i)|²` per sample.
    pub fn intensity(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a * a).collect()
    }

    /// 1/e half-width of the intensity envelope estimated from its second
    /// moment, assuming a Gaussian profile.
    pub fn intensity_half_width(&self) -> f64 {
        let var: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let d = self.grid.time(i) - self.center;
                d * d * a * a
            })
            .sum();
        (2.0 * var).sqrt()
    }

    /// The same envelope delayed by `shift` seconds.
    ///
    /// Gaussian modes are regenerated at the new center; other envelopes are
    /// moved by a whole number of samples and must not lose norm.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        if let Some(sigma) = self.sigma {
            return gaussian_mode(self.grid, self.center + shift, sigma);
        }
        let k = (shift / self.grid.dt).round() as isize;
        let n = self.grid.n_samples as isize;
        let mut out = vec![0.0; self.grid.n_samples];
        let mut lost = 0.0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            let j = i as isize + k;
            if (0..n).contains(&j) {
                out[j as usize] = *a;
            } else {
                lost += a * a;
            }
        }
        if lost > CLIP_TOLERANCE {
            return Err(Error::ModeClipped { lost });
        }
        Self::from_amplitudes(self.grid, out)
    }
}

/// Gaussian mode `a(t) ∝ exp(−(t − center)²/sigma²)`, i.e. `sigma` is the 1/e
/// amplitude half-width. The intensity then has 1/e half-width `sigma/√2`.
pub fn gaussian_mode(grid: TimeGrid, center: f64, sigma: f64) -> Result<TemporalMode> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("{sigma}")));
    }
    if !center.is_finite() {
        return Err(invalid("center", format!("{center}")));
    }
    let profile = |t: f64| {
        let u = (t - center) / sigma;
        (-u * u).exp()
    };
    let amplitudes: Vec<f64> = (0..grid.n_samples).map(|i| profile(grid.time(i))).collect();
    let inside: f64 = amplitudes.iter().map(|a| a * a).sum();

    // Same-pitch samples beyond both ends, out to 12 sigma.
    let reach = (12.0 * sigma / grid.dt).ceil() as i64;
    let last = grid.n_samples as i64 - 1;
    let first_c = ((center - 12.0 * sigma) / grid.dt).floor() as i64;
    let last_c = first_c + 2 * reach + 1;
    let outside: f64 = (first_c..=last_c)
        .filter(|i| *i < 0 || *i > last)
        .map(|i| profile(i as f64 * grid.dt).powi(2))
        .sum();
    let lost = outside / (inside + outside);
    if !(inside > 0.0) || lost > CLIP_TOLERANCE {
        return Err(Error::ModeClipped {
            lost: if inside > 0.0 { lost } else { 1.0 },
        });
    }
    let norm = inside.sqrt();
    Ok(TemporalMode {
        grid,
        amplitudes: amplitudes.into_iter().map(|a| a / norm).collect(),
        center,
        sigma: Some(sigma),
    })
}

/// Discrete inner product of two modes on the same grid.
pub fn mode_overlap(f: &TemporalMode, g: &TemporalMode) -> Result<f64> {
    f.grid.ensure_same(&g.grid)?;
    Ok(dot(&f.amplitudes, &g.amplitudes))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sampled photocurrent of one heralded trial, in vacuum-normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneTrace {
    grid: TimeGrid,
    samples: Vec<f64>,
    trial_id: u64,
}

impl HomodyneTrace {
    pub fn new(grid: TimeGrid, samples: Vec<f64>, trial_id: u64) -> Result<Self> {
        if samples.len() != grid.n_samples {
            return Err(invalid(
                "samples",
                format!("{} samples on a {}-sample grid", samples.len(), grid.n_samples),
            ));
        }
        Ok(Self {
            grid,
            samples,
            trial_id,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn trial_id(&self) -> u64 {
        self.trial_id
    }
}

/// `x = Σ_i h_i f_i`.
pub fn extract_quadrature(trace: &HomodyneTrace, filter: &TemporalMode) -> Result<f64> {
    trace.grid.ensure_same(&filter.grid)?;
    Ok(dot(&trace.samples, &filter.amplitudes))
}

/// `filter` delayed by `shift`, checked to be orthogonal to `filter`.
pub fn reference_mode(filter: &TemporalMode, shift: f64) -> Result<TemporalMode> {
    let shifted = filter.shifted(shift)?;
    let overlap = mode_overlap(filter, &shifted)?.abs();
    if overlap >= ORTHOGONALITY_THRESHOLD {
        return Err(Error::NotOrthogonal {
            overlap,
            threshold: ORTHOGONALITY_THRESHOLD,
        });
    }
    Ok(shifted)
}

/// Quadrature in the time-shifted, orthogonal copy of `filter`. The trace
/// holds vacuum in that mode, which calibrates the shot-noise level.
pub fn vacuum_reference(trace: &HomodyneTrace, filter: &TemporalMode, shift: f64) -> Result<f64> {
    extract_quadrature(trace, &reference_mode(filter, shift)?)
}

/// Outcome of a filter-width scan.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterScan {
    /// Candidate 1/e amplitude half-widths (s), as given.
    pub widths: Vec<f64>,
    /// Sample variance of the extracted quadratures per width.
    pub variances: Vec<f64>,
    /// Standard error of each variance's difference from the best one,
    /// computed from paired per-trace values (zero for the best width).
    pub paired_stderr: Vec<f64>,
    /// Selected width.
    pub optimum: f64,
}

/// Scans Gaussian filter widths centered at `center` and returns the width
/// maximizing the quadrature variance.
///
/// For phase-averaged states the variance is `1/2 + n̄` in the filtered mode,
/// so maximizing it maximizes the detected photon number. Widths whose
/// variance is within two paired standard errors of the maximum count as
/// ties, and ties go to the smallest width.
pub fn optimize_filter_width(
    traces: &[HomodyneTrace],
    center: f64,
    widths: &[f64],
) -> Result<FilterScan> {
    if traces.is_empty() || widths.is_empty() {
        return Err(Error::Degenerate("empty traces or width list".into()));
    }
    if traces.len() < MIN_SCAN_TRACES {
        return Err(invalid(
            "traces",
            format!("{} traces, at least {MIN_SCAN_TRACES} required", traces.len()),
        ));
    }
    if widths.len() < 3 {
        return Err(invalid("widths", "at least three candidate widths required"));
    }
    let grid = *traces[0].grid();
    let filters = widths
        .iter()
        .map(|&w| gaussian_mode(grid, center, w))
        .collect::<Result<Vec<_>>>()?;
    // quadratures[k][j] for width k, trace j
    let per_trace: Vec<Vec<f64>> = traces
        .par_iter()
        .map(|t| {
            filters
                .iter()
                .map(|f| extract_quadrature(t, f))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let quadratures: Vec<Vec<f64>> = (0..widths.len())
        .map(|k| per_trace.iter().map(|row| row[k]).collect())
        .collect();
    select_width(widths, &quadratures)
}

pub(crate) fn select_width(widths: &[f64], quadratures: &[Vec<f64>]) -> Result<FilterScan> {
    let j = quadratures[0].len() as f64;
    let centered: Vec<Vec<f64>> = quadratures
        .iter()
        .map(|q| {
            let mean = q.iter().sum::<f64>() / j;
            q.iter().map(|x| (x - mean) * (x - mean)).collect()
        })
        .collect();
    let variances: Vec<f64> = centered
        .iter()
        .map(|sq| sq.iter().sum::<f64>() / (j - 1.0))
        .collect();
    let best = (0..widths.len())
        .max_by(|&a, &b| variances[a].total_cmp(&variances[b]))
        .expect("non-empty");
    let paired_stderr: Vec<f64> = centered
        .iter()
        .map(|sq| {
            let d: Vec<f64> = sq.iter().zip(&centered[best]).map(|(a, b)| a - b).collect();
            let m = d.iter().sum::<f64>() / j;
            let v = d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (j - 1.0);
            (v / j).sqrt()
        })
        .collect();
    let optimum = (0..widths.len())
        .filter(|&k| variances[k] >= variances[best] - 2.0 * paired_stderr[k])
        .map(|k| widths[k])
        .min_by(f64::total_cmp)
        .expect("best width is always a candidate");
    Ok(FilterScan {
        widths: widths.to_vec(),
        variances,
        paired_stderr,
        optimum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::default()
    }

    #[test]
    fn default_grid_is_22_microseconds() {
        let g = grid();
        assert_eq!(g.n_samples(), 550);
        assert!((g.duration() - 2.2e-6).abs() < 1e-15);
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1e-9, 1).is_err());
    }

    #[test]
    fn gaussian_mode_is_normalized_and_peaked() {
        let m = gaussian_mode(grid(), 1.0e-6, 55e-9).unwrap();
        let norm: f64 = m.amplitudes().iter().map(|a| a * a).sum();
        assert!((norm - 1.0).abs() < 1e-10);
        let peak = m
            .amplitudes()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 250);
        assert!((mode_overlap(&m, &m).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn shifted_overlap_matches_gaussian_integral() {
        // a(t) = exp(-t²/σ²) has standard-deviation parameter σ_g = σ/√2;
        // the overlap of two copies separated by Δ is exp(-Δ²/(4σ_g²)).
        let sigma = 55e-9;
        let sigma_g = sigma / 2f64.sqrt();
        let f = gaussian_mode(grid(), 1.0e-6, sigma).unwrap();
        for delta in [10e-9, 40e-9, 80e-9, 150e-9] {
            let g = gaussian_mode(grid(), 1.0e-6 + delta, sigma).unwrap();
            let exact = (-delta * delta / (4.0 * sigma_g * sigma_g)).exp();
            assert!((mode_overlap(&f, &g).unwrap() - exact).abs() < 1e-9, "Δ={delta}");
        }
        let far = gaussian_mode(grid(), 1.6e-6, sigma).unwrap();
        assert!(mode_overlap(&f, &far).unwrap().abs() < 1e-8);
    }

    #[test]
    fn clipped_mode_rejected() {
        assert!(matches!(
            gaussian_mode(grid(), 0.05e-6, 55e-9),
            Err(Error::ModeClipped { .. })
        ));
        assert!(gaussian_mode(grid(), 1e-6, 0.0).is_err());
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = gaussian_mode(grid(), 1e-6, 55e-9).unwrap();
        let b = gaussian_mode(TimeGrid::new(4e-9, 600).unwrap(), 1e-6, 55e-9).unwrap();
        assert!(matches!(mode_overlap(&a, &b), Err(Error::GridMismatch { .. })));
        let t = HomodyneTrace::new(*b.grid(), vec![0.0; 600], 0).unwrap();
        assert!(extract_quadrature(&t, &a).is_err());
        assert!(HomodyneTrace::new(grid(), vec![0.0; 3], 0).is_err());
    }

    #[test]
    fn intensity_width_is_amplitude_width_over_sqrt2() {
        for sigma in [40e-9, 55e-9, 80e-9] {
            let m = gaussian_mode(grid(), 1e-6, sigma).unwrap();
            let w = m.intensity_half_width();
            assert!((w - sigma / 2f64.sqrt()).abs() / w < 1e-6);
        }
    }

    #[test]
    fn extraction_basics() {
        let f = gaussian_mode(grid(), 1e-6, 55e-9).unwrap();
        let zero = HomodyneTrace::new(grid(), vec![0.0; 550], 0).unwrap();
        assert_eq!(extract_quadrature(&zero, &f).unwrap(), 0.0);
        let same = HomodyneTrace::new(grid(), f.amplitudes().to_vec(), 1).unwrap();
        assert!((extract_quadrature(&same, &f).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extraction_is_linear() {
        let f = gaussian_mode(grid(), 1e-6, 55e-9).unwrap();
        let g = gaussian_mode(grid(), 1.1e-6, 30e-9).unwrap();
        let a: Vec<f64> = (0..550).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let b: Vec<f64> = (0..550).map(|i| ((i * 104729) % 37) as f64 / 18.0 - 1.0).collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
        let ta = HomodyneTrace::new(grid(), a, 0).unwrap();
        let tb = HomodyneTrace::new(grid(), b, 0).unwrap();
        let ts = HomodyneTrace::new(grid(), sum, 0).unwrap();
        let lhs = extract_quadrature(&ts, &f).unwrap();
        let rhs = 2.0 * extract_quadrature(&ta, &f).unwrap() - 3.0 * extract_quadrature(&tb, &f).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);

        let fg: Vec<f64> = f.amplitudes().iter().zip(g.amplitudes()).map(|(x, y)| x + y).collect();
        let direct: f64 = ta.samples().iter().zip(&fg).map(|(h, w)| h * w).sum();
        let split = extract_quadrature(&ta, &f).unwrap() + extract_quadrature(&ta, &g).unwrap();
        assert!((direct - split).abs() < 1e-12);
    }

    #[test]
    fn reference_orthogonality() {
        let f = gaussian_mode(grid(), 1e-6, 55e-9).unwrap();
        let trace = HomodyneTrace::new(grid(), vec![0.1; 550], 0).unwrap();
        match vacuum_reference(&trace, &f, 0.0) {
            Err(Error::NotOrthogonal { overlap, .. }) => assert!((overlap - 1.0).abs() < 1e-10),
            other => panic!("{other:?}"),
        }
        let r = reference_mode(&f, 600e-9).unwrap();
        assert!(mode_overlap(&f, &r).unwrap() < ORTHOGONALITY_THRESHOLD);
        assert!(vacuum_reference(&trace, &f, 600e-9).is_ok());
    }

    #[test]
    fn non_gaussian_shift_moves_samples() {
        let mut amps = vec![0.0; 550];
        amps[100] = 1.0;
        amps[101] = 1.0;
        let m = TemporalMode::from_amplitudes(grid(), amps).unwrap();
        let s = m.shifted(40e-9).unwrap();
        assert!(s.amplitudes()[110] > 0.7);
        assert!(m.shifted(-1e-6).is_err());
    }

    #[test]
    fn scan_rejects_bad_inputs() {
        assert!(optimize_filter_width(&[], 1e-6, &[40e-9, 50e-9, 60e-9]).is_err());
        let t = HomodyneTrace::new(grid(), vec![0.0; 550], 0).unwrap();
        assert!(optimize_filter_width(&[t], 1e-6, &[]).is_err());
    }

    #[test]
    fn selection_prefers_smaller_width_on_ties() {
        let widths = [3.0, 1.0, 2.0];
        let q = vec![vec![1.0, -1.0, 1.0, -1.0]; 3];
        let scan = select_width(&widths, &q).unwrap();
        assert_eq!(scan.optimum, 1.0);
    }
}
