//! Fock-basis numerics for phase-averaged single-mode states.
//!
//! Quadratures use the convention in which the vacuum has variance 1/2:
//! `ψ_n(x) = π^(-1/4) (2^n n!)^(-1/2) H_n(x) e^(-x²/2)`, and the Wigner
//! function is normalized so that it integrates to one over phase space.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// Highest Fock number accepted by the wavefunction recurrence.
pub const MAX_FOCK: usize = 200;

/// Default photon-number cutoff for states and kernels.
pub const DEFAULT_CUTOFF: usize = 10;

const NORM_TOL: f64 = 1e-12;

/// Photon-number populations `p_0..=p_N` of a state diagonal in the Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalState {
    populations: Vec<f64>,
}

impl DiagonalState {
    /// Validates populations: non-negative, summing to one within 1e-12,
    /// with a cutoff between 1 and [`MAX_FOCK`].
    pub fn new(populations: Vec<f64>) -> Result<Self> {
        if populations.len() < 2 {
            return Err(Error::InvalidState("cutoff must be at least 1".into()));
        }
        if populations.len() > MAX_FOCK + 1 {
            return Err(Error::InvalidState(format!(
                "cutoff {} exceeds {MAX_FOCK}",
                populations.len() - 1
            )));
        }
        if let Some((n, p)) = populations
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidState(format!("population p_{n} = {p}")));
        }
        let sum: f64 = populations.iter().sum();
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!(
                "populations sum to {sum}, not 1"
            )));
        }
        Ok(Self { populations })
    }

    /// Normalizes non-negative weights into a state.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::InvalidState(format!("weights sum to {sum}")));
        }
        if weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidState("negative weight".into()));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn vacuum(cutoff: usize) -> Result<Self> {
        Self::fock(0, cutoff)
    }

    /// The number state `|n⟩` padded to `cutoff`.
    pub fn fock(n: usize, cutoff: usize) -> Result<Self> {
        if n > cutoff {
            return Err(invalid("n", format!("{n} exceeds cutoff {cutoff}")));
        }
        let mut p = vec![0.0; cutoff + 1];
        p[n] = 1.0;
        Self::new(p)
    }

    /// Poisson populations with the given mean, truncated at `cutoff` and
    /// renormalized.
    pub fn poissonian(mean: f64, cutoff: usize) -> Result<Self> {
        if !(mean >= 0.0 && mean.is_finite()) {
            return Err(invalid("mean", format!("{mean}")));
        }
        let mut w = Vec::with_capacity(cutoff + 1);
        let mut term = (-mean).exp();
        for n in 0..=cutoff {
            if n > 0 {
                term *= mean / n as f64;
            }
            w.push(term);
        }
        Self::from_weights(w)
    }

    pub fn populations(&self) -> &[f64] {
        &self.populations
    }

    pub fn population(&self, n: usize) -> f64 {
        self.populations.get(n).copied().unwrap_or(0.0)
    }

    pub fn cutoff(&self) -> usize {
        self.populations.len() - 1
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.populations
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Same populations on a different cutoff. Truncation is refused when it
    /// would drop probability mass.
    pub fn with_cutoff(&self, cutoff: usize) -> Result<Self> {
        let mut p = self.populations.clone();
        if cutoff < self.cutoff() {
            let dropped: f64 = p[cutoff + 1..].iter().sum();
            if dropped > NORM_TOL {
                return Err(Error::InvalidState(format!(
                    "truncation to {cutoff} drops mass {dropped}"
                )));
            }
        }
        p.resize(cutoff + 1, 0.0);
        Self::from_weights(p)
    }
}

/// `ψ_n(x)` for a single `n`.
pub fn fock_wavefunction(n: usize, x: f64) -> Result<f64> {
    Ok(*wavefunctions(n, x)?.last().expect("non-empty"))
}

/// `ψ_0(x) ..= ψ_nmax(x)` by the normalized three-term recurrence
/// `ψ_{n+1} = x √(2/(n+1)) ψ_n − √(n/(n+1)) ψ_{n−1}`.
pub fn wavefunctions(nmax: usize, x: f64) -> Result<Vec<f64>> {
    if nmax > MAX_FOCK {
        return Err(Error::FockLimit {
            n: nmax,
            limit: MAX_FOCK,
        });
    }
    let mut out = vec![0.0; nmax + 1];
    fill_wavefunctions(x, &mut out);
    Ok(out)
}

pub(crate) fn fill_wavefunctions(x: f64, out: &mut [f64]) {
    let psi0 = PI.powf(-0.25) * (-0.5 * x * x).exp();
    out[0] = psi0;
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * x * psi0;
    }
    for n in 1..out.len().saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] =
            x * (2.0 / (nf + 1.0)).sqrt() * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
    }
}

/// Quadrature density `Σ_n p_n |ψ_n(x)|²`.
pub fn quadrature_pdf(state: &DiagonalState, x: f64) -> f64 {
    let mut psi = vec![0.0; state.cutoff() + 1];
    fill_wavefunctions(x, &mut psi);
    state
        .populations()
        .iter()
        .zip(&psi)
        .map(|(p, v)| p * v * v)
        .sum()
}

/// Binomial loss matrix `B[n][m] = C(n,m) η^m (1−η)^(n−m)` for `m ≤ n ≤ cutoff`.
pub(crate) fn loss_matrix(eta: f64, cutoff: usize) -> Vec<Vec<f64>> {
    let mut binom = vec![1.0f64];
    let mut rows = Vec::with_capacity(cutoff + 1);
    for n in 0..=cutoff {
        if n > 0 {
            let mut next = vec![1.0; n + 1];
            for m in 1..n {
                next[m] = binom[m - 1] + binom[m];
            }
            binom = next;
        }
        rows.push(
            (0..=n)
                .map(|m| binom[m] * eta.powi(m as i32) * (1.0 - eta).powi((n - m) as i32))
                .collect(),
        );
    }
    rows
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(invalid("eta", format!("{eta} is outside (0, 1]")))
    }
}

/// Passes the state through a beam splitter of transmission `eta`.
pub fn apply_loss(state: &DiagonalState, eta: f64) -> Result<DiagonalState> {
    check_eta(eta)?;
    let b = loss_matrix(eta, state.cutoff());
    let mut out = vec![0.0; state.cutoff() + 1];
    for (n, row) in b.iter().enumerate() {
        let pn = state.populations[n];
        for (m, w) in row.iter().enumerate() {
            out[m] += w * pn;
        }
    }
    DiagonalState::from_weights(out)
}

/// Uniform tabulation grid for quadrature values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XGrid {
    pub lo: f64,
    pub step: f64,
    pub len: usize,
}

impl XGrid {
    /// Grid from `lo` to `hi` (inclusive, rounded to whole steps).
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) {
            return Err(invalid("grid", format!("[{lo}, {hi}] step {step}")));
        }
        let len = ((hi - lo) / step).round() as usize + 1;
        if len < 3 {
            return Err(invalid("grid", "fewer than three points"));
        }
        Ok(Self { lo, step, len })
    }

    pub fn hi(&self) -> f64 {
        self.x(self.len - 1)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.x(i))
    }

    /// Trapezoid-rule integral of samples tabulated on this grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let inner: f64 = values.iter().sum();
        self.step * (inner - 0.5 * (values[0] + values[values.len() - 1]))
    }

    /// Lower bracketing index and interpolation weight, `None` off-grid.
    pub(crate) fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let u = (x - self.lo) / self.step;
        let last = (self.len - 1) as f64;
        if !(u >= -1e-9 && u <= last + 1e-9) {
            return None;
        }
        let u = u.clamp(0.0, last);
        let i = (u.floor() as usize).min(self.len - 2);
        Some((i, u - i as f64))
    }
}

impl Default for XGrid {
    /// `[-8, 8]` with step 0.01.
    fn default() -> Self {
        Self {
            lo: -8.0,
            step: 0.01,
            len: 1601,
        }
    }
}

/// Row integral tolerance for tabulated kernels.
pub const KERNEL_NORM_TOL: f64 = 1e-8;

/// Quadrature densities `G_n(x)` of an inefficient, noisy homodyne detector
/// for each input Fock state, tabulated on a grid.
#[derive(Debug, Clone)]
pub struct MeasurementKernel {
    eta: f64,
    nu: f64,
    grid: XGrid,
    rows: Vec<Vec<f64>>,
}

impl MeasurementKernel {
    /// Tabulates `G_n(x) = Σ_m B[n][m] |ψ_m(x)|²` convolved with a zero-mean
    /// Gaussian of variance `nu/2`.
    pub fn new(eta: f64, nu: f64, cutoff: usize, grid: XGrid) -> Result<Self> {
        check_eta(eta)?;
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(invalid("nu", format!("{nu} is negative")));
        }
        if cutoff == 0 || cutoff > MAX_FOCK {
            return Err(Error::FockLimit {
                n: cutoff,
                limit: MAX_FOCK,
            });
        }
        let mut psi2 = vec![vec![0.0; grid.len]; cutoff + 1];
        let mut psi = vec![0.0; cutoff + 1];
        for (i, x) in grid.points().enumerate() {
            fill_wavefunctions(x, &mut psi);
            for (m, v) in psi.iter().enumerate() {
                psi2[m][i] = v * v;
            }
        }
        let b = loss_matrix(eta, cutoff);
        let mut rows: Vec<Vec<f64>> = b
            .iter()
            .map(|weights| {
                let mut row = vec![0.0; grid.len];
                for (m, w) in weights.iter().enumerate() {
                    if *w != 0.0 {
                        for (r, v) in row.iter_mut().zip(&psi2[m]) {
                            *r += w * v;
                        }
                    }
                }
                row
            })
            .collect();
        if nu > 0.0 {
            let noise = gaussian_taps(nu / 2.0, grid.step);
            for row in rows.iter_mut() {
                *row = convolve(row, &noise, grid.step);
            }
        }
        for (n, row) in rows.iter().enumerate() {
            let integral = grid.integrate(row);
            if (integral - 1.0).abs() > KERNEL_NORM_TOL {
                return Err(Error::KernelNormalization {
                    row: n,
                    integral,
                    tolerance: KERNEL_NORM_TOL,
                });
            }
        }
        Ok(Self {
            eta,
            nu,
            grid,
            rows,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn cutoff(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn grid(&self) -> &XGrid {
        &self.grid
    }

    /// Tabulated row `G_n` on the grid points.
    pub fn row(&self, n: usize) -> &[f64] {
        &self.rows[n]
    }

    /// `G_n(x)` by linear interpolation; `None` outside the grid.
    pub fn eval(&self, n: usize, x: f64) -> Option<f64> {
        let (i, t) = self.grid.locate(x)?;
        let row = &self.rows[n];
        Some(row[i] + t * (row[i + 1] - row[i]))
    }

    /// All rows at `x` written into `out` (length `cutoff + 1`).
    pub fn eval_all(&self, x: f64, out: &mut [f64]) -> Option<()> {
        let (i, t) = self.grid.locate(x)?;
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row[i] + t * (row[i + 1] - row[i]);
        }
        Some(())
    }

    /// Mixture density `Σ_n p_n G_n(x)`.
    pub fn density(&self, state: &DiagonalState, x: f64) -> Option<f64> {
        let (i, t) = self.grid.locate(x)?;
        Some(
            state
                .populations()
                .iter()
                .zip(&self.rows)
                .map(|(p, row)| p * (row[i] + t * (row[i + 1] - row[i])))
                .sum(),
        )
    }
}

/// Trapezoid-normalized Gaussian taps of the given variance, truncated at
/// twelve standard deviations.
fn gaussian_taps(variance: f64, step: f64) -> Vec<f64> {
    let sigma = variance.sqrt();
    let half = ((12.0 * sigma) / step).ceil() as usize;
    let norm = 1.0 / (2.0 * PI * variance).sqrt();
    (0..=2 * half)
        .map(|k| {
            let d = (k as f64 - half as f64) * step;
            norm * (-d * d / (2.0 * variance)).exp()
        })
        .collect()
}

/// Discrete convolution `out_i = Σ_j f_j g(x_i − x_j) h` with zero padding.
fn convolve(f: &[f64], taps: &[f64], step: f64) -> Vec<f64> {
    let half = taps.len() / 2;
    let n = f.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            (lo..=hi)
                .map(|j| f[j] * taps[j + half - i])
                .sum::<f64>()
                * step
        })
        .collect()
}

/// Laguerre polynomials `L_0(y) ..= L_nmax(y)`.
fn laguerre(nmax: usize, y: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if nmax >= 1 {
        out[1] = 1.0 - y;
    }
    for k in 1..nmax {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0 - y) * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

/// Wigner function `Σ_n p_n ((−1)^n/π) L_n(2s) e^(−s)` with `s = x² + p²`.
pub fn wigner(state: &DiagonalState, x: f64, p: f64) -> f64 {
    let s = x * x + p * p;
    let n = state.cutoff();
    let mut l = vec![0.0; n + 1];
    laguerre(n, 2.0 * s, &mut l);
    let alternating: f64 = state
        .populations()
        .iter()
        .zip(&l)
        .enumerate()
        .map(|(k, (pk, lk))| if k % 2 == 0 { pk * lk } else { -pk * lk })
        .sum();
    alternating * (-s).exp() / PI
}

/// `W(0,0) = (1/π) Σ_n (−1)^n p_n`.
pub fn wigner_origin(state: &DiagonalState) -> f64 {
    state
        .populations()
        .iter()
        .enumerate()
        .map(|(k, p)| if k % 2 == 0 { *p } else { -*p })
        .sum::<f64>()
        / PI
}

/// Wigner function sampled on `xs × ps`, indexed `[ix][ip]`.
pub fn wigner_grid(state: &DiagonalState, xs: &[f64], ps: &[f64]) -> Vec<Vec<f64>> {
    xs.iter()
        .map(|&x| ps.iter().map(|&p| wigner(state, x, p)).collect())
        .collect()
}

const MARGINAL_STEP: f64 = 0.05;

/// `∫ W(x, p) dp` by the trapezoid rule over a window wide enough for the
/// state's cutoff.
pub fn wigner_marginal(state: &DiagonalState, x: f64) -> f64 {
    let half_width = 8.0 + 2.0 * (state.cutoff() as f64).sqrt();
    let steps = (2.0 * half_width / MARGINAL_STEP).ceil() as usize;
    let h = 2.0 * half_width / steps as f64;
    let n = state.cutoff();
    let mut l = vec![0.0; n + 1];
    let signed: Vec<f64> = state
        .populations()
        .iter()
        .enumerate()
        .map(|(k, p)| if k % 2 == 0 { *p } else { -*p })
        .collect();
    let mut total = 0.0;
    for k in 0..=steps {
        let p = -half_width + k as f64 * h;
        let s = x * x + p * p;
        laguerre(n, 2.0 * s, &mut l);
        let w: f64 = signed.iter().zip(&l).map(|(a, b)| a * b).sum::<f64>() * (-s).exp();
        let weight = if k == 0 || k == steps { 0.5 } else { 1.0 };
        total += weight * w;
    }
    total * h / PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hermite_closed_form(n: usize, x: f64) -> f64 {
        let h = match n {
            0 => 1.0,
            1 => 2.0 * x,
            2 => 4.0 * x * x - 2.0,
            3 => 8.0 * x.powi(3) - 12.0 * x,
            4 => 16.0 * x.powi(4) - 48.0 * x * x + 12.0,
            _ => unreachable!(),
        };
        let fact = [1.0, 1.0, 2.0, 6.0, 24.0][n];
        PI.powf(-0.25) * h * (-x * x / 2.0).exp() / (2f64.powi(n as i32) * fact).sqrt()
    }

    #[test]
    fn wavefunction_values() {
        assert!((fock_wavefunction(0, 0.0).unwrap() - 0.751125544464943).abs() < 1e-12);
        assert_eq!(fock_wavefunction(1, 0.0).unwrap(), 0.0);
        let expected = PI.powf(-0.25) * 2f64.sqrt() * (-0.5f64).exp();
        assert!((fock_wavefunction(1, 1.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.644288365).abs() < 1e-9);
    }

    #[test]
    fn recurrence_matches_closed_forms() {
        for i in 0..=80 {
            let x = -4.0 + 0.1 * i as f64;
            let psi = wavefunctions(4, x).unwrap();
            for (n, v) in psi.iter().enumerate() {
                assert!((v - hermite_closed_form(n, x)).abs() < 1e-12, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn wavefunction_limit() {
        assert!(fock_wavefunction(200, 1.0).is_ok());
        assert!(matches!(
            fock_wavefunction(201, 1.0),
            Err(Error::FockLimit { n: 201, .. })
        ));
    }

    #[test]
    fn state_validation() {
        assert!(DiagonalState::new(vec![1.0]).is_err());
        assert!(DiagonalState::new(vec![0.5, 0.6]).is_err());
        assert!(DiagonalState::new(vec![1.1, -0.1]).is_err());
        assert!(DiagonalState::new(vec![0.5, 0.5]).is_ok());
        assert!(DiagonalState::fock(3, 2).is_err());
        let s = DiagonalState::new(vec![0.4, 0.6, 0.0]).unwrap();
        assert_eq!(s.with_cutoff(1).unwrap().populations(), &[0.4, 0.6]);
        assert!(DiagonalState::new(vec![0.4, 0.3, 0.3]).unwrap().with_cutoff(1).is_err());
    }

    #[test]
    fn pdf_values() {
        let vac = DiagonalState::vacuum(10).unwrap();
        assert!((quadrature_pdf(&vac, 0.0) - 1.0 / PI.sqrt()).abs() < 1e-12);
        let one = DiagonalState::fock(1, 10).unwrap();
        assert_eq!(quadrature_pdf(&one, 0.0), 0.0);
        let expected = 2.0 * (-1.0f64).exp() / PI.sqrt();
        assert!((quadrature_pdf(&one, 1.0) - expected).abs() < 1e-12);
        assert!((expected - 0.415107).abs() < 1e-6);
    }

    #[test]
    fn pdf_normalized() {
        let s = DiagonalState::new(vec![0.2, 0.3, 0.1, 0.1, 0.1, 0.05, 0.05, 0.0, 0.0, 0.0, 0.1])
            .unwrap();
        let g = XGrid::new(-8.0, 8.0, 0.01).unwrap();
        let v: Vec<f64> = g.points().map(|x| quadrature_pdf(&s, x)).collect();
        assert!((g.integrate(&v) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn loss_examples() {
        let s = DiagonalState::new(vec![0.3, 0.5, 0.2]).unwrap();
        assert_eq!(apply_loss(&s, 1.0).unwrap(), s);
        let one = apply_loss(&DiagonalState::fock(1, 2).unwrap(), 0.82).unwrap();
        assert!((one.population(0) - 0.18).abs() < 1e-15);
        assert!((one.population(1) - 0.82).abs() < 1e-15);
        let two = apply_loss(&DiagonalState::fock(2, 2).unwrap(), 0.5).unwrap();
        assert_eq!(two.populations(), &[0.25, 0.5, 0.25]);
        assert!(apply_loss(&s, 0.0).is_err());
        assert!(apply_loss(&s, 1.5).is_err());
    }

    #[test]
    fn kernel_examples() {
        let grid = XGrid::default();
        let ideal = MeasurementKernel::new(1.0, 0.0, 10, grid).unwrap();
        for (i, x) in grid.points().enumerate().step_by(37) {
            let psi = fock_wavefunction(0, x).unwrap();
            assert_eq!(ideal.row(0)[i], psi * psi);
        }
        let half = MeasurementKernel::new(0.5, 0.0, 10, grid).unwrap();
        assert!((half.eval(1, 0.0).unwrap() - 0.5 / PI.sqrt()).abs() < 1e-12);
        // row normalization is checked during construction
        let noisy = MeasurementKernel::new(0.695, 0.01, 10, grid).unwrap();
        for n in 0..=10 {
            assert!((grid.integrate(noisy.row(n)) - 1.0).abs() < 1e-8);
            assert!(noisy.row(n).iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn noisy_kernel_matches_analytic_vacuum() {
        // vacuum row: Gaussian of variance (1 + nu)/2
        let nu = 0.01;
        let k = MeasurementKernel::new(0.7, nu, 4, XGrid::default()).unwrap();
        let var = 0.5 * (1.0 + nu);
        for x in [-2.0, -0.5, 0.0, 0.3, 1.7] {
            let exact = (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
            assert!((k.eval(0, x).unwrap() - exact).abs() < 1e-6);
        }
    }

    #[test]
    fn narrow_grid_rejected() {
        let grid = XGrid::new(-2.0, 2.0, 0.01).unwrap();
        assert!(matches!(
            MeasurementKernel::new(1.0, 0.0, 4, grid),
            Err(Error::KernelNormalization { .. })
        ));
    }

    #[test]
    fn wigner_examples() {
        let vac = DiagonalState::vacuum(10).unwrap();
        assert!((wigner(&vac, 0.0, 0.0) - 1.0 / PI).abs() < 1e-15);
        let one = DiagonalState::fock(1, 10).unwrap();
        assert!((wigner(&one, 0.0, 0.0) + 1.0 / PI).abs() < 1e-15);
        let s = DiagonalState::new(vec![0.42, 0.57, 0.01]).unwrap();
        let w = wigner(&s, 0.0, 0.0);
        assert!((w - (0.42 - 0.57 + 0.01) / PI).abs() < 1e-12);
        assert!((w + 0.044563).abs() < 1e-6);
    }

    #[test]
    fn wigner_integrates_to_one() {
        let s = DiagonalState::new(vec![0.3, 0.4, 0.2, 0.1]).unwrap();
        let h = 0.05;
        let mut total = 0.0;
        for i in 0..=320 {
            for j in 0..=320 {
                total += wigner(&s, -8.0 + i as f64 * h, -8.0 + j as f64 * h);
            }
        }
        assert!((total * h * h - 1.0).abs() < 1e-6);
    }

    #[test]
    fn marginal_examples() {
        let vac = DiagonalState::vacuum(10).unwrap();
        assert!((wigner_marginal(&vac, 0.0) - 1.0 / PI.sqrt()).abs() < 1e-10);
        let one = DiagonalState::fock(1, 10).unwrap();
        assert!(wigner_marginal(&one, 0.0).abs() < 1e-6);
    }

    fn random_state(max_cutoff: usize) -> impl Strategy<Value = DiagonalState> {
        prop::collection::vec(0.0f64..1.0, 2..=max_cutoff + 1).prop_filter_map(
            "positive weights",
            |w| DiagonalState::from_weights(w).ok(),
        )
    }

    proptest! {
        #[test]
        fn loss_composes(s in random_state(10), e1 in 0.01f64..=1.0, e2 in 0.01f64..=1.0) {
            let a = apply_loss(&apply_loss(&s, e1).unwrap(), e2).unwrap();
            let b = apply_loss(&s, e1 * e2).unwrap();
            for (x, y) in a.populations().iter().zip(b.populations()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn marginal_matches_pdf(s in random_state(10)) {
            let mut worst = 0.0f64;
            for i in 0..=100 {
                let x = -5.0 + 0.1 * i as f64;
                worst = worst.max((wigner_marginal(&s, x) - quadrature_pdf(&s, x)).abs());
            }
            prop_assert!(worst < 1e-6, "max deviation {}", worst);
        }

        #[test]
        fn origin_identity_and_parity_bound(s in random_state(10)) {
            let w = wigner(&s, 0.0, 0.0);
            prop_assert!((w - wigner_origin(&s)).abs() < 1e-12);
            prop_assert!(w >= -1.0 / PI - 1e-15);
        }
    }
}
