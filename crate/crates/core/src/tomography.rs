//! Maximum-likelihood reconstruction of Fock populations from
//! phase-averaged homodyne samples.
//!
//! For a diagonal state the quadrature density is the mixture
//! `P(x) = Σ_n p_n G_n(x)` of the measurement-kernel rows, so the likelihood
//! is maximized over the simplex by the expectation-maximization update
//! `p_n ← p_n · (1/J) Σ_j G_n(x_j) / P(x_j)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{DiagonalState, MeasurementKernel, XGrid, DEFAULT_CUTOFF};
use crate::parallel::{stream_rng, Domain, CHUNK};

/// Fewest samples accepted by the reconstruction.
pub const MIN_SAMPLES: usize = 100;

/// Fewest bootstrap resamples accepted.
pub const MIN_RESAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionSettings {
    pub cutoff: usize,
    /// Detection efficiency folded into the kernel; 1 for a raw reconstruction.
    pub eta_assumed: f64,
    /// Electronic noise folded into the kernel; 0 for a raw reconstruction.
    pub nu_assumed: f64,
    /// Stop when the relative change of the mean log-likelihood drops below this.
    pub tol: f64,
    pub max_iter: usize,
    pub grid: XGrid,
}

impl Default for ReconstructionSettings {
    fn default() -> Self {
        Self {
            cutoff: DEFAULT_CUTOFF,
            eta_assumed: 1.0,
            nu_assumed: 0.0,
            tol: 1e-10,
            max_iter: 5000,
            grid: XGrid::default(),
        }
    }
}

impl ReconstructionSettings {
    /// Uncorrected reconstruction: ideal detector assumed.
    pub fn raw() -> Self {
        Self::default()
    }

    /// Reconstruction corrected for a detector of efficiency `eta` and
    /// electronic noise `nu`.
    pub fn corrected(eta: f64, nu: f64) -> Self {
        Self {
            eta_assumed: eta,
            nu_assumed: nu,
            ..Self::default()
        }
    }

    pub fn is_raw(&self) -> bool {
        self.eta_assumed == 1.0 && self.nu_assumed == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(invalid("tol", format!("{}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if !(self.eta_assumed > 0.0 && self.eta_assumed <= 1.0) {
            return Err(invalid("eta_assumed", format!("{}", self.eta_assumed)));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<MeasurementKernel> {
        MeasurementKernel::new(self.eta_assumed, self.nu_assumed, self.cutoff, self.grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    #[serde(with = "state_serde")]
    pub state: DiagonalState,
    /// Mean log-likelihood of the final state.
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Mean log-likelihood before each update and of the final state.
    pub history: Vec<f64>,
    /// Bootstrap standard error per population, when computed.
    pub errorbars: Option<Vec<f64>>,
}

mod state_serde {
    use super::DiagonalState;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(s: &DiagonalState, ser: S) -> Result<S::Ok, S::Error> {
        s.populations().serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<DiagonalState, D::Error> {
        let v = Vec::<f64>::deserialize(de)?;
        DiagonalState::new(v).map_err(serde::de::Error::custom)
    }
}

/// Kernel rows evaluated at every sample. Samples are stored in blocks of
/// [`CHUNK`]; within a block the layout is population-major so the EM pass
/// runs over contiguous columns.
#[derive(Debug, Clone)]
pub struct LikelihoodMatrix {
    width: usize,
    samples: usize,
    values: Vec<f64>,
}

impl LikelihoodMatrix {
    pub fn new(samples: &[f64], kernel: &MeasurementKernel) -> Result<Self> {
        let width = kernel.cutoff() + 1;
        let mut values = vec![0.0; samples.len() * width];
        let grid = kernel.grid();
        let mut row = vec![0.0; width];
        for (j, &x) in samples.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFiniteSample { index: j, value: x });
            }
            kernel.eval_all(x, &mut row).ok_or(Error::SampleOutOfRange {
                index: j,
                value: x,
                lo: grid.lo,
                hi: grid.hi(),
            })?;
            let (start, len) = Self::block(samples.len(), j / CHUNK);
            let k = j - start;
            for (n, g) in row.iter().enumerate() {
                values[start * width + n * len + k] = *g;
            }
        }
        Ok(Self {
            width,
            samples: samples.len(),
            values,
        })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    fn block(total: usize, c: usize) -> (usize, usize) {
        let start = c * CHUNK;
        (start, CHUNK.min(total - start))
    }

    /// Weighted mean log-likelihood of `p` and the EM ratios
    /// `r_n = Σ_j w_j G_n(x_j)/P(x_j) / Σ_j w_j`, reduced in chunk order.
    fn pass(&self, p: &[f64], weights: Option<&[f64]>) -> (f64, Vec<f64>, Option<usize>) {
        let n_chunks = self.samples.div_ceil(CHUNK);
        let partials: Vec<(f64, f64, Vec<f64>, Option<usize>)> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let (start, len) = Self::block(self.samples, c);
                let block = &self.values[start * self.width..(start + len) * self.width];
                let column = |n: usize| &block[n * len..(n + 1) * len];
                let mut density = vec![0.0; len];
                for (n, &q) in p.iter().enumerate() {
                    for (d, g) in density.iter_mut().zip(column(n)) {
                        *d += g * q;
                    }
                }
                let mut ll = 0.0;
                // Running product of P(x_j)^w_j, folded into `ll` before it
                // leaves the safe exponent range.
                let mut prod = 1.0f64;
                let mut wsum = 0.0;
                let mut zero = None;
                let mut inv = vec![0.0; len];
                for (k, &pj) in density.iter().enumerate() {
                    let w = weights.map_or(1.0, |w| w[start + k]);
                    if w == 0.0 {
                        continue;
                    }
                    if pj <= 0.0 {
                        zero.get_or_insert(start + k);
                        continue;
                    }
                    if w == 1.0 {
                        prod *= pj;
                    } else if w.fract() == 0.0 && w < 64.0 {
                        prod *= pj.powi(w as i32);
                    } else {
                        ll += w * pj.ln();
                    }
                    if !(1e-150..=1e150).contains(&prod) {
                        ll += prod.ln();
                        prod = 1.0;
                    }
                    wsum += w;
                    inv[k] = w / pj;
                }
                let r = (0..self.width).map(|n| dot(column(n), &inv)).collect();
                (ll + prod.ln(), wsum, r, zero)
            })
            .collect();
        let mut ll = 0.0;
        let mut wsum = 0.0;
        let mut r = vec![0.0; self.width];
        let mut zero = None;
        for (l, w, rc, z) in partials {
            ll += l;
            wsum += w;
            for (a, b) in r.iter_mut().zip(rc) {
                *a += b;
            }
            if zero.is_none() {
                zero = z;
            }
        }
        for v in r.iter_mut() {
            *v /= wsum;
        }
        (ll / wsum, r, zero)
    }
}

fn validate_samples(samples: &[f64]) -> Result<()> {
    if samples.len() < MIN_SAMPLES {
        return Err(invalid(
            "samples",
            format!("{} samples, at least {MIN_SAMPLES} required", samples.len()),
        ));
    }
    if let Some((index, value)) = samples.iter().enumerate().find(|(_, x)| !x.is_finite()) {
        return Err(Error::NonFiniteSample { index, value: *value });
    }
    if samples.iter().all(|x| *x == samples[0]) {
        return Err(Error::Degenerate("all samples are identical".into()));
    }
    Ok(())
}

fn normalize(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (a4, a_rest) = a.split_at(a.len() / 4 * 4);
    let (b4, b_rest) = b.split_at(a4.len());
    for (x, y) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = a_rest.iter().zip(b_rest).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn run_em(
    matrix: &LikelihoodMatrix,
    start: Vec<f64>,
    weights: Option<&[f64]>,
    settings: &ReconstructionSettings,
) -> Result<ReconstructionResult> {
    let mut p = start;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_iter {
        let (ll, r, _) = matrix.pass(&p, weights);
        if let Some(&prev) = history.last() {
            let prev: f64 = prev;
            if ((ll - prev) / ll.abs().max(f64::MIN_POSITIVE)).abs() < settings.tol {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        for (pn, rn) in p.iter_mut().zip(&r) {
            *pn *= rn;
        }
        normalize(&mut p);
        iterations += 1;
    }
    if !converged {
        let (ll, _, _) = matrix.pass(&p, weights);
        history.push(ll);
    }
    let loglik = *history.last().expect("at least one pass");
    Ok(ReconstructionResult {
        state: DiagonalState::from_weights(p)?,
        loglik,
        iterations,
        converged,
        history,
        errorbars: None,
    })
}

/// Maximum-likelihood populations, starting from the uniform distribution.
pub fn maxlik_diagonal(samples: &[f64], settings: &ReconstructionSettings) -> Result<ReconstructionResult> {
    settings.validate()?;
    validate_samples(samples)?;
    let kernel = settings.kernel()?;
    let matrix = LikelihoodMatrix::new(samples, &kernel)?;
    let n = settings.cutoff + 1;
    run_em(&matrix, vec![1.0 / n as f64; n], None, settings)
}

/// One EM update of `state` against `samples`.
pub fn em_step(state: &DiagonalState, samples: &[f64], kernel: &MeasurementKernel) -> Result<DiagonalState> {
    let p = padded(state, kernel)?;
    let matrix = LikelihoodMatrix::new(samples, kernel)?;
    let (_, r, zero) = matrix.pass(&p, None);
    if let Some(index) = zero {
        return Err(Error::ZeroLikelihood {
            index,
            value: samples[index],
        });
    }
    let mut next: Vec<f64> = p.iter().zip(&r).map(|(a, b)| a * b).collect();
    normalize(&mut next);
    DiagonalState::from_weights(next)
}

fn padded(state: &DiagonalState, kernel: &MeasurementKernel) -> Result<Vec<f64>> {
    if state.cutoff() > kernel.cutoff() {
        return Err(invalid(
            "state",
            format!("cutoff {} exceeds kernel cutoff {}", state.cutoff(), kernel.cutoff()),
        ));
    }
    let mut p = state.populations().to_vec();
    p.resize(kernel.cutoff() + 1, 0.0);
    Ok(p)
}

/// Mean log-likelihood `(1/J) Σ_j log P(x_j)`.
pub fn loglikelihood(state: &DiagonalState, samples: &[f64], kernel: &MeasurementKernel) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("samples", "empty"));
    }
    let p = padded(state, kernel)?;
    let matrix = LikelihoodMatrix::new(samples, kernel)?;
    let (ll, _, zero) = matrix.pass(&p, None);
    match zero {
        Some(index) => Err(Error::ZeroLikelihood {
            index,
            value: samples[index],
        }),
        None => Ok(ll),
    }
}

/// Nonparametric bootstrap standard errors of the populations.
///
/// Each resample draws `J` samples with replacement; it is reconstructed as a
/// weighted EM over the original likelihood matrix, started from the
/// full-data estimate.
pub fn bootstrap_errors(
    samples: &[f64],
    settings: &ReconstructionSettings,
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_resamples < MIN_RESAMPLES {
        return Err(invalid(
            "n_resamples",
            format!("{n_resamples}, at least {MIN_RESAMPLES} required"),
        ));
    }
    settings.validate()?;
    validate_samples(samples)?;
    let kernel = settings.kernel()?;
    let matrix = LikelihoodMatrix::new(samples, &kernel)?;
    let n = settings.cutoff + 1;
    let full = run_em(&matrix, vec![1.0 / n as f64; n], None, settings)?;
    bootstrap_from(&matrix, &full.state, settings, n_resamples, seed)
}

fn bootstrap_from(
    matrix: &LikelihoodMatrix,
    estimate: &DiagonalState,
    settings: &ReconstructionSettings,
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let j = matrix.samples();
    let start = estimate.populations().to_vec();
    let states: Vec<Vec<f64>> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, Domain::Bootstrap, r);
            let mut weights = vec![0.0; j];
            for _ in 0..j {
                weights[rng.random_range(0..j)] += 1.0;
            }
            run_em(matrix, start.clone(), Some(&weights), settings)
                .map(|res| res.state.populations().to_vec())
        })
        .collect::<Result<_>>()?;
    let k = states.len() as f64;
    Ok((0..start.len())
        .map(|n| {
            let m = states.iter().map(|s| s[n]).sum::<f64>() / k;
            (states.iter().map(|s| (s[n] - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        })
        .collect())
}

/// Reconstruction with bootstrap error bars attached.
pub fn reconstruct_with_errors(
    samples: &[f64],
    settings: &ReconstructionSettings,
    n_resamples: usize,
    seed: u64,
) -> Result<ReconstructionResult> {
    settings.validate()?;
    validate_samples(samples)?;
    let kernel = settings.kernel()?;
    let matrix = LikelihoodMatrix::new(samples, &kernel)?;
    let n = settings.cutoff + 1;
    let mut result = run_em(&matrix, vec![1.0 / n as f64; n], None, settings)?;
    if n_resamples > 0 {
        if n_resamples < MIN_RESAMPLES {
            return Err(invalid("n_resamples", format!("{n_resamples} < {MIN_RESAMPLES}")));
        }
        result.errorbars = Some(bootstrap_from(&matrix, &result.state, settings, n_resamples, seed)?);
    }
    Ok(result)
}
