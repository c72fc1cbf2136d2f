//! Closed-form physics of the cavity-enhanced memory: cooperativity and the
//! retrieval limit it sets, the Doppler dephasing time, Gaussian fits of the
//! storage-time decay and the homodyne efficiency budget.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sampler::DetectionChain;

/// Boltzmann constant (J/K), exact in the SI.
pub const BOLTZMANN: f64 = 1.380649e-23;

/// Atomic mass constant (kg), CODATA 2018.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Mass of ⁸⁷Rb in atomic mass units.
pub const RB87_MASS_U: f64 = 86.909_180;

/// Mass of ⁸⁷Rb (kg).
pub const RB87_MASS: f64 = RB87_MASS_U * ATOMIC_MASS_UNIT;

/// Atom-cavity coupling parameters; rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityParams {
    pub atoms: f64,
    /// Single-atom vacuum Rabi frequency `g`.
    pub g: f64,
    /// Cavity field decay rate `κ`.
    pub kappa: f64,
    /// Atomic dipole decay rate `γ`.
    pub gamma: f64,
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("atoms", self.atoms),
            ("g", self.g),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomParams {
    /// kg
    pub mass: f64,
    /// K
    pub temperature: f64,
    /// Wavelength of the light imprinting the spin wave (m).
    pub wavelength: f64,
}

impl AtomParams {
    /// ⁸⁷Rb at 50 µK probed at 795 nm.
    pub fn rb87_50uk() -> Self {
        Self {
            mass: RB87_MASS,
            temperature: 50e-6,
            wavelength: 795e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass", self.mass),
            ("temperature", self.temperature),
            ("wavelength", self.wavelength),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be positive")));
            }
        }
        Ok(())
    }

    /// One-dimensional thermal velocity spread `√(k_B T / m)`.
    pub fn velocity_spread(&self) -> f64 {
        (BOLTZMANN * self.temperature / self.mass).sqrt()
    }
}

/// `C = N g² / (κ γ)`.
pub fn cooperativity(params: &CavityParams) -> Result<f64> {
    params.validate()?;
    Ok(params.atoms * params.g * params.g / (params.kappa * params.gamma))
}

/// Retrieval-efficiency ceiling `C / (1 + C)`.
pub fn eta_max(c: f64) -> Result<f64> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(invalid("cooperativity", format!("{c}")));
    }
    Ok(c / (1.0 + c))
}

/// Doppler dephasing time `√(m / k_B T) / 2k` with `k = 2π/λ`.
pub fn doppler_time(params: &AtomParams) -> Result<f64> {
    params.validate()?;
    let k = 2.0 * PI / params.wavelength;
    Ok((params.mass / (BOLTZMANN * params.temperature)).sqrt() / (2.0 * k))
}

/// Retrieval efficiency versus write-read delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub delays: Vec<f64>,
    pub efficiencies: Vec<f64>,
    pub errors: Option<Vec<f64>>,
}

impl DecayCurve {
    pub fn new(delays: Vec<f64>, efficiencies: Vec<f64>, errors: Option<Vec<f64>>) -> Result<Self> {
        if delays.len() != efficiencies.len() {
            return Err(invalid("efficiencies", "length differs from delays"));
        }
        if let Some(e) = &errors {
            if e.len() != delays.len() {
                return Err(invalid("errors", "length differs from delays"));
            }
            if e.iter().any(|s| !(*s > 0.0)) {
                return Err(invalid("errors", "standard errors must be positive"));
            }
        }
        if delays.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("delays", "must be strictly increasing"));
        }
        if delays.iter().chain(&efficiencies).any(|v| !v.is_finite()) {
            return Err(invalid("curve", "non-finite value"));
        }
        Ok(Self {
            delays,
            efficiencies,
            errors,
        })
    }

    /// `η₀ · exp(−(Δt/τ)²)` sampled at `delays`.
    pub fn model(delays: Vec<f64>, eta0: f64, tau: f64) -> Result<Self> {
        let eff = delays.iter().map(|t| eta0 * (-(t / tau).powi(2)).exp()).collect();
        Self::new(delays, eff, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// The decay time exceeds the longest delay; the curve barely decays.
    IllConditioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub eta0: f64,
    /// Gaussian decay time (s); infinite when no decay is resolved.
    pub tau: f64,
    /// Root-mean-square (unweighted) residual.
    pub residual: f64,
    pub iterations: usize,
    pub status: FitStatus,
}

/// Iteration budget of the decay fit.
pub const DECAY_FIT_MAX_ITER: usize = 100;

/// Least-squares fit of `η(Δt) = η₀ exp(−(Δt/τ)²)`, weighted by `1/σ²`
/// when errors are given.
///
/// The model is fitted in the rate `b = 1/τ²`. A linear regression of
/// `ln η` on `Δt²` seeds damped Gauss-Newton iterations.
pub fn fit_gaussian_decay(curve: &DecayCurve) -> Result<DecayFit> {
    let n = curve.delays.len();
    if n < 3 {
        return Err(invalid("curve", format!("{n} points, at least 3 required")));
    }
    let t2: Vec<f64> = curve.delays.iter().map(|t| t * t).collect();
    let y = &curve.efficiencies;
    let w: Vec<f64> = match &curve.errors {
        Some(e) => e.iter().map(|s| 1.0 / (s * s)).collect(),
        None => vec![1.0; n],
    };
    // time unit so that b stays O(1)
    let scale = t2.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let u: Vec<f64> = t2.iter().map(|v| v / scale).collect();

    let (mut eta0, mut b) = log_linear_guess(&u, y);
    let cost = |eta0: f64, b: f64| -> f64 {
        (0..n)
            .map(|i| w[i] * (y[i] - eta0 * (-b * u[i]).exp()).powi(2))
            .sum()
    };
    let mut current = cost(eta0, b);
    let mut lambda = 1e-3;
    let mut last_step = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < DECAY_FIT_MAX_ITER {
        iterations += 1;
        // normal equations of the 2-parameter problem
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let e = (-b * u[i]).exp();
            let r = y[i] - eta0 * e;
            let j1 = e;
            let j2 = -eta0 * u[i] * e;
            a11 += w[i] * j1 * j1;
            a12 += w[i] * j1 * j2;
            a22 += w[i] * j2 * j2;
            g1 += w[i] * j1 * r;
            g2 += w[i] * j2 * r;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let d11 = a11 * (1.0 + lambda);
            let d22 = a22 * (1.0 + lambda);
            let det = d11 * d22 - a12 * a12;
            if !(det.abs() > 0.0) {
                lambda *= 10.0;
                continue;
            }
            let s1 = (d22 * g1 - a12 * g2) / det;
            let s2 = (d11 * g2 - a12 * g1) / det;
            let (ne, nb) = (eta0 + s1, (b + s2).max(0.0));
            let c = cost(ne, nb);
            if c <= current {
                last_step = (s1 / eta0.abs().max(1e-300)).abs().max((nb - b).abs() / b.abs().max(1e-12));
                eta0 = ne;
                b = nb;
                current = c;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || last_step < 1e-12 || current == 0.0 {
            converged = true;
            break;
        }
    }
    let residual = ((0..n)
        .map(|i| (y[i] - eta0 * (-b * u[i]).exp()).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    if !converged {
        return Err(Error::FitNonConvergence {
            iterations,
            last_step,
            residual,
        });
    }
    let tau = if b > 0.0 { (scale / b).sqrt() } else { f64::INFINITY };
    let window = curve.delays[n - 1];
    let status = if tau > window {
        FitStatus::IllConditioned
    } else {
        FitStatus::Converged
    };
    Ok(DecayFit {
        eta0,
        tau,
        residual,
        iterations,
        status,
    })
}

fn log_linear_guess(u: &[f64], y: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = u
        .iter()
        .zip(y)
        .filter(|(_, v)| **v > 0.0)
        .map(|(a, v)| (*a, v.ln()))
        .collect();
    if pts.len() < 2 {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        return (m, 0.0);
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    (intercept.exp(), (-slope).max(0.0))
}

/// One multiplicative factor of the homodyne efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetItem {
    pub name: String,
    pub value: f64,
    /// Power to which the value enters the product.
    pub exponent: i32,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBudget {
    pub eta_det: f64,
    pub items: Vec<BudgetItem>,
}

/// `η_det = η_hd · η_m² · η_q`, itemized. The visibility enters squared
/// because it is a field overlap.
pub fn efficiency_budget(chain: &DetectionChain) -> Result<EfficiencyBudget> {
    chain.validate()?;
    let items: Vec<BudgetItem> = [
        ("optical transmission", chain.eta_hd, 1),
        ("mode-matching visibility", chain.eta_m, 2),
        ("photodiode quantum efficiency", chain.eta_q, 1),
    ]
    .into_iter()
    .map(|(name, value, exponent)| BudgetItem {
        name: name.to_string(),
        value,
        exponent,
        contribution: value.powi(exponent),
    })
    .collect();
    Ok(EfficiencyBudget {
        eta_det: items.iter().map(|i| i.contribution).product(),
        items,
    })
}
