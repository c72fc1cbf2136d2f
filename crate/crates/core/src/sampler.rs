//! Seeded generation of raw data: quadrature samples, homodyne traces and
//! photon-counting records.
//!
//! Every trace and click record is drawn from its own random stream indexed
//! by trial number, and bulk quadrature samples from fixed-size chunks, so the
//! output depends only on the seed and never on the number of worker threads.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Binomial, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::ClickRecord;
use crate::error::{invalid, Result};
use crate::fock::{apply_loss, fill_wavefunctions, DiagonalState};
use crate::parallel::{chunks, stream_rng, Domain};
use crate::temporal::{HomodyneTrace, TemporalMode, TimeGrid};

/// Width of the SPCM timestamp bins (s).
pub const CLICK_BIN: f64 = 10e-9;

/// Efficiency and noise budget of the two detection paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionChain {
    /// Optical transmission to the homodyne detector.
    pub eta_hd: f64,
    /// Interference visibility between local oscillator and signal.
    pub eta_m: f64,
    /// Photodiode quantum efficiency.
    pub eta_q: f64,
    /// Electronic noise variance as a fraction of the vacuum variance.
    pub nu: f64,
    /// Overall efficiency of the photon-counting path.
    pub eta_c: f64,
}

impl DetectionChain {
    pub fn new(eta_hd: f64, eta_m: f64, eta_q: f64, nu: f64, eta_c: f64) -> Result<Self> {
        let chain = Self {
            eta_hd,
            eta_m,
            eta_q,
            nu,
            eta_c,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_hd", self.eta_hd),
            ("eta_m", self.eta_m),
            ("eta_q", self.eta_q),
            ("eta_c", self.eta_c),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(invalid(name, format!("{v} is outside (0, 1]")));
            }
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(invalid("nu", format!("{}", self.nu)));
        }
        Ok(())
    }

    /// Lossless, noiseless detection.
    pub fn ideal() -> Self {
        Self {
            eta_hd: 1.0,
            eta_m: 1.0,
            eta_q: 1.0,
            nu: 0.0,
            eta_c: 1.0,
        }
    }

    /// The cold-atom experiment: 82 % transmission, 96.5 % visibility,
    /// 91 % photodiodes, 1 % electronic noise, 37 % counting efficiency.
    pub fn experiment() -> Self {
        Self {
            eta_hd: 0.82,
            eta_m: 0.965,
            eta_q: 0.91,
            nu: 0.01,
            eta_c: 0.37,
        }
    }

    /// Effective homodyne efficiency `eta_hd · eta_m² · eta_q`.
    pub fn eta_det(&self) -> f64 {
        self.eta_hd * self.eta_m * self.eta_m * self.eta_q
    }
}

/// Heralded source: emitted state, read-photon envelope and herald
/// probability per write pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    pub state: DiagonalState,
    pub mode: TemporalMode,
    pub herald_rate: f64,
}

impl SourceModel {
    pub fn new(state: DiagonalState, mode: TemporalMode, herald_rate: f64) -> Result<Self> {
        if !(herald_rate > 0.0 && herald_rate <= 1.0) {
            return Err(invalid("herald_rate", format!("{herald_rate}")));
        }
        Ok(Self {
            state,
            mode,
            herald_rate,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

/// Draws quadratures from a diagonal state: a Fock number from the
/// populations, then `x` from `|ψ_n(x)|²` by rejection against a Gaussian
/// proposal of variance `n + 1/2`.
#[derive(Debug, Clone)]
pub struct QuadratureSampler {
    cumulative: Vec<f64>,
    /// Envelope constant `M_n ≥ sup_x |ψ_n(x)|² / q_n(x)` per Fock number.
    envelopes: Vec<f64>,
}

impl QuadratureSampler {
    pub fn new(state: &DiagonalState) -> Self {
        let mut acc = 0.0;
        let cumulative = state
            .populations()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let envelopes = (0..=state.cutoff()).map(envelope_constant).collect();
        Self {
            cumulative,
            envelopes,
        }
    }

    pub fn fock_number<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .iter()
            .position(|c| u < *c)
            .unwrap_or(self.cumulative.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let n = self.fock_number(rng);
        sample_fock_quadrature(n, self.envelopes[n], rng)
    }
}

/// Largest ratio of `|ψ_n|²` to the proposal density on a 0.001 grid, with a
/// 0.1 % safety margin. Exactly one for the vacuum, whose proposal is exact.
fn envelope_constant(n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let var = n as f64 + 0.5;
    let reach = 8.0 * var.sqrt() + 4.0;
    let steps = (2.0 * reach / 1e-3) as usize;
    let mut psi = vec![0.0; n + 1];
    let mut best = 0.0f64;
    for k in 0..=steps {
        let x = -reach + k as f64 * 1e-3;
        fill_wavefunctions(x, &mut psi);
        let q = (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        best = best.max(psi[n] * psi[n] / q);
    }
    best * 1.001
}

fn sample_fock_quadrature<R: Rng + ?Sized>(n: usize, envelope: f64, rng: &mut R) -> f64 {
    let var = n as f64 + 0.5;
    let proposal = Normal::new(0.0, var.sqrt()).expect("positive variance");
    if n == 0 {
        return proposal.sample(rng);
    }
    let mut psi = vec![0.0; n + 1];
    loop {
        let x = proposal.sample(rng);
        fill_wavefunctions(x, &mut psi);
        let q = (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        let u: f64 = rng.random();
        if u * envelope * q <= psi[n] * psi[n] {
            return x;
        }
    }
}

fn electronic_noise(nu: f64) -> Option<Normal<f64>> {
    (nu > 0.0).then(|| Normal::new(0.0, (nu / 2.0).sqrt()).expect("finite noise"))
}

/// I.i.d. homodyne outcomes for `state` seen through `chain`: the state is
/// degraded by the effective efficiency, then Gaussian electronic noise of
/// variance `nu/2` is added.
pub fn sample_quadratures(
    state: &DiagonalState,
    chain: &DetectionChain,
    count: usize,
    seed: RngSeed,
) -> Result<Vec<f64>> {
    chain.validate()?;
    let degraded = apply_loss(state, chain.eta_det())?;
    let sampler = QuadratureSampler::new(&degraded);
    let noise = electronic_noise(chain.nu);
    let parts: Vec<Vec<f64>> = chunks(count)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(c, range)| {
            let mut rng = stream_rng(seed.0, Domain::Quadratures, c);
            range
                .map(|_| {
                    let x = sampler.sample(&mut rng);
                    match &noise {
                        Some(d) => x + d.sample(&mut rng),
                        None => x,
                    }
                })
                .collect()
        })
        .collect();
    Ok(parts.concat())
}

/// Precomputed pieces shared by all traces of one run.
struct TraceSynth<'a> {
    mode: &'a TemporalMode,
    sampler: QuadratureSampler,
    vacuum: Normal<f64>,
    noise: Option<Normal<f64>>,
    seed: u64,
}

impl<'a> TraceSynth<'a> {
    fn new(source: &'a SourceModel, chain: &DetectionChain, grid: &TimeGrid, seed: RngSeed) -> Result<Self> {
        chain.validate()?;
        if source.mode.grid() != grid {
            return Err(crate::Error::GridMismatch {
                dt_a: source.mode.grid().dt(),
                dt_b: grid.dt(),
                n_a: source.mode.grid().n_samples(),
                n_b: grid.n_samples(),
            });
        }
        let degraded = apply_loss(&source.state, chain.eta_det())?;
        Ok(Self {
            mode: &source.mode,
            sampler: QuadratureSampler::new(&degraded),
            vacuum: Normal::new(0.0, 0.5f64.sqrt()).expect("constant"),
            noise: electronic_noise(chain.nu),
            seed: seed.0,
        })
    }

    fn samples(&self, trial: u64) -> Vec<f64> {
        let mut rng = stream_rng(self.seed, Domain::Traces, trial);
        let phi = self.mode.amplitudes();
        let mut h: Vec<f64> = (0..phi.len()).map(|_| self.vacuum.sample(&mut rng)).collect();
        let x_s = self.sampler.sample(&mut rng);
        let projection: f64 = h.iter().zip(phi).map(|(a, b)| a * b).sum();
        let correction = x_s - projection;
        for (v, p) in h.iter_mut().zip(phi) {
            *v += correction * p;
        }
        if let Some(noise) = &self.noise {
            for v in h.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
        h
    }
}

/// One heralded homodyne record.
///
/// White vacuum noise of variance 1/2 per sample realizes every mode
/// orthogonal to the signal; the signal-mode component is replaced by a
/// quadrature drawn from the loss-degraded source state. White electronic
/// noise of variance `nu/2` per sample is added on top.
pub fn synth_trace(
    source: &SourceModel,
    chain: &DetectionChain,
    grid: &TimeGrid,
    seed: RngSeed,
    trial_id: u64,
) -> Result<HomodyneTrace> {
    let synth = TraceSynth::new(source, chain, grid, seed)?;
    HomodyneTrace::new(*grid, synth.samples(trial_id), trial_id)
}

/// Traces for trials `first_trial .. first_trial + count`, in trial order.
pub fn synth_traces(
    source: &SourceModel,
    chain: &DetectionChain,
    grid: &TimeGrid,
    first_trial: u64,
    count: usize,
    seed: RngSeed,
) -> Result<Vec<HomodyneTrace>> {
    let synth = TraceSynth::new(source, chain, grid, seed)?;
    (first_trial..first_trial + count as u64)
        .into_par_iter()
        .map(|t| HomodyneTrace::new(*grid, synth.samples(t), t))
        .collect()
}

/// Synthesizes `count` traces and projects each onto every filter without
/// keeping the traces. Returns `out[k][j]` for filter `k`, trial `j`; trial
/// `j` is identical to `synth_trace(.., j)`.
pub fn synth_filtered_quadratures(
    source: &SourceModel,
    chain: &DetectionChain,
    grid: &TimeGrid,
    filters: &[&TemporalMode],
    count: usize,
    seed: RngSeed,
) -> Result<Vec<Vec<f64>>> {
    let synth = TraceSynth::new(source, chain, grid, seed)?;
    for f in filters {
        if f.grid() != grid {
            return Err(invalid("filters", "filter defined on a different grid"));
        }
    }
    let rows: Vec<Vec<f64>> = (0..count as u64)
        .into_par_iter()
        .map(|t| {
            let h = synth.samples(t);
            filters
                .iter()
                .map(|f| h.iter().zip(f.amplitudes()).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok((0..filters.len())
        .map(|k| rows.iter().map(|r| r[k]).collect())
        .collect())
}

struct ClickSynth {
    sampler: QuadratureSampler,
    arrival: WeightedIndex<f64>,
    dt: f64,
    eta_c: f64,
    seed: u64,
}

impl ClickSynth {
    fn new(source: &SourceModel, chain: &DetectionChain, seed: RngSeed) -> Result<Self> {
        chain.validate()?;
        let arrival = WeightedIndex::new(source.mode.intensity())
            .map_err(|e| invalid("mode", e.to_string()))?;
        Ok(Self {
            sampler: QuadratureSampler::new(&source.state),
            arrival,
            dt: source.mode.grid().dt(),
            eta_c: chain.eta_c,
            seed: seed.0,
        })
    }

    fn record(&self, trial: u64) -> ClickRecord {
        let mut rng = stream_rng(self.seed, Domain::Clicks, trial);
        let n = self.sampler.fock_number(&mut rng);
        let mut times2 = Vec::new();
        let mut times3 = Vec::new();
        for _ in 0..n {
            if rng.random::<f64>() >= self.eta_c {
                continue;
            }
            let to_second: bool = rng.random();
            let i = self.arrival.sample(&mut rng);
            let t = (i as f64 + rng.random::<f64>() - 0.5) * self.dt;
            let bin = (t.max(0.0) / CLICK_BIN).floor() as u32;
            if to_second {
                times2.push(bin);
            } else {
                times3.push(bin);
            }
        }
        times2.sort_unstable();
        times3.sort_unstable();
        ClickRecord {
            trial_id: trial,
            times2,
            times3,
        }
    }
}

/// Heralded photon-counting trials.
///
/// Each trial draws a photon number from the source state, keeps each photon
/// with probability `eta_c`, routes survivors 50:50 to SPCM2 or SPCM3 and
/// stamps them with an arrival time drawn from the intensity envelope,
/// recorded as a 10 ns bin index.
pub fn sample_clicks(
    source: &SourceModel,
    chain: &DetectionChain,
    trials: usize,
    seed: RngSeed,
) -> Result<Vec<ClickRecord>> {
    sample_clicks_range(source, chain, 0, trials, seed)
}

/// Trials `first_trial .. first_trial + count` of the stream that
/// [`sample_clicks`] produces, for batched generation of large runs.
pub fn sample_clicks_range(
    source: &SourceModel,
    chain: &DetectionChain,
    first_trial: u64,
    count: usize,
    seed: RngSeed,
) -> Result<Vec<ClickRecord>> {
    let synth = ClickSynth::new(source, chain, seed)?;
    Ok((first_trial..first_trial + count as u64)
        .into_par_iter()
        .map(|t| synth.record(t))
        .collect())
}

/// Number of heralds among `write_pulses` Bernoulli(`herald_rate`) trials.
pub fn draw_heralded_trials(write_pulses: u64, herald_rate: f64, seed: RngSeed) -> Result<u64> {
    let d = Binomial::new(write_pulses, herald_rate)
        .map_err(|e| invalid("herald_rate", e.to_string()))?;
    Ok(d.sample(&mut stream_rng(seed.0, Domain::Heralds, 0)))
}
