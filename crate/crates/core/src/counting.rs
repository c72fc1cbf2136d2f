//! Photon-counting statistics: g²(τ) from click records, its analytic value
//! for a diagonal state, and arrival-time histograms.
//!
//! Here τ counts heralded trials, not lab time: `g²(τ)` correlates SPCM2 in
//! trial `i` with SPCM3 in trial `i + τ`.

use std::collections::{BTreeMap, VecDeque};

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::DiagonalState;
use crate::parallel::{stream_rng, Domain};

/// SPCM counts and arrival bins of one heralded trial.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClickRecord {
    pub trial_id: u64,
    /// 10 ns arrival bins on SPCM2, sorted.
    pub times2: Vec<u32>,
    /// 10 ns arrival bins on SPCM3, sorted.
    pub times3: Vec<u32>,
}

impl ClickRecord {
    pub fn n2(&self) -> u32 {
        self.times2.len() as u32
    }

    pub fn n3(&self) -> u32 {
        self.times3.len() as u32
    }

    /// The record with detector labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            trial_id: self.trial_id,
            times2: self.times3.clone(),
            times3: self.times2.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Estimate {
    pub tau: i64,
    pub value: f64,
    pub stderr: f64,
    /// Number of `(i, i + τ)` pairs entering the estimate.
    pub pairs: u64,
}

/// Bootstrap settings for g² standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2Options {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for G2Options {
    fn default() -> Self {
        Self {
            resamples: 1000,
            seed: 0,
        }
    }
}

/// Trial offsets reported in g² tables.
pub const DEFAULT_TAUS: std::ops::RangeInclusive<i64> = -5..=5;

/// Histogram of `(n2(i), n3(i + τ))` pairs. The g² estimate and its trial
/// bootstrap depend on the data only through this table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairTable {
    cells: BTreeMap<(u32, u32), u64>,
}

impl PairTable {
    pub fn add(&mut self, n2: u32, n3: u32) {
        *self.cells.entry((n2, n3)).or_insert(0) += 1;
    }

    pub fn pairs(&self) -> u64 {
        self.cells.values().sum()
    }

    fn ratio(counts: impl Iterator<Item = ((u32, u32), u64)>) -> Option<f64> {
        let (mut total, mut s2, mut s3, mut s23) = (0.0, 0.0, 0.0, 0.0);
        for ((a, b), c) in counts {
            let c = c as f64;
            total += c;
            s2 += c * a as f64;
            s3 += c * b as f64;
            s23 += c * a as f64 * b as f64;
        }
        (s2 > 0.0 && s3 > 0.0).then(|| s23 * total / (s2 * s3))
    }

    /// `⟨n2 n3'⟩ / (⟨n2⟩⟨n3'⟩)` over the table.
    pub fn g2(&self) -> Result<f64> {
        Self::ratio(self.cells.iter().map(|(k, v)| (*k, *v))).ok_or_else(|| {
            Error::UndefinedRatio("a detector recorded no clicks, so ⟨n2⟩⟨n3⟩ = 0".into())
        })
    }

    /// Standard deviation of g² over resampled-with-replacement pairs. A
    /// resample of the pairs is a multinomial draw over the table's cells.
    pub fn bootstrap_stderr(&self, options: &G2Options) -> f64 {
        let keys: Vec<(u32, u32)> = self.cells.keys().copied().collect();
        let probs: Vec<f64> = {
            let total = self.pairs() as f64;
            self.cells.values().map(|c| *c as f64 / total).collect()
        };
        let total = self.pairs();
        let mut rng = stream_rng(options.seed, Domain::Bootstrap, 0);
        let mut values = Vec::with_capacity(options.resamples);
        let mut draw = vec![0u64; keys.len()];
        for _ in 0..options.resamples {
            let mut left = total;
            let mut mass = 1.0;
            for (k, p) in probs.iter().enumerate() {
                if k + 1 == probs.len() {
                    draw[k] = left;
                    break;
                }
                let q = (p / mass).clamp(0.0, 1.0);
                draw[k] = if left == 0 {
                    0
                } else {
                    Binomial::new(left, q).expect("valid").sample(&mut rng)
                };
                left -= draw[k];
                mass -= p;
            }
            if let Some(v) = Self::ratio(keys.iter().copied().zip(draw.iter().copied())) {
                values.push(v);
            }
        }
        if values.len() < 2 {
            return f64::NAN;
        }
        let m = values.iter().sum::<f64>() / values.len() as f64;
        (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
    }
}

/// Streaming g² for several offsets at once, so very long runs never need
/// to be held in memory.
#[derive(Debug, Clone)]
pub struct G2Accumulator {
    taus: Vec<i64>,
    tables: Vec<PairTable>,
    history: VecDeque<(u32, u32)>,
    depth: usize,
    seen: u64,
}

impl G2Accumulator {
    pub fn new(taus: impl IntoIterator<Item = i64>) -> Self {
        let taus: Vec<i64> = taus.into_iter().collect();
        let depth = taus.iter().map(|t| t.unsigned_abs() as usize).max().unwrap_or(0);
        Self {
            tables: vec![PairTable::default(); taus.len()],
            taus,
            history: VecDeque::with_capacity(depth + 1),
            depth,
            seen: 0,
        }
    }

    pub fn push(&mut self, record: &ClickRecord) {
        let (n2, n3) = (record.n2(), record.n3());
        self.history.push_front((n2, n3));
        if self.history.len() > self.depth + 1 {
            self.history.pop_back();
        }
        for (tau, table) in self.taus.iter().zip(self.tables.iter_mut()) {
            let lag = tau.unsigned_abs() as usize;
            if let Some(&(old2, old3)) = self.history.get(lag) {
                if *tau >= 0 {
                    // n2 of trial i - τ with n3 of the current trial
                    table.add(old2, n3);
                } else {
                    table.add(n2, old3);
                }
            }
        }
        self.seen += 1;
    }

    pub fn extend<'a>(&mut self, records: impl IntoIterator<Item = &'a ClickRecord>) {
        for r in records {
            self.push(r);
        }
    }

    pub fn trials(&self) -> u64 {
        self.seen
    }

    pub fn table(&self, tau: i64) -> Option<&PairTable> {
        self.taus.iter().position(|t| *t == tau).map(|k| &self.tables[k])
    }

    pub fn estimate(&self, tau: i64, options: &G2Options) -> Result<G2Estimate> {
        let table = self
            .table(tau)
            .ok_or_else(|| invalid("tau", format!("{tau} was not accumulated")))?;
        if table.pairs() == 0 {
            return Err(invalid("tau", format!("no trial pairs at offset {tau}")));
        }
        Ok(G2Estimate {
            tau,
            value: table.g2()?,
            stderr: table.bootstrap_stderr(options),
            pairs: table.pairs(),
        })
    }

    pub fn estimates(&self, options: &G2Options) -> Result<Vec<G2Estimate>> {
        self.taus.iter().map(|&t| self.estimate(t, options)).collect()
    }
}

/// `g²(τ) = ⟨n2(i) n3(i+τ)⟩ / (⟨n2⟩⟨n3⟩)` with a 1000-resample bootstrap
/// standard error.
pub fn g2_from_counts(records: &[ClickRecord], tau: i64) -> Result<G2Estimate> {
    g2_with(records, tau, &G2Options::default())
}

pub fn g2_with(records: &[ClickRecord], tau: i64, options: &G2Options) -> Result<G2Estimate> {
    if records.len() < 2 {
        return Err(invalid("records", "at least two trials required"));
    }
    if tau.unsigned_abs() as usize >= records.len() {
        return Err(invalid(
            "tau",
            format!("offset {tau} with only {} trials", records.len()),
        ));
    }
    let mut acc = G2Accumulator::new([tau]);
    acc.extend(records);
    acc.estimate(tau, options)
}

/// `Σ n(n−1) p_n / (Σ n p_n)²`.
pub fn g2_theory(state: &DiagonalState) -> Result<f64> {
    let mut first = 0.0;
    let mut second = 0.0;
    for (n, p) in state.populations().iter().enumerate() {
        let n = n as f64;
        first += n * p;
        second += n * (n - 1.0) * p;
    }
    if first <= 0.0 {
        return Err(Error::UndefinedRatio("mean photon number is zero".into()));
    }
    Ok(second / (first * first))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Spcm2,
    Spcm3,
    Both,
}

/// Counts per 10 ns arrival bin; bin `k` covers `[10k, 10(k+1))` ns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalHistogram {
    pub counts: Vec<u64>,
}

impl ArrivalHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin start times in seconds.
    pub fn bin_start(&self, k: usize) -> f64 {
        k as f64 * crate::sampler::CLICK_BIN
    }
}

/// Histogram with at least `n_bins` bins, extended if any click falls later.
pub fn arrival_histogram(records: &[ClickRecord], which: Detector, n_bins: usize) -> ArrivalHistogram {
    let mut counts = vec![0u64; n_bins];
    let mut add = |bins: &[u32]| {
        for &b in bins {
            let b = b as usize;
            if b >= counts.len() {
                counts.resize(b + 1, 0);
            }
            counts[b] += 1;
        }
    };
    for r in records {
        if matches!(which, Detector::Spcm2 | Detector::Both) {
            add(&r.times2);
        }
        if matches!(which, Detector::Spcm3 | Detector::Both) {
            add(&r.times3);
        }
    }
    ArrivalHistogram { counts }
}

/// Gaussian intensity profile `exp(−(t − center)²/half_width²)` fitted to a
/// histogram by moments, with Sheppard's correction for the bin width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalProfile {
    pub center: f64,
    /// 1/e intensity half-width (s).
    pub half_width: f64,
    pub counts: u64,
}

pub fn fit_arrival_profile(hist: &ArrivalHistogram) -> Result<ArrivalProfile> {
    let total = hist.total();
    if total < 2 {
        return Err(Error::Degenerate("fewer than two clicks in histogram".into()));
    }
    let h = crate::sampler::CLICK_BIN;
    let n = total as f64;
    let mid = |k: usize| (k as f64 + 0.5) * h;
    let mean = hist
        .counts
        .iter()
        .enumerate()
        .map(|(k, c)| mid(k) * *c as f64)
        .sum::<f64>()
        / n;
    let var = hist
        .counts
        .iter()
        .enumerate()
        .map(|(k, c)| (mid(k) - mean).powi(2) * *c as f64)
        .sum::<f64>()
        / (n - 1.0)
        - h * h / 12.0;
    if var <= 0.0 {
        return Err(Error::Degenerate("histogram narrower than one bin".into()));
    }
    Ok(ArrivalProfile {
        center: mean,
        half_width: (2.0 * var).sqrt(),
        counts: total,
    })
}
