//! End-to-end pipelines behind the `htomo` subcommands.
//!
//! * [`simulate`] writes a dataset directory from a config.
//! * [`reconstruct`] runs raw and detector-corrected tomography on its
//!   quadratures.
//! * [`analyze`] computes g², arrival histograms, the filter-width scan and
//!   the storage-time fit.
//! * [`report`] renders a plain-text summary.

use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::counting::{arrival_histogram, fit_arrival_profile, ArrivalProfile, Detector, G2Accumulator, G2Estimate, G2Options, DEFAULT_TAUS};
use crate::error::{Error, Result};
use crate::fock::{quadrature_pdf, wigner_grid, wigner_marginal, wigner_origin, XGrid};
use crate::io::{self, FileEntry, Manifest, OutputSet};
use crate::parallel::{stream_rng, Domain};
use crate::physics::{self, DecayCurve, DecayFit};
use crate::sampler::{self, RngSeed};
use crate::temporal::{self, gaussian_mode};
use crate::tomography::{reconstruct_with_errors, ReconstructionResult};

pub const TOOL: &str = "htomo";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const RECONSTRUCTION_FILE: &str = "reconstruction.json";
pub const WIGNER_RAW_FILE: &str = "wigner_raw.csv";
pub const WIGNER_CORRECTED_FILE: &str = "wigner_corrected.csv";
pub const MARGINALS_FILE: &str = "marginals.csv";
pub const G2_FILE: &str = "g2.csv";
pub const ARRIVAL_FILE: &str = "arrival.csv";
pub const FILTER_SCAN_FILE: &str = "filter_scan.csv";
pub const SUMMARY_FILE: &str = "summary.json";

const TRACE_BATCH: usize = 2048;
const CLICK_BATCH: usize = 1 << 20;
const ARRIVAL_BINS: usize = 220;

#[derive(Debug, Clone, Copy, Default)]
pub struct SimulateOptions {
    pub seed: Option<u64>,
    /// Overrides the click-trial count.
    pub trials: Option<usize>,
    /// Overrides the quadrature-sample count.
    pub samples: Option<usize>,
}

/// Config after command-line overrides.
pub fn effective_config(config: &ExperimentConfig, opts: &SimulateOptions) -> ExperimentConfig {
    let mut cfg = config.clone();
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(t) = opts.trials {
        cfg.counts.click_trials = t;
        cfg.counts.write_pulses = None;
    }
    if let Some(s) = opts.samples {
        cfg.counts.quadratures = s;
    }
    cfg
}

/// Generates every dataset the config asks for into `out`.
pub fn simulate(config: &ExperimentConfig, out: &Path, opts: &SimulateOptions) -> Result<Manifest> {
    let cfg = effective_config(config, opts);
    cfg.validate()?;
    let seed = RngSeed(cfg.seed);
    let state = cfg.state()?;
    let source = cfg.source_model()?;
    let grid = cfg.time_grid()?;
    let mut set = OutputSet::new(out)?;
    let mut files = Vec::new();

    if cfg.counts.quadratures > 0 {
        let x = sampler::sample_quadratures(&state, &cfg.chain, cfg.counts.quadratures, seed)?;
        let w = set.create(io::QUADRATURES_FILE)?;
        io::write_quadratures(w, &x)?;
        files.push((io::QUADRATURES_FILE, x.len()));
    }

    if cfg.counts.traces > 0 {
        let path = set.final_path(io::TRACES_FILE);
        let mut w = io::trace_writer(set.create(io::TRACES_FILE)?, &grid)?;
        let mut first = 0u64;
        while (first as usize) < cfg.counts.traces {
            let n = TRACE_BATCH.min(cfg.counts.traces - first as usize);
            let batch = sampler::synth_traces(&source, &cfg.chain, &grid, first, n, seed)?;
            io::append_traces(&mut w, &batch)?;
            first += n as u64;
        }
        w.flush().map_err(io::io_err(&path))?;
        files.push((io::TRACES_FILE, cfg.counts.traces));
    }

    let heralded = match cfg.counts.write_pulses {
        Some(pulses) => Some(sampler::draw_heralded_trials(pulses, cfg.source.herald_rate, seed)?),
        None => None,
    };
    let click_trials = heralded.map_or(cfg.counts.click_trials, |h| h as usize);
    if click_trials > 0 {
        let path = set.final_path(io::CLICKS_FILE);
        let mut w = io::click_writer(set.create(io::CLICKS_FILE)?)?;
        let mut first = 0u64;
        while (first as usize) < click_trials {
            let n = CLICK_BATCH.min(click_trials - first as usize);
            let batch = sampler::sample_clicks_range(&source, &cfg.chain, first, n, seed)?;
            io::append_clicks(&mut w, &batch)?;
            first += n as u64;
        }
        w.flush().map_err(io::io_err(&path))?;
        files.push((io::CLICKS_FILE, click_trials));
    }

    if let Some(d) = &cfg.decay {
        let curve = synth_decay(&cfg, d, seed)?;
        io::write_decay(set.create(io::DECAY_FILE)?, &curve)?;
        files.push((io::DECAY_FILE, curve.delays.len()));
    }

    // BufWriters above are flushed; drop them before hashing the staged files.
    let mut entries = Vec::new();
    for (name, rows) in files {
        let staged = set.staged_path(name).expect("staged").to_path_buf();
        entries.push(FileEntry {
            name: name.to_string(),
            rows,
            sha256: io::sha256_file(&staged)?,
        });
    }
    let manifest = Manifest {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        seed: cfg.seed,
        config: cfg,
        heralded_trials: heralded,
        files: entries,
    };
    set.write(io::MANIFEST_FILE, manifest.to_json().as_bytes())?;
    set.commit()?;
    Ok(manifest)
}

/// Storage-time scan `η₀ exp(−(Δt/τ)²)` plus Gaussian noise.
pub fn synth_decay(cfg: &ExperimentConfig, d: &crate::config::DecayConfig, seed: RngSeed) -> Result<DecayCurve> {
    let (eta0, tau) = cfg.decay_curve_params(d)?;
    let mut rng = stream_rng(seed.0, Domain::Decay, 0);
    let noise = (d.noise > 0.0).then(|| Normal::new(0.0, d.noise).expect("positive"));
    let eff = d
        .delays
        .iter()
        .map(|t| {
            let clean = eta0 * (-(t / tau).powi(2)).exp();
            noise.as_ref().map_or(clean, |n| clean + n.sample(&mut rng))
        })
        .collect();
    let errors = noise.map(|_| vec![d.noise; d.delays.len()]);
    DecayCurve::new(d.delays.clone(), eff, errors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Correction {
    /// Raw and corrected side by side.
    #[default]
    Both,
    Raw,
    Corrected,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReconstructOptions {
    pub correction: Correction,
    /// Phase-space grid `[lo, hi, step]` overriding the config's.
    pub wigner_grid: Option<[f64; 3]>,
    /// Bootstrap resamples overriding the config's (0 disables error bars).
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionEntry {
    pub eta_assumed: f64,
    pub nu_assumed: f64,
    pub populations: Vec<f64>,
    pub errorbars: Option<Vec<f64>>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wigner_origin: f64,
}

impl ReconstructionEntry {
    fn new(r: &ReconstructionResult, eta: f64, nu: f64) -> Self {
        Self {
            eta_assumed: eta,
            nu_assumed: nu,
            populations: r.state.populations().to_vec(),
            errorbars: r.errorbars.clone(),
            loglik: r.loglik,
            iterations: r.iterations,
            converged: r.converged,
            wigner_origin: wigner_origin(&r.state),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerTable {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// `values[ix][ip]`
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    /// Bin centers.
    pub x: Vec<f64>,
    /// Histogram density of the measured quadratures.
    pub empirical: Vec<f64>,
    /// Quadrature density of the raw reconstruction.
    pub raw_pdf: Vec<f64>,
    /// `∫ W dp` of the raw reconstruction.
    pub raw_marginal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub samples: usize,
    pub raw: Option<ReconstructionEntry>,
    pub corrected: Option<ReconstructionEntry>,
    pub wigner_raw: Option<WignerTable>,
    pub wigner_corrected: Option<WignerTable>,
    pub marginals: Option<Marginals>,
}

fn grid_points(spec: [f64; 3]) -> Result<Vec<f64>> {
    let [lo, hi, step] = spec;
    Ok(XGrid::new(lo, hi, step)?.points().collect())
}

/// Tomography of `dataset/quadratures.csv`, written to `out`.
pub fn reconstruct(dataset: &Path, out: &Path, opts: &ReconstructOptions) -> Result<ReconstructionReport> {
    let manifest = Manifest::read(dataset)?;
    let cfg = &manifest.config;
    let samples = io::read_quadratures(&dataset.join(io::QUADRATURES_FILE))?;
    let bootstrap = opts.bootstrap.unwrap_or(cfg.reconstruction.bootstrap);
    let axis = grid_points(opts.wigner_grid.unwrap_or(cfg.analysis.wigner_grid))?;

    let run = |corrected: bool| -> Result<(ReconstructionResult, f64, f64)> {
        let s = cfg.reconstruction_settings(corrected)?;
        let r = reconstruct_with_errors(&samples, &s, bootstrap, cfg.seed)?;
        Ok((r, s.eta_assumed, s.nu_assumed))
    };
    let raw = match opts.correction {
        Correction::Both | Correction::Raw => Some(run(false)?),
        Correction::Corrected => None,
    };
    let corrected = match opts.correction {
        Correction::Both | Correction::Corrected => Some(run(true)?),
        Correction::Raw => None,
    };

    let table = |r: &ReconstructionResult| WignerTable {
        x: axis.clone(),
        p: axis.clone(),
        values: wigner_grid(&r.state, &axis, &axis),
    };
    let marginals = raw.as_ref().map(|(r, _, _)| {
        let step = axis[1] - axis[0];
        let lo = axis[0] - step / 2.0;
        let mut counts = vec![0usize; axis.len()];
        for x in &samples {
            let k = ((x - lo) / step).floor();
            if k >= 0.0 && (k as usize) < counts.len() {
                counts[k as usize] += 1;
            }
        }
        let j = samples.len() as f64;
        Marginals {
            x: axis.clone(),
            empirical: counts.iter().map(|c| *c as f64 / (j * step)).collect(),
            raw_pdf: axis.iter().map(|x| quadrature_pdf(&r.state, *x)).collect(),
            raw_marginal: axis.iter().map(|x| wigner_marginal(&r.state, *x)).collect(),
        }
    });
    let report = ReconstructionReport {
        samples: samples.len(),
        raw: raw.as_ref().map(|(r, e, n)| ReconstructionEntry::new(r, *e, *n)),
        corrected: corrected.as_ref().map(|(r, e, n)| ReconstructionEntry::new(r, *e, *n)),
        wigner_raw: raw.as_ref().map(|(r, _, _)| table(r)),
        wigner_corrected: corrected.as_ref().map(|(r, _, _)| table(r)),
        marginals,
    };

    let mut set = OutputSet::new(out)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    set.write(RECONSTRUCTION_FILE, json.as_bytes())?;
    for (name, t) in [
        (WIGNER_RAW_FILE, &report.wigner_raw),
        (WIGNER_CORRECTED_FILE, &report.wigner_corrected),
    ] {
        if let Some(t) = t {
            let mut s = String::from("x,p,w\n");
            for (ix, x) in t.x.iter().enumerate() {
                for (ip, p) in t.p.iter().enumerate() {
                    let _ = writeln!(s, "{x},{p},{}", t.values[ix][ip]);
                }
            }
            set.write(name, s.as_bytes())?;
        }
    }
    if let Some(m) = &report.marginals {
        let mut s = String::from("x,empirical,raw_pdf,raw_marginal\n");
        for i in 0..m.x.len() {
            let _ = writeln!(s, "{},{},{},{}", m.x[i], m.empirical[i], m.raw_pdf[i], m.raw_marginal[i]);
        }
        set.write(MARGINALS_FILE, s.as_bytes())?;
    }
    set.commit()?;
    Ok(report)
}

/// Which analyses to run. With nothing selected, every analysis whose input
/// file exists is run.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyzeOptions {
    pub g2: bool,
    pub histogram: bool,
    pub filter_scan: bool,
    pub decay: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub sigma_opt: f64,
    pub widths: Vec<f64>,
    pub variances: Vec<f64>,
    /// Quadrature variance in the time-shifted reference mode.
    pub vacuum_reference_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysisSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g2: Option<Vec<G2Estimate>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g2_zero: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arrival_spcm2: Option<ArrivalProfile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arrival_spcm3: Option<ArrivalProfile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayFit>,
}

fn require(dir: &Path, name: &str) -> Result<std::path::PathBuf> {
    let p = dir.join(name);
    if p.exists() {
        Ok(p)
    } else {
        Err(Error::MissingFile(p))
    }
}

/// Analyses of a dataset, written to `out`.
pub fn analyze(dataset: &Path, out: &Path, opts: &AnalyzeOptions) -> Result<AnalysisSummary> {
    let manifest = Manifest::read(dataset)?;
    let cfg = &manifest.config;
    let auto = !(opts.g2 || opts.histogram || opts.filter_scan || opts.decay);
    let has = |name: &str| dataset.join(name).exists();
    let want_clicks = opts.g2 || opts.histogram || (auto && has(io::CLICKS_FILE));
    let want_scan = opts.filter_scan || (auto && has(io::TRACES_FILE));
    let want_decay = opts.decay || (auto && has(io::DECAY_FILE));

    let mut summary = AnalysisSummary::default();
    let mut outputs: Vec<(&str, String)> = Vec::new();

    if want_clicks {
        let path = require(dataset, io::CLICKS_FILE)?;
        let mut acc = G2Accumulator::new(DEFAULT_TAUS);
        let mut h2 = vec![0u64; ARRIVAL_BINS];
        let mut h3 = vec![0u64; ARRIVAL_BINS];
        let mut batch = Vec::with_capacity(1 << 16);
        let mut reader = io::ClickReader::open(&path)?;
        loop {
            batch.clear();
            for rec in reader.by_ref().take(1 << 16) {
                batch.push(rec?);
            }
            if batch.is_empty() {
                break;
            }
            acc.extend(&batch);
            for (hist, det) in [(&mut h2, Detector::Spcm2), (&mut h3, Detector::Spcm3)] {
                let part = arrival_histogram(&batch, det, hist.len());
                hist.resize(part.counts.len().max(hist.len()), 0);
                for (a, b) in hist.iter_mut().zip(part.counts) {
                    *a += b;
                }
            }
        }
        if opts.g2 || auto {
            let options = G2Options {
                resamples: cfg.analysis.g2_resamples,
                seed: cfg.seed,
            };
            let est = acc.estimates(&options)?;
            let mut s = String::from("tau,g2,stderr,pairs\n");
            for e in &est {
                let _ = writeln!(s, "{},{},{},{}", e.tau, e.value, e.stderr, e.pairs);
            }
            outputs.push((G2_FILE, s));
            summary.g2_zero = est.iter().find(|e| e.tau == 0).map(|e| e.value);
            summary.g2 = Some(est);
        }
        if opts.histogram || auto {
            let len = h2.len().max(h3.len());
            h2.resize(len, 0);
            h3.resize(len, 0);
            let mut s = String::from("bin,start_s,spcm2,spcm3\n");
            for k in 0..len {
                let _ = writeln!(s, "{k},{},{},{}", k as f64 * sampler::CLICK_BIN, h2[k], h3[k]);
            }
            outputs.push((ARRIVAL_FILE, s));
            summary.arrival_spcm2 = fit_arrival_profile(&crate::counting::ArrivalHistogram { counts: h2 }).ok();
            summary.arrival_spcm3 = fit_arrival_profile(&crate::counting::ArrivalHistogram { counts: h3 }).ok();
        }
    }

    if want_scan {
        let path = require(dataset, io::TRACES_FILE)?;
        let grid = cfg.time_grid()?;
        let traces = io::read_traces(&path, &grid)?;
        let center = cfg.source.mode_center;
        let scan = temporal::optimize_filter_width(&traces, center, &cfg.analysis.filter_widths)?;
        let best = gaussian_mode(grid, center, scan.optimum)?;
        let reference = temporal::reference_mode(&best, cfg.analysis.reference_shift)?;
        let refs: Vec<f64> = traces
            .iter()
            .map(|t| temporal::extract_quadrature(t, &reference))
            .collect::<Result<_>>()?;
        let m = refs.iter().sum::<f64>() / refs.len() as f64;
        let var = refs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (refs.len() as f64 - 1.0);
        let mut s = String::from("width_s,variance,paired_stderr\n");
        for k in 0..scan.widths.len() {
            let _ = writeln!(s, "{},{},{}", scan.widths[k], scan.variances[k], scan.paired_stderr[k]);
        }
        outputs.push((FILTER_SCAN_FILE, s));
        summary.filter = Some(FilterSummary {
            sigma_opt: scan.optimum,
            widths: scan.widths,
            variances: scan.variances,
            vacuum_reference_variance: var,
        });
    }

    if want_decay {
        let path = require(dataset, io::DECAY_FILE)?;
        let curve = io::read_decay(&path)?;
        summary.decay = Some(physics::fit_gaussian_decay(&curve)?);
    }

    let mut set = OutputSet::new(out)?;
    for (name, body) in outputs {
        set.write(name, body.as_bytes())?;
    }
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    set.write(SUMMARY_FILE, json.as_bytes())?;
    set.commit()?;
    Ok(summary)
}

/// Plain-text summary of a config and, when present, of the results stored
/// next to it.
pub fn report(cfg: &ExperimentConfig, results: Option<&Path>) -> Result<String> {
    let mut s = String::new();
    let budget = physics::efficiency_budget(&cfg.chain)?;
    let _ = writeln!(s, "homodyne efficiency budget");
    for item in &budget.items {
        let _ = writeln!(
            s,
            "  {:<32} {:.4}^{} = {:.4}",
            item.name, item.value, item.exponent, item.contribution
        );
    }
    let _ = writeln!(s, "  {:<32} {:.4}", "effective efficiency", budget.eta_det);
    let _ = writeln!(s, "  {:<32} {:.4}", "electronic noise (vacuum units)", cfg.chain.nu);
    let _ = writeln!(s, "  {:<32} {:.4}", "photon-counting efficiency", cfg.chain.eta_c);
    let state = cfg.state()?;
    let _ = writeln!(s, "source");
    let _ = writeln!(s, "  {:<32} {:.4}", "single-photon population", state.population(1));
    let _ = writeln!(
        s,
        "  {:<32} {:.4}",
        "expected raw single-photon part",
        crate::fock::apply_loss(&state, budget.eta_det)?.population(1)
    );
    if let Ok(g2) = crate::counting::g2_theory(&state) {
        let _ = writeln!(s, "  {:<32} {:.4}", "g2(0)", g2);
    }
    if let Some(c) = &cfg.cavity {
        let coop = physics::cooperativity(c)?;
        let _ = writeln!(s, "cavity");
        let _ = writeln!(s, "  {:<32} {:.3}", "cooperativity", coop);
        let _ = writeln!(s, "  {:<32} {:.4}", "retrieval limit C/(1+C)", physics::eta_max(coop)?);
    }
    let _ = writeln!(s, "memory");
    let _ = writeln!(
        s,
        "  {:<32} {:.1} ns",
        "Doppler time",
        physics::doppler_time(&cfg.atoms)? * 1e9
    );
    if let Some(dir) = results {
        let rec = dir.join(RECONSTRUCTION_FILE);
        if rec.exists() {
            let text = std::fs::read_to_string(&rec).map_err(io::io_err(&rec))?;
            let r: ReconstructionReport = serde_json::from_str(&text)
                .map_err(|e| Error::Format { path: rec.clone(), line: e.line(), reason: e.to_string() })?;
            let _ = writeln!(s, "reconstruction ({} samples)", r.samples);
            for (label, e) in [("raw", &r.raw), ("corrected", &r.corrected)] {
                if let Some(e) = e {
                    let err = e.errorbars.as_ref().map_or(String::new(), |v| format!(" ± {:.4}", v[1]));
                    let _ = writeln!(
                        s,
                        "  {label:<10} p0 {:.4}  p1 {:.4}{err}  p2 {:.4}  W(0,0) {:+.4}",
                        e.populations[0], e.populations[1], e.populations[2], e.wigner_origin
                    );
                }
            }
        }
        let sum = dir.join(SUMMARY_FILE);
        if sum.exists() {
            let text = std::fs::read_to_string(&sum).map_err(io::io_err(&sum))?;
            let a: AnalysisSummary = serde_json::from_str(&text)
                .map_err(|e| Error::Format { path: sum.clone(), line: e.line(), reason: e.to_string() })?;
            let _ = writeln!(s, "analysis");
            if let Some(g) = a.g2.as_ref().and_then(|v| v.iter().find(|e| e.tau == 0)) {
                let _ = writeln!(s, "  {:<32} {:.4} ± {:.4}", "g2(0)", g.value, g.stderr);
            }
            if let Some(p) = &a.arrival_spcm2 {
                let _ = writeln!(s, "  {:<32} {:.1} ns", "arrival 1/e half-width", p.half_width * 1e9);
            }
            if let Some(f) = &a.filter {
                let _ = writeln!(s, "  {:<32} {:.1} ns", "optimal filter half-width", f.sigma_opt * 1e9);
                let _ = writeln!(s, "  {:<32} {:.4}", "vacuum reference variance", f.vacuum_reference_variance);
            }
            if let Some(d) = &a.decay {
                let _ = writeln!(s, "  {:<32} {:.1} ns (eta0 {:.3})", "storage decay time", d.tau * 1e9, d.eta0);
            }
        }
    }
    Ok(s)
}
