//! Experiment configuration.
//!
//! Configs are TOML documents. Every section except `[metadata]` is closed:
//! unknown keys are rejected, and the metadata table (detunings, Rabi
//! frequencies, finesse, ...) is carried along untouched without entering
//! any computation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{DiagonalState, XGrid};
use crate::physics::{AtomParams, CavityParams};
use crate::sampler::{DetectionChain, SourceModel};
use crate::temporal::{gaussian_mode, TimeGrid};
use crate::tomography::ReconstructionSettings;

/// The preset shipped with the crate, reproducing the cold-atom experiment.
pub const EXPERIMENT_PRESET: &str = include_str!("../presets/experiment.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub source: SourceConfig,
    pub chain: DetectionChain,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub counts: CountsConfig,
    #[serde(default)]
    pub reconstruction: ReconstructionConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayConfig>,
    #[serde(default = "AtomParams::rb87_50uk")]
    pub atoms: AtomParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity: Option<CavityParams>,
    #[serde(default)]
    pub metadata: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Fock populations of the emitted state, `p_0, p_1, ...`.
    pub populations: Vec<f64>,
    /// Center of the read-photon envelope within the record (s).
    pub mode_center: f64,
    /// 1/e half-width of the read-photon intensity envelope (s).
    pub intensity_half_width: f64,
    pub herald_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dt: f64,
    pub n_samples: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = TimeGrid::default();
        Self {
            dt: g.dt(),
            n_samples: g.n_samples(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsConfig {
    /// Homodyne quadrature samples.
    pub quadratures: usize,
    /// Full homodyne traces.
    pub traces: usize,
    /// Heralded photon-counting trials.
    pub click_trials: usize,
    /// When set, the number of click trials is drawn as the number of heralds
    /// among this many write pulses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub write_pulses: Option<u64>,
}

impl Default for CountsConfig {
    fn default() -> Self {
        Self {
            quadratures: 100_000,
            traces: 10_000,
            click_trials: 100_000,
            write_pulses: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionConfig {
    pub cutoff: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Kernel tabulation grid `[lo, hi, step]`.
    pub grid: [f64; 3],
    pub bootstrap: usize,
    /// Efficiency assumed by the corrected reconstruction; defaults to the
    /// chain's effective homodyne efficiency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_assumed: Option<f64>,
    /// Electronic noise assumed by the corrected reconstruction; defaults to
    /// the chain's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_assumed: Option<f64>,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        let s = ReconstructionSettings::default();
        Self {
            cutoff: s.cutoff,
            tol: s.tol,
            max_iter: s.max_iter,
            grid: [s.grid.lo, s.grid.hi(), s.grid.step],
            bootstrap: 50,
            eta_assumed: None,
            nu_assumed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Candidate 1/e amplitude half-widths of the filter scan (s).
    pub filter_widths: Vec<f64>,
    /// Delay of the vacuum-reference filter (s).
    pub reference_shift: f64,
    pub g2_resamples: usize,
    /// Phase-space grid `[lo, hi, step]` for Wigner tables, in both x and p.
    pub wigner_grid: [f64; 3],
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            filter_widths: vec![40e-9, 48e-9, 56e-9, 64e-9, 72e-9],
            reference_shift: 600e-9,
            g2_resamples: 1000,
            wigner_grid: [-3.0, 3.0, 0.1],
        }
    }
}

/// Synthetic storage-time scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    pub eta0: f64,
    /// Decay time (s); the Doppler time of `[atoms]` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Write-read delays (s).
    pub delays: Vec<f64>,
    /// Standard deviation of additive Gaussian noise on each point.
    pub noise: f64,
}

impl ExperimentConfig {
    /// The shipped experiment preset.
    pub fn experiment() -> Self {
        Self::from_toml_str(EXPERIMENT_PRESET).expect("bundled preset is valid")
    }

    /// Parses and validates a TOML config. Messages carry line numbers.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate().map_err(|e| locate(text, e))?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the `config` object of a JSON manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let inner = value.get("config").cloned().unwrap_or(value);
            let cfg: Self = serde_json::from_value(inner)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            cfg.validate()?;
            Ok(cfg)
        } else {
            Self::from_toml_str(&text)
                .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(e))))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.state()?;
        self.chain.validate().map_err(|e| section("chain", e))?;
        self.source_model().map_err(|e| section("source", e))?;
        self.reconstruction_settings(false)?;
        self.reconstruction_settings(true)?;
        if self.analysis.filter_widths.len() < 3 || self.analysis.filter_widths.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config(
                "[analysis] filter_widths: at least three positive widths required".into(),
            ));
        }
        if !(self.analysis.reference_shift.is_finite()) {
            return Err(Error::Config("[analysis] reference_shift: not finite".into()));
        }
        let [lo, hi, step] = self.analysis.wigner_grid;
        XGrid::new(lo, hi, step).map_err(|e| section("analysis", e))?;
        self.atoms.validate().map_err(|e| section("atoms", e))?;
        if let Some(c) = &self.cavity {
            c.validate().map_err(|e| section("cavity", e))?;
        }
        if let Some(d) = &self.decay {
            self.decay_curve_params(d)?;
        }
        Ok(())
    }

    pub fn state(&self) -> Result<DiagonalState> {
        let mut p = self.source.populations.clone();
        let cutoff = self.reconstruction.cutoff.max(p.len().saturating_sub(1)).max(1);
        p.resize(cutoff + 1, 0.0);
        DiagonalState::new(p).map_err(|e| section("source", e))
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.dt, self.grid.n_samples).map_err(|e| section("grid", e))
    }

    pub fn source_model(&self) -> Result<SourceModel> {
        let grid = self.time_grid()?;
        let sigma = self.source.intensity_half_width * std::f64::consts::SQRT_2;
        let mode = gaussian_mode(grid, self.source.mode_center, sigma)?;
        SourceModel::new(self.state()?, mode, self.source.herald_rate)
    }

    /// Raw (`corrected = false`) or detector-corrected settings.
    pub fn reconstruction_settings(&self, corrected: bool) -> Result<ReconstructionSettings> {
        let r = &self.reconstruction;
        let [lo, hi, step] = r.grid;
        let grid = XGrid::new(lo, hi, step).map_err(|e| section("reconstruction", e))?;
        let (eta, nu) = if corrected {
            (
                r.eta_assumed.unwrap_or(self.chain.eta_det()),
                r.nu_assumed.unwrap_or(self.chain.nu),
            )
        } else {
            (1.0, 0.0)
        };
        let s = ReconstructionSettings {
            cutoff: r.cutoff,
            eta_assumed: eta,
            nu_assumed: nu,
            tol: r.tol,
            max_iter: r.max_iter,
            grid,
        };
        s.validate().map_err(|e| section("reconstruction", e))?;
        if !(nu >= 0.0) || r.cutoff == 0 {
            return Err(Error::Config("[reconstruction] invalid cutoff or noise".into()));
        }
        Ok(s)
    }

    /// `(eta0, tau)` of the synthetic decay scan.
    pub fn decay_curve_params(&self, d: &DecayConfig) -> Result<(f64, f64)> {
        let tau = match d.tau {
            Some(t) => t,
            None => crate::physics::doppler_time(&self.atoms)?,
        };
        if !(d.eta0 > 0.0 && d.eta0 <= 1.0) || !(tau > 0.0) || !(d.noise >= 0.0) || d.delays.len() < 3 {
            return Err(Error::Config(
                "[decay] needs 0 < eta0 <= 1, tau > 0, noise >= 0 and at least 3 delays".into(),
            ));
        }
        Ok((d.eta0, tau))
    }
}

fn section(name: &str, e: Error) -> Error {
    Error::Config(format!("[{name}] {}", strip_prefix(e)))
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// Appends the line of the offending key, when the message names one.
fn locate(text: &str, e: Error) -> Error {
    let msg = strip_prefix(e);
    let key = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .or_else(|| msg.split_whitespace().nth(1).map(|s| s.trim_end_matches(':').to_string()));
    let sec = msg
        .strip_prefix('[')
        .and_then(|s| s.split(']').next())
        .map(str::to_string);
    let mut in_section = sec.is_none();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            in_section = sec.as_deref().is_some_and(|s| t == format!("[{s}]"));
            continue;
        }
        if in_section {
            if let Some(k) = &key {
                if t.split('=').next().map(str::trim) == Some(k.as_str()) {
                    return Error::Config(format!("line {}: {msg}", i + 1));
                }
            }
        }
    }
    Error::Config(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_matches_experiment() {
        let cfg = ExperimentConfig::experiment();
        assert_eq!(cfg.chain, DetectionChain::experiment());
        assert_eq!(cfg.source.intensity_half_width, 40e-9);
        assert_eq!(cfg.source.herald_rate, 1e-3);
        let g2 = crate::counting::g2_theory(&cfg.state().unwrap()).unwrap();
        assert!((g2 - 0.041).abs() < 1e-3);
        assert!(cfg.metadata.contains_key("cavity_linewidth_hz"));
        let coop = crate::physics::cooperativity(&cfg.cavity.unwrap()).unwrap();
        assert!((coop - 15.0).abs() < 1e-6);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::experiment();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let text = EXPERIMENT_PRESET.replace("eta_q = 0.91", "eta_q = 0.91\nbogus = 1");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn missing_field_rejected() {
        let text = EXPERIMENT_PRESET.replace("herald_rate = 1e-3", "");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("herald_rate"), "{err}");
    }

    #[test]
    fn out_of_range_value_located() {
        let text = EXPERIMENT_PRESET.replace("eta_hd = 0.82", "eta_hd = 1.82");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("eta_hd"), "{err}");
        let line = EXPERIMENT_PRESET.lines().position(|l| l.starts_with("eta_hd")).unwrap() + 1;
        assert!(err.contains(&format!("line {line}")), "{err}");
    }

    #[test]
    fn metadata_is_free_form() {
        let text = format!("{EXPERIMENT_PRESET}\nanything = \"goes\"\nnested = {{ a = 1 }}\n");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert!(cfg.metadata.contains_key("anything"));
    }
}
