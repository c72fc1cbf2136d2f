use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("Fock number {n} exceeds the recurrence limit of {limit}")]
    FockLimit { n: usize, limit: usize },

    #[error("kernel row {row} integrates to {integral} on the tabulation grid (tolerance {tolerance})")]
    KernelNormalization {
        row: usize,
        integral: f64,
        tolerance: f64,
    },

    #[error("sample {index} (x = {value}) lies outside the kernel grid [{lo}, {hi}]")]
    SampleOutOfRange {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("sample {index} is not finite ({value})")]
    NonFiniteSample { index: usize, value: f64 },

    #[error("sample {index} (x = {value}) has zero probability under the state")]
    ZeroLikelihood { index: usize, value: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("time grids differ (dt {dt_a} vs {dt_b}, {n_a} vs {n_b} samples)")]
    GridMismatch {
        dt_a: f64,
        dt_b: f64,
        n_a: usize,
        n_b: usize,
    },

    #[error("temporal mode clipped by the grid: {lost:.3e} of its norm falls outside")]
    ModeClipped { lost: f64 },

    #[error("reference mode is not orthogonal to the signal filter (overlap {overlap:.3e}, threshold {threshold:.0e})")]
    NotOrthogonal { overlap: f64, threshold: f64 },

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("fit did not converge after {iterations} iterations (last step {last_step:.3e}, rms residual {residual:.3e})")]
    FitNonConvergence {
        iterations: usize,
        last_step: f64,
        residual: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed data in {path} line {line}: {reason}")]
    Format {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("missing input file {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
