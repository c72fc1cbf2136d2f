//! Simulation and inference for heralded single-photon experiments.
//!
//! The crate synthesizes homodyne traces, quadrature samples and
//! photon-counting records from a parameterized source and detection chain,
//! then recovers the state with temporal-mode filtering, loss-corrected
//! maximum-likelihood tomography, Wigner-function evaluation, g²(τ)
//! analysis and memory-lifetime fitting.
//!
//! Quadratures follow the convention in which the vacuum has variance 1/2.
//!
//! | module | contents |
//! |--------|----------|
//! | [`fock`] | oscillator wavefunctions, loss channel, measurement kernels, Wigner functions |
//! | [`temporal`] | time grids, mode envelopes, quadrature extraction, filter-width scan |
//! | [`sampler`] | seeded generation of quadratures, traces and click records |
//! | [`tomography`] | expectation-maximization reconstruction and bootstrap errors |
//! | [`counting`] | g²(τ) estimation and arrival-time histograms |
//! | [`physics`] | cooperativity, Doppler time, decay fitting, efficiency budget |
//! | [`config`], [`io`], [`pipeline`] | experiment configuration, file formats, CLI pipelines |

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod counting;
mod error;
pub mod fock;
pub mod io;
pub mod parallel;
pub mod physics;
pub mod pipeline;
pub mod sampler;
pub mod temporal;
pub mod tomography;

pub use error::{Error, Result};
