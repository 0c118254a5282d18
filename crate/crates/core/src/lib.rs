//! Regression-based diagnostics for conflicting summary statistics in
//! likelihood-free Bayesian inference.
//!
//! A quantile regression forest is trained on `(parameter, summary)` pairs
//! drawn from the joint prior model. Deleting a block `S_B` of the observed
//! summary vector and multiply imputing it from the retained block `S_A`
//! approximates the posterior given `S_A` alone without refitting. The
//! maximum log relative belief between the full and subset posteriors
//! measures how much `S_B` moves inference, and fresh imputations give a
//! reference distribution for calibrating it.
//!
//! Module map:
//!
//! - [`model`]: priors, training sets, partitions, the generative-model trait
//! - [`simulators`]: Poisson, stereological-inclusion surrogate, Ricker
//! - [`setar`]: two-regime threshold autoregression used as Ricker summaries
//! - [`qrf`]: quantile regression forest, weighted KDE posterior densities
//! - [`abc`]: nearest-k rejection ABC baseline
//! - [`imputation`]: linear-Bayes, random-forest and time-series window engines
//! - [`diagnostics`]: subset posteriors, relative belief, calibration, window scan
//! - [`experiment`]: config-driven pipelines behind the CLI
//! - [`selftest`]: invariant suites with independent oracles

#![forbid(unsafe_code)]

pub mod abc;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod io;
pub mod imputation;
pub mod model;
pub mod qrf;
pub mod rng;
pub mod selftest;
pub mod setar;
pub mod simulators;
pub mod stats;

pub use error::{Error, Result};
