//! Estimation of an idiosyncratic covariance matrix from data confounded by
//! latent factors.
//!
//! Observations follow `x = w + Gamma h`, so the observed covariance is
//! `Theta = Sigma + Gamma Gamma^T`: the target `Sigma` plus a low-rank
//! contribution from `q` unobserved factors. This crate implements
//!
//! * RSVP — projection onto the right singular vectors of the centered data,
//!   which estimates `Sigma` up to a positive scale factor without knowing
//!   `q` ([`estimators::rsvp`]), plus sample-splitting and subsampling
//!   variants for moderate-dimensional data;
//! * PC-removal baselines and factor-count selection
//!   ([`estimators::pca_removal`], [`estimators::bai_ng_select`]);
//! * scenario generators and population diagnostics for simulation studies
//!   ([`simulate`]);
//! * scale-invariant accuracy metrics ([`metrics`]);
//! * conditional-independence-graph estimation via nodewise Lasso and causal
//!   structure search via the PC algorithm ([`graph`]);
//! * a deterministic experiment sweep runner ([`experiment`]).
//!
//! Runnable walkthroughs live in `examples/`; the `confcov` binary exposes
//! the same operations as subcommands.

pub mod estimators;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod seed;
pub mod simulate;

pub use estimators::{CovEstimate, Method};
pub use linalg::{DataMatrix, SymmetricMatrix};
