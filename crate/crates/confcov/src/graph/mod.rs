//! Graph structure estimation from an estimated covariance: conditional
//! independence graphs via nodewise Lasso, and causal structure (CPDAGs)
//! via the PC algorithm on projection-based partial correlations.
//!
//! Everything here consumes only a symmetric covariance estimate, so a
//! scale-free input works: the Lasso path is equivariant under joint
//! rescaling of the matrix and penalty, and partial correlations are
//! exactly scale-invariant.

mod nodewise;
mod pc;

pub use nodewise::{cig_estimate, nodewise_lasso, threshold_support, EdgeRule, NodewiseFit};
pub use pc::{
    ci_test, cpdag_diagnostics, cpdag_orient, partial_correlation, pc_skeleton, Cpdag, Sepsets,
};

use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("coordinate descent did not converge within {0} sweeps")]
    NotConverged(usize),
    #[error("gram matrix is singular; an unpenalized fit needs a positive definite submatrix")]
    SingularGram,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("nodewise fits failed at nodes {}", format_failures(.0))]
    NodewiseFailures(Vec<(usize, String)>),
    #[error("problem too large for exhaustive enumeration (need p <= 15, d <= 4)")]
    TooLargeForExhaustive,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn format_failures(failures: &[(usize, String)]) -> String {
    failures
        .iter()
        .map(|(j, msg)| format!("{j} ({msg})"))
        .collect::<Vec<_>>()
        .join(", ")
}
