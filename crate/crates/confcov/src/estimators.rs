//! Covariance estimators for data confounded by latent factors.
//!
//! The primary estimator is RSVP (right singular vector projection): the
//! projection `V V^T` onto the row space of the column-centered data. It
//! recovers the idiosyncratic covariance only up to a positive scale factor,
//! which suffices for correlation structure, support recovery and graph
//! estimation. Sample-splitting and subsampling variants average projections
//! over row subsets of size `m`, which extends the method to settings where
//! `p` is not much larger than `n`. PC-removal and the empirical covariance
//! are provided as baselines; both are special cases of the spectral
//! transform family `(1/n) V H(Lambda^2) V^T`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{
    center_columns, row_space_projection, thin_svd, DataMatrix, LinalgError, SymmetricMatrix,
};
use crate::seed;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("subsample size {0} is too small (need m >= 3)")]
    SubsampleTooSmall(usize),
    #[error("subsample not high-dimensional: m - 1 = {0} >= p = {1}")]
    SubsampleNotHighDimensional(usize, usize),
    #[error("subsample count must be at least 1")]
    InvalidSubsampleCount,
    #[error("invalid spectrum map: {0}")]
    InvalidSpectrumMap(&'static str),
    #[error("ell = {ell} out of range (rank of centered data is {rank})")]
    EllOutOfRange { ell: usize, rank: usize },
    #[error("kmax = {kmax} out of range (rank of centered data is {rank})")]
    KmaxOutOfRange { kmax: usize, rank: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Estimation method tag carried by every [`CovEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rsvp,
    RsvpSplit,
    RsvpSub,
    PcaRemoval,
    Empirical,
    Spectral,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Rsvp => "rsvp",
            Method::RsvpSplit => "rsvp-split",
            Method::RsvpSub => "rsvp-sub",
            Method::PcaRemoval => "pca-removal",
            Method::Empirical => "empirical",
            Method::Spectral => "spectral",
        };
        f.write_str(s)
    }
}

/// Parameters the estimate was produced with, for provenance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MethodParams {
    pub ell: Option<usize>,
    pub m: Option<usize>,
    pub b: Option<usize>,
    pub seed: Option<u64>,
}

/// A symmetric `p x p` covariance estimate tagged with its method.
///
/// `scale_free` is true for the RSVP family: the matrix is defined only up
/// to multiplication by a positive scalar.
#[derive(Debug, Clone)]
pub struct CovEstimate {
    pub matrix: SymmetricMatrix,
    pub method: Method,
    pub scale_free: bool,
    pub params: MethodParams,
}

/// RSVP: projection onto the row space of the column-centered data.
pub fn rsvp(x: &DataMatrix) -> Result<CovEstimate, EstimatorError> {
    let centered = center_columns(x);
    let matrix = row_space_projection(centered.values())?;
    Ok(CovEstimate {
        matrix,
        method: Method::Rsvp,
        scale_free: true,
        params: MethodParams::default(),
    })
}

fn validate_subsample(m: usize, p: usize) -> Result<(), EstimatorError> {
    if m < 3 {
        return Err(EstimatorError::SubsampleTooSmall(m));
    }
    if m - 1 >= p {
        return Err(EstimatorError::SubsampleNotHighDimensional(m - 1, p));
    }
    Ok(())
}

fn rows_by_index(x: &DataMatrix, idx: &[usize]) -> DataMatrix {
    let src = x.values();
    let mut m = DMatrix::zeros(idx.len(), src.ncols());
    for (dst, &i) in idx.iter().enumerate() {
        m.set_row(dst, &src.row(i));
    }
    DataMatrix::new(m).expect("blocks have at least 3 rows")
}

/// Average the row-space projections of per-block centered data over the
/// given index blocks. Blocks are processed independently (possibly in
/// parallel) and summed in block order, so the result does not depend on
/// the thread count.
fn average_block_projections(
    x: &DataMatrix,
    blocks: &[Vec<usize>],
) -> Result<SymmetricMatrix, EstimatorError> {
    let projections: Vec<Result<SymmetricMatrix, EstimatorError>> = blocks
        .par_iter()
        .map(|block| {
            let sub = rows_by_index(x, block);
            let centered = center_columns(&sub);
            Ok(row_space_projection(centered.values())?)
        })
        .collect();
    let p = x.cols();
    let mut acc = DMatrix::<f64>::zeros(p, p);
    for proj in projections {
        acc += proj?.into_inner();
    }
    acc /= blocks.len() as f64;
    Ok(SymmetricMatrix::mirror_upper(acc))
}

/// Sample-splitting RSVP: randomly partition the rows into disjoint blocks
/// of size `m`, center each block, and average the per-block projections
/// with equal weights.
///
/// The number of blocks is `ceil(rows / m)`; a final block with fewer than
/// 3 rows is merged into the previous one. Deterministic given `seed`.
pub fn rsvp_split(x: &DataMatrix, m: usize, seed_val: u64) -> Result<CovEstimate, EstimatorError> {
    validate_subsample(m, x.cols())?;
    let rows = x.rows();
    let mut idx: Vec<usize> = (0..rows).collect();
    idx.shuffle(&mut seed::rng(seed_val));

    let mut blocks: Vec<Vec<usize>> = idx.chunks(m).map(|c| c.to_vec()).collect();
    if blocks.len() > 1 && blocks.last().map_or(0, Vec::len) < 3 {
        let tail = blocks.pop().unwrap();
        blocks.last_mut().unwrap().extend(tail);
    }
    // Within a block only the row *set* matters; sorting makes the single
    // block case reproduce `rsvp` exactly.
    for block in &mut blocks {
        block.sort_unstable();
    }

    let matrix = average_block_projections(x, &blocks)?;
    Ok(CovEstimate {
        matrix,
        method: Method::RsvpSplit,
        scale_free: true,
        params: MethodParams {
            m: Some(m),
            b: Some(0),
            seed: Some(seed_val),
            ell: None,
        },
    })
}

/// Subsampling RSVP: draw `b` subsamples of `m` rows without replacement
/// (independently across subsamples), center each, and average the
/// projections.
pub fn rsvp_sub(
    x: &DataMatrix,
    m: usize,
    b: usize,
    seed_val: u64,
) -> Result<CovEstimate, EstimatorError> {
    validate_subsample(m, x.cols())?;
    if b == 0 {
        return Err(EstimatorError::InvalidSubsampleCount);
    }
    if m > x.rows() {
        return Err(EstimatorError::SubsampleTooSmall(m));
    }
    let rows = x.rows();
    let blocks: Vec<Vec<usize>> = (0..b)
        .map(|sub| {
            let mut rng = seed::rng(seed::derive(seed_val, &[sub as u64]));
            let mut drawn = rand::seq::index::sample(&mut rng, rows, m).into_vec();
            drawn.sort_unstable();
            drawn
        })
        .collect();
    let matrix = average_block_projections(x, &blocks)?;
    Ok(CovEstimate {
        matrix,
        method: Method::RsvpSub,
        scale_free: true,
        params: MethodParams {
            m: Some(m),
            b: Some(b),
            seed: Some(seed_val),
            ell: None,
        },
    })
}

/// Generic spectral-transform estimator `(1/n) V diag(h(Lambda^2)) V^T`,
/// where `Lambda^2` are the squared singular values of the centered data
/// above the rank cutoff and `n = rows - 1`.
///
/// `h` must map the non-negative descending spectrum to a non-negative
/// vector of the same length.
pub fn spectral_estimate(
    x: &DataMatrix,
    h: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<CovEstimate, EstimatorError> {
    let centered = center_columns(x);
    let svd = thin_svd(centered.values())?;
    let lam2 = svd.squared_sigma();
    let hv = h(&lam2);
    if hv.len() != lam2.len() {
        return Err(EstimatorError::InvalidSpectrumMap(
            "output length differs from spectrum length",
        ));
    }
    if hv.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(EstimatorError::InvalidSpectrumMap(
            "output contains a negative or non-finite value",
        ));
    }
    let n = x.effective_samples() as f64;
    let p = x.cols();
    let matrix = if svd.rank == 0 {
        SymmetricMatrix::zeros(p)
    } else {
        let vr = svd.v.columns(0, svd.rank);
        let mut scaled = vr.into_owned();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= hv[k] / n;
        }
        SymmetricMatrix::mirror_upper(&scaled * vr.transpose())
    };
    Ok(CovEstimate {
        matrix,
        method: Method::Spectral,
        scale_free: false,
        params: MethodParams::default(),
    })
}

fn pca_like(x: &DataMatrix, ell: usize, tag: Method) -> Result<CovEstimate, EstimatorError> {
    let centered = center_columns(x);
    let svd = thin_svd(centered.values())?;
    if ell > svd.rank {
        return Err(EstimatorError::EllOutOfRange {
            ell,
            rank: svd.rank,
        });
    }
    let n = x.effective_samples() as f64;
    let p = x.cols();
    let matrix = if svd.rank == 0 {
        SymmetricMatrix::zeros(p)
    } else {
        let vr = svd.v.columns(0, svd.rank);
        let mut scaled = vr.into_owned();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            let weight = if k < ell {
                0.0
            } else {
                svd.sigma[k] * svd.sigma[k] / n
            };
            col *= weight;
        }
        SymmetricMatrix::mirror_upper(&scaled * vr.transpose())
    };
    Ok(CovEstimate {
        matrix,
        method: tag,
        scale_free: false,
        params: MethodParams {
            ell: Some(ell),
            ..MethodParams::default()
        },
    })
}

/// PC-removal: the spectral estimator with the top `ell` squared singular
/// values zeroed out. `ell = 0` is the empirical covariance.
pub fn pca_removal(x: &DataMatrix, ell: usize) -> Result<CovEstimate, EstimatorError> {
    pca_like(x, ell, Method::PcaRemoval)
}

/// The empirical covariance `X~^T X~ / n` of the centered data.
pub fn empirical_covariance(x: &DataMatrix) -> Result<CovEstimate, EstimatorError> {
    pca_like(x, 0, Method::Empirical)
}

/// Select the number of factors by the first information criterion of
/// Bai & Ng: `argmin_k log V(k) + k ((n+p)/(np)) log(np/(n+p))` with
/// `V(k)` the mean residual squared spectrum after removing `k` components.
/// Ties break toward smaller `k`.
pub fn bai_ng_select(x: &DataMatrix, kmax: usize) -> Result<usize, EstimatorError> {
    let centered = center_columns(x);
    let svd = thin_svd(centered.values())?;
    if svd.rank == 0 || kmax > svd.rank - 1 {
        return Err(EstimatorError::KmaxOutOfRange {
            kmax,
            rank: svd.rank,
        });
    }
    let n = x.effective_samples() as f64;
    let p = x.cols() as f64;
    let np = n * p;
    let penalty = (n + p) / np * (np / (n + p)).ln();
    let lam2: Vec<f64> = svd.sigma.iter().map(|s| s * s).collect();
    let total: f64 = lam2.iter().sum();

    let mut removed = 0.0;
    let mut best_k = 0;
    let mut best_ic = f64::INFINITY;
    for k in 0..=kmax {
        if k > 0 {
            removed += lam2[k - 1];
        }
        let v_k = (total - removed) / np;
        let ic = v_k.ln() + k as f64 * penalty;
        if ic < best_ic {
            best_ic = ic;
            best_k = k;
        }
    }
    Ok(best_k)
}

/// Rule-of-thumb subsample size `round(2 sqrt(p))`, at least 3.
pub fn default_subsample_size(p: usize) -> usize {
    ((2.0 * (p as f64).sqrt()).round() as usize).max(3)
}
