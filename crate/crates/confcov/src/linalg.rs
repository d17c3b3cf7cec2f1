//! Dense linear-algebra kernel: column centering, thin SVD, row-space
//! projections and symmetric eigendecompositions.
//!
//! Everything here is deterministic and pure; all estimators in the crate
//! are built on these four operations.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("data matrix needs at least 2 rows, got {0}")]
    RowCountTooSmall(usize),
    #[error("data matrix needs at least 1 column")]
    NoColumns,
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("numerical failure: {0}")]
    NumericalFailure(&'static str),
    #[error("degenerate rank: input spans no directions")]
    DegenerateRank,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max |A - A^T| = {max_dev})")]
    Asymmetric { max_dev: f64 },
}

/// An observation matrix: rows are observations, columns are variables.
///
/// Construction enforces at least two rows and one column; the `centered`
/// flag records whether columns have been mean-centered.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    centered: bool,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self, LinalgError> {
        if values.nrows() < 2 {
            return Err(LinalgError::RowCountTooSmall(values.nrows()));
        }
        if values.ncols() == 0 {
            return Err(LinalgError::NoColumns);
        }
        Ok(DataMatrix {
            values,
            centered: false,
        })
    }

    /// Build from a row-major slice.
    pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Result<Self, LinalgError> {
        Self::new(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    /// Effective sample count `n`: one less than the number of rows, since
    /// centering removes one degree of freedom.
    pub fn effective_samples(&self) -> usize {
        self.rows() - 1
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// Subtract the column means, so every output column sums to zero.
pub fn center_columns(x: &DataMatrix) -> DataMatrix {
    let mut m = x.values().clone();
    let rows = m.nrows();
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / rows as f64;
        col.add_scalar_mut(-mean);
    }
    DataMatrix {
        values: m,
        centered: true,
    }
}

/// Thin singular value decomposition with a numerical-rank cutoff.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Left singular vectors, `rows x min(rows, cols)`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Singular values, non-negative, descending.
    pub sigma: DVector<f64>,
    /// Right singular vectors, `cols x min(rows, cols)`, orthonormal columns.
    pub v: DMatrix<f64>,
    /// Number of singular values above `max(rows, cols) * eps * sigma[0]`.
    pub rank: usize,
}

impl SvdResult {
    /// Squared singular values of the retained (above-rank-cutoff) part.
    pub fn squared_sigma(&self) -> Vec<f64> {
        self.sigma.iter().take(self.rank).map(|s| s * s).collect()
    }
}

const SVD_MAX_ITER: usize = 4000;
const JACOBI_MAX_SWEEPS: usize = 64;
const JACOBI_TOL: f64 = 1e-14;

/// One-sided Jacobi SVD of a tall matrix (`rows >= cols`).
///
/// Right-applied Givens rotations orthogonalize the columns of the working
/// copy; the accumulated rotations form `V`, the column norms the singular
/// values, and the normalized columns `U`. Slower than bidiagonalization but
/// accurate on exactly rank-deficient inputs, where the bidiagonal iteration
/// can lose many digits.
fn jacobi_svd_tall(
    a: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>), LinalgError> {
    let (rows, cols) = a.shape();
    debug_assert!(rows >= cols);
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut max_cos = 0.0f64;
        for p in 0..cols.saturating_sub(1) {
            for q in (p + 1)..cols {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..rows {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    app += wp * wp;
                    aqq += wq * wq;
                    apq += wp * wq;
                }
                if app == 0.0 || aqq == 0.0 {
                    continue;
                }
                let cos_off = apq.abs() / (app * aqq).sqrt();
                max_cos = max_cos.max(cos_off);
                if cos_off <= JACOBI_TOL {
                    continue;
                }
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..rows {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = cs * wp - sn * wq;
                    w[(i, q)] = sn * wp + cs * wq;
                }
                for i in 0..cols {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = cs * vp - sn * vq;
                    v[(i, q)] = sn * vp + cs * vq;
                }
            }
        }
        if max_cos <= JACOBI_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NumericalFailure(
            "Jacobi SVD did not converge",
        ));
    }

    let mut sigma = DVector::zeros(cols);
    let mut u = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        let norm = w.column(j).norm();
        sigma[j] = norm;
        if norm > 0.0 {
            u.set_column(j, &(w.column(j) / norm));
        }
    }
    // Orthonormal completion for zero singular values, so U always has
    // orthonormal columns.
    let max_sigma = sigma.amax();
    let zero_tol = rows.max(cols) as f64 * f64::EPSILON * max_sigma;
    for j in 0..cols {
        if sigma[j] > zero_tol {
            continue;
        }
        // Gram-Schmidt a canonical basis vector against every column that is
        // already defined (nonzero sigma, or an earlier completed column).
        for basis in 0..rows {
            let mut cand = DVector::zeros(rows);
            cand[basis] = 1.0;
            for other in 0..cols {
                let defined = sigma[other] > zero_tol || other < j;
                if other != j && defined {
                    let proj = u.column(other).dot(&cand);
                    cand -= u.column(other) * proj;
                }
            }
            let norm = cand.norm();
            if norm > 0.5 {
                u.set_column(j, &(cand / norm));
                break;
            }
        }
    }
    Ok((u, sigma, v))
}

fn sorted_svd(
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v: DMatrix<f64>,
    dims: (usize, usize),
) -> SvdResult {
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap().then(a.cmp(&b)));

    let k = sigma.len();
    let mut u_s = DMatrix::zeros(u.nrows(), k);
    let mut v_s = DMatrix::zeros(v.nrows(), k);
    let mut s_s = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        u_s.set_column(dst, &u.column(src));
        v_s.set_column(dst, &v.column(src));
        s_s[dst] = sigma[src];
    }
    let tol = dims.0.max(dims.1) as f64 * f64::EPSILON * s_s[0];
    let rank = s_s.iter().filter(|&&s| s > tol).count();
    SvdResult {
        u: u_s,
        sigma: s_s,
        v: v_s,
        rank,
    }
}

/// Compute the thin SVD of a dense matrix.
///
/// Uses the fast bidiagonal iteration first and checks its reconstruction;
/// on exactly rank-deficient inputs (centered data always has a zero
/// singular value) that iteration can silently lose accuracy, in which case
/// this falls back to the one-sided Jacobi method.
pub fn thin_svd(m: &DMatrix<f64>) -> Result<SvdResult, LinalgError> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let wide = m.ncols() > m.nrows();
    let work = if wide { m.transpose() } else { m.clone() };

    let fast = nalgebra::SVD::try_new(work.clone(), true, true, f64::EPSILON, SVD_MAX_ITER);
    if let Some(svd) = fast {
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let sigma = svd.singular_values;
        let recon = &u * DMatrix::from_diagonal(&sigma) * &v_t;
        let scale = sigma.amax();
        let accept = max_abs_diff(&recon, &work)
            <= 100.0 * work.nrows().max(work.ncols()) as f64 * f64::EPSILON * scale.max(1.0);
        if accept {
            let v = v_t.transpose();
            let (u_out, v_out) = if wide { (v, u) } else { (u, v) };
            return Ok(sorted_svd(u_out, sigma, v_out, m.shape()));
        }
    }

    let (u, sigma, v) = jacobi_svd_tall(&work)?;
    let (u_out, v_out) = if wide { (v, u) } else { (u, v) };
    Ok(sorted_svd(u_out, sigma, v_out, m.shape()))
}

/// A dense symmetric matrix; storage is mirrored so `A[j,k] == A[k,j]`
/// holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    values: DMatrix<f64>,
}

impl SymmetricMatrix {
    /// Wrap a square matrix, checking symmetry up to `1e-8 * max|entry|`
    /// and then mirroring the upper triangle so the storage is exact.
    pub fn from_dense(m: DMatrix<f64>) -> Result<Self, LinalgError> {
        if m.nrows() != m.ncols() {
            return Err(LinalgError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let scale = m.amax().max(1.0);
        let mut max_dev = 0.0f64;
        for j in 0..m.ncols() {
            for k in (j + 1)..m.ncols() {
                max_dev = max_dev.max((m[(j, k)] - m[(k, j)]).abs());
            }
        }
        if max_dev > 1e-8 * scale {
            return Err(LinalgError::Asymmetric { max_dev });
        }
        Ok(Self::mirror_upper(m))
    }

    /// Mirror the upper triangle into the lower one without checking.
    /// Intended for matrices that are symmetric up to rounding.
    pub(crate) fn mirror_upper(mut m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            for k in (j + 1)..m.ncols() {
                m[(k, j)] = m[(j, k)];
            }
        }
        SymmetricMatrix { values: m }
    }

    pub fn identity(dim: usize) -> Self {
        SymmetricMatrix {
            values: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        SymmetricMatrix {
            values: DMatrix::zeros(dim, dim),
        }
    }

    /// Fill from a function of `(j, k)` with `j <= k`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for k in j..dim {
                let v = f(j, k);
                m[(j, k)] = v;
                m[(k, j)] = v;
            }
        }
        SymmetricMatrix { values: m }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[(j, k)]
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// Principal submatrix on the given (distinct) indices, in order.
    pub fn submatrix(&self, idx: &[usize]) -> SymmetricMatrix {
        let k = idx.len();
        let mut m = DMatrix::zeros(k, k);
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                m[(a, b)] = self.values[(ia, ib)];
            }
        }
        SymmetricMatrix { values: m }
    }

    /// Scale every entry by a constant.
    pub fn scale(&self, c: f64) -> SymmetricMatrix {
        SymmetricMatrix {
            values: &self.values * c,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.amax()
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }
}

/// Projection onto the row space of `m`: `V V^T` over the right singular
/// vectors whose singular value clears the rank cutoff.
///
/// Errors with [`LinalgError::DegenerateRank`] when `m` is numerically zero.
pub fn row_space_projection(m: &DMatrix<f64>) -> Result<SymmetricMatrix, LinalgError> {
    let svd = thin_svd(m)?;
    if svd.rank == 0 {
        return Err(LinalgError::DegenerateRank);
    }
    let vr = svd.v.columns(0, svd.rank);
    Ok(SymmetricMatrix::mirror_upper(&vr * vr.transpose()))
}

/// Symmetric eigendecomposition, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

pub fn sym_eig(s: &SymmetricMatrix) -> Result<SymEig, LinalgError> {
    let se = nalgebra::SymmetricEigen::try_new(s.values().clone(), f64::EPSILON, SVD_MAX_ITER)
        .ok_or(LinalgError::NumericalFailure(
            "symmetric eigendecomposition did not converge",
        ))?;
    let vals = se.eigenvalues;
    let vecs = se.eigenvectors;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap().then(a.cmp(&b)));
    let mut sorted_vals = DVector::zeros(vals.len());
    let mut sorted_vecs = DMatrix::zeros(vecs.nrows(), vecs.ncols());
    for (dst, &src) in order.iter().enumerate() {
        sorted_vals[dst] = vals[src];
        sorted_vecs.set_column(dst, &vecs.column(src));
    }
    Ok(SymEig {
        eigenvalues: sorted_vals,
        eigenvectors: sorted_vecs,
    })
}

/// Max absolute entrywise difference between two matrices.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).amax()
}
