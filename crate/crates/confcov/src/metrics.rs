//! Scale-invariant accuracy metrics for comparing a covariance estimate to
//! ground truth, plus top-edge extraction and edge-set similarity.
//!
//! The RSVP family recovers the target only up to a positive scalar, so all
//! comparisons either quotient out scale (off-diagonal Pearson correlation)
//! or fit the best scalar explicitly (`inf_kappa ||Sigma - kappa Est||`).

use std::collections::BTreeSet;

use thiserror::Error;

use crate::linalg::SymmetricMatrix;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("off-diagonal entries are constant; correlation undefined")]
    ZeroVariance,
    #[error("requested {r} edges but only {max} pairs exist")]
    RTooLarge { r: usize, max: usize },
}

/// Which norm a scale fit minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Frobenius,
    Linf,
}

/// Result of fitting the best positive scalar `kappa` for
/// `||Sigma - kappa * Est||`.
#[derive(Debug, Clone)]
pub struct ScaleFit {
    pub kappa: f64,
    pub residual: f64,
    pub norm_kind: NormKind,
    /// Set when the unconstrained optimum was negative and `kappa` was
    /// clamped to zero (the estimate is anti-correlated with the target).
    pub clamped: bool,
}

/// An undirected edge set over `p` nodes; pairs are stored as `(j, k)` with
/// `j < k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    pub fn new(p: usize) -> Self {
        EdgeSet {
            p,
            edges: BTreeSet::new(),
        }
    }

    pub fn insert(&mut self, j: usize, k: usize) {
        assert!(j != k, "no self loops");
        assert!(j < self.p && k < self.p, "node index out of range");
        self.edges.insert((j.min(k), j.max(k)));
    }

    pub fn contains(&self, j: usize, k: usize) -> bool {
        self.edges.contains(&(j.min(k), j.max(k)))
    }

    pub fn remove(&mut self, j: usize, k: usize) -> bool {
        self.edges.remove(&(j.min(k), j.max(k)))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn nodes(&self) -> usize {
        self.p
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Complete graph on `p` nodes.
    pub fn complete(p: usize) -> Self {
        let mut e = EdgeSet::new(p);
        for j in 0..p {
            for k in (j + 1)..p {
                e.insert(j, k);
            }
        }
        e
    }
}

fn strict_upper(m: &SymmetricMatrix) -> Vec<f64> {
    let p = m.dim();
    let mut v = Vec::with_capacity(p * (p - 1) / 2);
    for j in 0..p {
        for k in (j + 1)..p {
            v.push(m.get(j, k));
        }
    }
    v
}

/// Pearson correlation of the vectorized strict upper triangles of two
/// symmetric matrices (diagonals omitted).
pub fn offdiag_correlation(
    a: &SymmetricMatrix,
    b: &SymmetricMatrix,
) -> Result<f64, MetricsError> {
    assert_eq!(a.dim(), b.dim(), "dimension mismatch");
    let va = strict_upper(a);
    let vb = strict_upper(b);
    let n = va.len() as f64;
    let ma = va.iter().sum::<f64>() / n;
    let mb = vb.iter().sum::<f64>() / n;
    let mut caa = 0.0;
    let mut cbb = 0.0;
    let mut cab = 0.0;
    for (x, y) in va.iter().zip(vb.iter()) {
        let dx = x - ma;
        let dy = y - mb;
        caa += dx * dx;
        cbb += dy * dy;
        cab += dx * dy;
    }
    if caa == 0.0 || cbb == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((cab / (caa * cbb).sqrt()).clamp(-1.0, 1.0))
}

fn frobenius_norm(m: &SymmetricMatrix) -> f64 {
    m.values().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Closed-form Frobenius scale fit: `kappa* = <Sigma, Est> / ||Est||_F^2`,
/// clamped to be non-negative.
pub fn best_kappa_frobenius(sigma: &SymmetricMatrix, est: &SymmetricMatrix) -> ScaleFit {
    assert_eq!(sigma.dim(), est.dim(), "dimension mismatch");
    let norm2: f64 = est.values().iter().map(|v| v * v).sum();
    if norm2 == 0.0 {
        return ScaleFit {
            kappa: 0.0,
            residual: frobenius_norm(sigma),
            norm_kind: NormKind::Frobenius,
            clamped: false,
        };
    }
    let inner: f64 = sigma
        .values()
        .iter()
        .zip(est.values().iter())
        .map(|(a, b)| a * b)
        .sum();
    let raw = inner / norm2;
    let clamped = raw < 0.0;
    let kappa = raw.max(0.0);
    let residual = sigma
        .values()
        .iter()
        .zip(est.values().iter())
        .map(|(a, b)| {
            let d = a - kappa * b;
            d * d
        })
        .sum::<f64>()
        .sqrt();
    ScaleFit {
        kappa,
        residual,
        norm_kind: NormKind::Frobenius,
        clamped,
    }
}

fn linf_objective(sigma: &SymmetricMatrix, est: &SymmetricMatrix, kappa: f64) -> f64 {
    sigma
        .values()
        .iter()
        .zip(est.values().iter())
        .map(|(a, b)| (a - kappa * b).abs())
        .fold(0.0, f64::max)
}

/// Entrywise-sup scale fit: minimizes the convex piecewise-linear map
/// `kappa -> max_{j,k} |Sigma_jk - kappa Est_jk|` (diagonal included) by
/// golden-section search to bracket width 1e-10.
pub fn best_kappa_linf(sigma: &SymmetricMatrix, est: &SymmetricMatrix) -> ScaleFit {
    assert_eq!(sigma.dim(), est.dim(), "dimension mismatch");
    let max_est = est.max_abs();
    if max_est == 0.0 {
        return ScaleFit {
            kappa: 0.0,
            residual: sigma.max_abs(),
            norm_kind: NormKind::Linf,
            clamped: false,
        };
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0 + 2.0 * sigma.max_abs() / max_est;
    let inv_phi = 0.5 * ((5.0f64).sqrt() - 1.0);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = linf_objective(sigma, est, c);
    let mut fd = linf_objective(sigma, est, d);
    while hi - lo > 1e-10 {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = linf_objective(sigma, est, c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = linf_objective(sigma, est, d);
        }
    }
    let kappa = 0.5 * (lo + hi);
    ScaleFit {
        kappa,
        residual: linf_objective(sigma, est, kappa),
        norm_kind: NormKind::Linf,
        clamped: false,
    }
}

/// The `r` unordered pairs with largest absolute entries, ties broken
/// lexicographically on `(j, k)`.
pub fn top_edges(s: &SymmetricMatrix, r: usize) -> Result<EdgeSet, MetricsError> {
    let p = s.dim();
    let max = p * (p - 1) / 2;
    if r > max {
        return Err(MetricsError::RTooLarge { r, max });
    }
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(max);
    for j in 0..p {
        for k in (j + 1)..p {
            entries.push((j, k, s.get(j, k).abs()));
        }
    }
    entries.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let mut set = EdgeSet::new(p);
    for &(j, k, _) in entries.iter().take(r) {
        set.insert(j, k);
    }
    Ok(set)
}

/// Jaccard similarity `|A and B| / |A or B|`; 1 when both sets are empty.
pub fn jaccard(e1: &EdgeSet, e2: &EdgeSet) -> f64 {
    assert_eq!(e1.nodes(), e2.nodes(), "edge sets over different node counts");
    if e1.is_empty() && e2.is_empty() {
        return 1.0;
    }
    let inter = e1.iter().filter(|&(j, k)| e2.contains(j, k)).count();
    let union = e1.len() + e2.len() - inter;
    inter as f64 / union as f64
}
