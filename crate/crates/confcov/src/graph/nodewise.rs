//! Nodewise Lasso on a covariance input.
//!
//! For node `j` the fit solves
//! `min_{b : b_j = 0}  (1/2) b^T S b - b^T S_j + lambda ||b||_1`
//! by cyclic coordinate descent with the Gram matrix precomputed (the
//! covariance estimate itself). The nonzero patterns across nodes encode
//! the conditional independence graph.

use nalgebra::DVector;
use rayon::prelude::*;

use super::GraphError;
use crate::linalg::SymmetricMatrix;
use crate::metrics::EdgeSet;

/// A converged nodewise regression.
#[derive(Debug, Clone)]
pub struct NodewiseFit {
    /// Node that was regressed on all others.
    pub j: usize,
    /// Coefficient vector of length `p` with entry `j` pinned to zero.
    pub beta: DVector<f64>,
    pub lambda: f64,
    /// Indices with nonzero coefficients.
    pub support: Vec<usize>,
    /// Worst violation of the subgradient optimality conditions.
    pub kkt_residual: f64,
}

/// Combination rule for turning per-node supports into an edge set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeRule {
    /// Edge present iff both directions are nonzero.
    And,
    /// Edge present iff either direction is nonzero.
    Or,
}

impl std::str::FromStr for EdgeRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "and" => Ok(EdgeRule::And),
            "or" => Ok(EdgeRule::Or),
            other => Err(format!("unknown edge rule: {other}")),
        }
    }
}

fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

fn kkt_residual(est: &SymmetricMatrix, beta: &DVector<f64>, j: usize, lambda: f64) -> f64 {
    let grad = est.values() * beta;
    let p = est.dim();
    let mut worst = 0.0f64;
    for k in 0..p {
        if k == j {
            continue;
        }
        let g = est.get(k, j) - grad[k];
        let violation = if beta[k] != 0.0 {
            (g - lambda * beta[k].signum()).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst = worst.max(violation);
    }
    worst
}

/// Solve one nodewise Lasso by cyclic coordinate descent.
///
/// A sweep is converged when no coefficient moved more than `tol`; the
/// subgradient conditions are then verified to `10 * tol` and sweeping
/// continues if they fail. With `lambda = 0` the principal submatrix on the
/// other nodes must be positive definite ([`GraphError::SingularGram`]).
pub fn nodewise_lasso(
    est: &SymmetricMatrix,
    j: usize,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<NodewiseFit, GraphError> {
    let p = est.dim();
    assert!(j < p, "node index out of range");
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(GraphError::InvalidParameter(format!(
            "lambda = {lambda} must be finite and non-negative"
        )));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(GraphError::InvalidParameter(format!(
            "tol = {tol} must be positive"
        )));
    }
    if lambda == 0.0 {
        let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let sub = est.submatrix(&others);
        if nalgebra::Cholesky::new(sub.into_inner()).is_none() {
            return Err(GraphError::SingularGram);
        }
    }

    let s = est.values();
    let mut beta = DVector::<f64>::zeros(p);
    let mut grad = DVector::<f64>::zeros(p); // S * beta, kept incrementally

    let mut converged = false;
    for _ in 0..max_iter {
        let mut max_delta = 0.0f64;
        for k in 0..p {
            if k == j {
                continue;
            }
            let s_kk = s[(k, k)];
            if s_kk <= 0.0 {
                continue; // no curvature in this coordinate; leave at zero
            }
            let partial = s[(k, j)] - (grad[k] - s_kk * beta[k]);
            let new_beta = soft_threshold(partial, lambda) / s_kk;
            let delta = new_beta - beta[k];
            if delta != 0.0 {
                grad.axpy(delta, &s.column(k).into_owned(), 1.0);
                beta[k] = new_beta;
            }
            max_delta = max_delta.max(delta.abs());
        }
        if max_delta < tol {
            if kkt_residual(est, &beta, j, lambda) <= 10.0 * tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(GraphError::NotConverged(max_iter));
    }

    let support: Vec<usize> = (0..p).filter(|&k| beta[k] != 0.0).collect();
    let kkt = kkt_residual(est, &beta, j, lambda);
    Ok(NodewiseFit {
        j,
        beta,
        lambda,
        support,
        kkt_residual: kkt,
    })
}

/// Indices of the support whose coefficients clear an absolute threshold.
pub fn threshold_support(fit: &NodewiseFit, thresh: f64) -> Vec<usize> {
    assert!(thresh >= 0.0, "threshold must be non-negative");
    fit.support
        .iter()
        .copied()
        .filter(|&k| fit.beta[k].abs() >= thresh)
        .collect()
}

/// Run all `p` nodewise fits and assemble the conditional independence
/// graph plus a symmetric precision proxy.
///
/// Edge `(j, k)` is present under [`EdgeRule::And`] iff both `beta_j[k]`
/// and `beta_k[j]` are nonzero (either, under `Or`). The proxy carries
/// `-sign(beta_j[k]) * sqrt(|beta_j[k] * beta_k[j]|)` off the diagonal
/// (sign from the lower-index fit) and 1 on the diagonal.
pub fn cig_estimate(
    est: &SymmetricMatrix,
    lambda: f64,
    rule: EdgeRule,
    tol: f64,
    max_iter: usize,
) -> Result<(EdgeSet, SymmetricMatrix), GraphError> {
    let p = est.dim();
    let fits: Vec<Result<NodewiseFit, GraphError>> = (0..p)
        .into_par_iter()
        .map(|j| nodewise_lasso(est, j, lambda, tol, max_iter))
        .collect();

    let failures: Vec<(usize, String)> = fits
        .iter()
        .enumerate()
        .filter_map(|(j, r)| r.as_ref().err().map(|e| (j, e.to_string())))
        .collect();
    if !failures.is_empty() {
        return Err(GraphError::NodewiseFailures(failures));
    }
    let fits: Vec<NodewiseFit> = fits.into_iter().map(|r| r.unwrap()).collect();

    let mut edges = EdgeSet::new(p);
    let mut proxy = SymmetricMatrix::identity(p).into_inner();
    for j in 0..p {
        for k in (j + 1)..p {
            let bjk = fits[j].beta[k];
            let bkj = fits[k].beta[j];
            let present = match rule {
                EdgeRule::And => bjk != 0.0 && bkj != 0.0,
                EdgeRule::Or => bjk != 0.0 || bkj != 0.0,
            };
            if present {
                edges.insert(j, k);
            }
            let magnitude = (bjk * bkj).abs().sqrt();
            let value = -bjk.signum() * magnitude;
            proxy[(j, k)] = value;
            proxy[(k, j)] = value;
        }
    }
    Ok((edges, SymmetricMatrix::mirror_upper(proxy)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::simulate::{build_scenario_sigma, ScenarioKind};
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_pd(p: usize, s: u64) -> SymmetricMatrix {
        let mut rng = seed::rng(s);
        let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        SymmetricMatrix::mirror_upper(&a * a.transpose() + DMatrix::identity(p, p) * 0.5)
    }

    #[test]
    fn large_lambda_gives_zero_solution() {
        let est = random_pd(5, 1);
        let j = 2;
        let lambda_max = (0..5)
            .filter(|&k| k != j)
            .map(|k| est.get(k, j).abs())
            .fold(0.0f64, f64::max);
        let fit = nodewise_lasso(&est, j, lambda_max + 0.01, 1e-10, 1000).unwrap();
        assert!(fit.support.is_empty());
        assert_eq!(fit.beta[j], 0.0);
        assert!(fit.kkt_residual <= 1e-9);
    }

    #[test]
    fn unpenalized_matches_direct_inversion() {
        let est = random_pd(6, 2);
        let j = 0;
        let fit = nodewise_lasso(&est, j, 0.0, 1e-12, 100000).unwrap();
        let others: Vec<usize> = (1..6).collect();
        let sub = est.submatrix(&others).into_inner();
        let rhs = DVector::from_fn(5, |k, _| est.get(others[k], j));
        let solution = nalgebra::Cholesky::new(sub).unwrap().solve(&rhs);
        for (idx, &k) in others.iter().enumerate() {
            assert!(
                (fit.beta[k] - solution[idx]).abs() < 1e-8,
                "coefficient {k}: {} vs {}",
                fit.beta[k],
                solution[idx]
            );
        }
    }

    #[test]
    fn unpenalized_singular_gram_is_rejected() {
        // rank-1 estimate: submatrix is singular
        let mut rng = seed::rng(3);
        let v = DVector::<f64>::from_fn(5, |_, _| rng.sample(StandardNormal));
        let est = SymmetricMatrix::mirror_upper(&v * v.transpose());
        assert!(matches!(
            nodewise_lasso(&est, 0, 0.0, 1e-8, 1000),
            Err(GraphError::SingularGram)
        ));
    }

    #[test]
    fn kkt_certificate_on_random_instances() {
        let tol = 1e-9;
        for s in 0..20u64 {
            let p = 4 + (s % 5) as usize;
            let est = random_pd(p, 100 + s);
            let lambda = 0.05 * (1 + s % 4) as f64;
            let j = (s % p as u64) as usize;
            let fit = nodewise_lasso(&est, j, lambda, tol, 100000).unwrap();
            assert!(fit.kkt_residual <= 10.0 * tol, "kkt {}", fit.kkt_residual);
            // spec form of the certificate
            let grad = est.values() * &fit.beta;
            for k in 0..p {
                if k == j {
                    continue;
                }
                let g = est.get(k, j) - grad[k];
                if fit.beta[k] != 0.0 {
                    assert!((g - lambda * fit.beta[k].signum()).abs() <= 10.0 * tol);
                } else {
                    assert!(g.abs() <= lambda + 10.0 * tol);
                }
            }
        }
    }

    #[test]
    fn objective_matches_proximal_gradient_oracle() {
        let p = 4;
        let est = random_pd(p, 50);
        let lambda = 0.1;
        let j = 1;
        let fit = nodewise_lasso(&est, j, lambda, 1e-12, 100000).unwrap();

        // independent solver: proximal gradient with step 1/L
        let s = est.values();
        let eig = crate::linalg::sym_eig(&est).unwrap();
        let step = 1.0 / eig.eigenvalues[0];
        let mut b = DVector::<f64>::zeros(p);
        for _ in 0..200000 {
            let grad = s * &b - s.column(j);
            let mut next = DVector::<f64>::zeros(p);
            for k in 0..p {
                if k != j {
                    next[k] = soft_threshold(b[k] - step * grad[k], step * lambda);
                }
            }
            if (&next - &b).amax() < 1e-14 {
                b = next;
                break;
            }
            b = next;
        }
        let objective = |v: &DVector<f64>| {
            0.5 * (s * v).dot(v) - v.dot(&s.column(j).into_owned())
                + lambda * v.iter().map(|x| x.abs()).sum::<f64>()
        };
        assert!(
            (objective(&fit.beta) - objective(&b)).abs() < 1e-8,
            "objectives {} vs {}",
            objective(&fit.beta),
            objective(&b)
        );
    }

    #[test]
    fn lasso_scale_equivariant() {
        let est = random_pd(5, 60);
        let lambda = 0.2;
        let c = 4.2;
        let fit1 = nodewise_lasso(&est, 0, lambda, 1e-12, 100000).unwrap();
        let scaled = SymmetricMatrix::mirror_upper(est.values() * c);
        let fit2 = nodewise_lasso(&scaled, 0, c * lambda, 1e-12, 100000).unwrap();
        assert!((&fit1.beta - &fit2.beta).amax() < 1e-8);
    }

    #[test]
    fn threshold_support_cases() {
        let mut beta = DVector::zeros(3);
        beta[1] = 0.3;
        beta[2] = -0.1;
        let fit = NodewiseFit {
            j: 0,
            beta,
            lambda: 0.0,
            support: vec![1, 2],
            kkt_residual: 0.0,
        };
        assert_eq!(threshold_support(&fit, 0.0), vec![1, 2]);
        assert_eq!(threshold_support(&fit, 0.2), vec![1]);
        assert!(threshold_support(&fit, 0.5).is_empty());
    }

    #[test]
    fn identity_estimate_gives_empty_graph() {
        let est = SymmetricMatrix::identity(5);
        let (edges, proxy) = cig_estimate(&est, 0.1, EdgeRule::And, 1e-10, 1000).unwrap();
        assert!(edges.is_empty());
        assert!(crate::linalg::max_abs_diff(proxy.values(), &DMatrix::identity(5, 5)) < 1e-12);
    }

    #[test]
    fn toeplitz_sigma_recovers_circular_neighbors() {
        let (sigma, omega) = build_scenario_sigma(ScenarioKind::Toeplitz, 8, 0).unwrap();
        let (edges, _) = cig_estimate(&sigma, 1e-6, EdgeRule::And, 1e-10, 200000).unwrap();
        for j in 0..8 {
            for k in (j + 1)..8 {
                let neighbor = omega.get(j, k) != 0.0;
                assert_eq!(
                    edges.contains(j, k),
                    neighbor,
                    "edge ({j},{k}) presence should be {neighbor}"
                );
            }
        }
    }

    #[test]
    fn or_rule_is_superset_of_and_rule() {
        let est = random_pd(7, 70);
        let (and_edges, _) = cig_estimate(&est, 0.3, EdgeRule::And, 1e-10, 100000).unwrap();
        let (or_edges, _) = cig_estimate(&est, 0.3, EdgeRule::Or, 1e-10, 100000).unwrap();
        for (j, k) in and_edges.iter() {
            assert!(or_edges.contains(j, k));
        }
    }
}
