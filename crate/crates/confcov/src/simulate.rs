//! Simulation scenarios: idiosyncratic covariance structures, confounder
//! loadings, confounded datasets, and the population diagnostics that govern
//! estimator behavior.
//!
//! Five covariance structures are provided (block, block-II, circular
//! Toeplitz with 20 or 3 confounders, Erdos-Renyi). Loadings have
//! independent N(0,1) entries with column `k` scaled by `nu * exp(-k)`;
//! data follows `x = w + Gamma h` or its max-linear variant, with optional
//! multivariate-t tails.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{sym_eig, DataMatrix, LinalgError, SymmetricMatrix};
use crate::seed;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("dimension {p} is not divisible as required by the {kind} scenario")]
    IndivisibleDimension { p: usize, kind: ScenarioKind },
    #[error("dimension {p} too small for the {kind} scenario (need >= {min})")]
    DimensionTooSmall {
        p: usize,
        kind: ScenarioKind,
        min: usize,
    },
    #[error("scenario construction produced a singular matrix")]
    SingularConstruction,
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The five idiosyncratic covariance structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Ten equal blocks with within-block correlation 0.95; q = 20.
    Block,
    /// Half the variables in ten blocks at 0.95, the rest one large block
    /// at 0.5; q = 20.
    Block2,
    /// Inverse covariance is circulant with -0.4999 first off-diagonals,
    /// rescaled to unit variance; q = 20.
    Toeplitz,
    /// Same Toeplitz structure with q = 3.
    Toeplitz2,
    /// Inverse covariance with random edges of probability 10/p; q = 20.
    ErdosRenyi,
}

impl ScenarioKind {
    /// Number of latent confounders the scenario uses.
    pub fn latent_dim(self) -> usize {
        match self {
            ScenarioKind::Toeplitz2 => 3,
            _ => 20,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Block => "block",
            ScenarioKind::Block2 => "block2",
            ScenarioKind::Toeplitz => "toeplitz",
            ScenarioKind::Toeplitz2 => "toeplitz2",
            ScenarioKind::ErdosRenyi => "erdos_renyi",
        }
    }

    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Block,
        ScenarioKind::Block2,
        ScenarioKind::Toeplitz,
        ScenarioKind::Toeplitz2,
        ScenarioKind::ErdosRenyi,
    ];
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown scenario kind: {s}"))
    }
}

/// How the confounder contribution enters the observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// `x = w + Gamma h`
    Linear,
    /// `x_j = max(w_j, (Gamma h)_j)`
    MaxLinear,
}

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::Linear => "linear",
            Link::MaxLinear => "max_linear",
        }
    }
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Link {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Link::Linear),
            "max_linear" => Ok(Link::MaxLinear),
            other => Err(format!("unknown link: {other}")),
        }
    }
}

/// Tail behavior of a generator: Gaussian, or multivariate t with the given
/// degrees of freedom (one radius per row).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tails {
    Gaussian,
    StudentT(u32),
}

impl Tails {
    pub const ALLOWED_DF: [u32; 8] = [1, 2, 3, 5, 10, 20, 50, 100];

    fn as_option(self) -> Option<u32> {
        match self {
            Tails::Gaussian => None,
            Tails::StudentT(df) => Some(df),
        }
    }
}

impl std::fmt::Display for Tails {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tails::Gaussian => f.write_str("inf"),
            Tails::StudentT(df) => write!(f, "{df}"),
        }
    }
}

impl std::str::FromStr for Tails {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inf" | "gaussian" => Ok(Tails::Gaussian),
            other => other
                .parse::<u32>()
                .map(Tails::StudentT)
                .map_err(|_| format!("degrees of freedom must be a number or 'inf': {other}")),
        }
    }
}

// JSON representation: null for Gaussian, a number for Student t.
impl Serialize for Tails {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        self.as_option().serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Tails {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let opt = Option::<u32>::deserialize(de)?;
        match opt {
            None => Ok(Tails::Gaussian),
            Some(0) => Err(serde::de::Error::custom("degrees of freedom must be >= 1")),
            Some(df) => Ok(Tails::StudentT(df)),
        }
    }
}

/// A fully specified simulation cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub p: usize,
    /// Effective sample size; datasets for the estimators carry `n + 1` rows.
    pub n: usize,
    /// Confounder strength.
    pub nu: f64,
    /// Tails of the idiosyncratic noise `w` and the factors `h`.
    pub df1: Tails,
    /// Tails of the loading matrix entries.
    pub df2: Tails,
    pub link: Link,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn latent_dim(&self) -> usize {
        self.kind.latent_dim()
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let q = self.latent_dim();
        if self.p < q + 1 {
            return Err(SimulationError::InvalidSpec(format!(
                "p = {} must exceed the latent dimension q = {q}",
                self.p
            )));
        }
        if self.n < 2 {
            return Err(SimulationError::InvalidSpec(format!(
                "n = {} must be at least 2",
                self.n
            )));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(SimulationError::InvalidSpec(format!(
                "nu = {} must be finite and non-negative",
                self.nu
            )));
        }
        for (name, tails) in [("df1", self.df1), ("df2", self.df2)] {
            if let Tails::StudentT(df) = tails {
                if !Tails::ALLOWED_DF.contains(&df) {
                    return Err(SimulationError::InvalidSpec(format!(
                        "{name} = {df} not in the supported set {:?}",
                        Tails::ALLOWED_DF
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ground truth of a simulated scenario: the target covariance, its inverse,
/// the loadings, and the confounded covariance `Theta = Sigma + Gamma Gamma^T`.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub sigma: SymmetricMatrix,
    pub omega: SymmetricMatrix,
    pub gamma: DMatrix<f64>,
    pub q: usize,
    pub theta: SymmetricMatrix,
}

impl GroundTruth {
    pub fn new(sigma: SymmetricMatrix, omega: SymmetricMatrix, gamma: DMatrix<f64>) -> Self {
        let p = sigma.dim();
        assert_eq!(gamma.nrows(), p, "loadings must have p rows");
        let q = gamma.ncols();
        let theta = SymmetricMatrix::mirror_upper(sigma.values() + &gamma * gamma.transpose());
        GroundTruth {
            sigma,
            omega,
            gamma,
            q,
            theta,
        }
    }
}

/// Population alignment diagnostics between the confounder column space and
/// the covariance / coordinate axes.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    /// Smallest eigenvalue of `Gamma^T Gamma`.
    pub gamma_l: f64,
    /// Largest eigenvalue of `Gamma^T Gamma`.
    pub gamma_u: f64,
    /// Smallest eigenvalue of `Sigma`.
    pub sigma_l: f64,
    /// Largest eigenvalue of `Sigma`.
    pub sigma_u: f64,
    /// Operator norm of `Pi_Gamma Sigma`.
    pub rho1: f64,
    /// Largest column norm of `Pi_Gamma`.
    pub rho2: f64,
    /// Confounder energy of the nodewise regression vectors,
    /// `eta_j = beta_j^T Gamma Gamma^T beta_j`.
    pub eta: Vec<f64>,
    /// Maximum node degree of the conditional independence graph of `Sigma`.
    pub max_degree: usize,
    /// Set when the loadings do not have full column rank; the projection is
    /// then built on the subspace actually spanned.
    pub rank_deficient_loadings: bool,
}

fn equicorrelated_block(sigma: &mut DMatrix<f64>, start: usize, len: usize, rho: f64) {
    for j in start..start + len {
        for k in start..start + len {
            sigma[(j, k)] = if j == k { 1.0 } else { rho };
        }
    }
}

/// Exact inverse of an equicorrelated block `(1-rho) I + rho J`.
fn equicorrelated_block_inverse(omega: &mut DMatrix<f64>, start: usize, len: usize, rho: f64) {
    if len == 1 {
        omega[(start, start)] = 1.0;
        return;
    }
    let k = len as f64;
    let c = rho / (1.0 + (k - 1.0) * rho);
    let scale = 1.0 / (1.0 - rho);
    for j in start..start + len {
        for l in start..start + len {
            let jc = if j == l { 1.0 - c } else { -c };
            omega[(j, l)] = scale * jc;
        }
    }
}

/// Rescale a covariance built as the inverse of `omega0` to unit diagonal,
/// returning `(sigma, omega)` with `omega` the exact inverse of `sigma`.
fn rescale_to_unit_diagonal(
    omega0: DMatrix<f64>,
) -> Result<(SymmetricMatrix, SymmetricMatrix), SimulationError> {
    let chol =
        nalgebra::Cholesky::new(omega0.clone()).ok_or(SimulationError::SingularConstruction)?;
    let sigma0 = chol.inverse();
    let p = sigma0.nrows();
    let scales: Vec<f64> = (0..p).map(|j| sigma0[(j, j)].sqrt()).collect();
    let sigma = SymmetricMatrix::from_fn(p, |j, k| {
        if j == k {
            1.0
        } else {
            sigma0[(j, k)] / (scales[j] * scales[k])
        }
    });
    let omega = SymmetricMatrix::from_fn(p, |j, k| omega0[(j, k)] * scales[j] * scales[k]);
    Ok((sigma, omega))
}

/// Construct the idiosyncratic covariance and its inverse for a scenario.
///
/// Block structures build `Sigma` directly and derive `Omega` analytically;
/// the Toeplitz and Erdos-Renyi structures build `Omega` first and rescale
/// the inverse to unit diagonal. Only Erdos-Renyi consumes the seed.
pub fn build_scenario_sigma(
    kind: ScenarioKind,
    p: usize,
    seed_val: u64,
) -> Result<(SymmetricMatrix, SymmetricMatrix), SimulationError> {
    match kind {
        ScenarioKind::Block => {
            if p < 20 {
                return Err(SimulationError::DimensionTooSmall { p, kind, min: 20 });
            }
            if p % 10 != 0 {
                return Err(SimulationError::IndivisibleDimension { p, kind });
            }
            let bs = p / 10;
            let mut sigma = DMatrix::zeros(p, p);
            let mut omega = DMatrix::zeros(p, p);
            for b in 0..10 {
                equicorrelated_block(&mut sigma, b * bs, bs, 0.95);
                equicorrelated_block_inverse(&mut omega, b * bs, bs, 0.95);
            }
            Ok((
                SymmetricMatrix::mirror_upper(sigma),
                SymmetricMatrix::mirror_upper(omega),
            ))
        }
        ScenarioKind::Block2 => {
            if p < 20 {
                return Err(SimulationError::DimensionTooSmall { p, kind, min: 20 });
            }
            if p % 20 != 0 {
                return Err(SimulationError::IndivisibleDimension { p, kind });
            }
            let half = p / 2;
            let bs = half / 10;
            let mut sigma = DMatrix::zeros(p, p);
            let mut omega = DMatrix::zeros(p, p);
            for b in 0..10 {
                equicorrelated_block(&mut sigma, b * bs, bs, 0.95);
                equicorrelated_block_inverse(&mut omega, b * bs, bs, 0.95);
            }
            equicorrelated_block(&mut sigma, half, half, 0.5);
            equicorrelated_block_inverse(&mut omega, half, half, 0.5);
            Ok((
                SymmetricMatrix::mirror_upper(sigma),
                SymmetricMatrix::mirror_upper(omega),
            ))
        }
        ScenarioKind::Toeplitz | ScenarioKind::Toeplitz2 => {
            if p < 3 {
                return Err(SimulationError::DimensionTooSmall { p, kind, min: 3 });
            }
            let mut omega0 = DMatrix::identity(p, p);
            for j in 0..p {
                let k = (j + 1) % p;
                omega0[(j, k)] = -0.4999;
                omega0[(k, j)] = -0.4999;
            }
            rescale_to_unit_diagonal(omega0)
        }
        ScenarioKind::ErdosRenyi => {
            if p < 2 {
                return Err(SimulationError::DimensionTooSmall { p, kind, min: 2 });
            }
            let mut rng = seed::rng(seed_val);
            let prob = (10.0 / p as f64).min(1.0);
            let mut adjacency = Vec::new();
            let mut degree = vec![0usize; p];
            for j in 0..p {
                for k in (j + 1)..p {
                    if rng.random::<f64>() < prob {
                        adjacency.push((j, k));
                        degree[j] += 1;
                        degree[k] += 1;
                    }
                }
            }
            let max_degree = degree.iter().copied().max().unwrap_or(0);
            let mut omega0 = DMatrix::identity(p, p);
            if max_degree > 0 {
                // one shared negative constant keeping every row's
                // off-diagonal absolute sum below 0.99 with a little slack
                let c = -(0.99 - 1e-6) / max_degree as f64;
                for &(j, k) in &adjacency {
                    omega0[(j, k)] = c;
                    omega0[(k, j)] = c;
                }
            }
            rescale_to_unit_diagonal(omega0)
        }
    }
}

fn row_radii(rng: &mut impl Rng, n: usize, tails: Tails) -> Option<Vec<f64>> {
    match tails {
        Tails::Gaussian => None,
        Tails::StudentT(df) => {
            let chi = ChiSquared::new(df as f64).expect("df >= 1");
            Some(
                (0..n)
                    .map(|_| {
                        let u: f64 = rng.sample(chi);
                        (df as f64 / u.max(f64::MIN_POSITIVE)).sqrt()
                    })
                    .collect(),
            )
        }
    }
}

/// Sample a `p x q` loading matrix: independent standard normal entries
/// (multivariate-t rows when `df2` is finite), with column `k` scaled by
/// `nu * exp(-k)` for `k = 1..q`.
pub fn sample_loadings(p: usize, q: usize, nu: f64, df2: Tails, seed_val: u64) -> DMatrix<f64> {
    let mut rng = seed::rng(seed_val);
    let mut gamma = DMatrix::zeros(p, q);
    for i in 0..p {
        for k in 0..q {
            gamma[(i, k)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    if let Some(radii) = row_radii(&mut rng, p, df2) {
        for i in 0..p {
            for k in 0..q {
                gamma[(i, k)] *= radii[i];
            }
        }
    }
    for k in 0..q {
        let scale = nu * (-((k + 1) as f64)).exp();
        for i in 0..p {
            gamma[(i, k)] *= scale;
        }
    }
    if nu == 0.0 {
        gamma.fill(0.0);
    }
    gamma
}

/// Draw `n` observation rows from the scenario: `w` with covariance shape
/// `Sigma` and `h` with identity shape (both with `df1` tails), combined by
/// the link.
pub fn sample_dataset(
    gt: &GroundTruth,
    n: usize,
    df1: Tails,
    link: Link,
    seed_val: u64,
) -> Result<DataMatrix, SimulationError> {
    if n < 2 {
        return Err(SimulationError::InvalidSpec(format!(
            "dataset needs at least 2 rows, got {n}"
        )));
    }
    let p = gt.sigma.dim();
    let q = gt.q;
    let chol = nalgebra::Cholesky::new(gt.sigma.values().clone())
        .ok_or(SimulationError::SingularConstruction)?;
    let l_t = chol.l().transpose();

    let mut rng = seed::rng(seed_val);
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut w = z * l_t;
    if let Some(radii) = row_radii(&mut rng, n, df1) {
        for i in 0..n {
            for j in 0..p {
                w[(i, j)] *= radii[i];
            }
        }
    }

    let mut confounded = DMatrix::zeros(n, p);
    if q > 0 {
        let mut h = DMatrix::zeros(n, q);
        for i in 0..n {
            for k in 0..q {
                h[(i, k)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        if let Some(radii) = row_radii(&mut rng, n, df1) {
            for i in 0..n {
                for k in 0..q {
                    h[(i, k)] *= radii[i];
                }
            }
        }
        confounded = h * gt.gamma.transpose();
    }

    let x = match link {
        Link::Linear => w + confounded,
        Link::MaxLinear => DMatrix::from_fn(n, p, |i, j| w[(i, j)].max(confounded[(i, j)])),
    };
    Ok(DataMatrix::new(x)?)
}

const STREAM_SIGMA: u64 = 1;
const STREAM_LOADINGS: u64 = 2;
const STREAM_DATA: u64 = 3;

/// Build the ground truth for a scenario spec (covariance structure plus
/// loadings; the data stream is drawn separately by [`simulate_cell`]).
pub fn generate_ground_truth(spec: &ScenarioSpec) -> Result<GroundTruth, SimulationError> {
    spec.validate()?;
    let (sigma, omega) =
        build_scenario_sigma(spec.kind, spec.p, seed::derive(spec.seed, &[STREAM_SIGMA]))?;
    let gamma = sample_loadings(
        spec.p,
        spec.latent_dim(),
        spec.nu,
        spec.df2,
        seed::derive(spec.seed, &[STREAM_LOADINGS]),
    );
    Ok(GroundTruth::new(sigma, omega, gamma))
}

/// Ground truth plus an `n + 1`-row dataset, the observation count the
/// estimators expect for an effective sample size of `n`.
pub fn simulate_cell(spec: &ScenarioSpec) -> Result<(GroundTruth, DataMatrix), SimulationError> {
    let gt = generate_ground_truth(spec)?;
    let x = sample_dataset(
        &gt,
        spec.n + 1,
        spec.df1,
        spec.link,
        seed::derive(spec.seed, &[STREAM_DATA]),
    )?;
    Ok((gt, x))
}

/// Population diagnostics for a ground truth.
pub fn population_diagnostics(gt: &GroundTruth) -> Result<Diagnostics, SimulationError> {
    let p = gt.sigma.dim();
    let q = gt.q;

    let sig_eig = sym_eig(&gt.sigma)?;
    let sigma_u = sig_eig.eigenvalues[0];
    let sigma_l = sig_eig.eigenvalues[p - 1];

    let (gamma_l, gamma_u, rho1, rho2, rank_deficient) = if q == 0 || gt.gamma.amax() == 0.0 {
        (0.0, 0.0, 0.0, 0.0, false)
    } else {
        let svd = crate::linalg::thin_svd(&gt.gamma)?;
        let rank_deficient = svd.rank < q.min(p);
        let gamma_u = svd.sigma[0] * svd.sigma[0];
        let gamma_l = if svd.rank < q {
            0.0
        } else {
            svd.sigma[q - 1] * svd.sigma[q - 1]
        };
        // Pi_Gamma = U U^T over the spanned subspace, so
        // ||Pi Sigma|| = ||U^T Sigma|| and ||Pi e_j||_2 is the j-th row norm
        let u = svd.u.columns(0, svd.rank).into_owned();
        let rho1 = crate::linalg::thin_svd(&(u.transpose() * gt.sigma.values()))?.sigma[0];
        let rho2 = (0..p)
            .map(|j| u.row(j).norm_squared())
            .fold(0.0f64, f64::max)
            .sqrt();
        (gamma_l, gamma_u, rho1, rho2, rank_deficient)
    };

    // eta_j via the precision matrix: beta^(j) = -Omega_{-j,j} / Omega_{jj}
    let omega = gt.omega.values();
    let mut eta = Vec::with_capacity(p);
    for j in 0..p {
        let mut beta = DVector::zeros(p);
        let w_jj = omega[(j, j)];
        for k in 0..p {
            if k != j {
                beta[k] = -omega[(k, j)] / w_jj;
            }
        }
        let t = gt.gamma.transpose() * &beta;
        eta.push(t.norm_squared());
    }

    let degree_tol = 1e-10 * gt.omega.max_abs();
    let max_degree = (0..p)
        .map(|j| {
            (0..p)
                .filter(|&k| k != j && omega[(j, k)].abs() > degree_tol)
                .count()
        })
        .max()
        .unwrap_or(0);

    Ok(Diagnostics {
        gamma_l,
        gamma_u,
        sigma_l,
        sigma_u,
        rho1,
        rho2,
        eta,
        max_degree,
        rank_deficient_loadings: rank_deficient,
    })
}

/// Predicted diagonal profile of the projection estimator in the eigenbasis
/// of `Theta`: for each `j > q` (descending eigenvalue order) the entry is
/// `(n - q) D2_j / sum_{k > q} D2_k` where `D2` are the eigenvalues of
/// `Theta`. Meaningful in the high-dimensional regime `n < p`.
pub fn expected_scale_profile(gt: &GroundTruth, n: usize) -> Result<Vec<f64>, SimulationError> {
    let eig = sym_eig(&gt.theta)?;
    let q = gt.q;
    let p = gt.sigma.dim();
    let denom: f64 = (q..p).map(|k| eig.eigenvalues[k]).sum();
    Ok((q..p)
        .map(|j| (n as f64 - q as f64) * eig.eigenvalues[j] / denom)
        .collect())
}
