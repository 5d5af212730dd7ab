//! Finite-dimensional approximation of the exchangeable problem.
//!
//! The n-dimensional problem with cost `sum_i (x_i - y_i)^2` is solved on
//! equal-size sample clouds by exact assignment and divided by `n`, which
//! puts it on the same scale as the exchangeable value. Exchangeable
//! Gaussians supply the closed-form Brenier maps used to monitor whether the
//! finite-dimensional maps stay uniformly Lipschitz.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::assignment::solve_assignment;
use crate::definetti::{sample_prefix, ExchangeableMixture};
use crate::dist1d::{Dist1D, QuantileGrid};
use crate::error::{Error, Result};
use crate::outer_ot::{exchangeable_value, Backend};
use crate::rng;
use crate::stats::{mean_half_width, spearman};

/// Replications per dimension unless configured otherwise.
pub const DEFAULT_REPLICATIONS: usize = 20;

/// Largest dimension at which the closed form is cross-checked densely.
pub const DENSE_CHECK_MAX_DIM: usize = 256;

/// Exchangeable Gaussian with covariance `sigma2 ((1 - rho) I + rho 11^T)`
/// and mean `mean_shift * 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExchangeableGaussian {
    sigma2: f64,
    rho: f64,
    mean_shift: f64,
}

impl ExchangeableGaussian {
    /// `rho` must lie in `[0, 1)`: negative correlation is not extendable to
    /// every dimension.
    pub fn new(sigma2: f64, rho: f64, mean_shift: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("sigma2 = {sigma2}")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::NotPositiveDefinite(format!(
                "rho = {rho} is outside [0, 1)"
            )));
        }
        if !mean_shift.is_finite() {
            return Err(Error::InvalidParameter(format!("mean shift {mean_shift}")));
        }
        Ok(Self {
            sigma2,
            rho,
            mean_shift,
        })
    }

    /// Standard Gaussian `N(0, I)`.
    pub fn standard() -> Self {
        Self {
            sigma2: 1.0,
            rho: 0.0,
            mean_shift: 0.0,
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mean_shift(&self) -> f64 {
        self.mean_shift
    }

    /// Eigenvalue on the complement of `1` (absent when `n = 1`).
    pub fn transverse_eigenvalue(&self, n: usize) -> Option<f64> {
        (n > 1).then_some(self.sigma2 * (1.0 - self.rho))
    }

    /// Eigenvalue along `1`: `sigma2 (1 - rho + n rho)`.
    pub fn diagonal_eigenvalue(&self, n: usize) -> f64 {
        self.sigma2 * (1.0 + (n as f64 - 1.0) * self.rho)
    }

    pub fn max_eigenvalue(&self, n: usize) -> f64 {
        let d = self.diagonal_eigenvalue(n);
        self.transverse_eigenvalue(n).map_or(d, |t| t.max(d))
    }

    pub fn covariance(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.sigma2
            } else {
                self.sigma2 * self.rho
            }
        })
    }

    /// Rows `mean + sqrt(sigma2 rho) Z_0 + sqrt(sigma2 (1 - rho)) Z_i`; row `r`
    /// uses stream `(seed, r)`.
    pub fn sample_rows(&self, n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let z = Dist1D::gaussian(0.0, 1.0).expect("standard normal");
        let (common, own) = (
            (self.sigma2 * self.rho).sqrt(),
            (self.sigma2 * (1.0 - self.rho)).sqrt(),
        );
        (0..count)
            .map(|r| {
                let mut rng = rng::stream(seed, r as u64);
                let z0 = z.draw(&mut rng);
                (0..n)
                    .map(|_| self.mean_shift + common * z0 + own * z.draw(&mut rng))
                    .collect()
            })
            .collect()
    }
}

/// `sum_i (x_i - y_i)^2` with terms summed in sorted order, so that the
/// result does not depend on the coordinate order.
fn squared_distance(x: &[f64], y: &[f64], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)));
    scratch.sort_by(f64::total_cmp);
    scratch.iter().sum()
}

/// `(1 / (n m)) min_sigma sum_r |x_r - y_sigma(r)|^2` for two clouds of `m`
/// rows in dimension `n`.
pub fn empirical_value_from_clouds(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    let m = x.len();
    if m != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "clouds have {m} and {} rows",
            y.len()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("clouds are empty".into()));
    }
    let n = x[0].len();
    if n == 0 || x.iter().chain(y).any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch(
            "rows must share a positive dimension".into(),
        ));
    }
    let mut scratch = Vec::with_capacity(n);
    let mut cost = Vec::with_capacity(m * m);
    for xr in x {
        for yr in y {
            cost.push(squared_distance(xr, yr, &mut scratch));
        }
    }
    let (perm, _) = solve_assignment(&cost, m)?;
    let mut matched: Vec<f64> = perm
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[r * m + c])
        .collect();
    matched.sort_by(f64::total_cmp);
    Ok(matched.iter().sum::<f64>() / (n * m) as f64)
}

/// Plug-in estimate of the n-dimensional value from independent clouds of
/// `mu` and `nu` (child streams 0 and 1 of `seed`).
pub fn empirical_value(
    mu: &ExchangeableMixture,
    nu: &ExchangeableMixture,
    n: usize,
    sample_size: usize,
    seed: u64,
) -> Result<f64> {
    let x = sample_prefix(mu, n, sample_size, rng::child(seed, 0))?;
    let y = sample_prefix(nu, n, sample_size, rng::child(seed, 1))?;
    empirical_value_from_clouds(x.rows(), y.rows())
}

/// How each replication estimates the n-dimensional value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// [`empirical_value`] as is. Biased upward, increasingly so with `n`.
    PlugIn,
    /// `K(x, y) - (K(x, x') + K(y, y')) / 2` with fresh clouds `x'`, `y'`.
    /// The correction removes the cloud-to-cloud matching bias, exactly so
    /// for location families.
    #[default]
    Debiased,
}

fn replicate(
    mu: &ExchangeableMixture,
    nu: &ExchangeableMixture,
    n: usize,
    size: usize,
    seed: u64,
    estimator: Estimator,
) -> Result<f64> {
    let cloud =
        |mix: &ExchangeableMixture, k: u64| sample_prefix(mix, n, size, rng::child(seed, k));
    let (x, y) = (cloud(mu, 0)?, cloud(nu, 1)?);
    let cross = empirical_value_from_clouds(x.rows(), y.rows())?;
    match estimator {
        Estimator::PlugIn => Ok(cross),
        Estimator::Debiased => {
            let (x2, y2) = (cloud(mu, 2)?, cloud(nu, 3)?);
            let within_mu = empirical_value_from_clouds(x.rows(), x2.rows())?;
            let within_nu = empirical_value_from_clouds(y.rows(), y2.rows())?;
            Ok(cross - 0.5 * (within_mu + within_nu))
        }
    }
}

/// Settings of a convergence experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_list: Vec<usize>,
    pub sample_size: usize,
    pub replications: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub grid: QuantileGrid,
}

impl ExperimentConfig {
    pub fn new(n_list: Vec<usize>, sample_size: usize, seed: u64) -> Self {
        Self {
            n_list,
            sample_size,
            replications: DEFAULT_REPLICATIONS,
            seed,
            estimator: Estimator::default(),
            grid: QuantileGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub mean: f64,
    pub half_width: f64,
    pub sample_size: usize,
    pub replications: usize,
    /// Per-replication estimates, in replication order.
    pub values: Vec<f64>,
}

/// Replicated estimates per dimension against the exchangeable value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub reference: f64,
    pub estimator: Estimator,
    /// Spearman correlation between `n` and the row means.
    pub trend: f64,
}

impl ConvergenceTable {
    /// CSV `n,mean,half_width,sample_size,replications,reference`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,mean,half_width,sample_size,replications,reference\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:?},{:?},{},{},{:?}\n",
                r.n, r.mean, r.half_width, r.sample_size, r.replications, self.reference
            ));
        }
        out
    }
}

/// Replicated estimates for every `n` in the list. Replication `r` at
/// dimension `n` uses seed `child(child(seed, r), n)`, so rows are
/// reproducible independently of scheduling.
pub fn convergence_experiment(
    mu: &ExchangeableMixture,
    nu: &ExchangeableMixture,
    cfg: &ExperimentConfig,
) -> Result<ConvergenceTable> {
    if cfg.n_list.is_empty() || cfg.n_list[0] == 0 || cfg.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "n_list must be positive and strictly increasing".into(),
        ));
    }
    if cfg.replications < 2 {
        return Err(Error::InvalidParameter(
            "at least two replications are needed for a confidence interval".into(),
        ));
    }
    if cfg.sample_size == 0 {
        return Err(Error::InvalidParameter(
            "sample size must be positive".into(),
        ));
    }
    let reference = exchangeable_value(mu, nu, &cfg.grid, Backend::Exact)?.value;
    let jobs: Vec<(usize, usize)> = cfg
        .n_list
        .iter()
        .flat_map(|&n| (0..cfg.replications).map(move |r| (n, r)))
        .collect();
    let values = jobs
        .par_iter()
        .map(|&(n, r)| {
            replicate(
                mu,
                nu,
                n,
                cfg.sample_size,
                rng::child(rng::child(cfg.seed, r as u64), n as u64),
                cfg.estimator,
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    let rows: Vec<ConvergenceRow> = cfg
        .n_list
        .iter()
        .zip(values.chunks(cfg.replications))
        .map(|(&n, vals)| {
            let (mean, half_width) = mean_half_width(vals);
            ConvergenceRow {
                n,
                mean,
                half_width,
                sample_size: cfg.sample_size,
                replications: cfg.replications,
                values: vals.to_vec(),
            }
        })
        .collect();
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let trend = if rows.len() > 1 {
        spearman(&ns, &means)
    } else {
        f64::NAN
    };
    Ok(ConvergenceTable {
        rows,
        reference,
        estimator: cfg.estimator,
        trend,
    })
}

/// Closed-form and dense evaluations of the Brenier map's spectral norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenReport {
    pub n: usize,
    pub closed_form: f64,
    /// Spectral norm of the dense map matrix; `None` above [`DENSE_CHECK_MAX_DIM`].
    pub dense: Option<f64>,
    pub source_eigenvalues: (Option<f64>, f64),
    pub target_eigenvalues: (Option<f64>, f64),
}

impl EigenReport {
    pub fn discrepancy(&self) -> Option<f64> {
        self.dense.map(|d| (d - self.closed_form).abs())
    }
}

fn spectral_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    if let Some(l) = eig.eigenvalues.iter().find(|l| **l <= 0.0) {
        return Err(Error::NotPositiveDefinite(format!("eigenvalue {l}")));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    let out = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    Ok((&out + out.transpose()) * 0.5)
}

/// Spectral norm of `S^{-1/2} (S^{1/2} T S^{1/2})^{1/2} S^{-1/2}` built densely.
fn dense_brenier_norm(source: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<f64> {
    let root = spectral_apply(source, f64::sqrt)?;
    let inv_root = spectral_apply(source, |l| 1.0 / l.sqrt())?;
    let inner = spectral_apply(&(&root * target * &root), f64::sqrt)?;
    let map = &inv_root * inner * &inv_root;
    let map = (&map + map.transpose()) * 0.5;
    Ok(SymmetricEigen::new(map)
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, l| m.max(l.abs())))
}

/// Lipschitz constant of the Brenier map between two exchangeable Gaussians
/// in dimension `n`.
///
/// Both covariances are diagonal in the basis `{1, 1^perp}`, so the map is
/// `sqrt(lambda_t / lambda_s)` on each eigenspace.
pub fn gaussian_brenier_lipschitz(
    source: &ExchangeableGaussian,
    target: &ExchangeableGaussian,
    n: usize,
) -> Result<(f64, EigenReport)> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let ratio = |t: f64, s: f64| t.sqrt() / s.sqrt();
    let (ts, tt) = (
        source.transverse_eigenvalue(n),
        target.transverse_eigenvalue(n),
    );
    let (ds, dt) = (source.diagonal_eigenvalue(n), target.diagonal_eigenvalue(n));
    let mut lipschitz = ratio(dt, ds);
    if let (Some(s), Some(t)) = (ts, tt) {
        lipschitz = lipschitz.max(ratio(t, s));
    }
    let dense = if n <= DENSE_CHECK_MAX_DIM {
        Some(dense_brenier_norm(
            &source.covariance(n),
            &target.covariance(n),
        )?)
    } else {
        None
    };
    Ok((
        lipschitz,
        EigenReport {
            n,
            closed_form: lipschitz,
            dense,
            source_eigenvalues: (ts, ds),
            target_eigenvalues: (tt, dt),
        },
    ))
}

/// Marginal law handed to the monitor.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    Gaussian(ExchangeableGaussian),
    Mixture(ExchangeableMixture),
}

impl Marginal {
    fn sample_rows(&self, n: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        match self {
            Marginal::Gaussian(g) => Ok(g.sample_rows(n, count, seed)),
            Marginal::Mixture(m) => Ok(sample_prefix(m, n, count, seed)?.rows().to_vec()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum MonitorMode {
    Gaussian,
    Empirical { sample_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundedness {
    Bounded,
    Unbounded,
    /// Sampled figures are lower bounds and cannot certify a uniform bound.
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorFigure {
    pub n: usize,
    pub lipschitz: f64,
}

/// Per-dimension Lipschitz figures of the optimal maps and a verdict on
/// whether they stay bounded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport {
    #[serde(flatten)]
    pub mode: MonitorMode,
    pub figures: Vec<MonitorFigure>,
    pub lower_bound_only: bool,
    pub diverging: bool,
    pub verdict: Boundedness,
}

/// Growth of the sampled figures beyond which the empirical monitor flags divergence.
pub const EMPIRICAL_GROWTH_FLAG: f64 = 1.25;

/// Spectral norm of the least-squares linear part of the matched pairs
/// `x_r -> y_perm(r)`.
///
/// For a Gaussian source the population slope is `E[DT(X)]` (Stein), whose
/// norm never exceeds the Lipschitz constant of `T`.
fn matched_regression_norm(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    let (m, n) = (x.len(), x[0].len());
    if m <= n + 1 {
        return Err(Error::InvalidParameter(format!(
            "{m} samples cannot fit a slope in dimension {n}"
        )));
    }
    let mut cost = Vec::with_capacity(m * m);
    let mut scratch = Vec::new();
    for xr in x {
        for yr in y {
            cost.push(squared_distance(xr, yr, &mut scratch));
        }
    }
    let (perm, _) = solve_assignment(&cost, m)?;
    let centred = |rows: &mut dyn Iterator<Item = &Vec<f64>>| {
        let mat = DMatrix::from_row_iterator(m, n, rows.flat_map(|r| r.iter().copied()));
        let mean = mat.row_mean();
        DMatrix::from_fn(m, n, |i, j| mat[(i, j)] - mean[j])
    };
    let xs = centred(&mut x.iter());
    let ys = centred(&mut perm.iter().map(|&c| &y[c]));
    let gram = xs.transpose() * &xs;
    let slope = gram
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("sample covariance of the source cloud".into()))?
        .solve(&(xs.transpose() * ys));
    Ok(slope.singular_values().max())
}

/// Track the Lipschitz constants of the n-dimensional optimal maps.
///
/// Gaussian mode is exact and decides boundedness from the covariance
/// structure: the figures diverge exactly when the target is correlated and
/// the source is not. Empirical mode fits the slope of the optimal matching
/// between sample clouds, reports it as a lower bound only and never
/// certifies a bound.
pub fn assumption_a_monitor(
    mu: &Marginal,
    nu: &Marginal,
    n_list: &[usize],
    mode: MonitorMode,
    seed: u64,
) -> Result<MonitorReport> {
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::InvalidParameter(
            "n_list must be non-empty and positive".into(),
        ));
    }
    match mode {
        MonitorMode::Gaussian => {
            let (Marginal::Gaussian(s), Marginal::Gaussian(t)) = (mu, nu) else {
                return Err(Error::ModeMismatch(
                    "gaussian mode needs exchangeable Gaussian marginals",
                ));
            };
            let figures = n_list
                .iter()
                .map(|&n| {
                    Ok(MonitorFigure {
                        n,
                        lipschitz: gaussian_brenier_lipschitz(s, t, n)?.0,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let diverging = t.rho() > 0.0 && s.rho() == 0.0;
            Ok(MonitorReport {
                mode,
                figures,
                lower_bound_only: false,
                diverging,
                verdict: if diverging {
                    Boundedness::Unbounded
                } else {
                    Boundedness::Bounded
                },
            })
        }
        MonitorMode::Empirical { sample_size } => {
            if sample_size < 2 {
                return Err(Error::InvalidParameter(
                    "empirical monitor needs at least two samples".into(),
                ));
            }
            let figures = n_list
                .par_iter()
                .map(|&n| {
                    let seed_n = rng::child(seed, n as u64);
                    let x = mu.sample_rows(n, sample_size, rng::child(seed_n, 0))?;
                    let y = nu.sample_rows(n, sample_size, rng::child(seed_n, 1))?;
                    Ok(MonitorFigure {
                        n,
                        lipschitz: matched_regression_norm(&x, &y)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let (first, last) = (figures[0].lipschitz, figures[figures.len() - 1].lipschitz);
            Ok(MonitorReport {
                mode,
                diverging: figures.len() > 1 && last > EMPIRICAL_GROWTH_FLAG * first,
                figures,
                lower_bound_only: true,
                verdict: Boundedness::Undetermined,
            })
        }
    }
}
