//! Uniform log-concavity of finite-dimensional projections.
//!
//! For an exchangeable Gaussian the modulus of the n-dimensional marginal is
//! `kappa_n = 1 / lambda_max(Sigma_n)`, which stays bounded away from zero
//! exactly in the uncorrelated case. Non-Gaussian densities in low dimension
//! are handled by second differences of `-log density` on a grid.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::Serialize;

use crate::dist1d::Dist1D;
use crate::error::{Error, Result};
use crate::findim_approx::{ExchangeableGaussian, DENSE_CHECK_MAX_DIM};

/// Slack for the interlacing inequalities between projections.
pub const INTERLACING_TOL: f64 = 1e-10;

/// Largest dimension accepted by [`grid_hessian_modulus`].
pub const GRID_MAX_DIM: usize = 3;

/// `kappa_n = 1 / (sigma2 (1 - rho + n rho))`.
pub fn gaussian_modulus(g: &ExchangeableGaussian, n: usize) -> f64 {
    1.0 / g.max_eigenvalue(n)
}

/// Smallest eigenvalue of the numerically inverted covariance.
pub fn numeric_modulus(g: &ExchangeableGaussian, n: usize) -> Result<f64> {
    let precision = g
        .covariance(n)
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite(format!("covariance at n = {n} is singular")))?;
    let precision = (&precision + precision.transpose()) * 0.5;
    Ok(SymmetricEigen::new(precision).eigenvalues.min())
}

/// Largest eigenvalue of the precision matrix, the upper curvature bound of
/// the n-dimensional potential.
pub fn gaussian_upper_modulus(g: &ExchangeableGaussian, n: usize) -> f64 {
    let d = g.diagonal_eigenvalue(n);
    1.0 / g.transverse_eigenvalue(n).map_or(d, |t| t.min(d))
}

/// x-marginal of `prod_i e^{-V(x_i + t)} dx_i` times a standard Gaussian in
/// `t`, for quadratic `V`.
///
/// `V` is given as the Gaussian `N(c, s^2)` it generates; the projection is
/// the exchangeable Gaussian with covariance `s^2 I + 11^T` and mean `c 1`,
/// the same family for every `n`.
pub fn counterexample_projection(potential: &Dist1D, n: usize) -> Result<ExchangeableGaussian> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let Dist1D::Gaussian(g) = potential else {
        return Err(Error::NonQuadraticPotential);
    };
    let s2 = g.std() * g.std();
    ExchangeableGaussian::new(s2 + 1.0, 1.0 / (s2 + 1.0), g.mean())
}

/// Result of a grid second-difference scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianModulus {
    /// Minimum directional second difference of `-log density`; negative
    /// values mean the density is not log-concave.
    pub modulus: f64,
    pub argmin: Vec<f64>,
    /// Unit direction achieving the minimum.
    pub direction: Vec<f64>,
}

impl HessianModulus {
    pub fn is_log_concave(&self) -> bool {
        self.modulus >= 0.0
    }
}

/// Minimum over interior grid points, coordinate axes and the grid diagonal of
/// the second difference of `-log density`.
///
/// `bounds` gives one `(lo, hi)` per axis and `resolution` the number of grid
/// points per axis. The diagonal step moves one cell along every axis, so it
/// is the direction `1 / sqrt(n)` when the box is a cube.
pub fn grid_hessian_modulus(
    density: impl Fn(&[f64]) -> f64 + Sync,
    bounds: &[(f64, f64)],
    resolution: usize,
) -> Result<HessianModulus> {
    let n = bounds.len();
    if n == 0 || n > GRID_MAX_DIM {
        return Err(Error::InvalidParameter(format!(
            "grid modulus supports 1 to {GRID_MAX_DIM} dimensions, got {n}"
        )));
    }
    if resolution < 3 {
        return Err(Error::InvalidParameter(
            "resolution must be at least 3".into(),
        ));
    }
    if bounds
        .iter()
        .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
    {
        return Err(Error::InvalidParameter(
            "box bounds must be finite with lo < hi".into(),
        ));
    }
    let steps: Vec<f64> = bounds
        .iter()
        .map(|(lo, hi)| (hi - lo) / (resolution - 1) as f64)
        .collect();
    let total = resolution.pow(n as u32);
    let point = |flat: usize| -> Vec<f64> {
        let mut rest = flat;
        (0..n)
            .map(|k| {
                let idx = rest % resolution;
                rest /= resolution;
                bounds[k].0 + idx as f64 * steps[k]
            })
            .collect()
    };
    let potential = (0..total)
        .into_par_iter()
        .map(|flat| {
            let x = point(flat);
            let p = density(&x);
            if p > 0.0 && p.is_finite() {
                Ok(-p.ln())
            } else {
                Err(Error::DensityUnderflow(x))
            }
        })
        .collect::<Result<Vec<f64>>>()?;

    // Offsets in flat index and their Euclidean lengths.
    let stride: Vec<usize> = (0..n).map(|k| resolution.pow(k as u32)).collect();
    let mut directions: Vec<(usize, f64, Vec<f64>)> = (0..n)
        .map(|k| {
            let mut unit = vec![0.0; n];
            unit[k] = 1.0;
            (stride[k], steps[k], unit)
        })
        .collect();
    if n > 1 {
        let len = steps.iter().map(|h| h * h).sum::<f64>().sqrt();
        directions.push((
            stride.iter().sum(),
            len,
            steps.iter().map(|h| h / len).collect(),
        ));
    }

    let interior = |flat: usize| {
        let mut rest = flat;
        (0..n).all(|_| {
            let idx = rest % resolution;
            rest /= resolution;
            idx > 0 && idx < resolution - 1
        })
    };
    let (modulus, at, dir) = (0..total)
        .into_par_iter()
        .filter(|&flat| interior(flat))
        .flat_map_iter(|flat| {
            let potential = &potential;
            directions
                .iter()
                .enumerate()
                .map(move |(d, (offset, len, _))| {
                    let second = (potential[flat + offset] - 2.0 * potential[flat]
                        + potential[flat - offset])
                        / (len * len);
                    (second, flat, d)
                })
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
        .expect("resolution >= 3 leaves an interior point");
    Ok(HessianModulus {
        modulus,
        argmin: point(at),
        direction: directions[dir].2.clone(),
    })
}

/// `(n, kappa_n)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusCurve {
    pub rows: Vec<(usize, f64)>,
}

impl ModulusCurve {
    pub fn gaussian(g: &ExchangeableGaussian, n_list: &[usize]) -> Self {
        Self {
            rows: n_list
                .iter()
                .map(|&n| (n, gaussian_modulus(g, n)))
                .collect(),
        }
    }

    /// CSV `n,kappa`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,kappa\n");
        for (n, k) in &self.rows {
            out.push_str(&format!("{n},{k:?}\n"));
        }
        out
    }

    pub fn infimum(&self) -> f64 {
        self.rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min)
    }

    pub fn is_constant(&self) -> bool {
        let first = self.rows[0].1;
        self.rows
            .iter()
            .all(|r| (r.1 - first).abs() <= INTERLACING_TOL * first.abs())
    }
}

/// Interlacing between projections: lower moduli shrink and upper moduli grow
/// with the dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionReport {
    pub lower: Vec<(usize, f64)>,
    pub upper: Vec<(usize, f64)>,
    pub lower_nonincreasing: bool,
    pub upper_nondecreasing: bool,
    /// Largest gap between closed forms and dense eigenvalues, when computed.
    pub numeric_discrepancy: Option<f64>,
}

pub fn projection_bounds_check(
    g: &ExchangeableGaussian,
    n_list: &[usize],
) -> Result<ProjectionReport> {
    if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "n_list must be positive and strictly increasing".into(),
        ));
    }
    let lower: Vec<(usize, f64)> = n_list
        .iter()
        .map(|&n| (n, gaussian_modulus(g, n)))
        .collect();
    let upper: Vec<(usize, f64)> = n_list
        .iter()
        .map(|&n| (n, gaussian_upper_modulus(g, n)))
        .collect();
    let mut discrepancy: Option<f64> = None;
    for &n in n_list.iter().filter(|&&n| n <= DENSE_CHECK_MAX_DIM) {
        let precision = g.covariance(n).try_inverse().ok_or_else(|| {
            Error::NotPositiveDefinite(format!("covariance at n = {n} is singular"))
        })?;
        let eig = SymmetricEigen::new((&precision + precision.transpose()) * 0.5).eigenvalues;
        let gap = (eig.min() - gaussian_modulus(g, n))
            .abs()
            .max((eig.max() - gaussian_upper_modulus(g, n)).abs());
        discrepancy = Some(discrepancy.map_or(gap, |d| d.max(gap)));
    }
    Ok(ProjectionReport {
        lower_nonincreasing: lower.windows(2).all(|w| w[1].1 <= w[0].1 + INTERLACING_TOL),
        upper_nondecreasing: upper.windows(2).all(|w| w[1].1 >= w[0].1 - INTERLACING_TOL),
        lower,
        upper,
        numeric_discrepancy: discrepancy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformityVerdict {
    /// The curve is constant over the tested dimensions.
    Uniform,
    /// The curve decreases; the extrapolated infimum is zero.
    NotUniform,
}

/// Limit of `n kappa_n`, extrapolated linearly in `1 / n` from the two
/// largest dimensions, against the closed form `1 / (sigma2 rho)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceRate {
    pub estimate: f64,
    pub expected: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub family: ExchangeableGaussian,
    pub curve: ModulusCurve,
    pub infimum: f64,
    pub verdict: UniformityVerdict,
    /// Every tested projection has a positive modulus.
    pub projections_log_concave: bool,
    /// Largest gap between `kappa_n` and the dense eigensolver.
    pub numeric_discrepancy: Option<f64>,
    pub divergence_rate: Option<DivergenceRate>,
    pub projection_check: ProjectionReport,
}

/// Full audit of an exchangeable Gaussian over the dimensions in `n_list`.
pub fn audit(g: &ExchangeableGaussian, n_list: &[usize]) -> Result<AuditReport> {
    if n_list.len() < 2 {
        return Err(Error::InvalidParameter(
            "an audit needs at least two dimensions".into(),
        ));
    }
    let projection_check = projection_bounds_check(g, n_list)?;
    let curve = ModulusCurve::gaussian(g, n_list);
    let mut numeric_discrepancy: Option<f64> = None;
    for &(n, kappa) in curve.rows.iter().filter(|r| r.0 <= DENSE_CHECK_MAX_DIM) {
        let gap = (numeric_modulus(g, n)? - kappa).abs();
        numeric_discrepancy = Some(numeric_discrepancy.map_or(gap, |d| d.max(gap)));
    }
    let divergence_rate = (g.rho() > 0.0).then(|| {
        let (n1, k1) = curve.rows[curve.rows.len() - 2];
        let (n2, k2) = curve.rows[curve.rows.len() - 1];
        let (a, b) = (1.0 / (n1 as f64 * k1), 1.0 / (n2 as f64 * k2));
        let (s1, s2) = (1.0 / n1 as f64, 1.0 / n2 as f64);
        let intercept = a - (b - a) / (s2 - s1) * s1;
        let estimate = 1.0 / intercept;
        let expected = 1.0 / (g.sigma2() * g.rho());
        DivergenceRate {
            estimate,
            expected,
            error: (estimate - expected).abs(),
        }
    });
    Ok(AuditReport {
        family: *g,
        infimum: curve.infimum(),
        verdict: if curve.is_constant() {
            UniformityVerdict::Uniform
        } else {
            UniformityVerdict::NotUniform
        },
        projections_log_concave: curve.rows.iter().all(|r| r.1 > 0.0),
        numeric_discrepancy,
        divergence_rate,
        projection_check,
        curve,
    })
}
