//! Quadratic Wasserstein distance and monotone transport on the line.
//!
//! On the line, `W2^2(p, q) = int_0^1 (F_p^{-1}(t) - F_q^{-1}(t))^2 dt`, and
//! the optimal map from an atomless source is the monotone rearrangement
//! `t(s) = F_q^{-1}(F_p(s))`.

use serde::Serialize;

use crate::dist1d::{Dist1D, Level, QuantileGrid};
use crate::error::{Error, PotentialSide, Result};
use crate::quadrature::integrate_levels;
use crate::rng;

/// Clamp applied to `F_source(s)` before inverting the target CDF.
pub const CDF_CLAMP: f64 = 1e-15;

/// Slack allowed when comparing a Lipschitz estimate with its bound.
pub const LIPSCHITZ_SLACK: f64 = 1e-9;

/// Anything with a generalized inverse CDF and a second moment.
pub trait QuantileFunction {
    fn quantile_at(&self, level: Level) -> f64;
    fn second_moment(&self) -> Result<f64>;
}

impl QuantileFunction for Dist1D {
    fn quantile_at(&self, level: Level) -> f64 {
        Dist1D::quantile_at(self, level)
    }

    fn second_moment(&self) -> Result<f64> {
        Dist1D::second_moment(self)
    }
}

/// `W2^2(p, q)` by quadrature of the squared quantile difference over `grid`.
pub fn w2_squared<P, Q>(p: &P, q: &Q, grid: &QuantileGrid) -> Result<f64>
where
    P: QuantileFunction + ?Sized,
    Q: QuantileFunction + ?Sized,
{
    p.second_moment()?;
    q.second_moment()?;
    Ok(integrate_levels(grid, |level| {
        let d = p.quantile_at(level) - q.quantile_at(level);
        d * d
    }))
}

#[derive(Debug, Clone, PartialEq)]
enum MapRule {
    Identity,
    /// `t(s) = offset + scale * (s - anchor)`.
    Affine {
        anchor: f64,
        scale: f64,
        offset: f64,
    },
    Rearrangement,
}

/// Monotone map pushing `source` forward to `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct Map1D {
    source: Dist1D,
    target: Dist1D,
    rule: MapRule,
}

impl Map1D {
    pub fn source(&self) -> &Dist1D {
        &self.source
    }

    pub fn target(&self) -> &Dist1D {
        &self.target
    }

    pub fn is_identity(&self) -> bool {
        self.rule == MapRule::Identity
    }

    pub fn apply(&self, s: f64) -> f64 {
        match self.rule {
            MapRule::Identity => s,
            MapRule::Affine {
                anchor,
                scale,
                offset,
            } => offset + scale * (s - anchor),
            MapRule::Rearrangement => {
                let t = self.source.cdf(s);
                let level = if t <= 0.5 {
                    Level::Lower(t.clamp(CDF_CLAMP, 0.5))
                } else {
                    Level::Upper(self.source.sf(s).clamp(CDF_CLAMP, 0.5))
                };
                self.target.quantile_at(level)
            }
        }
    }

    /// `int (s - t(s))^2 dp(s)`, integrated over the source quantiles.
    pub fn transport_cost(&self, grid: &QuantileGrid) -> f64 {
        integrate_levels(grid, |level| {
            let s = self.source.quantile_at(level);
            let d = s - self.apply(s);
            d * d
        })
    }
}

/// Monotone rearrangement from `p` to `q`. Same-family location-scale pairs
/// get their closed-form affine map.
pub fn monotone_map(p: &Dist1D, q: &Dist1D) -> Result<Map1D> {
    if !p.is_atomless() {
        return Err(Error::AtomicSource);
    }
    let rule = if p == q {
        MapRule::Identity
    } else {
        match (p, q) {
            (Dist1D::Gaussian(a), Dist1D::Gaussian(b)) => MapRule::Affine {
                anchor: a.mean(),
                scale: b.std() / a.std(),
                offset: b.mean(),
            },
            (Dist1D::Uniform(a), Dist1D::Uniform(b)) => MapRule::Affine {
                anchor: a.lo(),
                scale: (b.hi() - b.lo()) / (a.hi() - a.lo()),
                offset: b.lo(),
            },
            _ => MapRule::Rearrangement,
        }
    };
    Ok(Map1D {
        source: p.clone(),
        target: q.clone(),
        rule,
    })
}

/// Largest difference quotient `|t(a) - t(b)| / |a - b|` over `probes`.
///
/// Any chord slope is a convex combination of the slopes between consecutive
/// sorted probes, so only neighbours need to be compared; adding probes can
/// only increase the result.
pub fn lipschitz_over(map: &Map1D, probes: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64)> = probes.iter().map(|&s| (s, map.apply(s))).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    pts.windows(2)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .fold(0.0, f64::max)
}

/// Stratified probe points drawn from the source law: one uniform draw in
/// each of `count` equal-probability strata.
pub fn source_probes(source: &Dist1D, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, 0);
    let p = count as f64;
    (0..count)
        .map(|i| {
            let u = rng::open01(&mut rng);
            let level = if 2 * i < count {
                Level::Lower((i as f64 + u) / p)
            } else {
                Level::Upper(((count - 1 - i) as f64 + (1.0 - u)) / p)
            };
            source.quantile_at(level)
        })
        .collect()
}

/// Empirical lower bound on the Lipschitz constant of `map`.
pub fn lipschitz_estimate(map: &Map1D, probes: usize, seed: u64) -> Result<f64> {
    if probes < 2 {
        return Err(Error::InvalidParameter("need at least two probes".into()));
    }
    Ok(lipschitz_over(
        map,
        &source_probes(map.source(), probes, seed),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub estimate: f64,
    pub bound: Option<f64>,
    pub satisfied: bool,
}

impl LipschitzReport {
    pub fn new(estimate: f64, bound: Option<f64>) -> Self {
        let satisfied = bound.is_some_and(|b| estimate <= b + LIPSCHITZ_SLACK);
        Self {
            estimate,
            bound,
            satisfied,
        }
    }
}

/// Relative slack when checking supplied curvature bounds against the laws.
const CURVATURE_SLACK: f64 = 1e-12;

/// Checks the contraction bound `sqrt(C / c)` on the monotone map, after
/// verifying `V_source'' <= C` and `V_target'' >= c`.
pub fn caffarelli_check(
    source: &Dist1D,
    target: &Dist1D,
    c_upper: f64,
    c_lower: f64,
    probes: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    if !(c_upper > 0.0 && c_lower > 0.0 && c_upper.is_finite() && c_lower.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "curvature bounds must be positive and finite, got C={c_upper}, c={c_lower}"
        )));
    }
    let src = source.curvature_bounds()?;
    if src.upper > c_upper * (1.0 + CURVATURE_SLACK) {
        return Err(Error::PotentialBound {
            side: PotentialSide::SourceUpper,
            required: c_upper,
            found: src.upper,
        });
    }
    let tgt = target.curvature_bounds()?;
    if tgt.lower < c_lower * (1.0 - CURVATURE_SLACK) {
        return Err(Error::PotentialBound {
            side: PotentialSide::TargetLower,
            required: c_lower,
            found: tgt.lower,
        });
    }
    let map = monotone_map(source, target)?;
    let estimate = lipschitz_estimate(&map, probes, seed)?;
    Ok(LipschitzReport::new(
        estimate,
        Some((c_upper / c_lower).sqrt()),
    ))
}
