//! One-dimensional probability laws.
//!
//! [`Dist1D`] is the building block of everything else: mixture components,
//! transport targets and log-concavity inputs. Each law exposes its CDF,
//! survival function, generalized inverse `inf { s : F(s) > t }`, second
//! moment and, when it has a density, its log-density and potential
//! curvature.
//!
//! Probabilities close to one lose precision when stored as `t`, so quantiles
//! can also be requested from the upper side through [`Level::Upper`], which
//! carries the survival mass `1 - t` directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Default number of quantile cells used for W2 quadrature.
pub const DEFAULT_GRID: usize = 100_000;

const WEIGHT_TOL: f64 = 1e-12;

/// A probability level, stored on whichever side keeps full precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Level {
    /// `t = F(s)` measured from the left.
    Lower(f64),
    /// `r = 1 - F(s)` measured from the right.
    Upper(f64),
}

impl Level {
    /// Level for the probability `t`, switching to the upper side above 1/2.
    pub fn from_lower(t: f64) -> Level {
        if t <= 0.5 {
            Level::Lower(t)
        } else {
            Level::Upper(1.0 - t)
        }
    }

    pub fn as_lower(self) -> f64 {
        match self {
            Level::Lower(t) => t,
            Level::Upper(r) => 1.0 - r,
        }
    }
}

/// Midpoint nodes `t_i = (i - 1/2) / N` on (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantileGrid {
    count: usize,
}

impl QuantileGrid {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidParameter(
                "quantile grid needs at least one node".into(),
            ));
        }
        Ok(Self { count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Width `1/N` of each cell.
    pub fn step(&self) -> f64 {
        1.0 / self.count as f64
    }

    /// Node `i` (zero based), on the precise side of 1/2.
    pub fn level(&self, i: usize) -> Level {
        let n = self.count as f64;
        if 2 * i < self.count {
            Level::Lower((i as f64 + 0.5) / n)
        } else {
            Level::Upper(((self.count - i) as f64 - 0.5) / n)
        }
    }

    /// Node values `t_i` as plain probabilities.
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |i| (i as f64 + 0.5) / self.count as f64)
    }
}

impl Default for QuantileGrid {
    fn default() -> Self {
        Self {
            count: DEFAULT_GRID,
        }
    }
}

/// Lower and upper bounds on the second derivative of the potential
/// `V = -log density`, with the points where they are attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureBounds {
    pub lower: f64,
    pub lower_at: Option<f64>,
    pub upper: f64,
    pub upper_at: Option<f64>,
}

/// Result of a log-concavity probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogConcavity {
    /// The potential's curvature is bounded below by `kappa >= 0`.
    Modulus(f64),
    /// A grid point where the potential's second difference is negative.
    NotLogConcave {
        witness: f64,
        second_difference: f64,
    },
}

impl LogConcavity {
    /// Modulus, with `-inf` standing in for non-log-concave laws.
    pub fn kappa(&self) -> f64 {
        match *self {
            LogConcavity::Modulus(k) => k,
            LogConcavity::NotLogConcave { .. } => f64::NEG_INFINITY,
        }
    }

    pub fn is_uniformly_log_concave(&self) -> bool {
        self.kappa() > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: f64,
    std: f64,
}

impl Gaussian {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !std.is_finite() || std <= 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "gaussian needs finite mean and std > 0, got mean {mean}, std {std}"
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    fn z(&self, s: f64) -> f64 {
        (s - self.mean) / (self.std * std::f64::consts::SQRT_2)
    }

    fn cdf(&self, s: f64) -> f64 {
        0.5 * libm::erfc(-self.z(s))
    }

    fn sf(&self, s: f64) -> f64 {
        0.5 * libm::erfc(self.z(s))
    }

    fn quantile_at(&self, level: Level) -> f64 {
        let scale = self.std * std::f64::consts::SQRT_2;
        match level {
            Level::Lower(t) if t <= 0.5 => {
                self.mean - scale * statrs::function::erf::erfc_inv(2.0 * t)
            }
            Level::Lower(t) => self.mean + scale * statrs::function::erf::erfc_inv(2.0 * (1.0 - t)),
            Level::Upper(r) => self.mean + scale * statrs::function::erf::erfc_inv(2.0 * r),
        }
    }

    fn ln_pdf(&self, s: f64) -> f64 {
        let u = (s - self.mean) / self.std;
        -0.5 * u * u - self.std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Uniform {
    lo: f64,
    hi: f64,
}

impl Uniform {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidDistribution(format!(
                "uniform needs finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Density proportional to `exp(-V)` with `V` piecewise linear on a grid and
/// extrapolated linearly beyond it.
///
/// Cell masses, CDF and quantiles are exact for the interpolated potential.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPotential {
    xs: Vec<f64>,
    vs: Vec<f64>,
    /// `min(vs)`; all internal exponentials use `vs - shift`.
    shift: f64,
    left_rate: f64,
    right_rate: f64,
    left_mass: f64,
    right_mass: f64,
    cell_mass: Vec<f64>,
    /// Unnormalized mass to the left of `xs[j]`.
    mass_below: Vec<f64>,
    /// Unnormalized mass to the right of `xs[j]`.
    mass_above: Vec<f64>,
    total: f64,
}

/// `(1 - exp(-d)) / d`, continuous at zero.
fn decay_ratio(d: f64) -> f64 {
    if d.abs() < 1e-300 {
        1.0
    } else {
        -(-d).exp_m1() / d
    }
}

/// Integral of `exp(-v)` over an interval of length `len` on which `v` is
/// linear from `a` to `b`.
fn linear_exp_integral(len: f64, a: f64, b: f64) -> f64 {
    len * (-a.min(b)).exp() * decay_ratio((b - a).abs())
}

/// Distance `w` from the start of an interval (potential `a` at the start,
/// slope `slope`) such that the integral of `exp(-v)` over `[0, w]` is `mass`.
fn invert_linear_exp(mass: f64, a: f64, slope: f64, len: f64) -> f64 {
    if mass <= 0.0 {
        return 0.0;
    }
    let scaled = (mass.ln() + a).exp();
    let w = if slope == 0.0 {
        scaled
    } else {
        let arg = -scaled * slope;
        if arg <= -1.0 {
            len
        } else {
            -arg.ln_1p() / slope
        }
    };
    w.clamp(0.0, len)
}

impl GridPotential {
    pub fn new(xs: Vec<f64>, vs: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 3 || vs.len() != n {
            return Err(Error::InvalidDistribution(format!(
                "grid potential needs at least 3 points and equal-length xs/vs (got {} and {})",
                n,
                vs.len()
            )));
        }
        if xs.iter().chain(&vs).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution(
                "grid values must be finite".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidDistribution(
                "grid xs must be strictly increasing".into(),
            ));
        }
        let left_slope = (vs[1] - vs[0]) / (xs[1] - xs[0]);
        let right_slope = (vs[n - 1] - vs[n - 2]) / (xs[n - 1] - xs[n - 2]);
        if left_slope >= 0.0 {
            return Err(Error::NonIntegrable(format!(
                "left tail slope of V is {left_slope}; V must increase towards -inf"
            )));
        }
        if right_slope <= 0.0 {
            return Err(Error::NonIntegrable(format!(
                "trailing V slope is {right_slope}; V must increase towards +inf"
            )));
        }
        let shift = vs.iter().copied().fold(f64::INFINITY, f64::min);
        let u: Vec<f64> = vs.iter().map(|v| v - shift).collect();
        let cell_mass: Vec<f64> = (0..n - 1)
            .map(|j| linear_exp_integral(xs[j + 1] - xs[j], u[j], u[j + 1]))
            .collect();
        let left_rate = -left_slope;
        let right_rate = right_slope;
        let left_mass = (-u[0]).exp() / left_rate;
        let right_mass = (-u[n - 1]).exp() / right_rate;

        let mut mass_below = Vec::with_capacity(n);
        let mut acc = left_mass;
        mass_below.push(acc);
        for m in &cell_mass {
            acc += m;
            mass_below.push(acc);
        }
        let mut mass_above = vec![0.0; n];
        let mut acc = right_mass;
        mass_above[n - 1] = acc;
        for j in (0..n - 1).rev() {
            acc += cell_mass[j];
            mass_above[j] = acc;
        }
        let total = left_mass + cell_mass.iter().sum::<f64>() + right_mass;
        Ok(Self {
            xs,
            vs,
            shift,
            left_rate,
            right_rate,
            left_mass,
            right_mass,
            cell_mass,
            mass_below,
            mass_above,
            total,
        })
    }

    /// Tabulate `potential` on `count` equally spaced points of `[lo, hi]`.
    pub fn from_fn(lo: f64, hi: f64, count: usize, potential: impl Fn(f64) -> f64) -> Result<Self> {
        if count < 3 || lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidDistribution(
                "grid needs lo < hi and at least 3 points".into(),
            ));
        }
        let h = (hi - lo) / (count - 1) as f64;
        let xs: Vec<f64> = (0..count).map(|i| lo + i as f64 * h).collect();
        let vs = xs.iter().map(|&x| potential(x)).collect();
        Self::new(xs, vs)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn vs(&self) -> &[f64] {
        &self.vs
    }

    /// `log Z` with `Z = integral of exp(-V)`.
    pub fn log_normalization(&self) -> f64 {
        self.total.ln() - self.shift
    }

    /// Interpolated (or extrapolated) potential, shifted by `-min(vs)`.
    fn shifted_potential(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.vs[0] - self.shift + self.left_rate * (self.xs[0] - x);
        }
        if x >= self.xs[n - 1] {
            return self.vs[n - 1] - self.shift + self.right_rate * (x - self.xs[n - 1]);
        }
        let j = self.cell_of(x);
        let frac = (x - self.xs[j]) / (self.xs[j + 1] - self.xs[j]);
        (self.vs[j] + frac * (self.vs[j + 1] - self.vs[j])) - self.shift
    }

    /// Interpolated potential `V(x)`.
    pub fn potential(&self, x: f64) -> f64 {
        self.shifted_potential(x) + self.shift
    }

    fn cell_of(&self, x: f64) -> usize {
        let k = self.xs.partition_point(|&v| v <= x);
        (k.max(1) - 1).min(self.xs.len() - 2)
    }

    fn cdf(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] {
            return self.left_mass * (-self.left_rate * (self.xs[0] - x)).exp() / self.total;
        }
        if x >= self.xs[n - 1] {
            return 1.0 - self.sf(x);
        }
        let j = self.cell_of(x);
        let a = self.vs[j] - self.shift;
        let partial = linear_exp_integral(x - self.xs[j], a, self.shifted_potential(x));
        (self.mass_below[j] + partial) / self.total
    }

    fn sf(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x >= self.xs[n - 1] {
            return self.right_mass * (-self.right_rate * (x - self.xs[n - 1])).exp() / self.total;
        }
        if x < self.xs[0] {
            return 1.0 - self.cdf(x);
        }
        let j = self.cell_of(x);
        let b = self.vs[j + 1] - self.shift;
        let partial = linear_exp_integral(self.xs[j + 1] - x, self.shifted_potential(x), b);
        (self.mass_above[j + 1] + partial) / self.total
    }

    fn quantile_from_left(&self, mass: f64) -> f64 {
        let n = self.xs.len();
        if mass < self.left_mass {
            return self.xs[0] + (mass / self.left_mass).ln() / self.left_rate;
        }
        if mass >= self.mass_below[n - 1] {
            return self.quantile_from_right((self.total - mass).max(0.0));
        }
        let j = self.mass_below.partition_point(|&m| m <= mass) - 1;
        let j = j.min(n - 2);
        let rem = mass - self.mass_below[j];
        let h = self.xs[j + 1] - self.xs[j];
        let a = self.vs[j] - self.shift;
        let slope = (self.vs[j + 1] - self.vs[j]) / h;
        self.xs[j] + invert_linear_exp(rem, a, slope, h)
    }

    fn quantile_from_right(&self, mass: f64) -> f64 {
        let n = self.xs.len();
        if mass <= 0.0 {
            return f64::INFINITY;
        }
        if mass < self.right_mass {
            return self.xs[n - 1] + (self.right_mass / mass).ln() / self.right_rate;
        }
        if mass >= self.mass_above[0] {
            return self.quantile_from_left((self.total - mass).max(0.0));
        }
        // mass_above is decreasing; find the cell j with above[j+1] <= mass < above[j].
        let k = self.mass_above.partition_point(|&m| m > mass);
        let j = (k.max(1) - 1).min(n - 2);
        let rem = mass - self.mass_above[j + 1];
        let h = self.xs[j + 1] - self.xs[j];
        let b = self.vs[j + 1] - self.shift;
        let slope_leftwards = (self.vs[j] - self.vs[j + 1]) / h;
        self.xs[j + 1] - invert_linear_exp(rem, b, slope_leftwards, h)
    }

    fn quantile_at(&self, level: Level) -> f64 {
        match level {
            Level::Lower(t) if t <= 0.5 => self.quantile_from_left(t * self.total),
            Level::Lower(t) => self.quantile_from_right((1.0 - t) * self.total),
            Level::Upper(r) => self.quantile_from_right(r * self.total),
        }
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        -self.shifted_potential(x) - self.total.ln()
    }

    fn second_moment(&self) -> f64 {
        let n = self.xs.len();
        let mut acc = 0.0;
        for j in 0..n - 1 {
            let a = self.vs[j] - self.shift;
            let b = self.vs[j + 1] - self.shift;
            let pieces = ((b - a).abs().ceil() as usize).clamp(1, 64);
            let (x0, x1) = (self.xs[j], self.xs[j + 1]);
            let h = (x1 - x0) / pieces as f64;
            for p in 0..pieces {
                let lo = x0 + p as f64 * h;
                acc += crate::quadrature::gauss_legendre(lo, lo + h, |x| {
                    x * x * (-self.shifted_potential(x)).exp()
                });
            }
        }
        // Exponential tails: x = x0 - E or xN + E with E ~ Exp(rate).
        let (x0, xn) = (self.xs[0], self.xs[n - 1]);
        let (l, r) = (self.left_rate, self.right_rate);
        acc += self.left_mass * (x0 * x0 - 2.0 * x0 / l + 2.0 / (l * l));
        acc += self.right_mass * (xn * xn + 2.0 * xn / r + 2.0 / (r * r));
        debug_assert!(self.cell_mass.iter().all(|m| *m >= 0.0));
        acc / self.total
    }

    /// Non-uniform second differences of `V` at interior grid nodes.
    pub fn second_differences(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (1..self.xs.len() - 1).map(move |j| {
            let (hl, hr) = (self.xs[j] - self.xs[j - 1], self.xs[j + 1] - self.xs[j]);
            let dl = (self.vs[j] - self.vs[j - 1]) / hl;
            let dr = (self.vs[j + 1] - self.vs[j]) / hr;
            (self.xs[j], 2.0 * (dr - dl) / (hl + hr))
        })
    }
}

/// Finitely supported law with nondecreasing atoms and positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Empirical {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    /// `cumulative[j]` = total weight of atoms `0..=j`.
    cumulative: Vec<f64>,
    /// `beyond[j]` = total weight of atoms `j+1..`.
    beyond: Vec<f64>,
}

impl Empirical {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::InvalidDistribution(format!(
                "empirical law needs matching non-empty atoms/weights (got {} and {})",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidDistribution("atoms must be finite".into()));
        }
        if atoms.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidDistribution(
                "atoms must be nondecreasing".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidDistribution(
                "empirical weights must be positive".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidDistribution(format!(
                "empirical weights sum {sum}"
            )));
        }
        let cumulative: Vec<f64> = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let mut beyond = vec![0.0; weights.len()];
        for j in (0..weights.len() - 1).rev() {
            beyond[j] = beyond[j + 1] + weights[j + 1];
        }
        Ok(Self {
            atoms,
            weights,
            cumulative,
            beyond,
        })
    }

    /// Equally weighted law on `atoms` (sorted internally).
    pub fn uniform_on(mut atoms: Vec<f64>) -> Result<Self> {
        atoms.sort_by(f64::total_cmp);
        let w = 1.0 / atoms.len().max(1) as f64;
        let n = atoms.len();
        Self::new(atoms, vec![w; n])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn cdf(&self, s: f64) -> f64 {
        match self.atoms.partition_point(|&a| a <= s) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    fn sf(&self, s: f64) -> f64 {
        match self.atoms.partition_point(|&a| a <= s) {
            0 => self.cumulative[self.atoms.len() - 1],
            k => self.beyond[k - 1],
        }
    }

    fn quantile_at(&self, level: Level) -> f64 {
        let last = self.atoms.len() - 1;
        let j = match level {
            Level::Lower(t) => self.cumulative.partition_point(|&c| c <= t),
            Level::Upper(r) => self.beyond.partition_point(|&b| b >= r),
        };
        self.atoms[j.min(last)]
    }

    fn ln_pmf(&self, s: f64) -> f64 {
        let lo = self.atoms.partition_point(|&a| a < s);
        let hi = self.atoms.partition_point(|&a| a <= s);
        let mass: f64 = self.weights[lo..hi].iter().sum();
        if mass > 0.0 {
            mass.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// A one-dimensional probability law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Dist1DRepr", into = "Dist1DRepr")]
pub enum Dist1D {
    Gaussian(Gaussian),
    Uniform(Uniform),
    Grid(GridPotential),
    Empirical(Empirical),
}

/// Per-point likelihood of a row coordinate, separating atoms from densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Likelihood {
    Density(f64),
    Atom(f64),
}

impl Dist1D {
    pub fn gaussian(mean: f64, std: f64) -> Result<Self> {
        Gaussian::new(mean, std).map(Dist1D::Gaussian)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Uniform::new(lo, hi).map(Dist1D::Uniform)
    }

    pub fn grid(xs: Vec<f64>, vs: Vec<f64>) -> Result<Self> {
        GridPotential::new(xs, vs).map(Dist1D::Grid)
    }

    pub fn empirical(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Empirical::new(atoms, weights).map(Dist1D::Empirical)
    }

    /// Unit point mass at `x`.
    pub fn point(x: f64) -> Result<Self> {
        Self::empirical(vec![x], vec![1.0])
    }

    /// `P(X <= s)`.
    pub fn cdf(&self, s: f64) -> f64 {
        if s.is_nan() {
            return f64::NAN;
        }
        match self {
            Dist1D::Gaussian(g) => g.cdf(s),
            Dist1D::Uniform(u) => ((s - u.lo) / u.width()).clamp(0.0, 1.0),
            Dist1D::Grid(g) => g.cdf(s),
            Dist1D::Empirical(e) => e.cdf(s),
        }
    }

    /// `P(X > s)`, computed without cancellation in the upper tail.
    pub fn sf(&self, s: f64) -> f64 {
        match self {
            Dist1D::Gaussian(g) => g.sf(s),
            Dist1D::Uniform(u) => ((u.hi - s) / u.width()).clamp(0.0, 1.0),
            Dist1D::Grid(g) => g.sf(s),
            Dist1D::Empirical(e) => e.sf(s),
        }
    }

    /// Generalized inverse `inf { s : F(s) > t }` for `t` in (0, 1).
    pub fn quantile(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::ProbabilityOutOfRange(t));
        }
        Ok(self.quantile_at(Level::Lower(t)))
    }

    /// Generalized inverse at a level that is already known to be in (0, 1).
    pub fn quantile_at(&self, level: Level) -> f64 {
        match self {
            Dist1D::Gaussian(g) => g.quantile_at(level),
            Dist1D::Uniform(u) => match level {
                Level::Lower(t) => u.lo + t * u.width(),
                Level::Upper(r) => u.hi - r * u.width(),
            },
            Dist1D::Grid(g) => g.quantile_at(level),
            Dist1D::Empirical(e) => e.quantile_at(level),
        }
    }

    /// `E[X^2]`; exact for parametric and empirical laws.
    pub fn second_moment(&self) -> Result<f64> {
        let m = match self {
            Dist1D::Gaussian(g) => g.mean * g.mean + g.std * g.std,
            Dist1D::Uniform(u) => (u.lo * u.lo + u.lo * u.hi + u.hi * u.hi) / 3.0,
            Dist1D::Grid(g) => g.second_moment(),
            Dist1D::Empirical(e) => e.atoms.iter().zip(&e.weights).map(|(a, w)| w * a * a).sum(),
        };
        if m.is_finite() {
            Ok(m)
        } else {
            Err(Error::NonIntegrable(format!(
                "second moment evaluates to {m}"
            )))
        }
    }

    pub fn is_atomless(&self) -> bool {
        !matches!(self, Dist1D::Empirical(_))
    }

    /// Log-density for continuous laws, log-mass for atoms.
    pub fn likelihood(&self, s: f64) -> Likelihood {
        match self {
            Dist1D::Gaussian(g) => Likelihood::Density(g.ln_pdf(s)),
            Dist1D::Uniform(u) => Likelihood::Density(if s >= u.lo && s <= u.hi {
                -u.width().ln()
            } else {
                f64::NEG_INFINITY
            }),
            Dist1D::Grid(g) => Likelihood::Density(g.ln_pdf(s)),
            Dist1D::Empirical(e) => Likelihood::Atom(e.ln_pmf(s)),
        }
    }

    /// Log-density; errors for laws with atoms.
    pub fn ln_pdf(&self, s: f64) -> Result<f64> {
        match self.likelihood(s) {
            Likelihood::Density(v) => Ok(v),
            Likelihood::Atom(_) => Err(Error::NoDensity("empirical laws have no density")),
        }
    }

    /// Bounds on `V''` with `V = -log density`. Grid laws are measured at
    /// interior nodes; the linear tail extrapolation is not included.
    pub fn curvature_bounds(&self) -> Result<CurvatureBounds> {
        match self {
            Dist1D::Gaussian(g) => {
                let k = 1.0 / (g.std * g.std);
                Ok(CurvatureBounds {
                    lower: k,
                    lower_at: None,
                    upper: k,
                    upper_at: None,
                })
            }
            // Flat inside, infinite walls at the endpoints.
            Dist1D::Uniform(_) => Ok(CurvatureBounds {
                lower: 0.0,
                lower_at: None,
                upper: f64::INFINITY,
                upper_at: None,
            }),
            Dist1D::Grid(g) => {
                let mut b = CurvatureBounds {
                    lower: f64::INFINITY,
                    lower_at: None,
                    upper: f64::NEG_INFINITY,
                    upper_at: None,
                };
                for (x, d) in g.second_differences() {
                    if d < b.lower {
                        b.lower = d;
                        b.lower_at = Some(x);
                    }
                    if d > b.upper {
                        b.upper = d;
                        b.upper_at = Some(x);
                    }
                }
                Ok(b)
            }
            Dist1D::Empirical(_) => Err(Error::NoDensity("empirical laws have no density")),
        }
    }

    /// Largest `K` with `V'' >= K`, or the grid point witnessing non-log-concavity.
    pub fn logconcavity_modulus(&self) -> Result<LogConcavity> {
        let b = self.curvature_bounds()?;
        if b.lower < 0.0 {
            Ok(LogConcavity::NotLogConcave {
                witness: b.lower_at.unwrap_or(f64::NAN),
                second_difference: b.lower,
            })
        } else {
            Ok(LogConcavity::Modulus(b.lower))
        }
    }

    /// One inverse-CDF draw.
    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile_at(Level::from_lower(rng::open01(rng)))
    }

    /// `count` inverse-CDF draws from the stream keyed by `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Vec<f64> {
        let mut rng = rng::stream(seed, 0);
        (0..count).map(|_| self.draw(&mut rng)).collect()
    }
}

/// JSON shape of a [`Dist1D`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Dist1DRepr {
    Gaussian { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    Grid { xs: Vec<f64>, vs: Vec<f64> },
    Empirical { atoms: Vec<f64>, weights: Vec<f64> },
}

impl TryFrom<Dist1DRepr> for Dist1D {
    type Error = Error;

    fn try_from(repr: Dist1DRepr) -> Result<Self> {
        match repr {
            Dist1DRepr::Gaussian { mean, std } => Dist1D::gaussian(mean, std),
            Dist1DRepr::Uniform { lo, hi } => Dist1D::uniform(lo, hi),
            Dist1DRepr::Grid { xs, vs } => Dist1D::grid(xs, vs),
            Dist1DRepr::Empirical { atoms, weights } => Dist1D::empirical(atoms, weights),
        }
    }
}

impl From<Dist1D> for Dist1DRepr {
    fn from(d: Dist1D) -> Self {
        match d {
            Dist1D::Gaussian(g) => Dist1DRepr::Gaussian {
                mean: g.mean,
                std: g.std,
            },
            Dist1D::Uniform(u) => Dist1DRepr::Uniform { lo: u.lo, hi: u.hi },
            Dist1D::Grid(g) => Dist1DRepr::Grid { xs: g.xs, vs: g.vs },
            Dist1D::Empirical(e) => Dist1DRepr::Empirical {
                atoms: e.atoms,
                weights: e.weights,
            },
        }
    }
}

/// Parse a single law from JSON, reporting schema errors with their path.
pub fn parse_dist(text: &str) -> Result<Dist1D> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}
