//! Finite de Finetti mixtures `sum_k w_k m_k^inf` as concrete exchangeable
//! measures on sequence space.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist1d::{Dist1D, Level, Likelihood};
use crate::error::{Error, Result};
use crate::rng;
use crate::wasserstein1d::QuantileFunction;

const WEIGHT_TOL: f64 = 1e-12;

/// Exchangeable law given by its finite mixing measure.
///
/// Zero weights are allowed (the outer solver drops them); the component
/// order carries no meaning and duplicates are permitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRepr", into = "MixtureRepr")]
pub struct ExchangeableMixture {
    components: Vec<Dist1D>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureRepr {
    weights: Vec<f64>,
    components: Vec<Dist1D>,
}

impl TryFrom<MixtureRepr> for ExchangeableMixture {
    type Error = Error;

    fn try_from(repr: MixtureRepr) -> Result<Self> {
        ExchangeableMixture::new(repr.components, repr.weights)
    }
}

impl From<ExchangeableMixture> for MixtureRepr {
    fn from(m: ExchangeableMixture) -> Self {
        MixtureRepr {
            weights: m.weights,
            components: m.components,
        }
    }
}

fn schema(path: &str, message: String) -> Error {
    Error::Schema {
        path: path.to_string(),
        message,
    }
}

impl ExchangeableMixture {
    pub fn new(components: Vec<Dist1D>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(schema(
                "components",
                "at least one component is required".into(),
            ));
        }
        if components.len() != weights.len() {
            return Err(schema(
                "weights",
                format!(
                    "{} weights for {} components",
                    weights.len(),
                    components.len()
                ),
            ));
        }
        for (i, w) in weights.iter().enumerate() {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(schema(
                    &format!("weights[{i}]"),
                    format!("weight {w} is not a nonnegative number"),
                ));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(schema("weights", format!("weights sum {sum}")));
        }
        for (i, c) in components.iter().enumerate() {
            c.second_moment()
                .map_err(|e| schema(&format!("components[{i}]"), e.to_string()))?;
        }
        Ok(Self {
            components,
            weights,
        })
    }

    /// Countable power `m^inf` of a single law.
    pub fn product(component: Dist1D) -> Result<Self> {
        Self::new(vec![component], vec![1.0])
    }

    pub fn components(&self) -> &[Dist1D] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Jointly relabel components and weights: entry `i` of the result is
    /// entry `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        if perm.len() != self.len()
            || perm
                .iter()
                .any(|&p| p >= self.len() || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidParameter(
                "not a permutation of the components".into(),
            ));
        }
        Ok(Self {
            components: perm.iter().map(|&p| self.components[p].clone()).collect(),
            weights: perm.iter().map(|&p| self.weights[p]).collect(),
        })
    }

    /// The law of a single coordinate, `sum_k w_k m_k`.
    pub fn flatten(&self) -> FlatMixture<'_> {
        FlatMixture { mix: self }
    }
}

/// One term `w * m^{(x) n}` of an n-dimensional projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductBlock<'a> {
    pub weight: f64,
    pub component: &'a Dist1D,
    pub multiplicity: usize,
}

/// Symbolic n-dimensional projection `sum_k w_k m_k^{(x) n}`.
pub fn project(mix: &ExchangeableMixture, n: usize) -> Result<Vec<ProductBlock<'_>>> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "projection dimension must be positive".into(),
        ));
    }
    Ok(mix
        .components
        .iter()
        .zip(&mix.weights)
        .map(|(component, &weight)| ProductBlock {
            weight,
            component,
            multiplicity: n,
        })
        .collect())
}

/// `count` independent rows of the first `n` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixSample {
    n: usize,
    rows: Vec<Vec<f64>>,
    /// Generating component per row. Diagnostics only; solvers never read it.
    labels: Vec<usize>,
}

impl PrefixSample {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV with header `row,coord_1..coord_n,label`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for c in 1..=self.n {
            out.push_str(&format!(",coord_{c}"));
        }
        out.push_str(",label\n");
        for (i, (row, label)) in self.rows.iter().zip(&self.labels).enumerate() {
            out.push_str(&i.to_string());
            for x in row {
                out.push_str(&format!(",{x:?}"));
            }
            out.push_str(&format!(",{label}\n"));
        }
        out
    }
}

fn pick_component(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    // Rounding left u above the last partial sum: take the last positive weight.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Draw a component per row, then `n` i.i.d. coordinates from it. Row `i`
/// uses the stream `(seed, i)`.
pub fn sample_prefix(
    mix: &ExchangeableMixture,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<PrefixSample> {
    if n == 0 || count == 0 {
        return Err(Error::InvalidParameter(
            "prefix sample needs n >= 1 and count >= 1".into(),
        ));
    }
    let (rows, labels) = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i as u64);
            let k = pick_component(&mix.weights, rng::open01(&mut rng));
            let c = &mix.components[k];
            ((0..n).map(|_| c.draw(&mut rng)).collect::<Vec<f64>>(), k)
        })
        .unzip();
    Ok(PrefixSample { n, rows, labels })
}

/// Likelihood score of `row` under one component: atoms hit, then log-likelihood.
fn component_score(component: &Dist1D, weight: f64, row: &[f64]) -> (usize, f64) {
    let mut hits = 0;
    let mut terms: Vec<f64> = row
        .iter()
        .map(|&x| match component.likelihood(x) {
            Likelihood::Density(v) => v,
            Likelihood::Atom(v) => {
                hits += 1;
                v
            }
        })
        .collect();
    // Summing in sorted order makes the score invariant under coordinate permutations.
    terms.sort_by(f64::total_cmp);
    (hits, weight.ln() + terms.iter().sum::<f64>())
}

/// Maximum-likelihood component for `row`; ties go to the smallest index.
///
/// Rows lying on atoms of a discrete component prefer it over any density
/// component.
pub fn classify_component(mix: &ExchangeableMixture, row: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (k, (c, &w)) in mix.components.iter().zip(&mix.weights).enumerate() {
        let (hits, ll) = component_score(c, w, row);
        if ll == f64::NEG_INFINITY || ll.is_nan() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, bh, bl)) => hits > bh || (hits == bh && ll > bl),
        };
        if better {
            best = Some((k, hits, ll));
        }
    }
    best.map(|(k, _, _)| k).ok_or(Error::OutsideSupport)
}

/// Parse a mixture document `{"weights": [...], "components": [...]}`.
pub fn parse_mixture(text: &str) -> Result<ExchangeableMixture> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let repr: MixtureRepr = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        schema(&path, inner.to_string())
    })?;
    ExchangeableMixture::try_from(repr)
}

/// Canonical JSON form of a mixture.
pub fn serialize_mixture(mix: &ExchangeableMixture) -> String {
    let mut s = serde_json::to_string_pretty(mix).expect("mixtures always serialize");
    s.push('\n');
    s
}

/// The coordinate-one law `sum_k w_k m_k` of a mixture.
#[derive(Debug, Clone, Copy)]
pub struct FlatMixture<'a> {
    mix: &'a ExchangeableMixture,
}

impl FlatMixture<'_> {
    pub fn cdf(&self, s: f64) -> f64 {
        self.mix
            .components
            .iter()
            .zip(&self.mix.weights)
            .map(|(c, w)| w * c.cdf(s))
            .sum()
    }

    pub fn sf(&self, s: f64) -> f64 {
        self.mix
            .components
            .iter()
            .zip(&self.mix.weights)
            .map(|(c, w)| w * c.sf(s))
            .sum()
    }

    /// Whether `s` is past the level, i.e. `F(s) > t` (or `1 - F(s) < r`).
    fn beyond(&self, s: f64, level: Level) -> bool {
        match level {
            Level::Lower(t) => self.cdf(s) > t,
            Level::Upper(r) => self.sf(s) < r,
        }
    }
}

impl QuantileFunction for FlatMixture<'_> {
    fn quantile_at(&self, level: Level) -> f64 {
        let qs = self.mix.components.iter().map(|c| c.quantile_at(level));
        let (mut lo, mut hi) = qs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), q| {
            (a.min(q), b.max(q))
        });
        let mut step = 1.0;
        while self.beyond(lo, level) {
            lo -= step;
            step *= 2.0;
        }
        step = 1.0;
        while !self.beyond(hi, level) {
            hi += step;
            step *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.beyond(mid, level) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    fn second_moment(&self) -> Result<f64> {
        let mut acc = 0.0;
        for (c, w) in self.mix.components.iter().zip(&self.mix.weights) {
            acc += w * c.second_moment()?;
        }
        Ok(acc)
    }
}
