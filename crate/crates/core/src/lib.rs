//! Exchangeable optimal transport between finite de Finetti mixtures.
//!
//! An exchangeable law on real sequences is represented by its finite mixing
//! measure `sum_k w_k m_k^inf`. The transport value between two such laws
//! reduces to a discrete problem over components whose ground cost is the
//! one-dimensional quadratic Wasserstein cost, computed through quantile
//! functions.

pub mod assignment;
pub mod definetti;
pub mod dist1d;
pub mod error;
pub mod findim_approx;
pub mod logconcave_audit;
pub mod outer_ot;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod wasserstein1d;

pub use definetti::{
    classify_component, parse_mixture, project, sample_prefix, serialize_mixture,
    ExchangeableMixture, PrefixSample,
};
pub use dist1d::{parse_dist, Dist1D, QuantileGrid};
pub use error::{Error, Result};
pub use wasserstein1d::{monotone_map, w2_squared, Map1D};
