//! Closed-form and brute-force oracles for the transport values.

use exot::definetti::ExchangeableMixture;
use exot::dist1d::{Dist1D, QuantileGrid};
use exot::outer_ot::{exchangeable_value, solve_exact, Backend, CostMatrix};
use exot::stats::{ks_critical, ks_two_sample};
use exot::wasserstein1d::{caffarelli_check, monotone_map, w2_squared};
use proptest::prelude::*;

fn g(m: f64, s: f64) -> Dist1D {
    Dist1D::gaussian(m, s).unwrap()
}

/// `.5 N(-a, 1) + .5 N(a, 1)` as a one-dimensional law, i.e. an exchangeable
/// mixture read through one coordinate.
fn bimodal(a: f64) -> ExchangeableMixture {
    ExchangeableMixture::new(vec![g(-a, 1.0), g(a, 1.0)], vec![0.5, 0.5]).unwrap()
}

#[test]
fn finite_dimensional_values_of_the_two_component_fixture() {
    // Both projections are N(0, I) off the diagonal, so the n-dimensional
    // problem reduces to the line spanned by 1 / sqrt(n), where the laws are
    // .5 N(+-sqrt(n), 1) and .5 N(+-2 sqrt(n), 1). Reference values come from
    // adaptive quadrature of the quantile difference.
    let expected = [
        (1, 0.770_043_493_954_605_8),
        (2, 0.918_666_276_577_507_5),
        (4, 0.984_910_555_940_684_6),
        (8, 0.999_086_032_036_067_6),
        (16, 0.999_995_942_363_003_8),
    ];
    let grid = QuantileGrid::default();
    let mut last = 0.0;
    for (n, want) in expected {
        let r = (n as f64).sqrt();
        let k_n = w2_squared(&bimodal(r).flatten(), &bimodal(2.0 * r).flatten(), &grid).unwrap()
            / n as f64;
        assert!((k_n - want).abs() < 1e-5, "n={n}: {k_n} vs {want}");
        assert!(k_n >= last && k_n <= 1.0 + 1e-6);
        last = k_n;
    }
    let nested = exchangeable_value(&bimodal(1.0), &bimodal(2.0), &grid, Backend::Exact)
        .unwrap()
        .value;
    assert!((nested - 1.0).abs() < 1e-6);
}

/// Distribution of the first `n` coordinates of a mixture of discrete laws on
/// a common atom set, as (points, probabilities).
fn discrete_projection(
    mix: &ExchangeableMixture,
    atoms: &[f64],
    n: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mass = |d: &Dist1D, x: f64| match d {
        Dist1D::Empirical(e) => e
            .atoms()
            .iter()
            .zip(e.weights())
            .filter(|(a, _)| **a == x)
            .map(|(_, w)| *w)
            .sum::<f64>(),
        _ => unreachable!(),
    };
    let count = atoms.len().pow(n as u32);
    let mut points = Vec::new();
    let mut probs = Vec::new();
    for flat in 0..count {
        let point: Vec<f64> = (0..n)
            .map(|i| atoms[(flat / atoms.len().pow(i as u32)) % atoms.len()])
            .collect();
        let p: f64 = mix
            .components()
            .iter()
            .zip(mix.weights())
            .map(|(c, w)| w * point.iter().map(|&x| mass(c, x)).product::<f64>())
            .sum();
        if p > 0.0 {
            points.push(point);
            probs.push(p);
        }
    }
    // absorb rounding so the marginal sums to one exactly
    let rest: f64 = probs[1..].iter().sum();
    probs[0] = 1.0 - rest;
    (points, probs)
}

fn projected_value(
    mu: &ExchangeableMixture,
    nu: &ExchangeableMixture,
    atoms: &[f64],
    n: usize,
) -> f64 {
    let (xs, a) = discrete_projection(mu, atoms, n);
    let (ys, b) = discrete_projection(nu, atoms, n);
    let rows = xs
        .iter()
        .map(|x| {
            ys.iter()
                .map(|y| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / n as f64)
                .collect()
        })
        .collect();
    solve_exact(&CostMatrix::new(rows).unwrap(), &a, &b)
        .unwrap()
        .value()
}

const ATOMS: [f64; 3] = [-1.0, 0.0, 2.0];

fn discrete_component() -> impl Strategy<Value = Dist1D> {
    prop::sample::subsequence(ATOMS.to_vec(), 1..=3).prop_map(|atoms| {
        let w = vec![1.0 / atoms.len() as f64; atoms.len()];
        Dist1D::empirical(atoms, w).unwrap()
    })
}

fn discrete_mixture() -> impl Strategy<Value = ExchangeableMixture> {
    prop::collection::vec((discrete_component(), 1..4u32), 1..=2).prop_map(|parts| {
        let total: u32 = parts.iter().map(|p| p.1).sum();
        let weights = parts.iter().map(|p| p.1 as f64 / total as f64).collect();
        ExchangeableMixture::new(parts.into_iter().map(|p| p.0).collect(), weights).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn projected_values_increase_to_the_nested_value(mu in discrete_mixture(), nu in discrete_mixture()) {
        // Component atom weights are 1, 1/2 or 1/3, so quantiles are constant
        // on the cells of a 600-cell grid and quadrature is exact.
        let nested = exchangeable_value(&mu, &nu, &QuantileGrid::new(600).unwrap(), Backend::Exact).unwrap().value;
        let values: Vec<f64> = (1..=3).map(|n| projected_value(&mu, &nu, &ATOMS, n)).collect();
        prop_assert!(values[0] <= values[1] + 1e-9, "{values:?}");
        prop_assert!(values[1] <= values[2] + 1e-9, "{values:?}");
        prop_assert!(values[2] <= nested + 1e-9, "{values:?} vs {nested}");
    }

    #[test]
    fn empirical_quantile_cost_is_sorted_matching(xs in prop::collection::vec(-5.0..5.0f64, 1..=8), ys in prop::collection::vec(-5.0..5.0f64, 1..=8)) {
        let (p, q) = (Dist1D::empirical(sorted(&xs), uniform(xs.len())).unwrap(), Dist1D::empirical(sorted(&ys), uniform(ys.len())).unwrap());
        let quad = w2_squared(&p, &q, &QuantileGrid::new(840).unwrap()).unwrap();
        let rows = xs.iter().map(|x| ys.iter().map(|y| (x - y) * (x - y)).collect()).collect();
        let exact = solve_exact(&CostMatrix::new(rows).unwrap(), &uniform(xs.len()), &uniform(ys.len())).unwrap().value();
        prop_assert!((quad - exact).abs() <= 1e-12, "{quad} vs {exact}");
    }
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn uniform(k: usize) -> Vec<f64> {
    let mut w = vec![1.0 / k as f64; k];
    let rest: f64 = w[1..].iter().sum();
    w[0] = 1.0 - rest;
    w
}

#[test]
fn rearrangement_pushes_source_onto_target() {
    let grid_target = Dist1D::grid(
        (0..=200).map(|i| -5.0 + 0.05 * i as f64).collect(),
        (0..=200)
            .map(|i| {
                let x = -5.0 + 0.05 * i as f64;
                0.25 * x.powi(4) - 0.5 * x * x
            })
            .collect(),
    )
    .unwrap();
    for (source, target) in [
        (g(0.0, 1.0), Dist1D::uniform(-1.0, 3.0).unwrap()),
        (Dist1D::uniform(0.0, 1.0).unwrap(), g(2.0, 0.5)),
        (g(1.0, 2.0), grid_target),
    ] {
        let map = monotone_map(&source, &target).unwrap();
        let pushed = sorted(
            &source
                .sample(8, 10_000)
                .iter()
                .map(|&s| map.apply(s))
                .collect::<Vec<f64>>(),
        );
        let direct = sorted(&target.sample(9, 10_000));
        let d = ks_two_sample(&pushed, &direct);
        assert!(d < ks_critical(0.001, 10_000, 10_000), "{target:?}: {d}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn contraction_bound_holds_for_gaussian_pairs(
        ss in 0.3..3.0f64,
        st in 0.3..3.0f64,
        slack_upper in 1.0..2.0f64,
        slack_lower in 0.5..1.0f64,
        seed in any::<u64>(),
    ) {
        let (c_upper, c_lower) = (slack_upper / (ss * ss), slack_lower / (st * st));
        prop_assume!(c_lower <= c_upper);
        let r = caffarelli_check(&g(0.5, ss), &g(-1.0, st), c_upper, c_lower, 500, seed).unwrap();
        prop_assert!(r.satisfied, "{r:?}");
    }
}
