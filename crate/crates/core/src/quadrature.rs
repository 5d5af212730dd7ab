//! Quadrature over the quantile grid.
//!
//! Interior cells use the midpoint node. The first and last [`REFINED_CELLS`]
//! cells, where unbounded quantile functions are singular, are integrated
//! with 8-point Gauss-Legendre per cell, and the two outermost cells are
//! further split into dyadic pieces accumulating towards the endpoint. All
//! evaluation points stay strictly inside (0, 1) and every rule respects the
//! cell boundaries, so piecewise-constant integrands whose jumps sit on cell
//! boundaries are integrated exactly.

use crate::dist1d::{Level, QuantileGrid};

/// Cells at each end of the grid integrated with Gauss-Legendre.
pub const REFINED_CELLS: usize = 64;

const DYADIC_LEVELS: usize = 60;

const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];

const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// 8-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre(a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Gauss-Legendre over `[lo, hi]` in "distance from the endpoint" coordinates,
/// mapped to a level on the given side.
fn gl_side(lo: f64, hi: f64, upper: bool, f: &mut impl FnMut(Level) -> f64) -> f64 {
    gauss_legendre(lo, hi, |d| {
        f(if upper {
            Level::Upper(d)
        } else {
            Level::Lower(d)
        })
    })
}

/// Integral over `[0, width]` (distance from the endpoint) of a function
/// that may be singular at distance zero.
fn endpoint_cell(width: f64, upper: bool, f: &mut impl FnMut(Level) -> f64) -> f64 {
    let mut acc = 0.0;
    let mut hi = width;
    for _ in 0..DYADIC_LEVELS {
        let lo = 0.5 * hi;
        acc += gl_side(lo, hi, upper, f);
        hi = lo;
    }
    let centre = 0.5 * hi;
    acc + hi
        * f(if upper {
            Level::Upper(centre)
        } else {
            Level::Lower(centre)
        })
}

/// Integral over (0, 1) of `f`, given as a function of the level, using the
/// grid's cell structure.
pub fn integrate_levels(grid: &QuantileGrid, mut f: impl FnMut(Level) -> f64) -> f64 {
    let n = grid.count();
    let h = grid.step();
    if n == 1 {
        return endpoint_cell(0.5, false, &mut f) + endpoint_cell(0.5, true, &mut f);
    }
    let refined = REFINED_CELLS.min(n / 2);
    let mut lower_end = endpoint_cell(h, false, &mut f);
    let mut upper_end = endpoint_cell(h, true, &mut f);
    for i in 1..refined {
        let (lo, hi) = (i as f64 * h, (i + 1) as f64 * h);
        lower_end += gl_side(lo, hi, false, &mut f);
        upper_end += gl_side(lo, hi, true, &mut f);
    }
    // Odd grids leave one middle cell when every cell is refined.
    let interior: f64 = (refined..n - refined)
        .map(|i| f(grid.level(i)))
        .sum::<f64>()
        * h;
    lower_end + interior + upper_end
}
