//! Outer transport between mixing measures.
//!
//! The exchangeable value between `sum_i a_i m_i^inf` and `sum_j b_j n_j^inf`
//! is the discrete transport problem over components with ground cost
//! `W2^2(m_i, n_j)`. A Monge map exists exactly when the optimal outer plan is
//! deterministic and every assigned source component is atomless; it then acts
//! diagonally, component by component.

use rayon::prelude::*;
use serde::Serialize;

use crate::definetti::{classify_component, ExchangeableMixture};
use crate::dist1d::QuantileGrid;
use crate::error::{Error, Result};
use crate::wasserstein1d::{monotone_map, w2_squared, Map1D};

/// Entries above this mass count as support of an outer row.
pub const MASS_TOL: f64 = 1e-9;

/// Largest relative dual infeasibility accepted as an optimality certificate.
pub const DUAL_TOL: f64 = 1e-9;

const WEIGHT_TOL: f64 = 1e-12;

/// Dense `k x l` ground-cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 {
            return Err(Error::DimensionMismatch(
                "cost matrix must be non-empty".into(),
            ));
        }
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch(
                "cost matrix rows differ in length".into(),
            ));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(c) = data.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "cost entry {c} is not a nonnegative number"
            )));
        }
        Ok(Self {
            rows: data.len() / cols,
            cols,
            data,
        })
    }

    /// `C[i][j] = W2^2(m_i, n_j)`, assembled in parallel.
    pub fn between(
        mu: &ExchangeableMixture,
        nu: &ExchangeableMixture,
        grid: &QuantileGrid,
    ) -> Result<Self> {
        let (rows, cols) = (mu.len(), nu.len());
        let data = (0..rows * cols)
            .into_par_iter()
            .map(|cell| {
                let (m, n) = (&mu.components()[cell / cols], &nu.components()[cell % cols]);
                if m == n {
                    Ok(0.0)
                } else {
                    w2_squared(m, n, grid)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }
}

/// A transport plan between two weight vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCoupling {
    gamma: Vec<Vec<f64>>,
    value: f64,
    /// Source indices with zero weight, removed before solving.
    pub dropped_sources: Vec<usize>,
    /// Target indices with zero weight, removed before solving.
    pub dropped_targets: Vec<usize>,
}

impl DiscreteCoupling {
    fn assemble(
        cost: &CostMatrix,
        gamma: Vec<Vec<f64>>,
        dropped_sources: Vec<usize>,
        dropped_targets: Vec<usize>,
    ) -> Self {
        let value = gamma
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, g)| (i, j, *g)))
            .map(|(i, j, g)| g * cost.get(i, j))
            .sum();
        Self {
            gamma,
            value,
            dropped_sources,
            dropped_targets,
        }
    }

    pub fn gamma(&self) -> &[Vec<f64>] {
        &self.gamma
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// CSV `i,j,mass,cost` over the cells carrying positive mass.
    pub fn to_csv(&self, cost: &CostMatrix) -> String {
        let mut out = String::from("i,j,mass,cost\n");
        for (i, row) in self.gamma.iter().enumerate() {
            for (j, &mass) in row.iter().enumerate() {
                if mass > 0.0 {
                    out.push_str(&format!("{i},{j},{mass:?},{:?}\n", cost.get(i, j)));
                }
            }
        }
        out
    }
}

fn check_weights(name: &str, w: &[f64], len: usize) -> Result<()> {
    if w.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "{name} has {} entries, cost matrix needs {len}",
            w.len()
        )));
    }
    if let Some(x) = w.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::InvalidWeights(format!("{name} contains {x}")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::InvalidWeights(format!("{name} sums to {sum}")));
    }
    Ok(())
}

/// Positive-weight indices and the dropped zero-weight ones.
fn split_support(w: &[f64]) -> (Vec<usize>, Vec<usize>) {
    (0..w.len()).partition(|&i| w[i] > 0.0)
}

/// Restriction of the problem to positive weights.
struct Reduced {
    rows: Vec<usize>,
    cols: Vec<usize>,
    dropped_rows: Vec<usize>,
    dropped_cols: Vec<usize>,
    a: Vec<f64>,
    b: Vec<f64>,
    cost: Vec<f64>,
}

impl Reduced {
    fn new(c: &CostMatrix, a: &[f64], b: &[f64]) -> Result<Self> {
        check_weights("source weights", a, c.rows)?;
        check_weights("target weights", b, c.cols)?;
        let (rows, dropped_rows) = split_support(a);
        let (cols, dropped_cols) = split_support(b);
        let cost = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| c.get(i, j)))
            .collect();
        Ok(Self {
            a: rows.iter().map(|&i| a[i]).collect(),
            b: cols.iter().map(|&j| b[j]).collect(),
            rows,
            cols,
            dropped_rows,
            dropped_cols,
            cost,
        })
    }

    fn expand(self, c: &CostMatrix, plan: &[f64]) -> DiscreteCoupling {
        let mut gamma = vec![vec![0.0; c.cols]; c.rows];
        let l = self.cols.len();
        for (p, &i) in self.rows.iter().enumerate() {
            for (q, &j) in self.cols.iter().enumerate() {
                gamma[i][j] = plan[p * l + q];
            }
        }
        DiscreteCoupling::assemble(c, gamma, self.dropped_rows, self.dropped_cols)
    }
}

/// Basic feasible solution of the transportation problem. The basis is a
/// spanning tree on `m` row nodes and `n` column nodes.
struct Simplex<'a> {
    m: usize,
    n: usize,
    cost: &'a [f64],
    /// Basic cells as flat indices `i * n + j`, with their flows.
    cells: Vec<usize>,
    flow: Vec<f64>,
}

impl<'a> Simplex<'a> {
    /// North-west corner start; ties move down so the basis stays a tree.
    fn northwest(a: &[f64], b: &[f64], cost: &'a [f64]) -> Self {
        let (m, n) = (a.len(), b.len());
        let (mut ra, mut rb) = (a.to_vec(), b.to_vec());
        let (mut i, mut j) = (0, 0);
        let mut cells = Vec::with_capacity(m + n - 1);
        let mut flow = Vec::with_capacity(m + n - 1);
        loop {
            let x = if i == m - 1 {
                rb[j]
            } else if j == n - 1 {
                ra[i]
            } else {
                ra[i].min(rb[j])
            };
            cells.push(i * n + j);
            flow.push(x.max(0.0));
            ra[i] -= x;
            rb[j] -= x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && ra[i] <= rb[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self {
            m,
            n,
            cost,
            cells,
            flow,
        }
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (slot, &cell) in self.cells.iter().enumerate() {
            let (i, j) = (cell / self.n, cell % self.n);
            adj[i].push((self.m + j, slot));
            adj[self.m + j].push((i, slot));
        }
        adj
    }

    /// Potentials with `u_i + v_j = c_ij` on the basis and `u_0 = 0`.
    fn potentials(&self, adj: &[Vec<(usize, usize)>]) -> (Vec<f64>, Vec<f64>) {
        let mut pot = vec![f64::NAN; self.m + self.n];
        pot[0] = 0.0;
        let mut stack = vec![0];
        while let Some(node) = stack.pop() {
            for &(next, slot) in &adj[node] {
                if pot[next].is_nan() {
                    pot[next] = self.cost[self.cells[slot]] - pot[node];
                    stack.push(next);
                }
            }
        }
        let v = pot.split_off(self.m);
        (pot, v)
    }

    /// Basic slots on the tree path from column node `j` to row node `i`.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let start = self.m + j;
        let mut via: Vec<Option<(usize, usize)>> = vec![None; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        seen[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == i {
                break;
            }
            for &(next, slot) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    via[next] = Some((node, slot));
                    queue.push_back(next);
                }
            }
        }
        let mut slots = Vec::new();
        let mut node = i;
        while let Some((prev, slot)) = via[node] {
            slots.push(slot);
            node = prev;
        }
        slots.reverse();
        slots
    }

    /// Pivot until no reduced cost is negative. Entering and leaving cells are
    /// chosen by smallest flat index (Bland), which rules out cycling.
    fn solve(&mut self) -> Result<(Vec<f64>, Vec<f64>)> {
        let scale = self.cost.iter().fold(1.0f64, |s, c| s.max(c.abs()));
        let tol = 1e-12 * scale;
        let cap = 50 * self.m * self.n + 1000;
        for _ in 0..cap {
            let adj = self.adjacency();
            let (u, v) = self.potentials(&adj);
            let entering = (0..self.m * self.n).find(|&cell| {
                let (i, j) = (cell / self.n, cell % self.n);
                self.cost[cell] - u[i] - v[j] < -tol
            });
            let Some(cell) = entering else {
                return Ok((u, v));
            };
            let path = self.path(&adj, cell / self.n, cell % self.n);
            // Path slots alternate -, +, -, ... starting next to the entering cell.
            let theta = path
                .iter()
                .step_by(2)
                .map(|&s| self.flow[s])
                .fold(f64::INFINITY, f64::min);
            let leaving = path
                .iter()
                .step_by(2)
                .copied()
                .filter(|&s| self.flow[s] == theta)
                .min_by_key(|&s| self.cells[s])
                .expect("a tree path into a row node has odd length");
            for (k, &s) in path.iter().enumerate() {
                if k % 2 == 0 {
                    self.flow[s] -= theta;
                } else {
                    self.flow[s] += theta;
                }
            }
            self.cells[leaving] = cell;
            self.flow[leaving] = theta;
        }
        Err(Error::Solver(format!(
            "transportation simplex exceeded {cap} pivots"
        )))
    }
}

/// Exact optimal plan by the transportation simplex.
///
/// Zero-weight rows and columns are removed first and listed in the result.
/// The returned basic solution is certified by its dual potentials.
pub fn solve_exact(c: &CostMatrix, a: &[f64], b: &[f64]) -> Result<DiscreteCoupling> {
    let red = Reduced::new(c, a, b)?;
    let (m, n) = (red.a.len(), red.b.len());
    let mut simplex = Simplex::northwest(&red.a, &red.b, &red.cost);
    let (u, v) = simplex.solve()?;

    let scale = red.cost.iter().fold(1.0f64, |s, c| s.max(c.abs()));
    let mut residual = 0.0f64;
    for (i, ui) in u.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            residual = residual.max(ui + vj - red.cost[i * n + j]);
        }
    }
    for (&cell, &x) in simplex.cells.iter().zip(&simplex.flow) {
        let (i, j) = (cell / n, cell % n);
        residual = residual.max(x * (red.cost[cell] - u[i] - v[j]).abs());
    }
    if residual / scale > DUAL_TOL {
        return Err(Error::Solver(format!(
            "dual certificate residual {residual:e}"
        )));
    }

    let mut plan = vec![0.0; m * n];
    for (&cell, &x) in simplex.cells.iter().zip(&simplex.flow) {
        plan[cell] = x.max(0.0);
    }
    Ok(red.expand(c, &plan))
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Entropic plan by log-domain Sinkhorn iterations.
///
/// Stops once the L1 row-marginal residual drops to `tol`; otherwise fails
/// with [`Error::NotConverged`].
pub fn solve_entropic(
    c: &CostMatrix,
    a: &[f64],
    b: &[f64],
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<DiscreteCoupling> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let red = Reduced::new(c, a, b)?;
    let (m, n) = (red.a.len(), red.b.len());
    let cost = &red.cost;
    let (ln_a, ln_b): (Vec<f64>, Vec<f64>) = (
        red.a.iter().map(|x| x.ln()).collect(),
        red.b.iter().map(|x| x.ln()).collect(),
    );
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let plan = |f: &[f64], g: &[f64]| -> Vec<f64> {
        (0..m * n)
            .map(|cell| ((f[cell / n] + g[cell % n] - cost[cell]) / epsilon).exp())
            .collect()
    };
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        for i in 0..m {
            f[i] = epsilon
                * (ln_a[i] - log_sum_exp((0..n).map(|j| (g[j] - cost[i * n + j]) / epsilon)));
        }
        for j in 0..n {
            g[j] = epsilon
                * (ln_b[j] - log_sum_exp((0..m).map(|i| (f[i] - cost[i * n + j]) / epsilon)));
        }
        let p = plan(&f, &g);
        residual = (0..m)
            .map(|i| (p[i * n..(i + 1) * n].iter().sum::<f64>() - red.a[i]).abs())
            .sum();
        if residual <= tol {
            return Ok(red.expand(c, &p));
        }
        if !residual.is_finite() {
            return Err(Error::NotConverged {
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
    })
}

/// Outer solver choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    Exact,
    Entropic {
        epsilon: f64,
        max_iter: usize,
        tol: f64,
    },
}

/// Exchangeable transport value with its outer plan and ground costs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeableValue {
    pub value: f64,
    pub coupling: DiscreteCoupling,
    pub cost: CostMatrix,
}

/// Minimal expected `(x_1 - y_1)^2` over exchangeable couplings of `mu` and `nu`.
pub fn exchangeable_value(
    mu: &ExchangeableMixture,
    nu: &ExchangeableMixture,
    grid: &QuantileGrid,
    backend: Backend,
) -> Result<ExchangeableValue> {
    let cost = CostMatrix::between(mu, nu, grid)?;
    let coupling = match backend {
        Backend::Exact => solve_exact(&cost, mu.weights(), nu.weights())?,
        Backend::Entropic {
            epsilon,
            max_iter,
            tol,
        } => solve_entropic(&cost, mu.weights(), nu.weights(), epsilon, max_iter, tol)?,
    };
    Ok(ExchangeableValue {
        value: coupling.value(),
        coupling,
        cost,
    })
}

/// Diagonal exchangeable map: component `k` of the source is sent to
/// `assignment[k]` through `inner_maps[k]` acting on every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeableMap {
    /// `None` for zero-weight source components.
    pub assignment: Vec<Option<usize>>,
    pub inner_maps: Vec<Option<Map1D>>,
}

/// Why no exchangeable Monge map exists.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstruction {
    /// Outer row with at least two entries above [`MASS_TOL`]; the full row is kept.
    SplitRow { row: usize, masses: Vec<f64> },
    /// Assigned source component with atoms.
    AtomicSource { component: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolvabilityVerdict {
    Solvable(ExchangeableMap),
    NotSolvable(Obstruction),
}

impl SolvabilityVerdict {
    pub fn is_solvable(&self) -> bool {
        matches!(self, SolvabilityVerdict::Solvable(_))
    }

    /// `{"solvable": bool, "assignment": [...] | null, "reason": ... | null}`.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            SolvabilityVerdict::Solvable(map) => serde_json::json!({
                "solvable": true,
                "assignment": map.assignment,
                "reason": null,
            }),
            SolvabilityVerdict::NotSolvable(reason) => serde_json::json!({
                "solvable": false,
                "assignment": null,
                "reason": reason,
            }),
        }
    }
}

/// Decide whether the optimal outer plan comes from an exchangeable map.
///
/// Rows are examined in index order and the first obstruction is reported.
/// Every positive-weight component is checked, as there is no null set to
/// ignore for a finite mixing measure.
pub fn monge_solvability(
    mu: &ExchangeableMixture,
    nu: &ExchangeableMixture,
    coupling: &DiscreteCoupling,
) -> SolvabilityVerdict {
    let mut assignment = vec![None; mu.len()];
    let mut inner_maps = vec![None; mu.len()];
    for (row, masses) in coupling.gamma().iter().enumerate() {
        if mu.weights()[row] <= 0.0 {
            continue;
        }
        let support: Vec<usize> = (0..masses.len())
            .filter(|&j| masses[j] > MASS_TOL)
            .collect();
        if support.len() != 1 {
            return SolvabilityVerdict::NotSolvable(Obstruction::SplitRow {
                row,
                masses: masses.clone(),
            });
        }
        let target = support[0];
        match monotone_map(&mu.components()[row], &nu.components()[target]) {
            Ok(map) => {
                assignment[row] = Some(target);
                inner_maps[row] = Some(map);
            }
            Err(_) => {
                return SolvabilityVerdict::NotSolvable(Obstruction::AtomicSource {
                    component: row,
                })
            }
        }
    }
    SolvabilityVerdict::Solvable(ExchangeableMap {
        assignment,
        inner_maps,
    })
}

/// Apply the map to a finite prefix: classify the generating component, then
/// map every coordinate with its inner map.
pub fn apply_exchangeable_map(
    map: &ExchangeableMap,
    mix: &ExchangeableMixture,
    prefix: &[f64],
) -> Result<Vec<f64>> {
    if map.inner_maps.len() != mix.len() {
        return Err(Error::DimensionMismatch(format!(
            "map has {} components, mixture has {}",
            map.inner_maps.len(),
            mix.len()
        )));
    }
    let k = classify_component(mix, prefix)?;
    let inner = map.inner_maps[k].as_ref().ok_or(Error::OutsideSupport)?;
    Ok(prefix.iter().map(|&s| inner.apply(s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist1d::Dist1D;

    fn cm(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn n(m: f64, s: f64) -> Dist1D {
        Dist1D::gaussian(m, s).unwrap()
    }

    fn mix(parts: &[(f64, Dist1D)]) -> ExchangeableMixture {
        ExchangeableMixture::new(
            parts.iter().map(|p| p.1.clone()).collect(),
            parts.iter().map(|p| p.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn exact_examples() {
        let one = solve_exact(&cm(&[&[0.0]]), &[1.0], &[1.0]).unwrap();
        assert_eq!((one.gamma(), one.value()), (&[vec![1.0]][..], 0.0));

        let diag = solve_exact(&cm(&[&[1.0, 9.0], &[9.0, 1.0]]), &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!(diag.gamma(), &[vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert_eq!(diag.value(), 1.0);

        let forced =
            solve_exact(&cm(&[&[0.0, 1.0], &[1.0, 0.0]]), &[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert_eq!(forced.gamma(), &[vec![0.5, 0.5], vec![0.0, 0.0]]);
        assert_eq!(forced.value(), 0.5);
        assert_eq!(forced.dropped_sources, vec![1]);
    }

    #[test]
    fn exact_errors() {
        let c = cm(&[&[1.0, 2.0]]);
        assert!(matches!(
            solve_exact(&c, &[1.0], &[1.0]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            solve_exact(&c, &[1.0], &[1.5, -0.5]),
            Err(Error::InvalidWeights(_))
        ));
        assert!(CostMatrix::new(vec![vec![1.0], vec![]]).is_err());
        assert!(CostMatrix::new(vec![vec![-1.0]]).is_err());
    }

    #[test]
    fn degenerate_ties_terminate() {
        let c = cm(&[&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]]);
        let w = [1.0 / 3.0; 3];
        let p = solve_exact(&c, &w, &w).unwrap();
        assert!((p.value() - 1.0).abs() < 1e-15);
        let c = cm(&[&[0.0, 2.0, 3.0], &[2.0, 0.0, 1.0], &[3.0, 1.0, 0.0]]);
        let p = solve_exact(&c, &[0.25, 0.25, 0.5], &[0.5, 0.25, 0.25]).unwrap();
        // Mass 0.25 must travel from row 2 to column 0 or 1; cheapest chain costs 0.25 * (1 + 2).
        assert!((p.value() - 0.75).abs() < 1e-15, "{}", p.value());
    }

    #[test]
    fn entropic_examples() {
        let one = solve_entropic(&cm(&[&[3.0]]), &[1.0], &[1.0], 0.5, 10, 1e-12).unwrap();
        assert_eq!(one.gamma(), &[vec![1.0]]);
        let c = cm(&[&[1.0, 9.0], &[9.0, 1.0]]);
        let sharp = solve_entropic(&c, &[0.5, 0.5], &[0.5, 0.5], 0.01, 10_000, 1e-12).unwrap();
        assert!((sharp.value() - 1.0).abs() < 0.05);
        let flat = solve_entropic(&c, &[0.5, 0.5], &[0.5, 0.5], 1e4, 10_000, 1e-12).unwrap();
        assert!((flat.value() - 5.0).abs() < 1e-2, "{}", flat.value());
    }

    #[test]
    fn entropic_reports_non_convergence() {
        let c = cm(&[&[0.0, 1.0, 4.0], &[1.0, 0.0, 1.0], &[4.0, 1.0, 0.0]]);
        let err =
            solve_entropic(&c, &[0.2, 0.3, 0.5], &[0.5, 0.3, 0.2], 1e-3, 2, 1e-14).unwrap_err();
        assert!(
            matches!(err, Error::NotConverged { iterations: 2, .. }),
            "{err:?}"
        );
        assert!(solve_entropic(&c, &[0.2, 0.3, 0.5], &[0.5, 0.3, 0.2], 0.0, 2, 1e-14).is_err());
    }

    #[test]
    fn value_examples() {
        let grid = QuantileGrid::default();
        let a = ExchangeableMixture::product(n(0.0, 1.0)).unwrap();
        let b = ExchangeableMixture::product(n(1.0, 1.0)).unwrap();
        assert_eq!(
            exchangeable_value(&a, &a, &grid, Backend::Exact)
                .unwrap()
                .value,
            0.0
        );
        assert!(
            (exchangeable_value(&a, &b, &grid, Backend::Exact)
                .unwrap()
                .value
                - 1.0)
                .abs()
                < 1e-6
        );

        let mu = mix(&[(0.5, n(-1.0, 1.0)), (0.5, n(1.0, 1.0))]);
        let nu = mix(&[(0.5, n(-2.0, 1.0)), (0.5, n(2.0, 1.0))]);
        let v = exchangeable_value(&mu, &nu, &grid, Backend::Exact).unwrap();
        assert!((v.value - 1.0).abs() < 1e-6);
        assert!((v.cost.get(0, 1) - 9.0).abs() < 1e-6);
        assert_eq!(v.coupling.gamma(), &[vec![0.5, 0.0], vec![0.0, 0.5]]);
    }

    #[test]
    fn non_existence_witness() {
        let grid = QuantileGrid::new(1000).unwrap();
        let mu = ExchangeableMixture::product(n(0.0, 1.0)).unwrap();
        let nu = mix(&[(0.5, n(-1.0, 1.0)), (0.5, n(1.0, 1.0))]);
        let v = exchangeable_value(&mu, &nu, &grid, Backend::Exact).unwrap();
        let verdict = monge_solvability(&mu, &nu, &v.coupling);
        assert_eq!(
            verdict,
            SolvabilityVerdict::NotSolvable(Obstruction::SplitRow {
                row: 0,
                masses: vec![0.5, 0.5]
            })
        );
        assert_eq!(
            verdict.to_json(),
            serde_json::json!({"solvable": false, "assignment": null,
                "reason": {"kind": "split_row", "row": 0, "masses": [0.5, 0.5]}})
        );
    }

    #[test]
    fn atomic_source_witness() {
        let mu = ExchangeableMixture::product(Dist1D::point(0.0).unwrap()).unwrap();
        let nu = ExchangeableMixture::product(n(0.0, 1.0)).unwrap();
        let v =
            exchangeable_value(&mu, &nu, &QuantileGrid::new(100).unwrap(), Backend::Exact).unwrap();
        assert_eq!(
            monge_solvability(&mu, &nu, &v.coupling),
            SolvabilityVerdict::NotSolvable(Obstruction::AtomicSource { component: 0 })
        );
    }

    #[test]
    fn solvable_examples() {
        let grid = QuantileGrid::new(1000).unwrap();
        let a = ExchangeableMixture::product(n(0.0, 1.0)).unwrap();
        let v = exchangeable_value(&a, &a, &grid, Backend::Exact).unwrap();
        let SolvabilityVerdict::Solvable(map) = monge_solvability(&a, &a, &v.coupling) else {
            panic!()
        };
        assert_eq!(map.assignment, vec![Some(0)]);
        assert!(map.inner_maps[0].as_ref().unwrap().is_identity());
        assert_eq!(
            apply_exchangeable_map(&map, &a, &[0.3, -2.0]).unwrap(),
            vec![0.3, -2.0]
        );

        let mu = mix(&[(0.5, n(-1.0, 1.0)), (0.5, n(1.0, 1.0))]);
        let nu = mix(&[(0.5, n(-2.0, 1.0)), (0.5, n(2.0, 1.0))]);
        let v = exchangeable_value(&mu, &nu, &grid, Backend::Exact).unwrap();
        let verdict = monge_solvability(&mu, &nu, &v.coupling);
        let SolvabilityVerdict::Solvable(map) = &verdict else {
            panic!()
        };
        assert_eq!(map.assignment, vec![Some(0), Some(1)]);
        let inner: Vec<&Map1D> = map.inner_maps.iter().map(|m| m.as_ref().unwrap()).collect();
        assert_eq!(inner[0].apply(0.0), -1.0);
        assert_eq!(inner[1].apply(0.0), 1.0);
        assert_eq!(verdict.to_json()["assignment"], serde_json::json!([0, 1]));
    }

    #[test]
    fn shift_map_example() {
        let mu = ExchangeableMixture::product(n(0.0, 1.0)).unwrap();
        let nu = ExchangeableMixture::product(n(3.0, 1.0)).unwrap();
        let v =
            exchangeable_value(&mu, &nu, &QuantileGrid::new(100).unwrap(), Backend::Exact).unwrap();
        let SolvabilityVerdict::Solvable(map) = monge_solvability(&mu, &nu, &v.coupling) else {
            panic!()
        };
        assert_eq!(
            apply_exchangeable_map(&map, &mu, &[0.2, -1.0]).unwrap(),
            vec![3.2, 2.0]
        );
    }

    #[test]
    fn mapped_rows_land_on_assigned_component() {
        let mu = mix(&[(0.5, n(-1.0, 1.0)), (0.5, n(1.0, 1.0))]);
        let nu = mix(&[(0.5, n(-2.0, 1.0)), (0.5, n(2.0, 1.0))]);
        let v = exchangeable_value(&mu, &nu, &QuantileGrid::new(1000).unwrap(), Backend::Exact)
            .unwrap();
        let SolvabilityVerdict::Solvable(map) = monge_solvability(&mu, &nu, &v.coupling) else {
            panic!()
        };
        let means: Vec<f64> = (0..1000)
            .map(|seed| {
                let row = n(1.0, 1.0).sample(seed, 50);
                let out = apply_exchangeable_map(&map, &mu, &row).unwrap();
                out.iter().sum::<f64>() / 50.0
            })
            .collect();
        let (mean, hw) = crate::stats::mean_half_width(&means);
        assert!((mean - 2.0).abs() < 3.0 * hw.max(1e-3), "{mean} +- {hw}");
    }

    #[test]
    fn coupling_csv() {
        let c = cm(&[&[1.0, 9.0], &[9.0, 1.0]]);
        let p = solve_exact(&c, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!(p.to_csv(&c), "i,j,mass,cost\n0,0,0.5,1.0\n1,1,0.5,1.0\n");
    }
}
