//! Dense linear assignment by shortest augmenting paths with potentials.

use crate::error::{Error, Result};

/// Optimal permutation for a square `size x size` cost matrix stored row-major.
///
/// Returns `perm` with row `r` matched to column `perm[r]`, and the total cost
/// summed directly from the matrix. Ties resolve to the smallest column index,
/// so the result is deterministic.
pub fn solve_assignment(cost: &[f64], size: usize) -> Result<(Vec<usize>, f64)> {
    if cost.len() != size * size {
        return Err(Error::DimensionMismatch(format!(
            "{} cost entries for a {size} x {size} assignment",
            cost.len()
        )));
    }
    if let Some(c) = cost.iter().find(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "assignment cost {c} is not finite"
        )));
    }
    if size == 0 {
        return Ok((Vec::new(), 0.0));
    }
    // 1-based columns; column 0 is the virtual root of each augmenting search.
    let mut u = vec![0.0; size + 1];
    let mut v = vec![0.0; size + 1];
    let mut owner = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    let mut min_to = vec![0.0; size + 1];
    let mut used = vec![false; size + 1];
    for row in 1..=size {
        owner[0] = row;
        let mut col0 = 0;
        min_to.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[col0] = true;
            let r = owner[col0];
            let base = (r - 1) * size;
            let mut delta = f64::INFINITY;
            let mut next = 0;
            for col in 1..=size {
                if used[col] {
                    continue;
                }
                let reduced = cost[base + col - 1] - u[r] - v[col];
                if reduced < min_to[col] {
                    min_to[col] = reduced;
                    way[col] = col0;
                }
                if min_to[col] < delta {
                    delta = min_to[col];
                    next = col;
                }
            }
            for col in 0..=size {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_to[col] -= delta;
                }
            }
            col0 = next;
            if owner[col0] == 0 {
                break;
            }
        }
        while col0 != 0 {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
        }
    }
    let mut perm = vec![0; size];
    for col in 1..=size {
        perm[owner[col] - 1] = col - 1;
    }
    let total = perm
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[r * size + c])
        .sum();
    Ok((perm, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(cost: &[f64], size: usize) -> f64 {
        fn go(cost: &[f64], size: usize, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == size {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for c in 0..size {
                if !used[c] {
                    used[c] = true;
                    best = best.min(cost[row * size + c] + go(cost, size, row + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        go(cost, size, 0, &mut vec![false; size])
    }

    #[test]
    fn small_cases() {
        assert_eq!(solve_assignment(&[], 0).unwrap(), (vec![], 0.0));
        assert_eq!(solve_assignment(&[4.0], 1).unwrap(), (vec![0], 4.0));
        assert_eq!(
            solve_assignment(&[1.0, 9.0, 9.0, 1.0], 2).unwrap(),
            (vec![0, 1], 2.0)
        );
        assert_eq!(
            solve_assignment(&[9.0, 1.0, 1.0, 9.0], 2).unwrap(),
            (vec![1, 0], 2.0)
        );
        assert!(solve_assignment(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn matches_brute_force() {
        use rand::Rng;
        let mut rng = crate::rng::stream(3, 0);
        for size in 1..=6 {
            for _ in 0..40 {
                let cost: Vec<f64> = (0..size * size)
                    .map(|_| rng.random_range(-5.0..5.0))
                    .collect();
                let (perm, total) = solve_assignment(&cost, size).unwrap();
                let mut seen = perm.clone();
                seen.sort();
                assert_eq!(seen, (0..size).collect::<Vec<_>>());
                assert!((total - brute_force(&cost, size)).abs() < 1e-12);
            }
        }
    }
}
