//! Exact linear assignment on dense square cost matrices.
//!
//! Shortest augmenting path (Hungarian method with potentials), `O(n³)`.

use nalgebra::DMatrix;

/// An optimal assignment with its dual certificate.
#[derive(Debug, Clone)]
pub struct Assignment {
    /// `row_to_col[i]` is the column matched to row `i`.
    pub row_to_col: Vec<usize>,
    pub cost: f64,
    /// Dual potentials: `row_potential[i] + col_potential[j] <= C_ij`, with
    /// equality on matched pairs.
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
}

/// Minimum-cost perfect matching. Panics if `cost` is not square.
pub fn solve(cost: &DMatrix<f64>) -> Assignment {
    assert!(cost.is_square(), "assignment needs a square cost matrix");
    let n = cost.nrows();
    // row-major copy so the inner sweep over columns is contiguous
    let rows: Vec<f64> = cost.transpose().as_slice().to_vec();
    let c = |i: usize, j: usize| rows[i * n + j];

    // 1-based arrays; index 0 is the virtual root. Potentials start from the
    // feasible row-then-column reduction, which keeps the augmenting paths
    // short when every cost carries a large common offset.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    for i in 1..=n {
        u[i] = rows[(i - 1) * n..i * n].iter().copied().fold(f64::INFINITY, f64::min);
    }
    for (j, vj) in v.iter_mut().enumerate().skip(1) {
        *vj = (1..=n).map(|i| c(i - 1, j - 1) - u[i]).fold(f64::INFINITY, f64::min);
    }
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = c(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[col_owner[j] - 1] = j - 1;
    }
    let cost_total = matched_cost(cost, &row_to_col);
    Assignment {
        row_to_col,
        cost: cost_total,
        row_potential: u[1..].to_vec(),
        col_potential: v[1..].to_vec(),
    }
}

/// Sum of matched costs, added in ascending order so the total does not
/// depend on which side is treated as rows.
pub fn matched_cost(cost: &DMatrix<f64>, row_to_col: &[usize]) -> f64 {
    let mut parts: Vec<f64> = row_to_col.iter().enumerate().map(|(i, &j)| cost[(i, j)]).collect();
    parts.sort_by(f64::total_cmp);
    parts.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Uniform};

    fn brute_force(cost: &DMatrix<f64>) -> f64 {
        fn rec(cost: &DMatrix<f64>, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            let n = cost.nrows();
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(cost, row + 1, used, acc + cost[(row, j)], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cost.nrows()], 0.0, &mut best);
        best
    }

    #[test]
    fn trivial_sizes() {
        let a = solve(&DMatrix::from_element(1, 1, 3.5));
        assert_eq!(a.row_to_col, vec![0]);
        assert_eq!(a.cost, 3.5);
        let a = solve(&DMatrix::<f64>::zeros(0, 0));
        assert!(a.row_to_col.is_empty());
    }

    #[test]
    fn anti_diagonal() {
        let c = DMatrix::from_row_slice(3, 3, &[9.0, 9.0, 1.0, 9.0, 1.0, 9.0, 1.0, 9.0, 9.0]);
        let a = solve(&c);
        assert_eq!(a.row_to_col, vec![2, 1, 0]);
        assert_eq!(a.cost, 3.0);
    }

    #[test]
    fn matches_brute_force_and_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dist = Uniform::new(-5.0, 5.0).unwrap();
        for n in 1..=7 {
            for _ in 0..20 {
                let c = DMatrix::from_fn(n, n, |_, _| dist.sample(&mut rng));
                let a = solve(&c);
                let mut cols = a.row_to_col.clone();
                cols.sort_unstable();
                assert_eq!(cols, (0..n).collect::<Vec<_>>());
                assert!((a.cost - brute_force(&c)).abs() < 1e-9);
                for i in 0..n {
                    for j in 0..n {
                        assert!(a.row_potential[i] + a.col_potential[j] <= c[(i, j)] + 1e-9);
                    }
                }
                let dual: f64 = a.row_potential.iter().chain(&a.col_potential).sum();
                assert!((dual - a.cost).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn large_common_offset_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dist = Uniform::new(0.0, 1.0).unwrap();
        for n in 2..=7 {
            let shifted = DMatrix::from_fn(n, n, |_, _| 1e3 + dist.sample(&mut rng));
            assert!((solve(&shifted).cost - brute_force(&shifted)).abs() < 1e-9);
            let tied = DMatrix::from_fn(n, n, |i, j| ((i * 3 + j) % 2) as f64);
            assert_eq!(solve(&tied).cost, brute_force(&tied));
        }
    }
}
