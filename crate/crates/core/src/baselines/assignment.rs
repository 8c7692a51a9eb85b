//! Minimum-cost assignment by shortest augmenting paths with row and column
//! potentials (the Hungarian method), O(rows² · cols).

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// Column assigned to each row.
    pub row_to_col: Vec<usize>,
    pub cost: i64,
}

/// Assigns every row to a distinct column minimizing the summed cost.
/// Requires `rows <= cols`. Costs are read through `cost(row, col)` so the
/// matrix never has to be materialized.
pub fn min_cost_assignment(rows: usize, cols: usize, cost: impl Fn(usize, usize) -> i64) -> Assignment {
    assert!(rows <= cols, "more rows than columns");
    const INF: i64 = i64::MAX / 4;
    // 1-based with a virtual column 0
    let mut u = vec![0i64; rows + 1];
    let mut v = vec![0i64; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    let mut minv = vec![INF; cols + 1];
    let mut used = vec![false; cols + 1];

    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.fill(INF);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            row_to_col[owner[j] - 1] = j - 1;
        }
    }
    let total = row_to_col.iter().enumerate().map(|(i, &j)| cost(i, j)).sum();
    Assignment { row_to_col, cost: total }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(n: usize, c: &[Vec<i64>]) -> i64 {
        fn rec(i: usize, n: usize, c: &[Vec<i64>], used: &mut Vec<bool>) -> i64 {
            if i == n {
                return 0;
            }
            let mut best = i64::MAX;
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    best = best.min(c[i][j] + rec(i + 1, n, c, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(0, n, c, &mut vec![false; n])
    }

    #[test]
    fn small_matrix() {
        let c = [vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let a = min_cost_assignment(3, 3, |i, j| c[i][j]);
        assert_eq!(a.cost, 5);
        assert_eq!(a.row_to_col, vec![1, 0, 2]);
    }

    #[test]
    fn matches_brute_force() {
        use rand::Rng;
        let mut r = crate::rng::seeded(1);
        for _ in 0..100 {
            let n = r.random_range(1..=6);
            let c: Vec<Vec<i64>> = (0..n).map(|_| (0..n).map(|_| r.random_range(-5..20)).collect()).collect();
            let a = min_cost_assignment(n, n, |i, j| c[i][j]);
            assert_eq!(a.cost, brute(n, &c));
            let mut cols = a.row_to_col.clone();
            cols.sort_unstable();
            assert_eq!(cols, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rectangular() {
        let c = [vec![5, 1, 9, 3], vec![4, 8, 1, 7]];
        let a = min_cost_assignment(2, 4, |i, j| c[i][j]);
        assert_eq!(a.cost, 2);
    }
}
