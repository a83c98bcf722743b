//! Linear assignment (Hungarian algorithm, shortest augmenting paths).
//!
//! Dense `O(n^2 m)` implementation over `f64` scores, used for the small
//! per-frame matching problems of evaluation and tracking.

/// Maximum-weight assignment on a row-major `rows x cols` score matrix.
///
/// Returns `min(rows, cols)` pairs `(row, col)` sorted by row. Every row (or
/// every column, when there are fewer columns) is assigned, so callers drop
/// pairs whose score marks them as ineligible.
pub fn max_weight_assignment(scores: &[f64], rows: usize, cols: usize) -> Vec<(usize, usize)> {
    assert_eq!(scores.len(), rows * cols, "score matrix shape");
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows <= cols {
        let assigned = solve(rows, cols, |i, j| -scores[i * cols + j]);
        assigned.into_iter().enumerate().collect()
    } else {
        let assigned = solve(cols, rows, |i, j| -scores[j * cols + i]);
        let mut pairs: Vec<(usize, usize)> = assigned
            .into_iter()
            .enumerate()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Minimum-cost assignment of `n` rows into `m >= n` columns; returns the
/// column of each row.
fn solve(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(n <= m);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j] = row (1-based) currently assigned to column j; way[] = path back-pointers
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![inf; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
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
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of = vec![0usize; n];
    for j in 1..=m {
        if p[j] > 0 {
            col_of[p[j] - 1] = j - 1;
        }
    }
    col_of
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(scores: &[f64], rows: usize, cols: usize) -> f64 {
        // enumerate injections from the smaller side into the larger one
        fn rec(
            k: usize,
            small: usize,
            large: usize,
            used: &mut Vec<bool>,
            score: &dyn Fn(usize, usize) -> f64,
        ) -> f64 {
            if k == small {
                return 0.0;
            }
            let mut best = f64::NEG_INFINITY;
            for j in 0..large {
                if !used[j] {
                    used[j] = true;
                    best = best.max(score(k, j) + rec(k + 1, small, large, used, score));
                    used[j] = false;
                }
            }
            best
        }
        if rows <= cols {
            rec(0, rows, cols, &mut vec![false; cols], &|i, j| {
                scores[i * cols + j]
            })
        } else {
            rec(0, cols, rows, &mut vec![false; rows], &|i, j| {
                scores[j * cols + i]
            })
        }
    }

    #[test]
    fn matches_brute_force_on_random_rectangles() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let rows = rng.random_range(1..=5);
            let cols = rng.random_range(1..=5);
            let scores: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
            let pairs = max_weight_assignment(&scores, rows, cols);
            assert_eq!(pairs.len(), rows.min(cols));
            let total: f64 = pairs.iter().map(|&(r, c)| scores[r * cols + c]).sum();
            assert!((total - brute_force(&scores, rows, cols)).abs() < 1e-12);
            let mut seen_c: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            seen_c.sort_unstable();
            seen_c.dedup();
            assert_eq!(seen_c.len(), pairs.len());
        }
    }

    #[test]
    fn empty_inputs() {
        assert!(max_weight_assignment(&[], 0, 3).is_empty());
        assert!(max_weight_assignment(&[], 2, 0).is_empty());
    }

    #[test]
    fn prefers_total_over_greedy() {
        // greedy would take (0,0)=0.9 then (1,1)=0.1
        let s = [0.9, 0.8, 0.7, 0.1];
        assert_eq!(max_weight_assignment(&s, 2, 2), vec![(0, 1), (1, 0)]);
    }
}
