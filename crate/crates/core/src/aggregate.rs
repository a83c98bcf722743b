//! Trajectory-level features from per-observation features.

use std::collections::BTreeMap;

use crate::assoc::{AssocMatrix, IdentityAssignment};
use crate::error::{Error, Result};

/// Default number of sampled observations for hard aggregation.
pub const DEFAULT_HARD_SAMPLES: usize = 6;

/// Row-major `M x D` feature matrix, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl FeatureMatrix {
    pub fn new(values: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "feature matrix has {} values, expected {rows}x{cols}",
                values.len()
            )));
        }
        Ok(FeatureMatrix { values, rows, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged feature rows".into()));
        }
        FeatureMatrix::new(rows.concat(), rows.len(), cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Soft aggregation: the L1 row-normalized association matrix times the
/// features. Each output row is a convex combination of input rows.
pub fn soft_aggregate(a: &AssocMatrix, f: &FeatureMatrix) -> Result<FeatureMatrix> {
    let m = a.dim();
    if f.rows != m {
        return Err(Error::Dimension(format!(
            "association is {m}x{m} but features have {} rows",
            f.rows
        )));
    }
    let d = f.cols;
    let mut out = vec![0.0; m * d];
    for i in 0..m {
        let weights = a.row(i);
        let total: f64 = weights.iter().map(|w| w.abs()).sum();
        if total <= 0.0 {
            return Err(Error::Invalid(format!("association row {i} sums to zero")));
        }
        let acc = &mut out[i * d..(i + 1) * d];
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let w = w / total;
            for (o, x) in acc.iter_mut().zip(f.row(j)) {
                *o += w * x;
            }
        }
    }
    FeatureMatrix::new(out, m, d)
}

/// Evenly spaced positions `round(i (L-1) / (m-1))`, endpoints included.
/// Trajectories no longer than `m` pass through whole.
pub fn hard_sample_indices(length: usize, m: usize) -> Vec<usize> {
    if length <= m {
        return (0..length).collect();
    }
    if m <= 1 {
        return vec![0; m.min(1)];
    }
    (0..m)
        .map(|i| ((i * (length - 1)) as f64 / (m - 1) as f64).round() as usize)
        .collect()
}

/// Hard aggregation: per identity, the sampled member rows (in frame order)
/// concatenated into one vector of length `min(L, m) * D`.
pub fn hard_aggregate(
    f: &FeatureMatrix,
    ids: &IdentityAssignment,
    frame_of: &[u32],
    m: usize,
) -> Result<BTreeMap<u32, Vec<f64>>> {
    if ids.ids.len() != f.rows || frame_of.len() != f.rows {
        return Err(Error::Dimension(format!(
            "{} feature rows, {} ids, {} frames",
            f.rows,
            ids.ids.len(),
            frame_of.len()
        )));
    }
    let mut out = BTreeMap::new();
    for (id, mut members) in ids.groups() {
        members.sort_by_key(|&i| (frame_of[i], i));
        let picked = hard_sample_indices(members.len(), m);
        let mut v = Vec::with_capacity(picked.len() * f.cols);
        for p in picked {
            v.extend_from_slice(f.row(members[p]));
        }
        out.insert(id, v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn feats(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn soft_examples() {
        let f = feats(&[vec![1.0, 2.0], vec![3.0, 5.0]]);
        let eye = AssocMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 1]).unwrap();
        assert_eq!(soft_aggregate(&eye, &f).unwrap(), f);

        let ones = AssocMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]], vec![0, 1]).unwrap();
        let g = soft_aggregate(&ones, &feats(&[vec![2.0, 4.0], vec![6.0, 8.0]])).unwrap();
        assert_eq!(g.values(), &[4.0, 6.0, 4.0, 6.0]);

        let half = AssocMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]], vec![0, 1]).unwrap();
        let g = soft_aggregate(&half, &feats(&[vec![0.0, 0.0], vec![3.0, 3.0]])).unwrap();
        for (x, e) in g.values().iter().zip([1.0, 1.0, 2.0, 2.0]) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_dimension_mismatch() {
        let a = AssocMatrix::from_rows(&[vec![1.0]], vec![0]).unwrap();
        assert!(soft_aggregate(&a, &feats(&[vec![1.0], vec![2.0]])).is_err());
    }

    #[test]
    fn soft_stays_in_convex_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m = rng.random_range(1..8);
            let d = rng.random_range(1..5);
            let frame_of: Vec<u32> = (0..m as u32).collect();
            let a = crate::assoc::preprocess(
                &AssocMatrix::new((0..m * m).map(|_| rng.random()).collect(), frame_of).unwrap(),
            );
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let f = feats(&rows);
            let g = soft_aggregate(&a, &f).unwrap();
            for c in 0..d {
                let lo = rows.iter().map(|r| r[c]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max);
                for i in 0..m {
                    let v = g.row(i)[c];
                    assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn soft_block_diagonal_is_track_mean() {
        // tracks {0,2,3} and {1,4}
        let groups = [0usize, 1, 0, 0, 1];
        let m = groups.len();
        let values: Vec<f64> = (0..m * m)
            .map(|k| {
                if groups[k / m] == groups[k % m] {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let a = AssocMatrix::new(values, vec![0, 0, 1, 2, 1]).unwrap();
        let f = feats(&[vec![1.0], vec![10.0], vec![2.0], vec![6.0], vec![20.0]]);
        let g = soft_aggregate(&a, &f).unwrap();
        let expected = [3.0, 15.0, 3.0, 3.0, 15.0];
        for (x, e) in g.values().iter().zip(expected) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_index_examples() {
        assert_eq!(hard_sample_indices(3, 6), vec![0, 1, 2]);
        assert_eq!(hard_sample_indices(10, 6), vec![0, 2, 4, 5, 7, 9]);
        assert_eq!(hard_sample_indices(7, 1), vec![0]);
    }

    #[test]
    fn sample_indices_properties() {
        for len in 1..40 {
            for m in 1..12 {
                let idx = hard_sample_indices(len, m);
                assert_eq!(idx.len(), len.min(m));
                assert_eq!(idx[0], 0);
                assert!(idx.windows(2).all(|w| w[0] < w[1]));
                if m >= 2 && len >= 2 {
                    assert_eq!(*idx.last().unwrap(), len - 1);
                }
            }
        }
    }

    #[test]
    fn hard_examples() {
        let f = feats(&[vec![5.0, 6.0]]);
        let out = hard_aggregate(&f, &IdentityAssignment { ids: vec![1] }, &[0], 6).unwrap();
        assert_eq!(out[&1], vec![5.0, 6.0]);

        let f = feats(&[vec![1.0, 1.0], vec![3.0, 3.0]]);
        let out = hard_aggregate(&f, &IdentityAssignment { ids: vec![1, 1] }, &[0, 1], 2).unwrap();
        assert_eq!(out[&1], vec![1.0, 1.0, 3.0, 3.0]);

        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let frames: Vec<u32> = (0..10).collect();
        let out = hard_aggregate(
            &feats(&rows),
            &IdentityAssignment { ids: vec![3; 10] },
            &frames,
            6,
        )
        .unwrap();
        assert_eq!(out[&3], vec![0.0, 2.0, 4.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn hard_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 12;
        let frames: Vec<u32> = (0..n as u32).map(|i| i / 2).collect();
        let ids: Vec<u32> = (0..n as u32).map(|i| i % 2 + 1).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
        let base = hard_aggregate(
            &feats(&rows),
            &IdentityAssignment { ids: ids.clone() },
            &frames,
            4,
        )
        .unwrap();
        for _ in 0..20 {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let prow: Vec<Vec<f64>> = perm.iter().map(|&p| rows[p].clone()).collect();
            let pid: Vec<u32> = perm.iter().map(|&p| ids[p]).collect();
            let pfr: Vec<u32> = perm.iter().map(|&p| frames[p]).collect();
            let out =
                hard_aggregate(&feats(&prow), &IdentityAssignment { ids: pid }, &pfr, 4).unwrap();
            assert_eq!(out, base);
        }
    }
}
