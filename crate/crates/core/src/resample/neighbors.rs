//! Z-scored Euclidean neighbor search shared by SMOTE and ENN.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::prepare::FeatureMatrix;

/// Per-column z-score transform. Zero-variance columns are only centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of each column.
    pub fn fit(matrix: &FeatureMatrix) -> Self {
        let n = matrix.n_rows() as f64;
        let d = matrix.n_cols();
        let mut mean = vec![0.0; d];
        for row in matrix.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for row in matrix.rows() {
            for j in 0..d {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// Row-major standardized copy of the matrix values.
    pub fn transform(&self, matrix: &FeatureMatrix) -> Vec<f64> {
        matrix.rows().flat_map(|r| self.transform_row(r)).collect()
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Points stored row-major with dimension `dim`.
pub struct PointSet<'a> {
    pub data: &'a [f64],
    pub dim: usize,
}

impl PointSet<'_> {
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// The `k` members of `candidates` nearest to point `query`, excluding
    /// `query` itself, ordered by (distance, index).
    pub fn k_nearest(&self, query: usize, candidates: &[usize], k: usize) -> Vec<usize> {
        let q = self.point(query);
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        for &c in candidates {
            if c == query {
                continue;
            }
            let cand = Candidate(squared_distance(q, self.point(c)), c);
            if heap.len() < k {
                heap.push(cand);
            } else if heap.peek().is_some_and(|worst| cand < *worst) {
                heap.pop();
                heap.push(cand);
            }
        }
        heap.into_sorted_vec().into_iter().map(|c| c.1).collect()
    }

    /// [`PointSet::k_nearest`] for every query, in parallel.
    pub fn all_k_nearest(&self, queries: &[usize], candidates: &[usize], k: usize) -> Vec<Vec<usize>> {
        queries.par_iter().map(|&q| self.k_nearest(q, candidates, k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_with_index_ties() {
        let data = [0.0, 1.0, -1.0, 2.0, 0.5];
        let ps = PointSet { data: &data, dim: 1 };
        let all: Vec<usize> = (0..5).collect();
        assert_eq!(ps.k_nearest(0, &all, 2), vec![4, 1]);
        // 1 and 2 are both at distance 1 from 0; lower index first.
        assert_eq!(ps.k_nearest(0, &[1, 2, 3], 2), vec![1, 2]);
        assert_eq!(ps.k_nearest(0, &[0], 3), Vec::<usize>::new());
    }

    #[test]
    fn standardizer_constant_column() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]], None).unwrap();
        let s = Standardizer::fit(&m);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.transform(&m), vec![-1.0, 0.0, 1.0, 0.0]);
    }
}
