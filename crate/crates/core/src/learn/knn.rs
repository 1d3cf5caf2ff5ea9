use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::prepare::{FeatureMatrix, Label};
use crate::resample::neighbors::{squared_distance, Standardizer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5 }
    }
}

/// Stored training rows (z-scored with train statistics) and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Row-major standardized training rows.
    pub points: Vec<f64>,
    pub labels: Vec<Label>,
}

pub fn fit_knn(train: &FeatureMatrix, params: &KnnParams) -> Result<KnnModel, LearnError> {
    if params.k == 0 {
        return Err(LearnError::Params("k must be at least 1".into()));
    }
    if train.n_rows() == 0 {
        return Err(LearnError::Input("empty training set".into()));
    }
    let s = Standardizer::fit(train);
    Ok(KnnModel {
        k: params.k,
        points: s.transform(train),
        mean: s.mean,
        scale: s.scale,
        labels: train.labels()?.to_vec(),
    })
}

impl KnnModel {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// P(Recovered) by inverse-distance vote of the `k` nearest rows (ties in
    /// distance by training order). Exact matches, if any, outvote the rest.
    pub fn predict_recovered(&self, row: &[f64]) -> f64 {
        let d = self.n_features();
        let q: Vec<f64> = row.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect();
        let mut dist: Vec<(f64, usize)> = (0..self.labels.len())
            .map(|i| (squared_distance(&q, &self.points[i * d..(i + 1) * d]).sqrt(), i))
            .collect();
        let k = self.k.min(dist.len());
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest = &dist[..k];
        let exact: Vec<&(f64, usize)> = nearest.iter().filter(|(dd, _)| *dd == 0.0).collect();
        let (mut rec, mut total) = (0.0, 0.0);
        if exact.is_empty() {
            for &(dd, i) in nearest {
                let w = 1.0 / dd;
                total += w;
                rec += w * self.labels[i].target();
            }
        } else {
            for &&(_, i) in &exact {
                total += 1.0;
                rec += self.labels[i].target();
            }
        }
        rec / total
    }
}
