use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grow::{class_stats, grow_tree, Criterion, GrowParams, Presorted};
use super::tree::{EnsembleKind, TreeEnsemble};
use super::LearnError;
use crate::prepare::FeatureMatrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// `None` means ⌊√d⌋ (at least 1).
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
    /// Histogram bins per feature; 0 searches every midpoint.
    #[serde(default)]
    pub max_bins: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 12,
            min_leaf: 1,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
            max_bins: 0,
        }
    }
}

pub fn default_features_per_split(d: usize) -> usize {
    ((d as f64).sqrt().floor() as usize).max(1)
}

/// Random forest. Tree `t` draws its bootstrap sample (as per-row
/// multiplicities) and its per-split feature subsets from stream `t` of the
/// seed, so the result does not depend on the thread count.
pub fn fit_forest(train: &FeatureMatrix, params: &ForestParams) -> Result<TreeEnsemble, LearnError> {
    if params.n_trees == 0 {
        return Err(LearnError::Params("n_trees must be at least 1".into()));
    }
    if train.n_rows() == 0 {
        return Err(LearnError::Input("empty training set".into()));
    }
    let n = train.n_rows();
    let d = train.n_cols();
    let m = params.features_per_split.unwrap_or_else(|| default_features_per_split(d)).clamp(1, d.max(1));
    let data = Presorted::with_bins(train, params.max_bins);
    let base_stats = class_stats(train, None)?;
    let base = rng::derive(params.seed, "forest");
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(base, t as u64);
            let stats = if params.bootstrap {
                let mut mult = vec![0.0; n];
                for _ in 0..n {
                    mult[r.gen_range(0..n)] += 1.0;
                }
                base_stats
                    .iter()
                    .zip(&mult)
                    .map(|(s, &k)| super::grow::Stats {
                        w: s.w * k,
                        a: s.a * k,
                        b: s.b * k,
                    })
                    .collect()
            } else {
                base_stats.clone()
            };
            grow_tree(
                &data,
                &stats,
                GrowParams {
                    max_depth: params.max_depth,
                    criterion: Criterion::Gini {
                        min_leaf: params.min_leaf.max(1) as f64,
                    },
                    features_per_split: Some(m),
                },
                Some(&mut r),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TreeEnsemble {
        kind: EnsembleKind::Forest,
        trees,
        learning_rate: 1.0,
        base_score: 0.0,
        feature_names: train.column_names(),
    })
}
