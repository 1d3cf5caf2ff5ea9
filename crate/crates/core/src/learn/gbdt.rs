use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grow::{grow_tree, Criterion, GrowParams, Presorted, Stats};
use super::tree::{sigmoid, EnsembleKind, TreeEnsemble};
use super::LearnError;
use crate::prepare::FeatureMatrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Minimum hessian sum per child.
    pub min_child_weight: f64,
    pub lambda: f64,
    /// Fraction of rows drawn (without replacement) per round.
    pub subsample: f64,
    pub seed: u64,    /// Histogram bins per feature; 0 searches every midpoint.
    #[serde(default)]
    pub max_bins: usize,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_rounds: 200,
            learning_rate: 0.1,
            max_depth: 4,
            min_child_weight: 1.0,
            lambda: 1.0,
            subsample: 1.0,
            seed: 0,
            max_bins: 0,
        }
    }
}

/// `ln(p₊ / p₋)` of the weighted Recovered prevalence.
pub fn base_score(targets: &[f64], weights: &[f64]) -> Result<f64, LearnError> {
    let pos: f64 = targets.iter().zip(weights).map(|(y, w)| y * w).sum();
    let total: f64 = weights.iter().sum();
    let neg = total - pos;
    if pos <= 0.0 || neg <= 0.0 {
        return Err(LearnError::Input("boosting needs both classes in the training set".into()));
    }
    Ok((pos / neg).ln())
}

/// Weighted mean logistic loss of margins `f` against 0/1 targets.
pub fn logloss(f: &[f64], targets: &[f64], weights: &[f64]) -> f64 {
    let mut s = 0.0;
    for ((&f, &y), &w) in f.iter().zip(targets).zip(weights) {
        // log(1 + e^f) − y f, computed stably.
        let softplus = if f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
        s += w * (softplus - y * f);
    }
    s / weights.iter().sum::<f64>()
}

/// Second-order gradient boosting on the logistic loss.
pub fn fit_gbdt(train: &FeatureMatrix, params: &GbdtParams) -> Result<TreeEnsemble, LearnError> {
    fit_gbdt_traced(train, params).map(|(m, _)| m)
}

/// [`fit_gbdt`] plus the training logloss after each round.
pub fn fit_gbdt_traced(train: &FeatureMatrix, params: &GbdtParams) -> Result<(TreeEnsemble, Vec<f64>), LearnError> {
    if params.n_rounds < 1 {
        return Err(LearnError::Params("n_rounds must be at least 1".into()));
    }
    if !(params.learning_rate > 0.0) || params.lambda < 0.0 || !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(LearnError::Params(
            "learning_rate must be > 0, lambda >= 0 and subsample in (0, 1]".into(),
        ));
    }
    let n = train.n_rows();
    let labels = train.labels()?;
    let targets: Vec<f64> = labels.iter().map(|l| l.target()).collect();
    let weights: Vec<f64> = (0..n).map(|i| train.weight(i)).collect();
    let base = base_score(&targets, &weights)?;
    let data = Presorted::with_bins(train, params.max_bins);
    let grow = GrowParams {
        max_depth: params.max_depth,
        criterion: Criterion::SecondOrder {
            lambda: params.lambda,
            min_child_weight: params.min_child_weight,
            min_leaf: 0.0,
        },
        features_per_split: None,
    };
    let mut f = vec![base; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut trace = Vec::with_capacity(params.n_rounds);
    let seed = rng::derive(params.seed, "gbdt");
    for round in 0..params.n_rounds {
        let mut stats: Vec<Stats> = (0..n)
            .map(|i| {
                let p = sigmoid(f[i]);
                let w = weights[i];
                Stats {
                    w,
                    a: w * (p - targets[i]),
                    b: w * p * (1.0 - p),
                }
            })
            .collect();
        if params.subsample < 1.0 {
            let mut r = rng::stream(seed, round as u64);
            for s in &mut stats {
                if r.gen::<f64>() >= params.subsample {
                    *s = Stats::default();
                }
            }
        }
        let tree = grow_tree(&data, &stats, grow, None)?;
        for i in 0..n {
            f[i] += params.learning_rate * tree.predict(train.row(i));
        }
        trees.push(tree);
        trace.push(logloss(&f, &targets, &weights));
    }
    Ok((
        TreeEnsemble {
            kind: EnsembleKind::Boosted,
            trees,
            learning_rate: params.learning_rate,
            base_score: base,
            feature_names: train.column_names(),
        },
        trace,
    ))
}
