use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::{fit_forest, ForestParams};
use super::gbdt::{fit_gbdt, GbdtParams};
use super::grow::{fit_tree, TreeParams};
use super::knn::{fit_knn, KnnModel, KnnParams};
use super::linear::{fit_logistic, LinearModel, LogisticParams};
use super::tree::{EnsembleKind, TreeEnsemble};
use super::LearnError;
use crate::prepare::{FeatureMatrix, Label};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsembleMode {
    SoftVote,
    Stack,
}

impl EnsembleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EnsembleMode::SoftVote => "soft_vote",
            EnsembleMode::Stack => "stack",
        }
    }
}

impl std::str::FromStr for EnsembleMode {
    type Err = LearnError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "soft_vote" | "vote" | "voting" => Ok(EnsembleMode::SoftVote),
            "stack" | "stacking" => Ok(EnsembleMode::Stack),
            other => Err(LearnError::Params(format!("unknown ensemble mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Tree(TreeParams),
    Forest(ForestParams),
    Gbdt(GbdtParams),
    Logistic(LogisticParams),
    Knn(KnnParams),
    Ensemble {
        mode: EnsembleMode,
        members: Vec<ModelParams>,
        folds: usize,
        seed: u64,
    },
}

impl ModelParams {
    /// GBDT, forest and a second, shallower-but-longer GBDT.
    pub fn default_ensemble_members(seed: u64) -> Vec<ModelParams> {
        vec![
            ModelParams::Gbdt(GbdtParams {
                seed,
                ..Default::default()
            }),
            ModelParams::Forest(ForestParams {
                seed,
                ..Default::default()
            }),
            ModelParams::Gbdt(GbdtParams {
                n_rounds: 300,
                learning_rate: 0.05,
                max_depth: 6,
                lambda: 5.0,
                subsample: 0.8,
                seed: seed.wrapping_add(1),
                ..Default::default()
            }),
        ]
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelParams::Tree(_) => "tree",
            ModelParams::Forest(_) => "forest",
            ModelParams::Gbdt(_) => "gbdt",
            ModelParams::Logistic(_) => "logistic",
            ModelParams::Knn(_) => "knn",
            ModelParams::Ensemble { mode, .. } => match mode {
                EnsembleMode::SoftVote => "vote",
                EnsembleMode::Stack => "stack",
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub mode: EnsembleMode,
    pub members: Vec<Model>,
    /// Meta-learner over member P(Recovered) (Stack only).
    pub meta: Option<LinearModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    /// A single CART tree, held as a one-tree forest.
    Tree(TreeEnsemble),
    Forest(TreeEnsemble),
    Gbdt(TreeEnsemble),
    Logistic(LinearModel),
    Knn(KnnModel),
    Ensemble(EnsembleModel),
}

impl Model {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Tree(_) => "tree",
            Model::Forest(_) => "forest",
            Model::Gbdt(_) => "gbdt",
            Model::Logistic(_) => "logistic",
            Model::Knn(_) => "knn",
            Model::Ensemble(e) => match e.mode {
                EnsembleMode::SoftVote => "vote",
                EnsembleMode::Stack => "stack",
            },
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Tree(e) | Model::Forest(e) | Model::Gbdt(e) => e.n_features(),
            Model::Logistic(l) => l.weights.len(),
            Model::Knn(k) => k.n_features(),
            Model::Ensemble(e) => e.members[0].n_features(),
        }
    }

    pub fn tree_ensemble(&self) -> Option<&TreeEnsemble> {
        match self {
            Model::Tree(e) | Model::Forest(e) | Model::Gbdt(e) => Some(e),
            _ => None,
        }
    }

    pub fn predict_recovered(&self, row: &[f64]) -> f64 {
        match self {
            Model::Tree(e) | Model::Forest(e) | Model::Gbdt(e) => e.predict_recovered(row),
            Model::Logistic(l) => l.predict_recovered(row),
            Model::Knn(k) => k.predict_recovered(row),
            Model::Ensemble(e) => {
                let probs: Vec<f64> = e.members.iter().map(|m| m.predict_recovered(row)).collect();
                match (&e.mode, &e.meta) {
                    (EnsembleMode::Stack, Some(meta)) => meta.predict_recovered(&probs),
                    _ => probs.iter().sum::<f64>() / probs.len() as f64,
                }
            }
        }
    }

    /// `[P(Death), P(Recovered)]` per row.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<[f64; 2]>, LearnError> {
        if x.n_cols() != self.n_features() {
            return Err(LearnError::Dimension {
                expected: self.n_features(),
                found: x.n_cols(),
            });
        }
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|i| {
                let p = self.predict_recovered(x.row(i)).clamp(0.0, 1.0);
                [1.0 - p, p]
            })
            .collect())
    }

    /// Argmax labels; an exact 0.5 goes to Recovered.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<Label>, LearnError> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| if p[0] > p[1] { Label::Death } else { Label::Recovered })
            .collect())
    }
}

pub fn fit(params: &ModelParams, train: &FeatureMatrix) -> Result<Model, LearnError> {
    train.labels()?;
    Ok(match params {
        ModelParams::Tree(p) => {
            let tree = fit_tree(train, p)?;
            Model::Tree(TreeEnsemble {
                kind: EnsembleKind::Forest,
                trees: vec![tree],
                learning_rate: 1.0,
                base_score: 0.0,
                feature_names: train.column_names(),
            })
        }
        ModelParams::Forest(p) => Model::Forest(fit_forest(train, p)?),
        ModelParams::Gbdt(p) => Model::Gbdt(fit_gbdt(train, p)?),
        ModelParams::Logistic(p) => Model::Logistic(fit_logistic(train, p)?.0),
        ModelParams::Knn(p) => Model::Knn(fit_knn(train, p)?),
        ModelParams::Ensemble {
            mode,
            members,
            folds,
            seed,
        } => Model::Ensemble(fit_ensemble(members, *mode, train, *folds, *seed)?),
    })
}

/// Stratified fold index per row: each class is shuffled with its own stream
/// and dealt round-robin into `k` folds.
pub fn stack_folds(labels: &[Label], k: usize, seed: u64) -> Vec<usize> {
    let mut fold = vec![0; labels.len()];
    let base = rng::derive(seed, "stack");
    let mut next = 0;
    for class in Label::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng::stream(base, class.index() as u64));
        for i in members {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

/// Out-of-fold member P(Recovered): row `i`, member `m` comes from member `m`
/// fit on every fold except `folds[i]`.
pub fn out_of_fold(members: &[ModelParams], train: &FeatureMatrix, folds: &[usize], k: usize) -> Result<Vec<Vec<f64>>, LearnError> {
    let mut oof = vec![vec![0.0; members.len()]; train.n_rows()];
    for f in 0..k {
        let (held, kept): (Vec<usize>, Vec<usize>) = (0..train.n_rows()).partition(|&i| folds[i] == f);
        if held.is_empty() {
            continue;
        }
        let fit_part = train.select_rows(&kept);
        let held_part = train.select_rows(&held);
        for (m, p) in members.iter().enumerate() {
            let model = fit(p, &fit_part)?;
            for (row, prob) in held.iter().zip(model.predict_proba(&held_part)?) {
                oof[*row][m] = prob[1];
            }
        }
    }
    Ok(oof)
}

pub fn fit_ensemble(
    members: &[ModelParams],
    mode: EnsembleMode,
    train: &FeatureMatrix,
    folds: usize,
    seed: u64,
) -> Result<EnsembleModel, LearnError> {
    if members.len() < 2 {
        return Err(LearnError::Params("an ensemble needs at least 2 members".into()));
    }
    let meta = match mode {
        EnsembleMode::SoftVote => None,
        EnsembleMode::Stack => {
            if folds < 2 {
                return Err(LearnError::Params("stacking needs at least 2 folds".into()));
            }
            let labels = train.labels()?;
            let assignment = stack_folds(labels, folds, seed);
            let oof = out_of_fold(members, train, &assignment, folds)?;
            let meta_x = FeatureMatrix::from_rows(&oof, Some(labels.to_vec()))?;
            let meta_x = match &train.weights {
                Some(w) => meta_x.with_weights(w.clone())?,
                None => meta_x,
            };
            Some(fit_logistic(&meta_x, &LogisticParams::default())?.0)
        }
    };
    let fitted = members.iter().map(|p| fit(p, train)).collect::<Result<Vec<_>, _>>()?;
    Ok(EnsembleModel {
        mode,
        members: fitted,
        meta,
    })
}
