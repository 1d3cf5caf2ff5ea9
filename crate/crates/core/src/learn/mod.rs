//! Supervised learners implemented from scratch: CART, random forest,
//! second-order gradient boosting, logistic regression, KNN and soft-vote /
//! stacking ensembles.
//!
//! Every model predicts `[P(Death), P(Recovered)]`; tree margins are on the
//! Recovered side (log-odds for boosting, probability for forests).

pub mod forest;
pub mod gbdt;
pub mod grow;
pub mod knn;
pub mod linear;
pub mod model;
pub mod text;
pub mod tree;

pub use forest::{fit_forest, ForestParams};
pub use gbdt::{fit_gbdt, fit_gbdt_traced, GbdtParams};
pub use grow::{fit_tree, TreeParams};
pub use knn::{fit_knn, KnnModel, KnnParams};
pub use linear::{fit_logistic, LinearModel, LogisticParams};
pub use model::{fit, fit_ensemble, out_of_fold, stack_folds, EnsembleMode, EnsembleModel, Model, ModelParams};
pub use text::{model_from_text, model_to_text};
pub use tree::{sigmoid, EnsembleKind, Tree, TreeEnsemble, TreeNode};

use crate::prepare::PrepareError;

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("invalid training input: {0}")]
    Input(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("model expects {expected} features, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Prepare(#[from] PrepareError),
}
