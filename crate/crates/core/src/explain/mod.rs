//! Exact TreeSHAP attributions and per-species-group rankings.
//!
//! Attributions are on the margin scale of the ensemble (log-odds for
//! boosting, probability for forests). Positive phi pushes a prediction
//! toward Recovered, negative toward Death.

pub mod aggregate;
pub mod groups;
pub mod treeshap;

pub use aggregate::{
    aggregate_shap, group_counts, row_groups, shap_summary, write_rankings, write_shap_values, write_summary,
    RankEntry, ShapRanking, ShapScope, ShapSummary, SummaryFeature, DEFAULT_RANK_N, DEFAULT_SUMMARY_TOP_K,
};
pub use groups::{SpeciesGroup, SpeciesGroupMap};
pub use treeshap::{expected_value, explain_matrix, tree_shap, tree_shap_into, ShapVector};

#[derive(Debug, thiserror::Error)]
pub enum ExplainError {
    #[error("species `{0}` is not in the species group map")]
    UnlistedSpecies(String),
    #[error("species group map: {0}")]
    Groups(String),
    #[error("{0}")]
    Scope(String),
    #[error("attributions not aligned with matrix: {0}")]
    Alignment(String),
    #[error(transparent)]
    Learn(#[from] crate::learn::LearnError),
}
