//! Cleaning, unit normalization, imputation, encoding, pruning and splitting.

pub mod encode;
pub mod fields;
pub mod filter;
pub mod impute;
pub mod matrix;
pub mod prune;
pub mod split;
pub mod units;

pub use encode::{encode, top_k_vocabulary, EncodingSpec, FieldEncoding, FittedEncoder, FittedField, DEFAULT_TOP_K};
pub use filter::{filter_rows, RemovalCounts, LACK_OF_EFFICACY};
pub use impute::{impute, mode, ImputeStats};
pub use matrix::{ColumnKind, ColumnMeta, FeatureMatrix, Label, OTHER_TERM, UNKNOWN_CATEGORY, UNKNOWN_CODE};
pub use prune::{prune_correlated, DropReason, DroppedColumn, DEFAULT_CORRELATION_THRESHOLD};
pub use split::{split_stratified, stratified_assignment, SplitAssignment, SplitSet, DEFAULT_RATIOS};
pub use units::{age_in_years, normalize_all, normalize_units, weight_in_kg, DAYS_PER_YEAR, KG_PER_POUND};

use crate::harmonize::MergedReport;
use crate::ingest::{ChemDescriptors, MedicalStatus, ReportKey};

#[derive(Debug, thiserror::Error)]
pub enum PrepareError {
    #[error("matrix shape: {0}")]
    Shape(String),
    #[error("matrix has no labels")]
    MissingLabels,
    #[error("report {key}: {reason}")]
    InvalidRow { key: ReportKey, reason: String },
    #[error("field `{0}` is absent in every row")]
    AllAbsent(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("encoding: {0}")]
    Encoding(String),
    #[error("{0}")]
    Config(String),
    #[error("class {class} has {found} rows, at least {needed} required")]
    TooFewRows { class: Label, found: usize, needed: usize },
}

/// A report with every optional field absent and an Unknown outcome.
pub fn empty_report() -> MergedReport {
    MergedReport {
        key: ReportKey::new("empty").expect("non-empty key"),
        species: String::new(),
        breed: None,
        gender: None,
        age: None,
        weight: None,
        age_years: None,
        weight_kg: None,
        received_date: None,
        outcome: MedicalStatus::Unknown,
        ae_terms: Vec::new(),
        ingredients: Vec::new(),
        atcvet_subgroups: Vec::new(),
        routes: Vec::new(),
        dosage_forms: Vec::new(),
        descriptors: ChemDescriptors::default(),
    }
}

#[cfg(test)]
pub(crate) fn fill_numeric_for_tests(r: &mut MergedReport) {
    for (i, f) in fields::NUMERIC_FIELDS.iter().enumerate() {
        fields::set_numeric(r, f, i as f64 + 1.0);
    }
}
