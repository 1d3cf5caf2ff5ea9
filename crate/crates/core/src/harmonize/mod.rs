//! Ontology mapping and report merging.

mod atcvet;
mod merge;
mod veddra;

pub use atcvet::{map_atcvet, AtcvetCode, AtcvetError, AtcvetIndex, CHEMICAL_SUBGROUP_LEN};
pub use merge::{
    join_list, merge_reports, split_list, sum_descriptors, write_merged_csv, Merged, MergeStats,
    MergedReport, LIST_SEPARATOR,
};
pub use veddra::{map_veddra, HltEntry, OntologyError, TermResolution, VeddraMap, UNMAPPED_PREFIX};

use crate::ingest::ReportKey;

#[derive(Debug, thiserror::Error)]
pub enum HarmonizeError {
    #[error("duplicate report keys in main table: {}", .0.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", "))]
    DuplicateKeys(Vec<ReportKey>),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Atcvet(#[from] AtcvetError),
}
