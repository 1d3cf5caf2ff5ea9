//! Outcome modeling for veterinary adverse-event reports.
//!
//! The crate is organized as a sequence of stages:
//!
//! * [`ingest`] parses OpenFDA-style quarterly JSON into four relational tables
//!   and writes them as bulk-load text.
//! * [`harmonize`] maps reaction terms and ATCvet codes onto coarser ontology
//!   levels and merges the tables into one row per report.
//! * [`prepare`] cleans, imputes, encodes, prunes and splits the merged rows.
//! * [`resample`] rebalances the training split.
//! * [`learn`] holds the from-scratch classifiers.
//! * [`ssl`] scores unlabeled reports by average margin and pseudo-labels the
//!   most stable ones.
//! * [`explain`] computes exact TreeSHAP attributions and per-group rankings.
//! * [`eval`] computes confusion-matrix metrics and results tables.
//! * [`pipeline`] drives everything from a config file.

pub mod eval;
pub mod explain;
pub mod harmonize;
pub mod ingest;
pub mod learn;
pub mod pipeline;
pub mod prepare;
pub mod resample;
pub mod rng;
pub mod ssl;
pub mod synth;

pub use prepare::{FeatureMatrix, Label};
