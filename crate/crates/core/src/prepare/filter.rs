use serde::{Deserialize, Serialize};

use crate::harmonize::MergedReport;
use crate::ingest::MedicalStatus;

/// HLT whose presence removes a report (treatment failure, not a physiological response).
pub const LACK_OF_EFFICACY: &str = "lack of efficacy";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalCounts {
    pub euthanized: usize,
    pub lack_of_efficacy: usize,
    pub relabeled_sequela: usize,
}

/// Drops euthanized and lack-of-efficacy reports and folds
/// recovered-with-sequela into recovered. A report matching both removal
/// rules is counted once, as euthanized.
pub fn filter_rows(table: &[MergedReport]) -> (Vec<MergedReport>, RemovalCounts) {
    let mut counts = RemovalCounts::default();
    let mut out = Vec::with_capacity(table.len());
    for r in table {
        if r.outcome == MedicalStatus::Euthanized {
            counts.euthanized += 1;
            continue;
        }
        if r.ae_terms.iter().any(|t| t.trim().eq_ignore_ascii_case(LACK_OF_EFFICACY)) {
            counts.lack_of_efficacy += 1;
            continue;
        }
        let mut r = r.clone();
        if r.outcome == MedicalStatus::RecoveredWithSequela {
            r.outcome = MedicalStatus::Recovered;
            counts.relabeled_sequela += 1;
        }
        out.push(r);
    }
    (out, counts)
}
