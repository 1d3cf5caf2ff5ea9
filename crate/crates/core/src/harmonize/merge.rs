use std::collections::{HashMap, HashSet};
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::atcvet::{map_atcvet, AtcvetCode};
use super::veddra::{TermResolution, VeddraMap};
use super::HarmonizeError;
use crate::ingest::descriptors::normalize_name;
use crate::ingest::{AgeUnit, ChemDescriptors, MedicalStatus, RawTables, ReportKey, WeightUnit};

/// Separator used when list fields are flattened to text.
pub const LIST_SEPARATOR: char = '\\';

/// One report with all of its child rows folded in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedReport {
    pub key: ReportKey,
    pub species: String,
    pub breed: Option<String>,
    pub gender: Option<String>,
    /// As reported, before unit normalization.
    pub age: Option<(f64, AgeUnit)>,
    pub weight: Option<(f64, WeightUnit)>,
    pub age_years: Option<f64>,
    pub weight_kg: Option<f64>,
    pub received_date: Option<NaiveDate>,
    pub outcome: MedicalStatus,
    /// HLT level.
    pub ae_terms: Vec<String>,
    pub ingredients: Vec<String>,
    pub atcvet_subgroups: Vec<String>,
    pub routes: Vec<String>,
    pub dosage_forms: Vec<String>,
    /// Sums over ingredients with known descriptors.
    pub descriptors: ChemDescriptors,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeStats {
    pub reports: usize,
    pub terms_mapped: usize,
    pub terms_already_hlt: usize,
    pub terms_unmapped: usize,
    pub atc_under_specified: usize,
    /// Codes that failed the grammar; they are left out of the subgroup list.
    pub atc_invalid: Vec<String>,
    pub ingredients_without_descriptors: usize,
    pub reports_without_outcome: usize,
    pub reports_with_multiple_outcomes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Merged {
    pub reports: Vec<MergedReport>,
    pub stats: MergeStats,
}

/// Sums the present values of each descriptor. Values are summed in sorted
/// order so the result does not depend on drug-row order.
pub fn sum_descriptors<'a>(items: impl IntoIterator<Item = &'a ChemDescriptors>) -> ChemDescriptors {
    let mut columns: [Vec<f64>; 7] = Default::default();
    for d in items {
        for (col, v) in columns.iter_mut().zip(d.values()) {
            if let Some(v) = v {
                col.push(v);
            }
        }
    }
    let mut out = ChemDescriptors::default();
    for (field, mut col) in ChemDescriptors::FIELDS.iter().zip(columns) {
        if col.is_empty() {
            continue;
        }
        col.sort_by(f64::total_cmp);
        out.set(field, Some(col.iter().sum()));
    }
    out
}

/// Joins the four tables into one row per main-table report.
pub fn merge_reports(
    tables: &RawTables,
    veddra: &VeddraMap,
    descriptors: &HashMap<String, ChemDescriptors>,
) -> Result<Merged, HarmonizeError> {
    let mut seen = HashSet::with_capacity(tables.main.len());
    let mut duplicates: Vec<ReportKey> = tables
        .main
        .iter()
        .filter(|r| !seen.insert(&r.key))
        .map(|r| r.key.clone())
        .collect();
    if !duplicates.is_empty() {
        duplicates.sort();
        duplicates.dedup();
        return Err(HarmonizeError::DuplicateKeys(duplicates));
    }

    let mut events: HashMap<&ReportKey, Vec<_>> = HashMap::new();
    for r in &tables.events {
        events.entry(&r.key).or_default().push(r);
    }
    let mut outcomes: HashMap<&ReportKey, Vec<_>> = HashMap::new();
    for r in &tables.outcomes {
        outcomes.entry(&r.key).or_default().push(r);
    }
    let mut drugs: HashMap<&ReportKey, Vec<_>> = HashMap::new();
    for r in &tables.drugs {
        drugs.entry(&r.key).or_default().push(r);
    }

    let mut stats = MergeStats {
        reports: tables.main.len(),
        ..Default::default()
    };
    let mut reports = Vec::with_capacity(tables.main.len());
    for main in &tables.main {
        let mut ae_terms = Vec::new();
        for ev in events.get(&main.key).into_iter().flatten() {
            let (hlt, how) = veddra.resolve(ev);
            match how {
                TermResolution::Mapped => stats.terms_mapped += 1,
                TermResolution::AlreadyHlt => stats.terms_already_hlt += 1,
                TermResolution::Unmapped => stats.terms_unmapped += 1,
            }
            ae_terms.push(hlt);
        }

        let outcome = match outcomes.get(&main.key).map(Vec::as_slice) {
            None | Some([]) => {
                stats.reports_without_outcome += 1;
                MedicalStatus::Unknown
            }
            Some([only]) => only.medical_status,
            Some([first, ..]) => {
                stats.reports_with_multiple_outcomes += 1;
                first.medical_status
            }
        };

        let mut ingredients = Vec::new();
        let mut atcvet_subgroups = Vec::new();
        let mut routes = Vec::new();
        let mut dosage_forms = Vec::new();
        let mut known = Vec::new();
        for d in drugs.get(&main.key).into_iter().flatten() {
            ingredients.push(d.ingredient_name.clone());
            match descriptors.get(&normalize_name(&d.ingredient_name)) {
                Some(desc) => known.push(desc),
                None => stats.ingredients_without_descriptors += 1,
            }
            if let Some(code) = &d.atcvet_code {
                match code.parse::<AtcvetCode>() {
                    Ok(c) => {
                        if c.is_under_specified() {
                            stats.atc_under_specified += 1;
                        }
                        atcvet_subgroups.push(map_atcvet(&c));
                    }
                    Err(_) => stats.atc_invalid.push(code.clone()),
                }
            }
            if let Some(r) = &d.route {
                routes.push(r.clone());
            }
            if let Some(f) = &d.dosage_form {
                dosage_forms.push(f.clone());
            }
        }

        reports.push(MergedReport {
            key: main.key.clone(),
            species: main.species.clone(),
            breed: main.breed.clone(),
            gender: main.gender.clone(),
            age: main.age_value.zip(main.age_unit),
            weight: main.weight_value.zip(main.weight_unit),
            age_years: None,
            weight_kg: None,
            received_date: main.received_date,
            outcome,
            ae_terms,
            ingredients,
            atcvet_subgroups,
            routes,
            dosage_forms,
            descriptors: sum_descriptors(known),
        });
    }
    Ok(Merged { reports, stats })
}

pub fn join_list(items: &[String]) -> String {
    let mut out = String::new();
    for (i, s) in items.iter().enumerate() {
        if i > 0 {
            out.push(LIST_SEPARATOR);
        }
        out.push_str(s);
    }
    out
}

pub fn split_list(text: &str) -> Vec<String> {
    if text.is_empty() {
        Vec::new()
    } else {
        text.split(LIST_SEPARATOR).map(String::from).collect()
    }
}

const MERGED_COLUMNS: [&str; 16] = [
    "unique_aer_id_number",
    "species",
    "breed",
    "gender",
    "age_value",
    "age_unit",
    "age_years",
    "weight_value",
    "weight_unit",
    "weight_kg",
    "outcome",
    "ae_terms",
    "ingredients",
    "atcvet_subgroups",
    "routes",
    "dosage_forms",
];

/// CSV export with `\`-joined list fields and one column per descriptor.
pub fn write_merged_csv<W: Write>(reports: &[MergedReport], sink: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(sink);
    let header: Vec<&str> = MERGED_COLUMNS
        .iter()
        .copied()
        .chain(ChemDescriptors::FIELDS)
        .collect();
    w.write_record(&header)?;
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        let mut rec = vec![
            r.key.to_string(),
            r.species.clone(),
            r.breed.clone().unwrap_or_default(),
            r.gender.clone().unwrap_or_default(),
            num(r.age.map(|a| a.0)),
            r.age.map(|a| a.1.as_str().to_string()).unwrap_or_default(),
            num(r.age_years),
            num(r.weight.map(|a| a.0)),
            r.weight.map(|a| a.1.as_str().to_string()).unwrap_or_default(),
            num(r.weight_kg),
            r.outcome.as_str().to_string(),
            join_list(&r.ae_terms),
            join_list(&r.ingredients),
            join_list(&r.atcvet_subgroups),
            join_list(&r.routes),
            join_list(&r.dosage_forms),
        ];
        rec.extend(r.descriptors.values().iter().map(|v| num(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
