//! Named access to the modelable fields of a merged report.

use crate::harmonize::{join_list, split_list, MergedReport};
use crate::ingest::ChemDescriptors;

/// Value of one field of one report.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue<'a> {
    Number(Option<f64>),
    Text(Option<String>),
    List(&'a [String]),
}

pub const NUMERIC_FIELDS: [&str; 9] = [
    "age_years",
    "weight_kg",
    "molecular_weight",
    "h_bond_acceptors",
    "xlogp3",
    "atom_stereocenters",
    "formal_charge",
    "covalent_units",
    "exact_mass",
];

/// Single-valued text fields. `route` and `dosage_form` are the `\`-joined
/// per-report lists.
pub const TEXT_FIELDS: [&str; 5] = ["species", "breed", "gender", "route", "dosage_form"];

pub const LIST_FIELDS: [&str; 5] = ["ae_terms", "ingredients", "atcvet_subgroups", "routes", "dosage_forms"];

fn joined(items: &[String]) -> Option<String> {
    (!items.is_empty()).then(|| join_list(items))
}

pub fn field_value<'a>(r: &'a MergedReport, field: &str) -> Option<FieldValue<'a>> {
    Some(match field {
        "age_years" => FieldValue::Number(r.age_years),
        "weight_kg" => FieldValue::Number(r.weight_kg),
        "species" => FieldValue::Text(Some(r.species.clone())),
        "breed" => FieldValue::Text(r.breed.clone()),
        "gender" => FieldValue::Text(r.gender.clone()),
        "route" => FieldValue::Text(joined(&r.routes)),
        "dosage_form" => FieldValue::Text(joined(&r.dosage_forms)),
        "ae_terms" => FieldValue::List(&r.ae_terms),
        "ingredients" => FieldValue::List(&r.ingredients),
        "atcvet_subgroups" => FieldValue::List(&r.atcvet_subgroups),
        "routes" => FieldValue::List(&r.routes),
        "dosage_forms" => FieldValue::List(&r.dosage_forms),
        other => FieldValue::Number(r.descriptors.get(other)?),
    })
}

pub fn numeric(r: &MergedReport, field: &str) -> Option<f64> {
    match field_value(r, field) {
        Some(FieldValue::Number(v)) => v,
        _ => None,
    }
}

pub fn text(r: &MergedReport, field: &str) -> Option<String> {
    match field_value(r, field) {
        Some(FieldValue::Text(v)) => v,
        _ => None,
    }
}

pub fn set_numeric(r: &mut MergedReport, field: &str, value: f64) {
    match field {
        "age_years" => r.age_years = Some(value),
        "weight_kg" => r.weight_kg = Some(value),
        other => {
            let ok = ChemDescriptors::FIELDS.contains(&other) && r.descriptors.set(other, Some(value));
            debug_assert!(ok, "not a numeric field: {other}");
        }
    }
}

pub fn set_text(r: &mut MergedReport, field: &str, value: &str) {
    match field {
        "species" => r.species = value.to_string(),
        "breed" => r.breed = Some(value.to_string()),
        "gender" => r.gender = Some(value.to_string()),
        "route" => r.routes = split_list(value),
        "dosage_form" => r.dosage_forms = split_list(value),
        other => debug_assert!(false, "not a text field: {other}"),
    }
}
