//! Species-specific imputation.
//!
//! Numeric gaps take the mean of the same species, categorical gaps its most
//! frequent value (ties go to the lexicographically smallest value). A species
//! with no observed value falls back to the global statistic. Statistics are
//! fitted once (on the training split) and then applied unchanged elsewhere.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fields::{numeric, set_numeric, set_text, text};
use super::PrepareError;
use crate::harmonize::MergedReport;

/// Numeric fields imputed by species mean. Descriptor count fields are
/// rounded to integers when written back.
pub const IMPUTED_NUMERIC: [&str; 9] = super::fields::NUMERIC_FIELDS;
pub const IMPUTED_CATEGORICAL: [&str; 3] = ["gender", "dosage_form", "route"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldStat<T> {
    pub global: T,
    pub per_species: BTreeMap<String, T>,
}

impl<T: Clone> FieldStat<T> {
    fn for_species(&self, species: &str) -> T {
        self.per_species.get(species).cloned().unwrap_or_else(|| self.global.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeStats {
    pub numeric: BTreeMap<String, FieldStat<f64>>,
    pub categorical: BTreeMap<String, FieldStat<String>>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Most frequent value; ties broken by the smallest value.
pub fn mode(values: &[String]) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    // BTreeMap iterates in ascending order, so `>` keeps the first maximum.
    let mut best: Option<(&str, usize)> = None;
    for (v, c) in counts {
        if best.map_or(true, |(_, bc)| c > bc) {
            best = Some((v, c));
        }
    }
    best.map(|(v, _)| v.to_string())
}

impl ImputeStats {
    pub fn fit(rows: &[MergedReport]) -> Result<Self, PrepareError> {
        if let Some(r) = rows.iter().find(|r| r.species.trim().is_empty()) {
            return Err(PrepareError::InvalidRow {
                key: r.key.clone(),
                reason: "empty species".into(),
            });
        }
        let mut numeric_stats = BTreeMap::new();
        for field in IMPUTED_NUMERIC {
            let mut by_species: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            let mut all = Vec::new();
            for r in rows {
                if let Some(v) = numeric(r, field) {
                    by_species.entry(&r.species).or_default().push(v);
                    all.push(v);
                }
            }
            if all.is_empty() {
                return Err(PrepareError::AllAbsent(field.to_string()));
            }
            numeric_stats.insert(
                field.to_string(),
                FieldStat {
                    global: mean(&all),
                    per_species: by_species.into_iter().map(|(s, v)| (s.to_string(), mean(&v))).collect(),
                },
            );
        }
        let mut categorical = BTreeMap::new();
        for field in IMPUTED_CATEGORICAL {
            let mut by_species: BTreeMap<&str, Vec<String>> = BTreeMap::new();
            let mut all = Vec::new();
            for r in rows {
                if let Some(v) = text(r, field) {
                    by_species.entry(&r.species).or_default().push(v.clone());
                    all.push(v);
                }
            }
            let global = mode(&all).ok_or_else(|| PrepareError::AllAbsent(field.to_string()))?;
            categorical.insert(
                field.to_string(),
                FieldStat {
                    global,
                    per_species: by_species
                        .into_iter()
                        .filter_map(|(s, v)| mode(&v).map(|m| (s.to_string(), m)))
                        .collect(),
                },
            );
        }
        Ok(ImputeStats {
            numeric: numeric_stats,
            categorical,
        })
    }

    pub fn apply_one(&self, row: &MergedReport) -> MergedReport {
        let mut out = row.clone();
        for (field, stat) in &self.numeric {
            if numeric(row, field).is_none() {
                set_numeric(&mut out, field, stat.for_species(&row.species));
            }
        }
        for (field, stat) in &self.categorical {
            if text(row, field).is_none() {
                set_text(&mut out, field, &stat.for_species(&row.species));
            }
        }
        out
    }

    pub fn apply(&self, rows: &[MergedReport]) -> Vec<MergedReport> {
        rows.iter().map(|r| self.apply_one(r)).collect()
    }
}

/// Fits on `table` and fills it in one step.
pub fn impute(table: &[MergedReport]) -> Result<Vec<MergedReport>, PrepareError> {
    Ok(ImputeStats::fit(table)?.apply(table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ChemDescriptors, MedicalStatus, ReportKey};

    fn row(i: usize, species: &str, age: Option<f64>, gender: Option<&str>) -> MergedReport {
        MergedReport {
            key: ReportKey::new(format!("r{i}")).unwrap(),
            species: species.into(),
            breed: None,
            gender: gender.map(String::from),
            age: None,
            weight: None,
            age_years: age,
            weight_kg: Some(10.0),
            received_date: None,
            outcome: MedicalStatus::Recovered,
            ae_terms: vec![],
            ingredients: vec![],
            atcvet_subgroups: vec![],
            routes: vec!["Oral".into()],
            dosage_forms: vec!["Tablet".into()],
            descriptors: ChemDescriptors {
                molecular_weight: Some(100.0),
                h_bond_acceptors: Some(1),
                xlogp3: Some(0.5),
                atom_stereocenters: Some(0),
                formal_charge: Some(0),
                covalent_units: Some(1),
                exact_mass: Some(99.9),
            },
        }
    }

    #[test]
    fn species_mean_for_age() {
        let rows = vec![
            row(0, "Dog", Some(2.0), Some("M")),
            row(1, "Dog", None, Some("M")),
            row(2, "Dog", Some(4.0), Some("M")),
            row(3, "Cat", Some(10.0), Some("F")),
        ];
        let out = impute(&rows).unwrap();
        assert_eq!(out[1].age_years, Some(3.0));
    }

    #[test]
    fn species_mode_for_gender() {
        let rows = vec![
            row(0, "Cat", Some(1.0), Some("F")),
            row(1, "Cat", Some(1.0), Some("F")),
            row(2, "Cat", Some(1.0), Some("M")),
            row(3, "Cat", Some(1.0), None),
        ];
        assert_eq!(impute(&rows).unwrap()[3].gender.as_deref(), Some("F"));
    }

    #[test]
    fn mode_ties_lexicographic() {
        let v: Vec<String> = ["M", "F", "M", "F"].iter().map(|s| s.to_string()).collect();
        assert_eq!(mode(&v).as_deref(), Some("F"));
    }

    #[test]
    fn global_fallback() {
        let rows = vec![
            row(0, "Dog", Some(4.0), Some("M")),
            row(1, "Dog", Some(6.0), Some("M")),
            row(2, "Horse", None, Some("M")),
        ];
        assert_eq!(impute(&rows).unwrap()[2].age_years, Some(5.0));
    }

    #[test]
    fn all_absent_is_error() {
        let rows = vec![row(0, "Dog", None, Some("M")), row(1, "Cat", None, Some("M"))];
        match impute(&rows) {
            Err(PrepareError::AllAbsent(f)) => assert_eq!(f, "age_years"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn frozen_stats_apply_to_other_rows() {
        let train = vec![row(0, "Dog", Some(2.0), Some("M")), row(1, "Dog", Some(4.0), Some("F"))];
        let stats = ImputeStats::fit(&train).unwrap();
        let mut test_row = row(5, "Dog", None, None);
        test_row.routes.clear();
        let filled = stats.apply_one(&test_row);
        assert_eq!(filled.age_years, Some(3.0));
        assert_eq!(filled.gender.as_deref(), Some("F"));
        assert_eq!(filled.routes, vec!["Oral".to_string()]);
    }
}
