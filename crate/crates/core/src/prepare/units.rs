use super::PrepareError;
use crate::harmonize::MergedReport;
use crate::ingest::{AgeUnit, WeightUnit};

pub const DAYS_PER_YEAR: f64 = 365.25;
pub const KG_PER_POUND: f64 = 0.45359237;
/// The pound is defined as exactly 45359237 / 10^8 kg; dividing last keeps
/// decimal inputs correctly rounded.
const POUND_NUMERATOR: f64 = 45_359_237.0;
const POUND_DENOMINATOR: f64 = 100_000_000.0;

pub fn age_in_years(value: f64, unit: AgeUnit) -> f64 {
    match unit {
        AgeUnit::Day => value / DAYS_PER_YEAR,
        AgeUnit::Week => value * 7.0 / DAYS_PER_YEAR,
        AgeUnit::Month => value / 12.0,
        AgeUnit::Year => value,
    }
}

pub fn weight_in_kg(value: f64, unit: WeightUnit) -> f64 {
    match unit {
        WeightUnit::Gram => value / 1000.0,
        WeightUnit::Kilogram => value,
        WeightUnit::Pound => value * POUND_NUMERATOR / POUND_DENOMINATOR,
    }
}

/// Fills `age_years` and `weight_kg` from the reported values.
pub fn normalize_units(report: &MergedReport) -> Result<MergedReport, PrepareError> {
    let reject = |what: &str, v: f64| PrepareError::InvalidRow {
        key: report.key.clone(),
        reason: format!("negative {what} {v}"),
    };
    let mut out = report.clone();
    if let Some((v, unit)) = report.age {
        if v < 0.0 {
            return Err(reject("age", v));
        }
        out.age_years = Some(age_in_years(v, unit));
    }
    if let Some((v, unit)) = report.weight {
        if v < 0.0 {
            return Err(reject("weight", v));
        }
        out.weight_kg = Some(weight_in_kg(v, unit));
    }
    Ok(out)
}

/// Normalizes every row, splitting off the rejected ones.
pub fn normalize_all(reports: &[MergedReport]) -> (Vec<MergedReport>, Vec<PrepareError>) {
    let mut ok = Vec::with_capacity(reports.len());
    let mut rejects = Vec::new();
    for r in reports {
        match normalize_units(r) {
            Ok(n) => ok.push(n),
            Err(e) => rejects.push(e),
        }
    }
    (ok, rejects)
}
