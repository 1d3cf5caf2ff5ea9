use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Unique report identifier (`unique_aer_id_number`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReportKey(String);

impl ReportKey {
    /// Returns `None` for empty or whitespace-only identifiers.
    pub fn new(value: impl Into<String>) -> Option<Self> {
        let value = value.into();
        let trimmed = value.trim();
        if trimmed.is_empty() {
            None
        } else if trimmed.len() == value.len() {
            Some(ReportKey(value))
        } else {
            Some(ReportKey(trimmed.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ReportKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgeUnit {
    Day,
    Week,
    Month,
    Year,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightUnit {
    Gram,
    Kilogram,
    Pound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VeddraLevel {
    Llt,
    Pt,
    Hlt,
    Soc,
}

/// Closed set of clinical outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MedicalStatus {
    Died,
    Euthanized,
    Recovered,
    RecoveredWithSequela,
    Ongoing,
    Unknown,
}

/// Source spellings accepted for each outcome, compared case-insensitively
/// after trimming.
pub const OUTCOME_SYNONYMS: &[(&str, MedicalStatus)] = &[
    ("died", MedicalStatus::Died),
    ("death", MedicalStatus::Died),
    ("dead", MedicalStatus::Died),
    ("euthanized", MedicalStatus::Euthanized),
    ("euthanised", MedicalStatus::Euthanized),
    ("recovered", MedicalStatus::Recovered),
    ("recovered/normal", MedicalStatus::Recovered),
    ("recovered normal", MedicalStatus::Recovered),
    ("recovered with sequela", MedicalStatus::RecoveredWithSequela),
    ("recovered with sequelae", MedicalStatus::RecoveredWithSequela),
    ("recoveredwithsequela", MedicalStatus::RecoveredWithSequela),
    ("ongoing", MedicalStatus::Ongoing),
    ("unknown", MedicalStatus::Unknown),
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unrecognized {what} `{value}`")]
pub struct UnknownValue {
    pub what: &'static str,
    pub value: String,
}

fn unknown(what: &'static str, value: &str) -> UnknownValue {
    UnknownValue {
        what,
        value: value.to_string(),
    }
}

impl FromStr for MedicalStatus {
    type Err = UnknownValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let needle = s.trim().to_ascii_lowercase();
        OUTCOME_SYNONYMS
            .iter()
            .find(|(name, _)| *name == needle)
            .map(|(_, status)| *status)
            .ok_or_else(|| unknown("medical status", s))
    }
}

impl MedicalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MedicalStatus::Died => "Died",
            MedicalStatus::Euthanized => "Euthanized",
            MedicalStatus::Recovered => "Recovered",
            MedicalStatus::RecoveredWithSequela => "RecoveredWithSequela",
            MedicalStatus::Ongoing => "Ongoing",
            MedicalStatus::Unknown => "Unknown",
        }
    }
}

impl FromStr for AgeUnit {
    type Err = UnknownValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "day" | "days" | "d" => Ok(AgeUnit::Day),
            "week" | "weeks" | "wk" => Ok(AgeUnit::Week),
            "month" | "months" | "mo" => Ok(AgeUnit::Month),
            "year" | "years" | "yr" | "y" => Ok(AgeUnit::Year),
            _ => Err(unknown("age unit", s)),
        }
    }
}

impl AgeUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            AgeUnit::Day => "Day",
            AgeUnit::Week => "Week",
            AgeUnit::Month => "Month",
            AgeUnit::Year => "Year",
        }
    }
}

impl FromStr for WeightUnit {
    type Err = UnknownValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gram" | "grams" | "g" => Ok(WeightUnit::Gram),
            "kilogram" | "kilograms" | "kg" => Ok(WeightUnit::Kilogram),
            "pound" | "pounds" | "lb" | "lbs" => Ok(WeightUnit::Pound),
            _ => Err(unknown("weight unit", s)),
        }
    }
}

impl WeightUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightUnit::Gram => "Gram",
            WeightUnit::Kilogram => "Kilogram",
            WeightUnit::Pound => "Pound",
        }
    }
}

impl FromStr for VeddraLevel {
    type Err = UnknownValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LLT" => Ok(VeddraLevel::Llt),
            "PT" => Ok(VeddraLevel::Pt),
            "HLT" => Ok(VeddraLevel::Hlt),
            "SOC" => Ok(VeddraLevel::Soc),
            _ => Err(unknown("VeDDRA level", s)),
        }
    }
}

impl VeddraLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            VeddraLevel::Llt => "LLT",
            VeddraLevel::Pt => "PT",
            VeddraLevel::Hlt => "HLT",
            VeddraLevel::Soc => "SOC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainRow {
    pub key: ReportKey,
    pub species: String,
    pub breed: Option<String>,
    pub gender: Option<String>,
    pub age_value: Option<f64>,
    pub age_unit: Option<AgeUnit>,
    pub weight_value: Option<f64>,
    pub weight_unit: Option<WeightUnit>,
    pub received_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeRow {
    pub key: ReportKey,
    pub term_code: Option<String>,
    pub term_name: String,
    pub veddra_level: Option<VeddraLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub key: ReportKey,
    pub medical_status: MedicalStatus,
    pub animals_affected: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugRow {
    pub key: ReportKey,
    pub ingredient_name: String,
    pub brand_name: Option<String>,
    pub dosage_form: Option<String>,
    pub route: Option<String>,
    pub atcvet_code: Option<String>,
}

/// Physicochemical descriptors of one ingredient, or the per-report sums.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChemDescriptors {
    /// g/mol
    pub molecular_weight: Option<f64>,
    pub h_bond_acceptors: Option<u32>,
    pub xlogp3: Option<f64>,
    pub atom_stereocenters: Option<u32>,
    pub formal_charge: Option<i32>,
    pub covalent_units: Option<u32>,
    /// Da
    pub exact_mass: Option<f64>,
}

impl ChemDescriptors {
    /// Field names in canonical order, matching [`ChemDescriptors::values`].
    pub const FIELDS: [&'static str; 7] = [
        "molecular_weight",
        "h_bond_acceptors",
        "xlogp3",
        "atom_stereocenters",
        "formal_charge",
        "covalent_units",
        "exact_mass",
    ];

    pub fn values(&self) -> [Option<f64>; 7] {
        [
            self.molecular_weight,
            self.h_bond_acceptors.map(f64::from),
            self.xlogp3,
            self.atom_stereocenters.map(f64::from),
            self.formal_charge.map(f64::from),
            self.covalent_units.map(f64::from),
            self.exact_mass,
        ]
    }

    pub fn get(&self, field: &str) -> Option<Option<f64>> {
        Self::FIELDS
            .iter()
            .position(|f| *f == field)
            .map(|i| self.values()[i])
    }

    /// Sets a field by name. Count fields are rounded to the nearest integer.
    pub fn set(&mut self, field: &str, value: Option<f64>) -> bool {
        match field {
            "molecular_weight" => self.molecular_weight = value,
            "h_bond_acceptors" => self.h_bond_acceptors = value.map(|v| v.round().max(0.0) as u32),
            "xlogp3" => self.xlogp3 = value,
            "atom_stereocenters" => {
                self.atom_stereocenters = value.map(|v| v.round().max(0.0) as u32)
            }
            "formal_charge" => self.formal_charge = value.map(|v| v.round() as i32),
            "covalent_units" => self.covalent_units = value.map(|v| v.round().max(0.0) as u32),
            "exact_mass" => self.exact_mass = value,
            _ => return false,
        }
        true
    }

    pub fn is_empty(&self) -> bool {
        self.values().iter().all(Option::is_none)
    }
}

/// The four relational tables produced from one or more quarterly files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawTables {
    pub main: Vec<MainRow>,
    pub events: Vec<AeRow>,
    pub outcomes: Vec<OutcomeRow>,
    pub drugs: Vec<DrugRow>,
}

impl RawTables {
    pub fn extend(&mut self, other: RawTables) {
        self.main.extend(other.main);
        self.events.extend(other.events);
        self.outcomes.extend(other.outcomes);
        self.drugs.extend(other.drugs);
    }

    /// Keys of child rows that have no parent in `main`.
    pub fn orphan_keys(&self) -> Vec<ReportKey> {
        let known: std::collections::HashSet<&ReportKey> = self.main.iter().map(|r| &r.key).collect();
        let mut orphans: Vec<ReportKey> = self
            .events
            .iter()
            .map(|r| &r.key)
            .chain(self.outcomes.iter().map(|r| &r.key))
            .chain(self.drugs.iter().map(|r| &r.key))
            .filter(|k| !known.contains(k))
            .cloned()
            .collect();
        orphans.sort();
        orphans.dedup();
        orphans
    }

    pub fn counts(&self) -> TableCounts {
        TableCounts {
            main: self.main.len(),
            events: self.events.len(),
            outcomes: self.outcomes.len(),
            drugs: self.drugs.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCounts {
    pub main: usize,
    pub events: usize,
    pub outcomes: usize,
    pub drugs: usize,
}

/// Identifies one of the four tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Table {
    Main,
    Events,
    Outcomes,
    Drugs,
}

impl Table {
    pub const ALL: [Table; 4] = [Table::Main, Table::Events, Table::Outcomes, Table::Drugs];

    pub fn name(self) -> &'static str {
        match self {
            Table::Main => "main",
            Table::Events => "ae",
            Table::Outcomes => "outcome",
            Table::Drugs => "drug",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Table::Main => &[
                "unique_aer_id_number",
                "species",
                "breed",
                "gender",
                "age_value",
                "age_unit",
                "weight_value",
                "weight_unit",
                "received_date",
            ],
            Table::Events => &["unique_aer_id_number", "term_code", "term_name", "veddra_level"],
            Table::Outcomes => &["unique_aer_id_number", "medical_status", "animals_affected"],
            Table::Drugs => &[
                "unique_aer_id_number",
                "ingredient_name",
                "brand_name",
                "dosage_form",
                "route",
                "atcvet_code",
            ],
        }
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_synonyms_normalize() {
        assert_eq!("Death".parse::<MedicalStatus>().unwrap(), MedicalStatus::Died);
        assert_eq!(" died ".parse::<MedicalStatus>().unwrap(), MedicalStatus::Died);
        assert_eq!(
            "Recovered with Sequela".parse::<MedicalStatus>().unwrap(),
            MedicalStatus::RecoveredWithSequela
        );
        assert_eq!(
            "Recovered/Normal".parse::<MedicalStatus>().unwrap(),
            MedicalStatus::Recovered
        );
        assert!("Zombified".parse::<MedicalStatus>().is_err());
    }

    #[test]
    fn empty_key_rejected() {
        assert!(ReportKey::new("").is_none());
        assert!(ReportKey::new("   ").is_none());
        assert_eq!(ReportKey::new(" A-1 ").unwrap().as_str(), "A-1");
    }

    #[test]
    fn orphan_detection() {
        let key = ReportKey::new("k").unwrap();
        let mut t = RawTables::default();
        t.events.push(AeRow {
            key: key.clone(),
            term_code: None,
            term_name: "Vomiting".into(),
            veddra_level: None,
        });
        assert_eq!(t.orphan_keys(), vec![key]);
    }
}
