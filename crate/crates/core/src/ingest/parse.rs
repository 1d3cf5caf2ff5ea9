//! Quarterly JSON parsing.
//!
//! The document is parsed in two steps: the envelope (`results` array) is
//! decoded first, then every report is decoded on its own so that a malformed
//! report is skipped and recorded instead of failing the whole quarter.

use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use flate2::read::GzDecoder;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::value::RawValue;

use super::types::*;
use super::IngestError;

/// Why a report was skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordDiagnostic {
    /// Position of the report in its file's `results` array.
    pub index: usize,
    pub key: Option<String>,
    pub reason: String,
}

/// Tables plus the reports that could not be used.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedQuarter {
    pub tables: RawTables,
    pub skipped: Vec<RecordDiagnostic>,
}

impl ParsedQuarter {
    pub fn skipped_count(&self) -> usize {
        self.skipped.len()
    }
}

#[derive(Deserialize)]
struct Envelope<'a> {
    #[serde(borrow)]
    results: Option<Vec<&'a RawValue>>,
}

/// Numbers appear both as JSON numbers and as strings in the feed.
#[derive(Deserialize)]
#[serde(untagged)]
enum Num {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Num {
    fn as_f64(&self) -> Result<Option<f64>, String> {
        match self {
            Num::Int(v) => Ok(Some(*v as f64)),
            Num::Float(v) => Ok(Some(*v)),
            Num::Text(s) if s.trim().is_empty() => Ok(None),
            Num::Text(s) => s
                .trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|_| format!("not a number: `{s}`")),
        }
    }

    fn as_text(&self) -> String {
        match self {
            Num::Int(v) => v.to_string(),
            Num::Float(v) => v.to_string(),
            Num::Text(s) => s.trim().to_string(),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize, Default)]
struct RawReport {
    unique_aer_id_number: Option<Num>,
    original_receive_date: Option<String>,
    animal: Option<RawAnimal>,
    #[serde(default)]
    drug: Vec<RawDrug>,
    #[serde(default)]
    reaction: Vec<RawReaction>,
    #[serde(default)]
    outcome: Vec<RawOutcome>,
}

#[derive(Deserialize, Default)]
struct RawAnimal {
    species: Option<String>,
    gender: Option<String>,
    breed: Option<RawBreed>,
    age: Option<RawMeasure>,
    weight: Option<RawMeasure>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawBreed {
    Plain(String),
    Nested { breed_component: Option<OneOrMany> },
}

#[derive(Deserialize, Default)]
struct RawMeasure {
    min: Option<Num>,
    unit: Option<String>,
}

#[derive(Deserialize, Default)]
struct RawDrug {
    #[serde(default)]
    active_ingredients: Vec<RawIngredient>,
    brand_name: Option<String>,
    dosage_form: Option<String>,
    route: Option<String>,
    atc_vet_code: Option<String>,
}

#[derive(Deserialize, Default)]
struct RawIngredient {
    name: Option<String>,
}

#[derive(Deserialize, Default)]
struct RawReaction {
    veddra_term_code: Option<Num>,
    veddra_term_name: Option<String>,
    veddra_level: Option<String>,
}

#[derive(Deserialize, Default)]
struct RawOutcome {
    medical_status: Option<String>,
    number_of_animals_affected: Option<Num>,
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.map(|v| v.trim().to_string()).filter(|v| !v.is_empty())
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y%m%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y-%m-%d"))
        .map_err(|_| format!("bad date `{s}`"))
}

struct ReportRows {
    main: MainRow,
    events: Vec<AeRow>,
    outcomes: Vec<OutcomeRow>,
    drugs: Vec<DrugRow>,
}

fn convert(raw: RawReport) -> Result<ReportRows, (Option<String>, String)> {
    let key_text = raw.unique_aer_id_number.as_ref().map(Num::as_text);
    let key = key_text
        .clone()
        .and_then(ReportKey::new)
        .ok_or((None, "missing unique_aer_id_number".to_string()))?;
    let fail = |reason: String| (key_text.clone(), reason);

    let animal = raw.animal.unwrap_or_default();
    let species = non_empty(animal.species).ok_or_else(|| fail("missing species".into()))?;
    let breed = match animal.breed {
        Some(RawBreed::Plain(s)) => non_empty(Some(s)),
        Some(RawBreed::Nested {
            breed_component: Some(OneOrMany::One(s)),
        }) => non_empty(Some(s)),
        Some(RawBreed::Nested {
            breed_component: Some(OneOrMany::Many(parts)),
        }) => {
            let parts: Vec<String> = parts.into_iter().filter_map(|p| non_empty(Some(p))).collect();
            (!parts.is_empty()).then(|| parts.join("/"))
        }
        _ => None,
    };

    let (age_value, age_unit) = match animal.age {
        Some(m) => {
            let value = m.min.as_ref().map(Num::as_f64).transpose().map_err(&fail)?.flatten();
            let unit = non_empty(m.unit)
                .map(|u| u.parse::<AgeUnit>())
                .transpose()
                .map_err(|e| fail(e.to_string()))?;
            if let Some(v) = value {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(fail(format!("invalid age {v}")));
                }
                if unit.is_none() {
                    return Err(fail("age without unit".into()));
                }
            }
            (value, if value.is_some() { unit } else { None })
        }
        None => (None, None),
    };
    let (weight_value, weight_unit) = match animal.weight {
        Some(m) => {
            let value = m.min.as_ref().map(Num::as_f64).transpose().map_err(&fail)?.flatten();
            let unit = non_empty(m.unit)
                .map(|u| u.parse::<WeightUnit>())
                .transpose()
                .map_err(|e| fail(e.to_string()))?;
            if let Some(v) = value {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(fail(format!("invalid weight {v}")));
                }
                if unit.is_none() {
                    return Err(fail("weight without unit".into()));
                }
            }
            (value, if value.is_some() { unit } else { None })
        }
        None => (None, None),
    };
    let received_date = non_empty(raw.original_receive_date)
        .map(|s| parse_date(&s))
        .transpose()
        .map_err(&fail)?;

    let main = MainRow {
        key: key.clone(),
        species,
        breed,
        gender: non_empty(animal.gender),
        age_value,
        age_unit,
        weight_value,
        weight_unit,
        received_date,
    };

    let mut events = Vec::with_capacity(raw.reaction.len());
    for r in raw.reaction {
        let term_name =
            non_empty(r.veddra_term_name).ok_or_else(|| fail("reaction without term name".into()))?;
        let veddra_level = non_empty(r.veddra_level)
            .map(|l| l.parse::<VeddraLevel>())
            .transpose()
            .map_err(|e| fail(e.to_string()))?;
        events.push(AeRow {
            key: key.clone(),
            term_code: r.veddra_term_code.map(|c| c.as_text()).filter(|c| !c.is_empty()),
            term_name,
            veddra_level,
        });
    }

    let mut outcomes = Vec::with_capacity(raw.outcome.len());
    for o in raw.outcome {
        let status_text =
            non_empty(o.medical_status).ok_or_else(|| fail("outcome without medical_status".into()))?;
        let medical_status = status_text
            .parse::<MedicalStatus>()
            .map_err(|e| fail(e.to_string()))?;
        let animals_affected = match o.number_of_animals_affected.as_ref().map(Num::as_f64) {
            None => None,
            Some(Ok(None)) => None,
            Some(Ok(Some(v))) if v >= 0.0 && v.fract() == 0.0 => Some(v as u64),
            Some(Ok(Some(v))) => return Err(fail(format!("invalid animal count {v}"))),
            Some(Err(e)) => return Err(fail(e)),
        };
        outcomes.push(OutcomeRow {
            key: key.clone(),
            medical_status,
            animals_affected,
        });
    }

    let mut drugs = Vec::new();
    for d in raw.drug {
        let names: Vec<String> = d
            .active_ingredients
            .into_iter()
            .filter_map(|i| non_empty(i.name))
            .collect();
        if names.is_empty() {
            return Err(fail("drug entry without active ingredient".into()));
        }
        let brand_name = non_empty(d.brand_name);
        let dosage_form = non_empty(d.dosage_form);
        let route = non_empty(d.route);
        let atcvet_code = non_empty(d.atc_vet_code);
        for ingredient_name in names {
            drugs.push(DrugRow {
                key: key.clone(),
                ingredient_name,
                brand_name: brand_name.clone(),
                dosage_form: dosage_form.clone(),
                route: route.clone(),
                atcvet_code: atcvet_code.clone(),
            });
        }
    }

    Ok(ReportRows {
        main,
        events,
        outcomes,
        drugs,
    })
}

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Parses one quarterly JSON document into the four tables.
pub fn parse_quarter(json_text: &str) -> Result<ParsedQuarter, IngestError> {
    let envelope: Envelope<'_> = serde_json::from_str(json_text).map_err(|e| IngestError::Json {
        offset: byte_offset(json_text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let results = envelope.results.ok_or(IngestError::MissingResults)?;

    let mut out = ParsedQuarter::default();
    for (index, raw) in results.into_iter().enumerate() {
        let decoded: Result<RawReport, _> = serde_json::from_str(raw.get());
        let rows = match decoded {
            Ok(report) => convert(report),
            Err(e) => Err((None, format!("malformed report: {e}"))),
        };
        match rows {
            Ok(rows) => {
                out.tables.main.push(rows.main);
                out.tables.events.extend(rows.events);
                out.tables.outcomes.extend(rows.outcomes);
                out.tables.drugs.extend(rows.drugs);
            }
            Err((key, reason)) => {
                log::debug!("skipping report #{index}: {reason}");
                out.skipped.push(RecordDiagnostic { index, key, reason });
            }
        }
    }
    Ok(out)
}

/// Reads a plain or gzip-compressed JSON file.
pub fn read_json_file(path: &Path) -> Result<String, IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let bytes = std::fs::read(path).map_err(io_err)?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut text = String::new();
        GzDecoder::new(bytes.as_slice())
            .read_to_string(&mut text)
            .map_err(io_err)?;
        Ok(text)
    } else {
        String::from_utf8(bytes).map_err(|e| {
            io_err(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })
    }
}

pub fn parse_quarter_file(path: &Path) -> Result<ParsedQuarter, IngestError> {
    let text = read_json_file(path)?;
    parse_quarter(&text).map_err(|e| match e {
        IngestError::Json { offset, message } => IngestError::JsonFile {
            path: path.to_path_buf(),
            offset,
            message,
        },
        other => other,
    })
}

/// Parses several files in parallel; results are concatenated in the order given.
pub fn parse_files(paths: &[PathBuf]) -> Result<ParsedQuarter, IngestError> {
    let parts: Vec<ParsedQuarter> = paths
        .par_iter()
        .map(|p| parse_quarter_file(p))
        .collect::<Result<_, _>>()?;
    let mut out = ParsedQuarter::default();
    for part in parts {
        out.tables.extend(part.tables);
        out.skipped.extend(part.skipped);
    }
    Ok(out)
}

/// JSON and gzip-JSON files in `dir`, sorted by file name.
pub fn list_input_files(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let io_err = |source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if path.is_file() && (name.ends_with(".json") || name.ends_with(".json.gz")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_REPORT: &str = r#"{"meta": {}, "results": [{
        "unique_aer_id_number": "USA-1",
        "original_receive_date": "20190412",
        "animal": {"species": "Dog", "gender": "Female",
                   "breed": {"is_crossbred": "false", "breed_component": "Beagle"},
                   "age": {"min": "3", "unit": "Year"},
                   "weight": {"min": 12.5, "unit": "Kilogram"}},
        "drug": [
            {"active_ingredients": [{"name": "Amoxicillin"}], "route": "Oral", "atc_vet_code": "QJ01CA04"},
            {"active_ingredients": [{"name": "Meloxicam"}], "dosage_form": "Tablet"}
        ],
        "reaction": [
            {"veddra_term_code": "1", "veddra_term_name": "Vomiting"},
            {"veddra_term_code": 2, "veddra_term_name": "Diarrhoea"},
            {"veddra_term_name": "Lethargy", "veddra_level": "PT"}
        ],
        "outcome": [{"medical_status": "Recovered/Normal", "number_of_animals_affected": "1"}]
    }]}"#;

    #[test]
    fn cardinality_follows_report_structure() {
        let parsed = parse_quarter(ONE_REPORT).unwrap();
        let c = parsed.tables.counts();
        assert_eq!((c.main, c.drugs, c.events, c.outcomes), (1, 2, 3, 1));
        let main = &parsed.tables.main[0];
        assert_eq!(main.breed.as_deref(), Some("Beagle"));
        assert_eq!(main.age_unit, Some(AgeUnit::Year));
        assert_eq!(main.weight_value, Some(12.5));
        assert_eq!(main.received_date, NaiveDate::from_ymd_opt(2019, 4, 12));
        assert_eq!(parsed.tables.events[1].term_code.as_deref(), Some("2"));
        assert_eq!(parsed.tables.events[2].veddra_level, Some(VeddraLevel::Pt));
        assert_eq!(parsed.tables.outcomes[0].medical_status, MedicalStatus::Recovered);
        assert!(parsed.tables.orphan_keys().is_empty());
    }

    #[test]
    fn empty_results() {
        let parsed = parse_quarter(r#"{"results": []}"#).unwrap();
        assert_eq!(parsed.tables, RawTables::default());
        assert!(parsed.skipped.is_empty());
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let text = "{\"results\": [\n  {\"a\": }\n]}";
        match parse_quarter(text) {
            Err(IngestError::Json { offset, .. }) => {
                assert_eq!(&text[offset..offset + 1], "}");
            }
            other => panic!("expected JSON error, got {other:?}"),
        }
    }

    #[test]
    fn missing_id_is_skipped_and_counted() {
        let text = r#"{"results": [
            {"animal": {"species": "Cat"}},
            {"unique_aer_id_number": "k2", "animal": {"species": "Cat"}},
            {"unique_aer_id_number": "k3", "animal": {"species": "Cat"},
             "outcome": [{"medical_status": "Teleported"}]}
        ]}"#;
        let parsed = parse_quarter(text).unwrap();
        assert_eq!(parsed.tables.main.len(), 1);
        assert_eq!(parsed.skipped_count(), 2);
        assert_eq!(parsed.skipped[0].index, 0);
        assert!(parsed.skipped[1].reason.contains("Teleported"));
    }

    #[test]
    fn negative_age_rejected() {
        let text = r#"{"results": [{"unique_aer_id_number": "k", "animal":
            {"species": "Cat", "age": {"min": "-1", "unit": "Year"}}}]}"#;
        let parsed = parse_quarter(text).unwrap();
        assert!(parsed.tables.main.is_empty());
        assert_eq!(parsed.skipped_count(), 1);
    }

    #[test]
    fn missing_results_array() {
        assert!(matches!(parse_quarter("{}"), Err(IngestError::MissingResults)));
    }
}
