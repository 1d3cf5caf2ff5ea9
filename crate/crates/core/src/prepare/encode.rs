//! Encoding of merged reports into a numeric design matrix.
//!
//! Single-valued categoricals get integer codes in sorted order of the
//! training vocabulary, starting at 1; code 0 is reserved for unseen or
//! absent values. List fields become multi-hot indicators over their top-K
//! training terms plus an `<OTHER>` indicator, or (in `label` mode) a single
//! categorical code of the `\`-joined list.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fields::{field_value, FieldValue, LIST_FIELDS, NUMERIC_FIELDS};
use super::matrix::{ColumnKind, ColumnMeta, FeatureMatrix, Label, OTHER_TERM, UNKNOWN_CODE};
use super::PrepareError;
use crate::harmonize::{join_list, MergedReport};

pub const ENCODER_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_TOP_K: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldEncoding {
    Numeric,
    Categorical,
    MultiHot,
    /// Integer code of the `\`-joined list.
    Label,
}

impl FromStr for FieldEncoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "numeric" => Ok(FieldEncoding::Numeric),
            "categorical" => Ok(FieldEncoding::Categorical),
            "multi_hot" => Ok(FieldEncoding::MultiHot),
            "label" => Ok(FieldEncoding::Label),
            other => Err(format!("unknown encoding `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub fields: Vec<(String, FieldEncoding)>,
    /// Vocabulary size per multi-hot field.
    pub top_k: usize,
}

impl Default for EncodingSpec {
    fn default() -> Self {
        let mut fields: Vec<(String, FieldEncoding)> = NUMERIC_FIELDS
            .iter()
            .map(|f| (f.to_string(), FieldEncoding::Numeric))
            .collect();
        for f in ["species", "breed", "gender", "route", "dosage_form"] {
            fields.push((f.to_string(), FieldEncoding::Categorical));
        }
        for f in ["ae_terms", "ingredients", "atcvet_subgroups"] {
            fields.push((f.to_string(), FieldEncoding::MultiHot));
        }
        EncodingSpec {
            fields,
            top_k: DEFAULT_TOP_K,
        }
    }
}

impl EncodingSpec {
    /// Switches every list field to the given encoding.
    pub fn with_list_encoding(mut self, enc: FieldEncoding) -> Self {
        for (f, e) in &mut self.fields {
            if LIST_FIELDS.contains(&f.as_str()) {
                *e = enc;
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedField {
    pub field: String,
    pub encoding: FieldEncoding,
    pub category_map: Option<BTreeMap<String, u32>>,
    pub vocabulary: Option<Vec<String>>,
}

/// Encoder fitted on training rows; serialized so that later stages
/// reproduce the same columns bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedEncoder {
    pub version: u32,
    pub spec: EncodingSpec,
    pub fields: Vec<FittedField>,
}

enum Cell<'a> {
    Num(Option<f64>),
    Text(Option<String>),
    List(&'a [String]),
}

fn cell<'a>(r: &'a MergedReport, field: &str, enc: FieldEncoding) -> Result<Cell<'a>, PrepareError> {
    let v = field_value(r, field).ok_or_else(|| PrepareError::UnknownColumn(field.to_string()))?;
    let kind_err = || PrepareError::Encoding(format!("field `{field}` cannot be encoded as {enc:?}"));
    Ok(match (enc, v) {
        (FieldEncoding::Numeric, FieldValue::Number(x)) => Cell::Num(x),
        (FieldEncoding::Categorical | FieldEncoding::Label, FieldValue::Text(t)) => Cell::Text(t),
        (FieldEncoding::Label, FieldValue::List(l)) => Cell::Text((!l.is_empty()).then(|| join_list(l))),
        (FieldEncoding::MultiHot, FieldValue::List(l)) => Cell::List(l),
        _ => return Err(kind_err()),
    })
}

/// Top `k` terms by document frequency, ties in ascending term order.
pub fn top_k_vocabulary<'a>(lists: impl Iterator<Item = &'a [String]>, k: usize) -> Vec<String> {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for list in lists {
        let mut seen: Vec<&str> = list.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *freq.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().take(k).map(|(t, _)| t.to_string()).collect()
}

impl FittedEncoder {
    pub fn fit(spec: &EncodingSpec, fit_on: &[MergedReport]) -> Result<Self, PrepareError> {
        let mut fields = Vec::with_capacity(spec.fields.len());
        for (field, enc) in &spec.fields {
            let cells: Vec<Cell<'_>> = fit_on.iter().map(|r| cell(r, field, *enc)).collect::<Result<_, _>>()?;
            if fit_on.is_empty() {
                // still validate the name
                let probe = crate::prepare::empty_report();
                cell(&probe, field, *enc)?;
            }
            let fitted = match enc {
                FieldEncoding::Numeric => FittedField {
                    field: field.clone(),
                    encoding: *enc,
                    category_map: None,
                    vocabulary: None,
                },
                FieldEncoding::Categorical | FieldEncoding::Label => {
                    let mut values: Vec<&str> = cells
                        .iter()
                        .filter_map(|c| match c {
                            Cell::Text(Some(t)) => Some(t.as_str()),
                            _ => None,
                        })
                        .collect();
                    values.sort_unstable();
                    values.dedup();
                    let map = values
                        .into_iter()
                        .enumerate()
                        .map(|(i, v)| (v.to_string(), i as u32 + 1))
                        .collect();
                    FittedField {
                        field: field.clone(),
                        encoding: *enc,
                        category_map: Some(map),
                        vocabulary: None,
                    }
                }
                FieldEncoding::MultiHot => {
                    let vocab = top_k_vocabulary(
                        cells.iter().filter_map(|c| match c {
                            Cell::List(l) => Some(*l),
                            _ => None,
                        }),
                        spec.top_k,
                    );
                    FittedField {
                        field: field.clone(),
                        encoding: *enc,
                        category_map: None,
                        vocabulary: Some(vocab),
                    }
                }
            };
            fields.push(fitted);
        }
        Ok(FittedEncoder {
            version: ENCODER_FORMAT_VERSION,
            spec: spec.clone(),
            fields,
        })
    }

    pub fn columns(&self) -> Vec<ColumnMeta> {
        let mut cols = Vec::new();
        for f in &self.fields {
            match f.encoding {
                FieldEncoding::Numeric => cols.push(ColumnMeta::numeric(&f.field)),
                FieldEncoding::Categorical | FieldEncoding::Label => cols.push(ColumnMeta {
                    name: f.field.clone(),
                    kind: ColumnKind::EncodedCategorical,
                    field: f.field.clone(),
                    category_map: f.category_map.clone(),
                    source_vocabulary: None,
                    term: None,
                }),
                FieldEncoding::MultiHot => {
                    let vocab = f.vocabulary.clone().unwrap_or_default();
                    for term in vocab.iter().map(String::as_str).chain([OTHER_TERM]) {
                        cols.push(ColumnMeta {
                            name: format!("{}={}", f.field, term),
                            kind: ColumnKind::MultiHot,
                            field: f.field.clone(),
                            category_map: None,
                            source_vocabulary: Some(vocab.clone()),
                            term: Some(term.to_string()),
                        });
                    }
                }
            }
        }
        cols
    }

    fn encode_row(&self, r: &MergedReport, width: usize) -> Result<Vec<f64>, PrepareError> {
        let mut row = Vec::with_capacity(width);
        for f in &self.fields {
            match (f.encoding, cell(r, &f.field, f.encoding)?) {
                (FieldEncoding::Numeric, Cell::Num(v)) => row.push(v.ok_or_else(|| {
                    PrepareError::Encoding(format!("`{}` is absent for report {}; impute first", f.field, r.key))
                })?),
                (_, Cell::Text(t)) => {
                    let map = f.category_map.as_ref().expect("fitted categorical");
                    let code = t.and_then(|t| map.get(&t).copied()).unwrap_or(UNKNOWN_CODE);
                    row.push(f64::from(code));
                }
                (_, Cell::List(items)) => {
                    let vocab = f.vocabulary.as_ref().expect("fitted multi-hot");
                    let start = row.len();
                    row.resize(start + vocab.len() + 1, 0.0);
                    for item in items {
                        match vocab.iter().position(|v| v == item) {
                            Some(j) => row[start + j] = 1.0,
                            None => row[start + vocab.len()] = 1.0,
                        }
                    }
                }
                _ => unreachable!("cell kind matches encoding"),
            }
        }
        Ok(row)
    }

    /// Encodes rows. Labels are attached when every row has a definitive outcome.
    pub fn transform(&self, rows: &[MergedReport]) -> Result<FeatureMatrix, PrepareError> {
        let columns = self.columns();
        let width = columns.len();
        let encoded: Vec<Vec<f64>> = rows
            .par_iter()
            .map(|r| self.encode_row(r, width))
            .collect::<Result<_, _>>()?;
        let labels: Option<Vec<Label>> = rows.iter().map(|r| Label::from_status(r.outcome)).collect();
        let labels = labels.filter(|_| !rows.is_empty());
        FeatureMatrix::new(
            encoded.concat(),
            columns,
            rows.iter().map(|r| r.key.clone()).collect(),
            labels,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("encoder serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PrepareError> {
        let enc: FittedEncoder =
            serde_json::from_str(text).map_err(|e| PrepareError::Encoding(format!("encoder file: {e}")))?;
        if enc.version != ENCODER_FORMAT_VERSION {
            return Err(PrepareError::Encoding(format!(
                "encoder file version {} is not supported (expected {})",
                enc.version, ENCODER_FORMAT_VERSION
            )));
        }
        Ok(enc)
    }
}

/// Fits on `fit_on` and encodes `table`.
pub fn encode(
    table: &[MergedReport],
    spec: &EncodingSpec,
    fit_on: &[MergedReport],
) -> Result<(FeatureMatrix, FittedEncoder), PrepareError> {
    let enc = FittedEncoder::fit(spec, fit_on)?;
    Ok((enc.transform(table)?, enc))
}
