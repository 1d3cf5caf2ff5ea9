use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::groups::{SpeciesGroup, SpeciesGroupMap};
use super::treeshap::ShapVector;
use super::ExplainError;
use crate::prepare::{ColumnKind, ColumnMeta, FeatureMatrix, OTHER_TERM};

pub const DEFAULT_RANK_N: usize = 10;
pub const DEFAULT_SUMMARY_TOP_K: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShapScope {
    AETerm,
    Ingredient,
    AllFeatures,
}

impl ShapScope {
    pub const ALL: [ShapScope; 3] = [ShapScope::AETerm, ShapScope::Ingredient, ShapScope::AllFeatures];

    pub fn as_str(self) -> &'static str {
        match self {
            ShapScope::AETerm => "ae_term",
            ShapScope::Ingredient => "ingredient",
            ShapScope::AllFeatures => "all_features",
        }
    }

    fn field(self) -> Option<&'static str> {
        match self {
            ShapScope::AETerm => Some("ae_terms"),
            ShapScope::Ingredient => Some("ingredients"),
            ShapScope::AllFeatures => None,
        }
    }

    fn includes(self, c: &ColumnMeta) -> bool {
        match self.field() {
            None => true,
            Some(f) => c.kind == ColumnKind::MultiHot && c.field == f && c.term.as_deref() != Some(OTHER_TERM),
        }
    }
}

impl fmt::Display for ShapScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShapScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ShapScope::ALL
            .into_iter()
            .find(|x| x.as_str() == s.trim())
            .ok_or_else(|| format!("unknown scope `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub name: String,
    /// Mean phi over the group rows where the feature is active.
    pub mean_signed: f64,
    /// Mean |phi| over all group rows.
    pub mean_abs: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapRanking {
    pub scope: ShapScope,
    pub group: SpeciesGroup,
    /// Descending by `mean_signed`, ties by name.
    pub entries: Vec<RankEntry>,
}

impl ShapRanking {
    pub fn top(&self, n: usize) -> &[RankEntry] {
        &self.entries[..n.min(self.entries.len())]
    }

    /// The `n` most negative entries, most negative last.
    pub fn bottom(&self, n: usize) -> &[RankEntry] {
        &self.entries[self.entries.len().saturating_sub(n)..]
    }
}

/// Species group of every row, read from the encoded `species` column.
pub fn row_groups(matrix: &FeatureMatrix, groups: &SpeciesGroupMap) -> Result<Vec<SpeciesGroup>, ExplainError> {
    let col = matrix
        .column_index("species")
        .ok_or_else(|| ExplainError::Scope("matrix has no `species` column".into()))?;
    let meta = &matrix.columns[col];
    (0..matrix.n_rows())
        .map(|i| groups.group_of(meta.category_name(matrix.value(i, col))))
        .collect()
}

fn check_aligned(vectors: &[ShapVector], matrix: &FeatureMatrix) -> Result<(), ExplainError> {
    if vectors.len() != matrix.n_rows() {
        return Err(ExplainError::Alignment(format!(
            "{} vectors for {} rows",
            vectors.len(),
            matrix.n_rows()
        )));
    }
    for (i, v) in vectors.iter().enumerate() {
        if v.key != matrix.keys[i] || v.phi.len() != matrix.n_cols() {
            return Err(ExplainError::Alignment(format!("vector {i} does not match row {}", matrix.keys[i])));
        }
    }
    Ok(())
}

fn display_name(c: &ColumnMeta) -> String {
    c.term.clone().unwrap_or_else(|| c.name.clone())
}

/// One ranking per non-empty group. Multi-hot columns average phi over rows
/// where the indicator is 1 and are left out when that set is empty; other
/// columns average over every group row.
pub fn aggregate_shap(
    vectors: &[ShapVector],
    matrix: &FeatureMatrix,
    groups: &SpeciesGroupMap,
    scope: ShapScope,
) -> Result<Vec<ShapRanking>, ExplainError> {
    check_aligned(vectors, matrix)?;
    let cols: Vec<usize> = (0..matrix.n_cols()).filter(|&j| scope.includes(&matrix.columns[j])).collect();
    if cols.is_empty() {
        return Err(ExplainError::Scope(format!("no columns for scope {scope}")));
    }
    let row_group = row_groups(matrix, groups)?;
    let mut out = Vec::new();
    for g in SpeciesGroup::ALL {
        let rows: Vec<usize> = (0..row_group.len()).filter(|&i| row_group[i] == g).collect();
        if rows.is_empty() {
            log::warn!("no rows in species group {g}; {scope} ranking omitted");
            continue;
        }
        let mut entries = Vec::new();
        for &j in &cols {
            let multi_hot = matrix.columns[j].kind == ColumnKind::MultiHot;
            let (mut sum, mut support, mut abs) = (0.0, 0usize, 0.0);
            for &i in &rows {
                let phi = vectors[i].phi[j];
                abs += phi.abs();
                if !multi_hot || matrix.value(i, j) == 1.0 {
                    sum += phi;
                    support += 1;
                }
            }
            if support == 0 {
                continue;
            }
            entries.push(RankEntry {
                name: display_name(&matrix.columns[j]),
                mean_signed: sum / support as f64,
                mean_abs: abs / rows.len() as f64,
                support,
            });
        }
        entries.sort_by(|a, b| b.mean_signed.total_cmp(&a.mean_signed).then_with(|| a.name.cmp(&b.name)));
        out.push(ShapRanking { scope, group: g, entries });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFeature {
    pub name: String,
    pub mean_abs: f64,
    /// `(row index, phi, feature value scaled to [0, 1] within the group)`.
    pub points: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    pub group: SpeciesGroup,
    /// Descending by mean |phi|, ties by column order.
    pub features: Vec<SummaryFeature>,
}

/// Beeswarm data for the `top_k` features of one group. Constant feature
/// values map to 0.5.
pub fn shap_summary(
    vectors: &[ShapVector],
    matrix: &FeatureMatrix,
    groups: &SpeciesGroupMap,
    group: SpeciesGroup,
    top_k: usize,
) -> Result<ShapSummary, ExplainError> {
    check_aligned(vectors, matrix)?;
    let row_group = row_groups(matrix, groups)?;
    let rows: Vec<usize> = (0..row_group.len()).filter(|&i| row_group[i] == group).collect();
    if rows.len() < 2 {
        log::warn!("species group {group} has {} rows; summary is degenerate", rows.len());
    }
    let n = rows.len().max(1) as f64;
    let mut ranked: Vec<(usize, f64)> = (0..matrix.n_cols())
        .map(|j| (j, rows.iter().map(|&i| vectors[i].phi[j].abs()).sum::<f64>() / n))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    let features = ranked
        .into_iter()
        .map(|(j, mean_abs)| {
            let vals: Vec<f64> = rows.iter().map(|&i| matrix.value(i, j)).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let points = rows
                .iter()
                .zip(&vals)
                .map(|(&i, &v)| {
                    let norm = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                    (i, vectors[i].phi[j], norm)
                })
                .collect();
            SummaryFeature {
                name: matrix.columns[j].name.clone(),
                mean_abs,
                points,
            }
        })
        .collect();
    Ok(ShapSummary { group, features })
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// Long format `key,feature,phi`; the base value is emitted as feature
/// `(base)`.
pub fn write_shap_values<W: Write>(out: W, vectors: &[ShapVector], feature_names: &[String]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["key", "feature", "phi"]).map_err(csv_err)?;
    for v in vectors {
        w.write_record([v.key.as_str(), "(base)", &v.base_value.to_string()]).map_err(csv_err)?;
        for (name, phi) in feature_names.iter().zip(&v.phi) {
            w.write_record([v.key.as_str(), name, &phi.to_string()]).map_err(csv_err)?;
        }
    }
    w.flush()
}

/// Top-`n` and bottom-`n` views of every ranking.
pub fn write_rankings<W: Write>(out: W, rankings: &[ShapRanking], n: usize) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "scope", "view", "rank", "name", "mean_signed_shap", "mean_abs_shap", "support"])
        .map_err(csv_err)?;
    for r in rankings {
        let len = r.entries.len();
        let views = [("top", 0, r.top(n)), ("bottom", len - r.bottom(n).len(), r.bottom(n))];
        for (view, offset, entries) in views {
            for (k, e) in entries.iter().enumerate() {
                w.write_record([
                    r.group.as_str(),
                    r.scope.as_str(),
                    view,
                    &(offset + k + 1).to_string(),
                    &e.name,
                    &e.mean_signed.to_string(),
                    &e.mean_abs.to_string(),
                    &e.support.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()
}

pub fn write_summary<W: Write>(out: W, summaries: &[ShapSummary], matrix: &FeatureMatrix) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "feature", "feature_rank", "key", "phi", "feature_value"])
        .map_err(csv_err)?;
    for s in summaries {
        for (rank, f) in s.features.iter().enumerate() {
            for &(i, phi, v) in &f.points {
                w.write_record([
                    s.group.as_str(),
                    &f.name,
                    &(rank + 1).to_string(),
                    matrix.keys[i].as_str(),
                    &phi.to_string(),
                    &v.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()
}

/// Row counts per group, for reports.
pub fn group_counts(row_groups: &[SpeciesGroup]) -> BTreeMap<SpeciesGroup, usize> {
    let mut m = BTreeMap::new();
    for g in row_groups {
        *m.entry(*g).or_insert(0) += 1;
    }
    m
}
