use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PrepareError;
use crate::ingest::{MedicalStatus, ReportKey};

/// Binary outcome label. Class index 0 is Death, 1 is Recovered; model
/// margins are log-odds of Recovered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Death,
    Recovered,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Death, Label::Recovered];

    pub fn index(self) -> usize {
        match self {
            Label::Death => 0,
            Label::Recovered => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Death
        } else {
            Label::Recovered
        }
    }

    /// 1.0 for Recovered, 0.0 for Death.
    pub fn target(self) -> f64 {
        self.index() as f64
    }

    pub fn other(self) -> Label {
        match self {
            Label::Death => Label::Recovered,
            Label::Recovered => Label::Death,
        }
    }

    /// Label for a definitive outcome, `None` for outcomes left unlabeled.
    pub fn from_status(status: MedicalStatus) -> Option<Label> {
        match status {
            MedicalStatus::Died => Some(Label::Death),
            MedicalStatus::Recovered | MedicalStatus::RecoveredWithSequela => Some(Label::Recovered),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Death => "Death",
            Label::Recovered => "Recovered",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Death" => Ok(Label::Death),
            "Recovered" => Ok(Label::Recovered),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    EncodedCategorical,
    MultiHot,
}

/// Reserved code for unseen or absent categories.
pub const UNKNOWN_CODE: u32 = 0;
pub const UNKNOWN_CATEGORY: &str = "UNKNOWN";
/// Multi-hot indicator for terms outside the fitted vocabulary.
pub const OTHER_TERM: &str = "<OTHER>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    /// Report field the column was derived from.
    pub field: String,
    /// Category → code for encoded categoricals; code 0 is `UNKNOWN`.
    pub category_map: Option<BTreeMap<String, u32>>,
    /// Fitted vocabulary of the source field, for multi-hot columns.
    pub source_vocabulary: Option<Vec<String>>,
    /// The term this indicator stands for, for multi-hot columns.
    pub term: Option<String>,
}

impl ColumnMeta {
    pub fn numeric(name: &str) -> Self {
        ColumnMeta {
            name: name.to_string(),
            kind: ColumnKind::Numeric,
            field: name.to_string(),
            category_map: None,
            source_vocabulary: None,
            term: None,
        }
    }

    /// Category name for a code, `UNKNOWN` for code 0 or unmapped codes.
    pub fn category_name(&self, code: f64) -> &str {
        self.category_map
            .as_ref()
            .and_then(|m| m.iter().find(|(_, c)| f64::from(**c) == code))
            .map(|(name, _)| name.as_str())
            .unwrap_or(UNKNOWN_CATEGORY)
    }
}

/// Dense row-major design matrix with row keys, optional labels and optional
/// sample weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    pub columns: Vec<ColumnMeta>,
    pub labels: Option<Vec<Label>>,
    pub keys: Vec<ReportKey>,
    pub weights: Option<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(
        values: Vec<f64>,
        columns: Vec<ColumnMeta>,
        keys: Vec<ReportKey>,
        labels: Option<Vec<Label>>,
    ) -> Result<Self, PrepareError> {
        let n_cols = columns.len();
        if values.len() != keys.len() * n_cols {
            return Err(PrepareError::Shape(format!(
                "{} values for {} rows x {} columns",
                values.len(),
                keys.len(),
                n_cols
            )));
        }
        if let Some(l) = &labels {
            if l.len() != keys.len() {
                return Err(PrepareError::Shape(format!(
                    "{} labels for {} rows",
                    l.len(),
                    keys.len()
                )));
            }
        }
        if let Some(pos) = values.iter().position(|v| v.is_nan()) {
            return Err(PrepareError::Shape(format!(
                "NaN at row {}, column `{}`",
                pos / n_cols.max(1),
                columns[pos % n_cols.max(1)].name
            )));
        }
        Ok(FeatureMatrix {
            values,
            columns,
            labels,
            keys,
            weights: None,
        })
    }

    /// Unlabeled matrix over anonymous numeric columns `f0, f1, ...`.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<Label>>) -> Result<Self, PrepareError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(PrepareError::Shape("ragged rows".into()));
        }
        let columns = (0..n_cols).map(|j| ColumnMeta::numeric(&format!("f{j}"))).collect();
        let keys = (0..rows.len())
            .map(|i| ReportKey::new(format!("row{i:06}")).expect("non-empty"))
            .collect();
        Self::new(rows.concat(), columns, keys, labels)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, PrepareError> {
        if weights.len() != self.n_rows() {
            return Err(PrepareError::Shape(format!(
                "{} weights for {} rows",
                weights.len(),
                self.n_rows()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(PrepareError::Shape("weights must be positive and finite".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_cols();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.value(i, col)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn labels(&self) -> Result<&[Label], PrepareError> {
        self.labels.as_deref().ok_or(PrepareError::MissingLabels)
    }

    /// Row counts as `[death, recovered]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0, 0];
        for l in self.labels.iter().flatten() {
            c[l.index()] += 1;
        }
        c
    }

    /// New matrix with the given rows in the given order (repeats allowed).
    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let n = self.n_cols();
        let mut values = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            values,
            columns: self.columns.clone(),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            keys: idx.iter().map(|&i| self.keys[i].clone()).collect(),
            weights: self.weights.as_ref().map(|w| idx.iter().map(|&i| w[i]).collect()),
        }
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(self.n_rows() * cols.len());
        for row in self.rows() {
            values.extend(cols.iter().map(|&j| row[j]));
        }
        FeatureMatrix {
            values,
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            labels: self.labels.clone(),
            keys: self.keys.clone(),
            weights: self.weights.clone(),
        }
    }

    /// Drops columns by name; unknown names are ignored.
    pub fn drop_columns(&self, names: &[String]) -> FeatureMatrix {
        let keep: Vec<usize> = (0..self.n_cols())
            .filter(|&j| !names.contains(&self.columns[j].name))
            .collect();
        self.select_columns(&keep)
    }

    /// Appends the rows of `other`, which must have identical columns.
    /// Labels and weights are kept only if both sides carry them; a side
    /// without weights counts as unit weight.
    pub fn concat(&self, other: &FeatureMatrix) -> Result<FeatureMatrix, PrepareError> {
        if self.columns != other.columns {
            return Err(PrepareError::Shape("column metadata differs".into()));
        }
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        let weights = if self.weights.is_none() && other.weights.is_none() {
            None
        } else {
            Some((0..self.n_rows()).map(|i| self.weight(i)).chain((0..other.n_rows()).map(|i| other.weight(i))).collect())
        };
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(FeatureMatrix {
            values,
            columns: self.columns.clone(),
            labels,
            keys: self.keys.iter().chain(&other.keys).cloned().collect(),
            weights,
        })
    }

    pub fn push_row(&mut self, key: ReportKey, row: &[f64], label: Option<Label>, weight: Option<f64>) {
        debug_assert_eq!(row.len(), self.n_cols());
        self.values.extend_from_slice(row);
        self.keys.push(key);
        if let (Some(labels), Some(l)) = (&mut self.labels, label) {
            labels.push(l);
        }
        if let Some(w) = &mut self.weights {
            w.push(weight.unwrap_or(1.0));
        }
    }

    /// Writes a TSV: `key, label, weight, <columns...>`. Floats are written in
    /// shortest round-trip form, so [`FeatureMatrix::read_tsv`] restores
    /// values exactly given the same column metadata.
    pub fn write_tsv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "key\tlabel\tweight")?;
        for c in &self.columns {
            write!(out, "\t{}", c.name.replace(['\t', '\n'], " "))?;
        }
        writeln!(out)?;
        for i in 0..self.n_rows() {
            let label = self.labels.as_ref().map_or("", |l| l[i].as_str());
            let weight = self.weights.as_ref().map(|w| w[i].to_string()).unwrap_or_default();
            write!(out, "{}\t{}\t{}", self.keys[i], label, weight)?;
            for v in self.row(i) {
                write!(out, "\t{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_tsv(text: &str, columns: Vec<ColumnMeta>) -> Result<FeatureMatrix, PrepareError> {
        let bad = |line: usize, m: String| PrepareError::Shape(format!("matrix line {line}: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "empty".into()))?;
        let n_header = header.split('\t').count();
        if n_header != columns.len() + 3 {
            return Err(bad(1, format!("{} header cells for {} columns", n_header, columns.len())));
        }
        let mut values = Vec::new();
        let mut keys = Vec::new();
        let mut labels = Vec::new();
        let mut weights = Vec::new();
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            let cells: Vec<&str> = line.split('\t').collect();
            if cells.len() != n_header {
                return Err(bad(n, "wrong cell count".into()));
            }
            keys.push(ReportKey::new(cells[0]).ok_or_else(|| bad(n, "empty key".into()))?);
            if !cells[1].is_empty() {
                labels.push(cells[1].parse::<Label>().map_err(|e| bad(n, e))?);
            }
            if !cells[2].is_empty() {
                weights.push(cells[2].parse::<f64>().map_err(|e| bad(n, e.to_string()))?);
            }
            for c in &cells[3..] {
                values.push(c.parse::<f64>().map_err(|e| bad(n, e.to_string()))?);
            }
        }
        let labels = match labels.len() {
            0 if !keys.is_empty() => None,
            n if n == keys.len() => Some(labels),
            _ => return Err(bad(0, "labels present on some rows only".into())),
        };
        let m = FeatureMatrix::new(values, columns, keys, labels)?;
        match weights.len() {
            0 => Ok(m),
            n if n == m.n_rows() => m.with_weights(weights),
            _ => Err(bad(0, "weights present on some rows only".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m() -> FeatureMatrix {
        FeatureMatrix::from_rows(
            &[vec![1.0, 2.0], vec![3.0, 4.0], vec![0.1, -7.25]],
            Some(vec![Label::Death, Label::Recovered, Label::Recovered]),
        )
        .unwrap()
    }

    #[test]
    fn shape_checks() {
        assert!(FeatureMatrix::new(vec![1.0], vec![], vec![], None).is_err());
        assert!(FeatureMatrix::from_rows(&[vec![f64::NAN]], None).is_err());
        assert_eq!(m().class_counts(), [1, 2]);
    }

    #[test]
    fn row_and_column_selection() {
        let s = m().select_rows(&[2, 0, 2]);
        assert_eq!(s.row(0), &[0.1, -7.25]);
        assert_eq!(s.labels.as_ref().unwrap()[1], Label::Death);
        let c = m().drop_columns(&["f0".to_string()]);
        assert_eq!(c.n_cols(), 1);
        assert_eq!(c.row(1), &[4.0]);
    }

    #[test]
    fn tsv_round_trip() {
        let a = m().with_weights(vec![1.0, 0.5, 2.0]).unwrap();
        let mut buf = Vec::new();
        a.write_tsv(&mut buf).unwrap();
        let b = FeatureMatrix::read_tsv(std::str::from_utf8(&buf).unwrap(), a.columns.clone()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn concat_fills_unit_weights() {
        let a = m().with_weights(vec![1.0, 0.5, 2.0]).unwrap();
        let c = a.concat(&m()).unwrap();
        assert_eq!(c.n_rows(), 6);
        assert_eq!(c.weights.as_ref().unwrap()[4], 1.0);
    }
}
