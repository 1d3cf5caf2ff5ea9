use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::ingest::{AeRow, VeddraLevel};

/// Prefix given to reaction terms with no mapping.
pub const UNMAPPED_PREFIX: &str = "UNMAPPED:";

#[derive(Debug, thiserror::Error)]
#[error("{path}: line {line}: {message}")]
pub struct OntologyError {
    pub path: PathBuf,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HltEntry {
    pub hlt_name: String,
    pub soc_name: Option<String>,
}

/// Term code or name → high-level term.
#[derive(Debug, Clone, Default)]
pub struct VeddraMap {
    by_code: HashMap<String, HltEntry>,
    by_name: HashMap<String, HltEntry>,
    hlt_names: HashMap<String, String>,
}

/// How a reaction term was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermResolution {
    Mapped,
    AlreadyHlt,
    Unmapped,
}

impl VeddraMap {
    /// Adds a mapping. `term` may be a numeric term code or a term name;
    /// names are matched case-insensitively.
    pub fn insert(&mut self, term: &str, hlt_name: &str, soc_name: Option<&str>) -> Result<(), String> {
        let term = term.trim();
        let hlt = hlt_name.trim();
        if term.is_empty() {
            return Err("empty term".into());
        }
        if hlt.is_empty() {
            return Err(format!("term `{term}` maps to an empty HLT"));
        }
        let entry = HltEntry {
            hlt_name: hlt.to_string(),
            soc_name: soc_name.map(str::trim).filter(|s| !s.is_empty()).map(String::from),
        };
        self.hlt_names.insert(hlt.to_lowercase(), hlt.to_string());
        if term.chars().all(|c| c.is_ascii_digit()) {
            self.by_code.insert(term.to_string(), entry);
        } else {
            self.by_name.insert(term.to_lowercase(), entry);
        }
        Ok(())
    }

    /// Parses a TSV with a header row and columns `term, hlt[, soc]`.
    pub fn from_tsv_str(text: &str, path: &Path) -> Result<Self, OntologyError> {
        let err = |line: usize, message: String| OntologyError {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut map = VeddraMap::default();
        let mut rows = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = rows.next().ok_or_else(|| err(1, "missing header row".into()))?;
        let width = header.split('\t').count();
        if !(2..=3).contains(&width) {
            return Err(err(1, format!("expected 2 or 3 columns, found {width}")));
        }
        for (i, line) in rows {
            let cells: Vec<&str> = line.split('\t').collect();
            if cells.len() != width {
                return Err(err(i + 1, format!("expected {width} cells, found {}", cells.len())));
            }
            map.insert(cells[0], cells[1], cells.get(2).copied())
                .map_err(|m| err(i + 1, m))?;
        }
        Ok(map)
    }

    pub fn from_tsv_file(path: &Path) -> Result<Self, OntologyError> {
        let text = std::fs::read_to_string(path).map_err(|e| OntologyError {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        Self::from_tsv_str(&text, path)
    }

    pub fn len(&self) -> usize {
        self.by_code.len() + self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entry(&self, term: &AeRow) -> Option<&HltEntry> {
        term.term_code
            .as_ref()
            .and_then(|c| self.by_code.get(c.trim()))
            .or_else(|| self.by_name.get(&term.term_name.trim().to_lowercase()))
    }

    /// HLT for a reaction term plus how it was resolved.
    pub fn resolve(&self, term: &AeRow) -> (String, TermResolution) {
        if term.veddra_level == Some(VeddraLevel::Hlt) {
            return (term.term_name.trim().to_string(), TermResolution::AlreadyHlt);
        }
        if let Some(entry) = self.entry(term) {
            return (entry.hlt_name.clone(), TermResolution::Mapped);
        }
        if let Some(hlt) = self.hlt_names.get(&term.term_name.trim().to_lowercase()) {
            return (hlt.clone(), TermResolution::AlreadyHlt);
        }
        (
            format!("{UNMAPPED_PREFIX}{}", term.term_name.trim()),
            TermResolution::Unmapped,
        )
    }
}

/// HLT for a reaction term; unmapped terms become `UNMAPPED:<name>`.
pub fn map_veddra(term: &AeRow, table: &VeddraMap) -> String {
    table.resolve(term).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ReportKey;

    fn row(name: &str, code: Option<&str>, level: Option<VeddraLevel>) -> AeRow {
        AeRow {
            key: ReportKey::new("k").unwrap(),
            term_code: code.map(String::from),
            term_name: name.into(),
            veddra_level: level,
        }
    }

    fn map() -> VeddraMap {
        let tsv = "term\thlt\n\
                   Vomiting\tGastrointestinal signs\n\
                   2203\tGastrointestinal signs\n\
                   Tachycardia\tHeart disorders\n";
        VeddraMap::from_tsv_str(tsv, Path::new("t.tsv")).unwrap()
    }

    #[test]
    fn pt_maps_to_hlt() {
        assert_eq!(map_veddra(&row("Vomiting", None, Some(VeddraLevel::Pt)), &map()), "Gastrointestinal signs");
        assert_eq!(map_veddra(&row("VOMITING", None, None), &map()), "Gastrointestinal signs");
        assert_eq!(map_veddra(&row("Emesis", Some("2203"), None), &map()), "Gastrointestinal signs");
    }

    #[test]
    fn hlt_input_is_identity() {
        assert_eq!(map_veddra(&row("Heart disorders", None, None), &map()), "Heart disorders");
        let (name, how) = map().resolve(&row("Anything else", None, Some(VeddraLevel::Hlt)));
        assert_eq!((name.as_str(), how), ("Anything else", TermResolution::AlreadyHlt));
    }

    #[test]
    fn unmapped_sentinel() {
        let (name, how) = map().resolve(&row("Glowing", None, None));
        assert_eq!(name, "UNMAPPED:Glowing");
        assert_eq!(how, TermResolution::Unmapped);
    }

    #[test]
    fn empty_hlt_rejected() {
        let tsv = "term\thlt\nVomiting\t \n";
        assert!(VeddraMap::from_tsv_str(tsv, Path::new("t.tsv")).is_err());
        assert!(VeddraMap::from_tsv_str("", Path::new("t.tsv")).is_err());
    }
}
