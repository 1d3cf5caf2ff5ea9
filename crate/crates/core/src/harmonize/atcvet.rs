use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::veddra::OntologyError;

/// A syntactically valid ATCvet code:
/// `Q` + anatomical letter + 2 digits [+ letter [+ letter [+ 2 digits]]].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtcvetCode(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid ATCvet code `{code}`: {reason}")]
pub struct AtcvetError {
    pub code: String,
    pub reason: &'static str,
}

/// Length of the chemical-subgroup (level 4) prefix.
pub const CHEMICAL_SUBGROUP_LEN: usize = 6;

impl FromStr for AtcvetCode {
    type Err = AtcvetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let code = s.trim().to_ascii_uppercase();
        let fail = |reason| AtcvetError {
            code: s.to_string(),
            reason,
        };
        let b = code.as_bytes();
        if b.first() != Some(&b'Q') {
            return Err(fail("must start with Q"));
        }
        if !matches!(b.len(), 4 | 5 | 6 | 8) {
            return Err(fail("length must be 4, 5, 6 or 8"));
        }
        let letter = |i: usize| b[i].is_ascii_uppercase();
        let digit = |i: usize| b[i].is_ascii_digit();
        if !letter(1) {
            return Err(fail("anatomical group must be a letter"));
        }
        if !(digit(2) && digit(3)) {
            return Err(fail("therapeutic subgroup must be two digits"));
        }
        if b.len() >= 5 && !letter(4) {
            return Err(fail("pharmacological subgroup must be a letter"));
        }
        if b.len() >= 6 && !letter(5) {
            return Err(fail("chemical subgroup must be a letter"));
        }
        if b.len() == 8 && !(digit(6) && digit(7)) {
            return Err(fail("chemical substance must be two digits"));
        }
        Ok(AtcvetCode(code))
    }
}

impl AtcvetCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Hierarchy level, 2 (therapeutic subgroup) through 5 (substance).
    pub fn level(&self) -> u8 {
        match self.0.len() {
            4 => 2,
            5 => 3,
            6 => 4,
            _ => 5,
        }
    }

    pub fn is_under_specified(&self) -> bool {
        self.0.len() < CHEMICAL_SUBGROUP_LEN
    }
}

impl fmt::Display for AtcvetCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Chemical-subgroup prefix; codes above level 4 are returned unchanged.
pub fn map_atcvet(code: &AtcvetCode) -> String {
    code.0[..code.0.len().min(CHEMICAL_SUBGROUP_LEN)].to_string()
}

/// Code → display name for chemical subgroups.
#[derive(Debug, Clone, Default)]
pub struct AtcvetIndex {
    names: HashMap<String, String>,
}

impl AtcvetIndex {
    pub fn from_tsv_str(text: &str, path: &Path) -> Result<Self, OntologyError> {
        let err = |line: usize, message: String| OntologyError {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut rows = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        rows.next().ok_or_else(|| err(1, "missing header row".into()))?;
        let mut names = HashMap::new();
        for (i, line) in rows {
            let cells: Vec<&str> = line.split('\t').collect();
            if cells.len() != 2 {
                return Err(err(i + 1, format!("expected 2 cells, found {}", cells.len())));
            }
            let code: AtcvetCode = cells[0].parse().map_err(|e: AtcvetError| err(i + 1, e.to_string()))?;
            names.insert(code.0, cells[1].trim().to_string());
        }
        Ok(AtcvetIndex { names })
    }

    pub fn from_tsv_file(path: &Path) -> Result<Self, OntologyError> {
        let text = std::fs::read_to_string(path).map_err(|e| OntologyError {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        Self::from_tsv_str(&text, path)
    }

    pub fn name(&self, subgroup: &str) -> Option<&str> {
        self.names.get(subgroup).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}
