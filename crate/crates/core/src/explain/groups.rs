use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExplainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpeciesGroup {
    Companion,
    Livestock,
    Poultry,
}

impl SpeciesGroup {
    pub const ALL: [SpeciesGroup; 3] = [SpeciesGroup::Companion, SpeciesGroup::Livestock, SpeciesGroup::Poultry];

    pub fn as_str(self) -> &'static str {
        match self {
            SpeciesGroup::Companion => "Companion",
            SpeciesGroup::Livestock => "Livestock",
            SpeciesGroup::Poultry => "Poultry",
        }
    }
}

impl fmt::Display for SpeciesGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpeciesGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "companion" => Ok(SpeciesGroup::Companion),
            "livestock" => Ok(SpeciesGroup::Livestock),
            "poultry" => Ok(SpeciesGroup::Poultry),
            other => Err(format!("unknown species group `{other}`")),
        }
    }
}

/// Species → group, matched case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeciesGroupMap {
    entries: BTreeMap<String, SpeciesGroup>,
}

impl Default for SpeciesGroupMap {
    fn default() -> Self {
        use SpeciesGroup::*;
        let pairs = [
            ("dog", Companion),
            ("cat", Companion),
            ("cattle", Livestock),
            ("pig", Livestock),
            ("sheep", Livestock),
            ("goat", Livestock),
            ("horse", Livestock),
            ("chicken", Poultry),
            ("turkey", Poultry),
        ];
        SpeciesGroupMap::from_pairs(pairs.iter().map(|(s, g)| (s.to_string(), *g)))
    }
}

impl SpeciesGroupMap {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, SpeciesGroup)>) -> Self {
        SpeciesGroupMap {
            entries: pairs.into_iter().map(|(s, g)| (s.trim().to_lowercase(), g)).collect(),
        }
    }

    /// Parses `species<TAB>group` lines; `#` starts a comment.
    pub fn from_tsv(text: &str) -> Result<Self, ExplainError> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (s, g) = line
                .split_once('\t')
                .ok_or_else(|| ExplainError::Groups(format!("line {}: expected species<TAB>group", n + 1)))?;
            let g = g.parse().map_err(|e| ExplainError::Groups(format!("line {}: {e}", n + 1)))?;
            pairs.push((s.to_string(), g));
        }
        if pairs.is_empty() {
            return Err(ExplainError::Groups("species group map is empty".into()));
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn group_of(&self, species: &str) -> Result<SpeciesGroup, ExplainError> {
        self.entries
            .get(&species.trim().to_lowercase())
            .copied()
            .ok_or_else(|| ExplainError::UnlistedSpecies(species.to_string()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, SpeciesGroup)> {
        self.entries.iter().map(|(s, g)| (s.as_str(), *g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_membership() {
        let m = SpeciesGroupMap::default();
        assert_eq!(m.group_of("Dog").unwrap(), SpeciesGroup::Companion);
        assert_eq!(m.group_of("HORSE").unwrap(), SpeciesGroup::Livestock);
        assert_eq!(m.group_of("turkey").unwrap(), SpeciesGroup::Poultry);
        assert!(matches!(m.group_of("rabbit"), Err(ExplainError::UnlistedSpecies(_))));
    }

    #[test]
    fn tsv() {
        let m = SpeciesGroupMap::from_tsv("# custom\nRabbit\tcompanion\nhorse\tCompanion\n").unwrap();
        assert_eq!(m.group_of("rabbit").unwrap(), SpeciesGroup::Companion);
        assert_eq!(m.group_of("horse").unwrap(), SpeciesGroup::Companion);
        assert!(SpeciesGroupMap::from_tsv("dog\tpets\n").is_err());
        assert!(SpeciesGroupMap::from_tsv("").is_err());
    }
}
