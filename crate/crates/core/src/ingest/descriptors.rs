//! Physicochemical descriptor lookup for active ingredients.
//!
//! The default provider is a bundled name→descriptor TSV table. An HTTP
//! provider speaking the PubChem PUG-REST property API is available for
//! online enrichment; it caches every response on disk and retries transient
//! failures with exponential backoff.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use sha2::{Digest, Sha256};

use super::types::ChemDescriptors;

/// Environment variable overriding the HTTP provider's base URL.
pub const ENV_BASE_URL: &str = "VETPV_PUBCHEM_URL";
/// Environment variable naming the HTTP provider's cache directory.
pub const ENV_CACHE_DIR: &str = "VETPV_DESCRIPTOR_CACHE";
pub const DEFAULT_BASE_URL: &str = "https://pubchem.ncbi.nlm.nih.gov/rest/pug";

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("descriptor table {path}: {message}")]
    Table { path: PathBuf, message: String },
    #[error("descriptor cache {path}: {source}")]
    Cache {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("descriptor request for `{name}` failed after {attempts} attempt(s): {message}")]
    Http {
        name: String,
        attempts: u32,
        message: String,
    },
    #[error("unexpected descriptor response for `{name}`: {message}")]
    Response { name: String, message: String },
}

/// Source of descriptors keyed by normalized ingredient name.
pub trait DescriptorProvider: Send + Sync {
    /// `Ok(None)` means the name is unknown to the provider.
    fn lookup(&self, normalized_name: &str) -> Result<Option<ChemDescriptors>, ProviderError>;
}

/// Trimmed, lower-cased ingredient name.
pub fn normalize_name(name: &str) -> String {
    name.trim().to_lowercase()
}

fn missing_names() -> &'static Mutex<HashSet<String>> {
    static MISSING: OnceLock<Mutex<HashSet<String>>> = OnceLock::new();
    MISSING.get_or_init(|| Mutex::new(HashSet::new()))
}

/// Looks up descriptors for one ingredient. Unknown names yield `Ok(None)`
/// and are logged once per process.
pub fn fetch_descriptors(
    ingredient_name: &str,
    provider: &dyn DescriptorProvider,
) -> Result<Option<ChemDescriptors>, ProviderError> {
    let name = normalize_name(ingredient_name);
    let found = provider.lookup(&name)?;
    if found.is_none() {
        let mut missing = missing_names().lock().unwrap_or_else(|e| e.into_inner());
        if missing.insert(name.clone()) {
            log::info!("no descriptors for ingredient `{name}`");
        }
    }
    Ok(found)
}

/// Resolves every distinct ingredient name, keyed by normalized name.
pub fn resolve_all<'a>(
    names: impl IntoIterator<Item = &'a str>,
    provider: &dyn DescriptorProvider,
) -> Result<HashMap<String, ChemDescriptors>, ProviderError> {
    let mut out = HashMap::new();
    let mut seen = HashSet::new();
    for name in names {
        let norm = normalize_name(name);
        if !seen.insert(norm.clone()) {
            continue;
        }
        if let Some(d) = fetch_descriptors(&norm, provider)? {
            out.insert(norm, d);
        }
    }
    Ok(out)
}

/// In-memory table, usually loaded from the bundled TSV.
#[derive(Debug, Clone, Default)]
pub struct TableProvider {
    entries: HashMap<String, ChemDescriptors>,
}

impl TableProvider {
    pub fn new(entries: impl IntoIterator<Item = (String, ChemDescriptors)>) -> Self {
        TableProvider {
            entries: entries
                .into_iter()
                .map(|(k, v)| (normalize_name(&k), v))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses a TSV with header
    /// `name, molecular_weight, h_bond_acceptors, xlogp3, atom_stereocenters,
    /// formal_charge, covalent_units, exact_mass`. Empty cells are absent.
    pub fn from_tsv_str(text: &str, path: &Path) -> Result<Self, ProviderError> {
        let err = |line: usize, message: String| ProviderError::Table {
            path: path.to_path_buf(),
            message: format!("line {line}: {message}"),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing header row".into()))?;
        let header: Vec<&str> = header.split('\t').map(str::trim).collect();
        if header.first() != Some(&"name") {
            return Err(err(1, "first column must be `name`".into()));
        }
        for col in &header[1..] {
            if ChemDescriptors::FIELDS.iter().all(|f| f != col) {
                return Err(err(1, format!("unknown descriptor column `{col}`")));
            }
        }
        let mut entries = HashMap::new();
        for (i, line) in lines {
            let n = i + 1;
            let cells: Vec<&str> = line.split('\t').collect();
            if cells.len() != header.len() {
                return Err(err(n, format!("expected {} cells, found {}", header.len(), cells.len())));
            }
            let name = normalize_name(cells[0]);
            if name.is_empty() {
                return Err(err(n, "empty name".into()));
            }
            let mut d = ChemDescriptors::default();
            for (col, cell) in header[1..].iter().zip(&cells[1..]) {
                let cell = cell.trim();
                if cell.is_empty() {
                    continue;
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| err(n, format!("{col}: not a number `{cell}`")))?;
                d.set(col, Some(v));
            }
            validate(&d).map_err(|m| err(n, m))?;
            entries.insert(name, d);
        }
        Ok(TableProvider { entries })
    }

    pub fn from_tsv_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProviderError::Table {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_tsv_str(&text, path)
    }
}

fn validate(d: &ChemDescriptors) -> Result<(), String> {
    if let Some(mw) = d.molecular_weight {
        if !(mw > 0.0) {
            return Err(format!("molecular_weight must be positive, got {mw}"));
        }
    }
    Ok(())
}

impl DescriptorProvider for TableProvider {
    fn lookup(&self, normalized_name: &str) -> Result<Option<ChemDescriptors>, ProviderError> {
        Ok(self.entries.get(&normalize_name(normalized_name)).copied())
    }
}

/// PubChem PUG-REST provider with an on-disk response cache.
pub struct HttpProvider {
    base_url: String,
    cache_dir: PathBuf,
    max_attempts: u32,
    base_delay: Duration,
    agent: ureq::Agent,
}

const PROPERTIES: &str =
    "MolecularWeight,HBondAcceptorCount,XLogP,AtomStereoCount,Charge,CovalentUnitCount,ExactMass";
const NOT_FOUND_MARKER: &str = "null";

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        HttpProvider {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            cache_dir: cache_dir.into(),
            max_attempts: 5,
            base_delay: Duration::from_millis(250),
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(30))
                .build(),
        }
    }

    /// Reads [`ENV_BASE_URL`] and [`ENV_CACHE_DIR`]; the cache defaults to
    /// `descriptor-cache` under the working directory.
    pub fn from_env() -> Self {
        let base = std::env::var(ENV_BASE_URL).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        let cache = std::env::var(ENV_CACHE_DIR).unwrap_or_else(|_| "descriptor-cache".to_string());
        Self::new(base, cache)
    }

    pub fn with_retry(mut self, max_attempts: u32, base_delay: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.base_delay = base_delay;
        self
    }

    fn cache_path(&self, name: &str) -> PathBuf {
        let digest = Sha256::digest(name.as_bytes());
        let hex: String = digest.iter().take(16).map(|b| format!("{b:02x}")).collect();
        self.cache_dir.join(format!("{hex}.json"))
    }

    fn url(&self, name: &str) -> String {
        let encoded: String = name
            .bytes()
            .map(|b| match b {
                b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                    (b as char).to_string()
                }
                _ => format!("%{b:02X}"),
            })
            .collect();
        format!(
            "{}/compound/name/{}/property/{}/JSON",
            self.base_url, encoded, PROPERTIES
        )
    }

    /// Response body, `None` for a definitive not-found.
    fn fetch_remote(&self, name: &str) -> Result<Option<String>, ProviderError> {
        let url = self.url(name);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let failure = match self.agent.get(&url).call() {
                Ok(resp) => {
                    return resp.into_string().map(Some).map_err(|e| ProviderError::Http {
                        name: name.to_string(),
                        attempts: attempt,
                        message: e.to_string(),
                    })
                }
                Err(ureq::Error::Status(404, _)) => return Ok(None),
                Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                    format!("HTTP {code}")
                }
                Err(ureq::Error::Status(code, _)) => {
                    return Err(ProviderError::Http {
                        name: name.to_string(),
                        attempts: attempt,
                        message: format!("HTTP {code}"),
                    })
                }
                Err(ureq::Error::Transport(t)) => t.to_string(),
            };
            if attempt >= self.max_attempts {
                return Err(ProviderError::Http {
                    name: name.to_string(),
                    attempts: attempt,
                    message: failure,
                });
            }
            let delay = self.base_delay * 2u32.saturating_pow(attempt - 1);
            log::warn!("descriptor request for `{name}` failed ({failure}); retrying in {delay:?}");
            std::thread::sleep(delay);
        }
    }
}

fn json_number(v: &serde_json::Value) -> Option<f64> {
    match v {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Decodes a PUG-REST `PropertyTable` response.
pub fn parse_pubchem_properties(name: &str, body: &str) -> Result<Option<ChemDescriptors>, ProviderError> {
    let bad = |message: String| ProviderError::Response {
        name: name.to_string(),
        message,
    };
    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| bad(e.to_string()))?;
    let Some(props) = value
        .pointer("/PropertyTable/Properties/0")
        .and_then(|p| p.as_object())
    else {
        return Ok(None);
    };
    let get = |k: &str| props.get(k).and_then(json_number);
    let mut d = ChemDescriptors {
        molecular_weight: get("MolecularWeight"),
        xlogp3: get("XLogP"),
        exact_mass: get("ExactMass"),
        ..Default::default()
    };
    d.set("h_bond_acceptors", get("HBondAcceptorCount"));
    d.set("atom_stereocenters", get("AtomStereoCount"));
    d.set("formal_charge", get("Charge"));
    d.set("covalent_units", get("CovalentUnitCount"));
    validate(&d).map_err(bad)?;
    Ok(Some(d))
}

impl DescriptorProvider for HttpProvider {
    fn lookup(&self, normalized_name: &str) -> Result<Option<ChemDescriptors>, ProviderError> {
        let name = normalize_name(normalized_name);
        let path = self.cache_path(&name);
        let cache_err = |source| ProviderError::Cache {
            path: path.clone(),
            source,
        };
        let body = match std::fs::read_to_string(&path) {
            Ok(body) => body,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let fetched = self.fetch_remote(&name)?;
                let body = fetched.unwrap_or_else(|| NOT_FOUND_MARKER.to_string());
                std::fs::create_dir_all(&self.cache_dir).map_err(|source| ProviderError::Cache {
                    path: self.cache_dir.clone(),
                    source,
                })?;
                std::fs::write(&path, &body).map_err(cache_err)?;
                body
            }
            Err(e) => return Err(cache_err(e)),
        };
        if body.trim() == NOT_FOUND_MARKER {
            return Ok(None);
        }
        parse_pubchem_properties(&name, &body)
    }
}
