//! Content-addressed artifact directory.
//!
//! Each artifact is written once as `<stem>.<hash12>.<ext>`, where `hash12`
//! is the first twelve hex digits of the SHA-256 of its bytes.
//! `manifest.tsv` maps every `<stem>.<ext>` name to its current file:
//!
//! ```text
//! name	file	sha256	bytes	stage
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::config::hex;
use super::PipelineError;

pub const MANIFEST: &str = "manifest.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
    pub stage: String,
}

#[derive(Debug)]
pub struct ArtifactStore {
    dir: PathBuf,
    entries: BTreeMap<String, ArtifactEntry>,
}

fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

impl ArtifactStore {
    /// Opens `dir`, reading its manifest when present.
    pub fn open(dir: &Path) -> Result<Self, PipelineError> {
        let mut entries = BTreeMap::new();
        let manifest = dir.join(MANIFEST);
        if manifest.exists() {
            let text = std::fs::read_to_string(&manifest).map_err(|e| io_err(&manifest, e))?;
            for (n, line) in text.lines().enumerate().skip(1) {
                let c: Vec<&str> = line.split('\t').collect();
                let bytes = c.get(3).and_then(|b| b.parse().ok());
                match (c.len(), bytes) {
                    (5, Some(bytes)) => {
                        entries.insert(
                            c[0].to_string(),
                            ArtifactEntry {
                                file: c[1].to_string(),
                                sha256: c[2].to_string(),
                                bytes,
                                stage: c[4].to_string(),
                            },
                        );
                    }
                    _ => {
                        return Err(PipelineError::Config(format!(
                            "{}: malformed line {}",
                            manifest.display(),
                            n + 1
                        )))
                    }
                }
            }
        }
        Ok(ArtifactStore {
            dir: dir.to_path_buf(),
            entries,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entries(&self) -> &BTreeMap<String, ArtifactEntry> {
        &self.entries
    }

    /// Stores `bytes` under `stem`; returns the file path.
    pub fn put(&mut self, stage: &str, stem: &str, ext: &str, bytes: &[u8]) -> Result<PathBuf, PipelineError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| io_err(&self.dir, e))?;
        let sha = hex(&Sha256::digest(bytes));
        let file = format!("{stem}.{}.{ext}", &sha[..12]);
        let path = self.dir.join(&file);
        if !path.exists() {
            let tmp = self.dir.join(format!(".{file}.tmp"));
            std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
            std::fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;
        }
        self.entries.insert(
            format!("{stem}.{ext}"),
            ArtifactEntry {
                file,
                sha256: sha,
                bytes: bytes.len() as u64,
                stage: stage.to_string(),
            },
        );
        self.write_manifest()?;
        Ok(path)
    }

    fn write_manifest(&self) -> Result<(), PipelineError> {
        let mut out = String::from("name\tfile\tsha256\tbytes\tstage\n");
        for (name, e) in &self.entries {
            let _ = writeln!(out, "{name}\t{}\t{}\t{}\t{}", e.file, e.sha256, e.bytes, e.stage);
        }
        let path = self.dir.join(MANIFEST);
        let tmp = self.dir.join(".manifest.tsv.tmp");
        std::fs::write(&tmp, out).map_err(|e| io_err(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))
    }

    pub fn contains(&self, stem: &str, ext: &str) -> bool {
        self.entries.contains_key(&format!("{stem}.{ext}"))
    }

    pub fn path(&self, stem: &str, ext: &str) -> Result<PathBuf, PipelineError> {
        match self.entries.get(&format!("{stem}.{ext}")) {
            Some(e) => Ok(self.dir.join(&e.file)),
            None => Err(PipelineError::MissingArtifact {
                stem: stem.to_string(),
                expected: self.dir.join(format!("{stem}.*.{ext}")),
            }),
        }
    }

    /// Bytes of `stem`, verified against the manifest hash.
    pub fn get(&self, stem: &str, ext: &str) -> Result<Vec<u8>, PipelineError> {
        let path = self.path(stem, ext)?;
        let bytes = std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => PipelineError::MissingArtifact {
                stem: stem.to_string(),
                expected: path.clone(),
            },
            _ => io_err(&path, e),
        })?;
        if hex(&Sha256::digest(&bytes)) != self.entries[&format!("{stem}.{ext}")].sha256 {
            return Err(PipelineError::Config(format!("{} does not match its manifest hash", path.display())));
        }
        Ok(bytes)
    }

    pub fn get_text(&self, stem: &str, ext: &str) -> Result<String, PipelineError> {
        let bytes = self.get(stem, ext)?;
        String::from_utf8(bytes).map_err(|e| PipelineError::Config(format!("{stem}: {e}")))
    }
}
