//! Stage orchestration, run reports and cross-run aggregation.

pub mod artifacts;
pub mod config;
pub mod stages;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use artifacts::{ArtifactEntry, ArtifactStore, MANIFEST};
pub use config::{PipelineConfig, ENV_OUTPUT_DIR};
pub use stages::{load_matrix, Stage, StageOutput};

use crate::eval::{read_results_csv, ResultsTable};

pub const RUN_REPORT: &str = "run_report.json";
pub const SUMMARY_TABLE: &str = "summary_table";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing artifact `{stem}`: expected {expected}; run the producing stage first")]
    MissingArtifact { stem: String, expected: PathBuf },
    #[error("{0}")]
    Failed(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// 1 for configuration and prerequisite problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::MissingArtifact { .. } => 1,
            PipelineError::Stage { source, .. } => source.exit_code(),
            PipelineError::Io { .. } | PipelineError::Failed(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: String,
    pub seconds: f64,
    pub rows_in: usize,
    pub rows_out: usize,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunReport {
    pub name: String,
    pub config_hash: String,
    pub inputs: Vec<InputHash>,
    pub stages: Vec<StageRecord>,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

impl RunReport {
    fn record(&mut self, r: StageRecord) {
        match self.stages.iter_mut().find(|s| s.name == r.name) {
            Some(s) => *s = r,
            None => self.stages.push(r),
        }
        let order = |n: &str| Stage::ALL.iter().position(|s| s.name() == n).unwrap_or(usize::MAX);
        self.stages.sort_by_key(|s| order(&s.name));
    }
}

fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(config::hex(&Sha256::digest(&bytes)))
}

fn input_hashes(cfg: &PipelineConfig) -> Result<Vec<InputHash>, PipelineError> {
    let mut files = crate::ingest::list_input_files(&cfg.paths.input_dir).unwrap_or_default();
    files.push(cfg.paths.veddra.clone());
    files.push(cfg.paths.atcvet.clone());
    if let config::DescriptorSource::Table(p) = &cfg.paths.descriptors {
        files.push(p.clone());
    }
    if let Some(p) = &cfg.paths.species_groups {
        files.push(p.clone());
    }
    files
        .iter()
        .map(|p| {
            Ok(InputHash {
                path: p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

fn load_report(dir: &Path) -> RunReport {
    std::fs::read(dir.join(RUN_REPORT))
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_default()
}

fn save_report(dir: &Path, report: &RunReport) -> Result<(), PipelineError> {
    let path = dir.join(RUN_REPORT);
    let mut text = serde_json::to_string_pretty(report).expect("serializable");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| PipelineError::Io { path, source: e })
}

/// Runs `stages` in order inside a pool of `cfg.threads` workers.
///
/// The run report is updated after every stage. A failing stage stops the
/// sequence; its error is recorded in the report and returned.
pub fn run_stages(cfg: &PipelineConfig, stages: &[Stage]) -> Result<RunReport, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(cfg, stages))
}

fn run_in_pool(cfg: &PipelineConfig, stages: &[Stage]) -> Result<RunReport, PipelineError> {
    let dir = cfg.run_dir();
    let mut store = ArtifactStore::open(&dir)?;
    store.put("config", "config", "ini", cfg.effective().as_bytes())?;
    let mut report = load_report(&dir);
    report.name = cfg.name.clone();
    report.config_hash = cfg.hash();
    report.inputs = input_hashes(cfg)?;
    report.failed_stage = None;
    report.error = None;
    for &stage in stages {
        log::info!("stage {stage}: start");
        let t = Instant::now();
        let out = stages::run_stage(stage, cfg, &mut store);
        let seconds = t.elapsed().as_secs_f64();
        match out {
            Ok(o) => {
                log::info!("stage {stage}: {} rows in, {} rows out, {seconds:.2}s", o.rows_in, o.rows_out);
                report.record(StageRecord {
                    name: stage.name().into(),
                    status: if o.skipped { "skipped" } else { "ok" }.into(),
                    seconds,
                    rows_in: o.rows_in,
                    rows_out: o.rows_out,
                    details: o.details,
                });
                save_report(&dir, &report)?;
            }
            Err(e) => {
                let err = PipelineError::Stage {
                    stage: stage.name().into(),
                    source: Box::new(e),
                };
                report.record(StageRecord {
                    name: stage.name().into(),
                    status: "failed".into(),
                    seconds,
                    rows_in: 0,
                    rows_out: 0,
                    details: serde_json::Value::Null,
                });
                report.failed_stage = Some(stage.name().into());
                report.error = Some(err.to_string());
                save_report(&dir, &report)?;
                return Err(err);
            }
        }
    }
    Ok(report)
}

/// Merges the `results` artifacts of every run under `output_dir` into one
/// table and writes `summary_table.csv` and `summary_table.txt` there.
///
/// Runs are visited in directory-name order; a later run overwrites a cell
/// already filled by an earlier one.
pub fn aggregate_results(output_dir: &Path) -> Result<ResultsTable, PipelineError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |e| PipelineError::Io { path, source: e }
    };
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(output_dir)
        .map_err(io(output_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST).is_file())
        .collect();
    dirs.sort();
    let mut merged = ResultsTable::default();
    for dir in &dirs {
        let store = ArtifactStore::open(dir)?;
        if !store.contains("results", "csv") {
            continue;
        }
        let table = read_results_csv(&store.get_text("results", "csv")?)
            .map_err(|e| PipelineError::Failed(format!("{}: {e}", dir.display())))?;
        merged.merge(&table);
    }
    if merged.models.is_empty() {
        return Err(PipelineError::Failed(format!("no evaluated runs under {}", output_dir.display())));
    }
    let csv_path = output_dir.join(format!("{SUMMARY_TABLE}.csv"));
    let mut buf = Vec::new();
    merged.write_csv(&mut buf).map_err(|e| PipelineError::Failed(e.to_string()))?;
    std::fs::write(&csv_path, buf).map_err(io(&csv_path))?;
    let txt_path = output_dir.join(format!("{SUMMARY_TABLE}.txt"));
    std::fs::write(&txt_path, merged.to_text()).map_err(io(&txt_path))?;
    Ok(merged)
}
