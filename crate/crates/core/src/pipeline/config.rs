//! Sectioned `key = value` run configuration.
//!
//! ```ini
//! seed = 7
//! name = baseline
//! threads = 1
//!
//! [paths]
//! input_dir = json
//! veddra = veddra_hlt.tsv
//! atcvet = atcvet_subgroups.tsv
//! descriptors = descriptors.tsv
//! output_dir = ../out
//!
//! [train]
//! models = gbdt, tree
//! ```
//!
//! Keys outside the general section are addressed as `section.key`. Relative
//! paths resolve against the directory of the config file. `VETPV_OUTPUT_DIR`
//! overrides `paths.output_dir`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::explain::{SpeciesGroupMap, DEFAULT_RANK_N, DEFAULT_SUMMARY_TOP_K};
use crate::learn::{
    EnsembleMode, ForestParams, GbdtParams, KnnParams, LogisticParams, ModelParams, TreeParams,
};
use crate::prepare::{FieldEncoding, DEFAULT_CORRELATION_THRESHOLD, DEFAULT_RATIOS, DEFAULT_TOP_K};
use crate::resample::{EnnMode, ResamplePlan, Strategy};
use crate::rng::derive;
use crate::ssl::DEFAULT_MAX_CHECKPOINTS;

pub const ENV_OUTPUT_DIR: &str = "VETPV_OUTPUT_DIR";

/// Where ingredient descriptors come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DescriptorSource {
    Table(PathBuf),
    /// The PubChem REST service, configured through the environment.
    PubChem,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub input_dir: PathBuf,
    pub veddra: PathBuf,
    pub atcvet: PathBuf,
    pub descriptors: DescriptorSource,
    pub output_dir: PathBuf,
    pub species_groups: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOptions {
    pub correlation_threshold: f64,
    pub top_k: usize,
    pub ratios: [f64; 3],
    pub list_encoding: FieldEncoding,
    pub priority: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SslOptions {
    /// Name of the model in `train.models` used as the base learner.
    pub base: String,
    pub keep_fraction: f64,
    pub rounds: usize,
    pub pseudo_weight: f64,
    pub max_checkpoints: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainOptions {
    pub model: String,
    pub rank_n: usize,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub name: String,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub paths: Paths,
    pub prepare: PrepareOptions,
    pub resample: ResamplePlan,
    /// `(name, params)` in training order.
    pub models: Vec<(String, ModelParams)>,
    pub ssl: Option<SslOptions>,
    pub explain: ExplainOptions,
    pub groups: SpeciesGroupMap,
    /// Canonical text of every setting that can influence artifacts.
    effective: String,
}

struct Keys {
    values: BTreeMap<String, String>,
    used: BTreeSet<String>,
}

fn bad(key: &str, msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(format!("`{key}`: {msg}"))
}

impl Keys {
    fn raw(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.values.get(key).map(|v| v.trim().to_string())
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, PipelineError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| bad(key, e)),
        }
    }

    fn list(&mut self, key: &str, default: &[&str]) -> Vec<String> {
        match self.raw(key) {
            None => default.iter().map(|s| s.to_string()).collect(),
            Some(v) => v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        }
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn flatten(ini: &ini::Ini) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for (section, props) in ini.iter() {
        for (k, v) in props.iter() {
            let key = match section {
                Some(s) => format!("{s}.{k}"),
                None => k.to_string(),
            };
            out.insert(key, v.to_string());
        }
    }
    out
}

fn model_params(keys: &mut Keys, name: &str, seed: u64) -> Result<ModelParams, PipelineError> {
    let seed = derive(seed, &format!("model-{name}"));
    Ok(match name {
        "tree" => {
            let d = TreeParams::default();
            ModelParams::Tree(TreeParams {
                max_depth: keys.get("tree.max_depth", d.max_depth)?,
                min_leaf: keys.get("tree.min_leaf", d.min_leaf)?,
            })
        }
        "forest" => {
            let d = ForestParams::default();
            let fps: usize = keys.get("forest.features_per_split", 0)?;
            ModelParams::Forest(ForestParams {
                n_trees: keys.get("forest.n_trees", d.n_trees)?,
                max_depth: keys.get("forest.max_depth", d.max_depth)?,
                min_leaf: keys.get("forest.min_leaf", d.min_leaf)?,
                features_per_split: (fps > 0).then_some(fps),
                bootstrap: keys.get("forest.bootstrap", d.bootstrap)?,
                seed,
                max_bins: keys.get("forest.max_bins", d.max_bins)?,
            })
        }
        "gbdt" => {
            let d = GbdtParams::default();
            ModelParams::Gbdt(GbdtParams {
                n_rounds: keys.get("gbdt.n_rounds", d.n_rounds)?,
                learning_rate: keys.get("gbdt.learning_rate", d.learning_rate)?,
                max_depth: keys.get("gbdt.max_depth", d.max_depth)?,
                min_child_weight: keys.get("gbdt.min_child_weight", d.min_child_weight)?,
                lambda: keys.get("gbdt.lambda", d.lambda)?,
                subsample: keys.get("gbdt.subsample", d.subsample)?,
                seed,
                max_bins: keys.get("gbdt.max_bins", d.max_bins)?,
            })
        }
        "logistic" => {
            let d = LogisticParams::default();
            ModelParams::Logistic(LogisticParams {
                l2: keys.get("logistic.l2", d.l2)?,
                tolerance: keys.get("logistic.tolerance", d.tolerance)?,
                max_iter: keys.get("logistic.max_iter", d.max_iter)?,
            })
        }
        "knn" => ModelParams::Knn(KnnParams {
            k: keys.get("knn.k", KnnParams::default().k)?,
        }),
        "vote" | "stack" => {
            let mode = if name == "vote" { EnsembleMode::SoftVote } else { EnsembleMode::Stack };
            let members = keys.list("ensemble.members", &[]);
            let members = if members.is_empty() {
                ModelParams::default_ensemble_members(seed)
            } else {
                members
                    .iter()
                    .map(|m| match m.as_str() {
                        "vote" | "stack" => Err(bad("ensemble.members", "ensembles cannot be nested")),
                        m => model_params(keys, m, seed),
                    })
                    .collect::<Result<_, _>>()?
            };
            ModelParams::Ensemble {
                mode,
                members,
                folds: keys.get("ensemble.folds", 5)?,
                seed,
            }
        }
        other => return Err(bad("train.models", format!("unknown model `{other}`"))),
    })
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Self::load_with(path, &[])
    }

    /// Loads `path` and applies `section.key=value` overrides on top.
    pub fn load_with(path: &Path, overrides: &[String]) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base, overrides)
    }

    pub fn parse(text: &str, base: &Path, overrides: &[String]) -> Result<Self, PipelineError> {
        let ini = ini::Ini::load_from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let mut values = flatten(&ini);
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("override `{o}` is not key=value")))?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut keys = Keys {
            values,
            used: BTreeSet::new(),
        };
        let cfg = Self::from_keys(&mut keys, base)?;
        let unknown: Vec<&String> = keys.values.keys().filter(|k| !keys.used.contains(*k)).collect();
        if !unknown.is_empty() {
            let list: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
            return Err(PipelineError::Config(format!("unknown keys: {}", list.join(", "))));
        }
        Ok(cfg)
    }

    fn from_keys(keys: &mut Keys, base: &Path) -> Result<Self, PipelineError> {
        let seed: u64 = keys
            .raw("seed")
            .ok_or_else(|| PipelineError::Config("`seed` is required".into()))?
            .parse()
            .map_err(|e| bad("seed", e))?;
        let name = keys.get("name", "run".to_string())?;
        if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(bad("name", "must be a plain directory name"));
        }
        let threads = keys.get("threads", 0usize)?;

        let mut written = BTreeMap::new();
        let mut path = |key: &str| -> Result<PathBuf, PipelineError> {
            let v = keys.raw(key).ok_or_else(|| bad(key, "required"))?;
            written.insert(key.to_string(), v.clone());
            Ok(resolve(base, &v))
        };
        let input_dir = path("paths.input_dir")?;
        let veddra = path("paths.veddra")?;
        let atcvet = path("paths.atcvet")?;
        let descriptors = match keys.raw("paths.descriptors") {
            Some(v) if v == "pubchem" => DescriptorSource::PubChem,
            Some(v) => {
                written.insert("paths.descriptors".into(), v.clone());
                DescriptorSource::Table(resolve(base, &v))
            }
            None => return Err(bad("paths.descriptors", "required")),
        };
        let output_dir = match std::env::var(ENV_OUTPUT_DIR) {
            Ok(v) if !v.is_empty() => {
                keys.raw("paths.output_dir");
                PathBuf::from(v)
            }
            _ => resolve(base, &keys.raw("paths.output_dir").ok_or_else(|| bad("paths.output_dir", "required"))?),
        };
        let species_groups = keys.raw("paths.species_groups").map(|v| {
            written.insert("paths.species_groups".into(), v.clone());
            resolve(base, &v)
        });

        let ratios_list = keys.list("prepare.ratios", &[]);
        let ratios = if ratios_list.is_empty() {
            DEFAULT_RATIOS
        } else {
            let v: Vec<f64> = ratios_list
                .iter()
                .map(|s| s.parse().map_err(|e| bad("prepare.ratios", e)))
                .collect::<Result<_, _>>()?;
            v.try_into().map_err(|_| bad("prepare.ratios", "expected three numbers"))?
        };
        let prepare = PrepareOptions {
            correlation_threshold: keys.get("prepare.correlation_threshold", DEFAULT_CORRELATION_THRESHOLD)?,
            top_k: keys.get("prepare.top_k", DEFAULT_TOP_K)?,
            ratios,
            list_encoding: keys.get("prepare.list_encoding", FieldEncoding::MultiHot)?,
            priority: keys.list("prepare.priority", &["molecular_weight"]),
        };
        if !(prepare.correlation_threshold > 0.0 && prepare.correlation_threshold <= 1.0) {
            return Err(bad("prepare.correlation_threshold", "must be in (0, 1]"));
        }
        if !matches!(prepare.list_encoding, FieldEncoding::MultiHot | FieldEncoding::Label) {
            return Err(bad("prepare.list_encoding", "must be multi_hot or label"));
        }

        let resample = ResamplePlan {
            strategy: keys.get("resample.strategy", Strategy::None)?,
            target_ratio: keys.get("resample.target_ratio", 1.0)?,
            k_smote: keys.get("resample.k_smote", 5)?,
            k_enn: keys.get("resample.k_enn", 3)?,
            enn_mode: keys.get("resample.enn_mode", EnnMode::MajorityOnly)?,
            seed: derive(seed, "resample"),
        };
        resample.validate().map_err(|e| PipelineError::Config(e.to_string()))?;

        let names = keys.list("train.models", &["gbdt"]);
        if names.is_empty() {
            return Err(bad("train.models", "at least one model is required"));
        }
        let mut models = Vec::new();
        for n in &names {
            if models.iter().any(|(m, _)| m == n) {
                return Err(bad("train.models", format!("`{n}` listed twice")));
            }
            models.push((n.clone(), model_params(keys, n, seed)?));
        }

        let ssl = if keys.get("ssl.enabled", false)? {
            let o = SslOptions {
                base: keys.get("ssl.base", "gbdt".to_string())?,
                keep_fraction: keys.get("ssl.keep_fraction", 0.3)?,
                rounds: keys.get("ssl.rounds", 1)?,
                pseudo_weight: keys.get("ssl.pseudo_weight", 1.0)?,
                max_checkpoints: keys.get("ssl.max_checkpoints", DEFAULT_MAX_CHECKPOINTS)?,
            };
            let base_params = models
                .iter()
                .find(|(m, _)| *m == o.base)
                .ok_or_else(|| bad("ssl.base", format!("`{}` is not in train.models", o.base)))?;
            if !matches!(base_params.1, ModelParams::Tree(_) | ModelParams::Forest(_) | ModelParams::Gbdt(_)) {
                return Err(bad("ssl.base", "must be a tree model"));
            }
            crate::ssl::SslPlan {
                keep_fraction: o.keep_fraction,
                rounds: o.rounds,
                base: base_params.1.clone(),
                allow_any_fraction: false,
                pseudo_weight: o.pseudo_weight,
                max_checkpoints: o.max_checkpoints,
            }
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
            Some(o)
        } else {
            for k in ["base", "keep_fraction", "rounds", "pseudo_weight", "max_checkpoints"] {
                keys.raw(&format!("ssl.{k}"));
            }
            None
        };

        let explain = ExplainOptions {
            model: keys.get("explain.model", "gbdt".to_string())?,
            rank_n: keys.get("explain.rank_n", DEFAULT_RANK_N)?,
            top_k: keys.get("explain.top_k", DEFAULT_SUMMARY_TOP_K)?,
        };
        let explained_base = explain.model.strip_suffix("_ssl").unwrap_or(&explain.model);
        match models.iter().find(|(m, _)| m == explained_base) {
            Some((_, ModelParams::Tree(_) | ModelParams::Forest(_) | ModelParams::Gbdt(_))) => {}
            Some(_) => return Err(bad("explain.model", "must be a tree model")),
            None => return Err(bad("explain.model", format!("`{}` is not a trained model", explain.model))),
        }

        let mut cfg = PipelineConfig {
            name,
            seed,
            threads,
            paths: Paths {
                input_dir,
                veddra,
                atcvet,
                descriptors,
                output_dir,
                species_groups,
            },
            prepare,
            resample,
            models,
            ssl,
            explain,
            groups: SpeciesGroupMap::default(),
            effective: String::new(),
        };
        cfg.effective = cfg.render(&written);
        Ok(cfg)
    }

    /// Checks that every referenced input exists and loads the species
    /// group map.
    pub fn validate(&mut self) -> Result<(), PipelineError> {
        let must_exist = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(PipelineError::Config(format!("{what} not found: {}", p.display())))
            }
        };
        must_exist(&self.paths.input_dir, "input directory")?;
        must_exist(&self.paths.veddra, "VeDDRA mapping table")?;
        must_exist(&self.paths.atcvet, "ATCvet table")?;
        if let DescriptorSource::Table(p) = &self.paths.descriptors {
            must_exist(p, "descriptor table")?;
        }
        if let Some(p) = &self.paths.species_groups {
            must_exist(p, "species group map")?;
            let text = std::fs::read_to_string(p)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
            self.groups = SpeciesGroupMap::from_tsv(&text).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn run_dir(&self) -> PathBuf {
        self.paths.output_dir.join(&self.name)
    }

    /// Every setting that can change an artifact, one `key = value` per line
    /// in canonical order. Output location and thread count are left out.
    pub fn effective(&self) -> &str {
        &self.effective
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.effective.as_bytes()))
    }

    /// Paths are rendered as written, so moving a checkout does not change
    /// the hash.
    fn render(&self, written: &BTreeMap<String, String>) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "\n[paths]");
        for key in ["input_dir", "veddra", "atcvet", "descriptors", "species_groups"] {
            if let Some(v) = written.get(&format!("paths.{key}")) {
                let _ = writeln!(out, "{key} = {v}");
            } else if key == "descriptors" {
                let _ = writeln!(out, "descriptors = pubchem");
            }
        }
        let q = &self.prepare;
        let _ = writeln!(out, "\n[prepare]");
        let _ = writeln!(out, "correlation_threshold = {}", q.correlation_threshold);
        let _ = writeln!(out, "top_k = {}", q.top_k);
        let _ = writeln!(out, "ratios = {}, {}, {}", q.ratios[0], q.ratios[1], q.ratios[2]);
        let enc = if q.list_encoding == FieldEncoding::MultiHot { "multi_hot" } else { "label" };
        let _ = writeln!(out, "list_encoding = {enc}");
        let _ = writeln!(out, "priority = {}", q.priority.join(", "));
        let r = &self.resample;
        let _ = writeln!(out, "\n[resample]");
        let _ = writeln!(out, "strategy = {}", r.strategy.as_str());
        let _ = writeln!(out, "target_ratio = {}", r.target_ratio);
        let _ = writeln!(out, "k_smote = {}", r.k_smote);
        let _ = writeln!(out, "k_enn = {}", r.k_enn);
        let mode = if r.enn_mode == EnnMode::MajorityOnly { "majority_only" } else { "all_classes" };
        let _ = writeln!(out, "enn_mode = {mode}");
        let _ = writeln!(out, "\n[train]");
        let names: Vec<&str> = self.models.iter().map(|(n, _)| n.as_str()).collect();
        let _ = writeln!(out, "models = {}", names.join(", "));
        for (n, params) in &self.models {
            let _ = writeln!(out, "{n} = {}", serde_json::to_string(params).expect("serializable"));
        }
        let _ = writeln!(out, "\n[ssl]");
        match &self.ssl {
            None => {
                let _ = writeln!(out, "enabled = false");
            }
            Some(s) => {
                let _ = writeln!(out, "enabled = true");
                let _ = writeln!(out, "base = {}", s.base);
                let _ = writeln!(out, "keep_fraction = {}", s.keep_fraction);
                let _ = writeln!(out, "rounds = {}", s.rounds);
                let _ = writeln!(out, "pseudo_weight = {}", s.pseudo_weight);
                let _ = writeln!(out, "max_checkpoints = {}", s.max_checkpoints);
            }
        }
        let e = &self.explain;
        let _ = writeln!(out, "\n[explain]");
        let _ = writeln!(out, "model = {}", e.model);
        let _ = writeln!(out, "rank_n = {}", e.rank_n);
        let _ = writeln!(out, "top_k = {}", e.top_k);
        out
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
