//! The nine pipeline stages. Each reads its inputs from the artifact store
//! (or the configured input files) and writes its outputs back to it.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::{json, Value};

use super::artifacts::ArtifactStore;
use super::config::{DescriptorSource, PipelineConfig};
use super::PipelineError;
use crate::eval::{confusion, metrics, results_table, MetricsReport, RunResult};
use crate::explain::{
    aggregate_shap, explain_matrix, group_counts, row_groups, shap_summary, write_rankings, write_shap_values,
    write_summary, ExplainError, ShapScope, SpeciesGroup,
};
use crate::harmonize::{merge_reports, write_merged_csv, AtcvetIndex, MergedReport, VeddraMap};
use crate::ingest::descriptors::resolve_all;
use crate::ingest::{
    export_bulk_to_memory, list_input_files, parse_bulk, parse_files, BulkTexts, DescriptorProvider, HttpProvider,
    TableProvider,
};
use crate::learn::{fit, model_from_text, model_to_text, Model};
use crate::prepare::impute::ImputeStats;
use crate::prepare::{
    filter_rows, normalize_all, prune_correlated, stratified_assignment, ColumnMeta, EncodingSpec, FeatureMatrix,
    FittedEncoder, Label,
};
use crate::resample::resample;
use crate::ssl::{ssl_train, write_provenance_csv, SslPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Harmonize,
    Prepare,
    Split,
    Resample,
    Train,
    Ssl,
    Evaluate,
    Explain,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Harmonize,
        Stage::Prepare,
        Stage::Split,
        Stage::Resample,
        Stage::Train,
        Stage::Ssl,
        Stage::Evaluate,
        Stage::Explain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Harmonize => "harmonize",
            Stage::Prepare => "prepare",
            Stage::Split => "split",
            Stage::Resample => "resample",
            Stage::Train => "train",
            Stage::Ssl => "ssl",
            Stage::Evaluate => "evaluate",
            Stage::Explain => "explain",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a stage reports back: row counts and free-form details.
#[derive(Debug, Clone, Default)]
pub struct StageOutput {
    pub rows_in: usize,
    pub rows_out: usize,
    pub skipped: bool,
    pub details: Value,
}

fn failed(e: impl fmt::Display) -> PipelineError {
    PipelineError::Failed(e.to_string())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, PipelineError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(failed)?;
    Ok(buf)
}

fn to_json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

const BULK_STEMS: [&str; 4] = ["main", "events", "outcomes", "drugs"];

pub fn ingest(cfg: &PipelineConfig, store: &mut ArtifactStore) -> Result<StageOutput, PipelineError> {
    let files = list_input_files(&cfg.paths.input_dir).map_err(failed)?;
    if files.is_empty() {
        return Err(failed(format!("no .json or .json.gz files in {}", cfg.paths.input_dir.display())));
    }
    let parsed = parse_files(&files).map_err(failed)?;
    let texts = export_bulk_to_memory(&parsed.tables).map_err(failed)?;
    let round_trip = parse_bulk(&texts).map_err(failed)? == parsed.tables;
    if !round_trip {
        return Err(failed("bulk export does not parse back to the same tables"));
    }
    for (stem, bytes) in BULK_STEMS.iter().zip([&texts.main, &texts.events, &texts.outcomes, &texts.drugs]) {
        store.put("ingest", stem, "copy", bytes)?;
    }
    let skipped = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["index", "key", "reason"])?;
        for d in &parsed.skipped {
            w.write_record([d.index.to_string(), d.key.clone().unwrap_or_default(), d.reason.clone()])?;
        }
        w.flush()
    })?;
    store.put("ingest", "ingest_skipped", "csv", &skipped)?;
    let counts = parsed.tables.counts();
    Ok(StageOutput {
        rows_in: parsed.tables.main.len() + parsed.skipped.len(),
        rows_out: parsed.tables.main.len(),
        skipped: false,
        details: json!({
            "files": files.len(),
            "skipped_reports": parsed.skipped.len(),
            "tables": counts,
            "bulk_round_trip": round_trip,
        }),
    })
}

fn load_tables(store: &ArtifactStore) -> Result<crate::ingest::RawTables, PipelineError> {
    let texts = BulkTexts {
        main: store.get("main", "copy")?,
        events: store.get("events", "copy")?,
        outcomes: store.get("outcomes", "copy")?,
        drugs: store.get("drugs", "copy")?,
    };
    parse_bulk(&texts).map_err(failed)
}

pub fn harmonize(cfg: &PipelineConfig, store: &mut ArtifactStore) -> Result<StageOutput, PipelineError> {
    let tables = load_tables(store)?;
    let veddra = VeddraMap::from_tsv_file(&cfg.paths.veddra).map_err(failed)?;
    let atc = AtcvetIndex::from_tsv_file(&cfg.paths.atcvet).map_err(failed)?;
    let provider: Box<dyn DescriptorProvider> = match &cfg.paths.descriptors {
        DescriptorSource::Table(p) => Box::new(TableProvider::from_tsv_file(p).map_err(failed)?),
        DescriptorSource::PubChem => Box::new(HttpProvider::from_env()),
    };
    let mut names: Vec<&str> = tables.drugs.iter().map(|d| d.ingredient_name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    let descriptors = resolve_all(names, provider.as_ref()).map_err(failed)?;
    let merged = merge_reports(&tables, &veddra, &descriptors).map_err(failed)?;

    let mut jsonl = Vec::new();
    for r in &merged.reports {
        serde_json::to_writer(&mut jsonl, r).map_err(failed)?;
        jsonl.push(b'\n');
    }
    store.put("harmonize", "merged", "jsonl", &jsonl)?;
    let mut csv_buf = Vec::new();
    write_merged_csv(&merged.reports, &mut csv_buf).map_err(failed)?;
    store.put("harmonize", "merged", "csv", &csv_buf)?;
    let mut subgroups: Vec<&str> = merged
        .reports
        .iter()
        .flat_map(|r| r.atcvet_subgroups.iter().map(String::as_str))
        .collect();
    subgroups.sort_unstable();
    subgroups.dedup();
    let unnamed: Vec<&str> = subgroups.iter().copied().filter(|s| atc.name(s).is_none()).collect();
    let details = json!({"merge": merged.stats, "atc_subgroups": subgroups.len(), "atc_subgroups_unnamed": unnamed});
    store.put("harmonize", "merge_stats", "json", &to_json(&details))?;
    Ok(StageOutput {
        rows_in: tables.main.len(),
        rows_out: merged.reports.len(),
        skipped: false,
        details,
    })
}

fn load_merged(store: &ArtifactStore) -> Result<Vec<MergedReport>, PipelineError> {
    store
        .get_text("merged", "jsonl")?
        .lines()
        .map(|l| serde_json::from_str(l).map_err(failed))
        .collect()
}

const SPLIT_NAMES: [&str; 3] = ["train", "validation", "test"];

pub fn prepare(cfg: &PipelineConfig, store: &mut ArtifactStore) -> Result<StageOutput, PipelineError> {
    let merged = load_merged(store)?;
    let (normalized, rejects) = normalize_all(&merged);
    for r in &rejects {
        log::warn!("{r}");
    }
    let (filtered, removals) = filter_rows(&normalized);
    let (labeled, unlabeled): (Vec<MergedReport>, Vec<MergedReport>) =
        filtered.into_iter().partition(|r| Label::from_status(r.outcome).is_some());
    let labels: Vec<Label> = labeled.iter().filter_map(|r| Label::from_status(r.outcome)).collect();
    let assignment = stratified_assignment(&labels, &cfg.prepare.ratios, cfg.seed).map_err(failed)?;

    let train_rows: Vec<MergedReport> = assignment.train.iter().map(|&i| labeled[i].clone()).collect();
    let imputer = ImputeStats::fit(&train_rows).map_err(failed)?;
    let spec = EncodingSpec {
        top_k: cfg.prepare.top_k,
        ..Default::default()
    }
    .with_list_encoding(cfg.prepare.list_encoding);
    let encoder = FittedEncoder::fit(&spec, &imputer.apply(&train_rows)).map_err(failed)?;
    let labeled_m = encoder.transform(&imputer.apply(&labeled)).map_err(failed)?;
    let unlabeled_m = encoder.transform(&imputer.apply(&unlabeled)).map_err(failed)?;

    let (_, dropped) = prune_correlated(
        &labeled_m.select_rows(&assignment.train),
        cfg.prepare.correlation_threshold,
        &cfg.prepare.priority,
    )
    .map_err(failed)?;
    let dropped_names: Vec<String> = dropped.iter().map(|d| d.name.clone()).collect();
    let labeled_m = labeled_m.drop_columns(&dropped_names);
    let unlabeled_m = unlabeled_m.drop_columns(&dropped_names);

    let mut split_tsv = String::from("key\tsplit\n");
    let mut which = vec![""; labeled.len()];
    for (name, idx) in SPLIT_NAMES
        .iter()
        .zip([&assignment.train, &assignment.validation, &assignment.test])
    {
        for &i in idx {
            which[i] = name;
        }
    }
    for (r, s) in labeled.iter().zip(&which) {
        split_tsv.push_str(&format!("{}\t{s}\n", r.key));
    }

    store.put("prepare", "imputer", "json", &to_json(&imputer))?;
    store.put("prepare", "encoder", "json", encoder.to_json().as_bytes())?;
    store.put("prepare", "dropped_columns", "json", &to_json(&dropped))?;
    store.put("prepare", "columns", "json", &to_json(&labeled_m.columns))?;
    store.put("prepare", "split_assignment", "tsv", split_tsv.as_bytes())?;
    put_matrix(store, "prepare", "labeled", &labeled_m)?;
    put_matrix(store, "prepare", "unlabeled", &unlabeled_m)?;

    let details = json!({
        "unit_rejects": rejects.len(),
        "removals": removals,
        "labeled": labeled.len(),
        "unlabeled": unlabeled.len(),
        "class_counts": {"Death": labeled_m.class_counts()[0], "Recovered": labeled_m.class_counts()[1]},
        "columns": labeled_m.n_cols(),
        "dropped_columns": dropped,
    });
    store.put("prepare", "prepare_summary", "json", &to_json(&details))?;
    Ok(StageOutput {
        rows_in: merged.len(),
        rows_out: labeled.len() + unlabeled.len(),
        skipped: false,
        details,
    })
}

fn put_matrix(store: &mut ArtifactStore, stage: &str, stem: &str, m: &FeatureMatrix) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    m.write_tsv(&mut buf).map_err(failed)?;
    store.put(stage, stem, "tsv", &buf)?;
    Ok(())
}

/// Reads a persisted matrix using the column metadata from `prepare`.
pub fn load_matrix(store: &ArtifactStore, stem: &str) -> Result<FeatureMatrix, PipelineError> {
    let columns: Vec<ColumnMeta> = serde_json::from_slice(&store.get("columns", "json")?).map_err(failed)?;
    FeatureMatrix::read_tsv(&store.get_text(stem, "tsv")?, columns).map_err(failed)
}

fn counts_json(m: &FeatureMatrix) -> Value {
    let c = m.class_counts();
    json!({"rows": m.n_rows(), "Death": c[0], "Recovered": c[1]})
}

pub fn split(_cfg: &PipelineConfig, store: &mut ArtifactStore) -> Result<StageOutput, PipelineError> {
    let labeled = load_matrix(store, "labeled")?;
    let text = store.get_text("split_assignment", "tsv")?;
    let mut idx: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, line) in text.lines().skip(1).enumerate() {
        let (key, s) = line.split_once('\t').ok_or_else(|| failed("malformed split assignment"))?;
        if labeled.keys.get(i).map(|k| k.as_str()) != Some(key) {
            return Err(failed("split assignment is not aligned with the labeled matrix"));
        }
        idx.entry(s).or_default().push(i);
    }
    let mut details = serde_json::Map::new();
    for name in SPLIT_NAMES {
        let m = labeled.select_rows(idx.get(name).map_or(&[][..], Vec::as_slice));
        put_matrix(store, "split", name, &m)?;
        details.insert(name.into(), counts_json(&m));
    }
    Ok(StageOutput {
        rows_in: labeled.n_rows(),
        rows_out: labeled.n_rows(),
        skipped: false,
        details: Value::Object(details),
    })
}

pub fn resample_stage(cfg: &PipelineConfig, store: &mut ArtifactStore) -> Result<StageOutput, PipelineError> {
    let train = load_matrix(store, "train")?;
    let (out, summary) = resample(&train, &cfg.resample).map_err(failed)?;
    put_matrix(store, "resample", "train_resampled", &out)?;
    store.put("resample", "resample_summary", "json", &to_json(&summary))?;
    Ok(StageOutput {
        rows_in: train.n_rows(),
        rows_out: out.n_rows(),
        skipped: false,
        details: json!(summary),
    })
}

fn model_stem(name: &str) -> String {
    format!("model_{name}")
}

pub fn train(cfg: &PipelineConfig, store: &mut ArtifactStore) -> Result<StageOutput, PipelineError> {
    let train = load_matrix(store, "train_resampled")?;
    let mut details = serde_json::Map::new();
    for (name, params) in &cfg.models {
        log::info!("training {name} on {} rows", train.n_rows());
        let model = fit(params, &train).map_err(|e| failed(format!("{name}: {e}")))?;
        store.put("train", &model_stem(name), "txt", model_to_text(&model).as_bytes())?;
        details.insert(name.clone(), json!(model.kind_name()));
    }
    Ok(StageOutput {
        rows_in: train.n_rows(),
        rows_out: cfg.models.len(),
        skipped: false,
        details: Value::Object(details),
    })
}

fn load_model(store: &ArtifactStore, name: &str) -> Result<Model, PipelineError> {
    model_from_text(&store.get_text(&model_stem(name), "txt")?).map_err(failed)
}

pub fn ssl(cfg: &PipelineConfig, store: &mut ArtifactStore) -> Result<StageOutput, PipelineError> {
    let Some(opts) = &cfg.ssl else {
        return Ok(StageOutput {
            skipped: true,
            details: json!({"reason": "ssl.enabled = false"}),
            ..Default::default()
        });
    };
    store.path(&model_stem(&opts.base), "txt")?;
    let base = cfg
        .models
        .iter()
        .find(|(n, _)| *n == opts.base)
        .map(|(_, p)| p.clone())
        .ok_or_else(|| failed("ssl base model is not configured"))?;
    let labeled = load_matrix(store, "train_resampled")?;
    let unlabeled = load_matrix(store, "unlabeled")?;
    let plan = SslPlan {
        keep_fraction: opts.keep_fraction,
        rounds: opts.rounds,
        base,
        allow_any_fraction: false,
        pseudo_weight: opts.pseudo_weight,
        max_checkpoints: opts.max_checkpoints,
    };
    let outcome = ssl_train(&labeled, &unlabeled, &plan).map_err(failed)?;
    let name = format!("{}_ssl", opts.base);
    store.put("ssl", &model_stem(&name), "txt", model_to_text(&outcome.model).as_bytes())?;
    let mut buf = Vec::new();
    write_provenance_csv(&outcome.provenance, &mut buf).map_err(failed)?;
    store.put("ssl", "ssl_provenance", "csv", &buf)?;
    let deaths = outcome.provenance.iter().filter(|p| p.pseudo_label == Label::Death).count();
    let details = json!({
        "model": name,
        "unlabeled_pool": unlabeled.n_rows(),
        "selected": outcome.provenance.len(),
        "selected_death": deaths,
        "selected_recovered": outcome.provenance.len() - deaths,
        "pool_sizes": outcome.pool_sizes,
    });
    Ok(StageOutput {
        rows_in: labeled.n_rows() + unlabeled.n_rows(),
        rows_out: outcome.pool_sizes.last().copied().unwrap_or(labeled.n_rows()),
        skipped: false,
        details,
    })
}

/// Model names to evaluate: the configured ones plus any trained SSL model.
fn evaluated_models(cfg: &PipelineConfig, store: &ArtifactStore) -> Vec<String> {
    let mut names: Vec<String> = cfg.models.iter().map(|(n, _)| n.clone()).collect();
    if let Some(s) = &cfg.ssl {
        let n = format!("{}_ssl", s.base);
        if store.contains(&model_stem(&n), "txt") {
            names.push(n);
        }
    }
    names
}

fn evaluate_on(model: &Model, m: &FeatureMatrix) -> Result<MetricsReport, PipelineError> {
    let pred = model.predict(m).map_err(failed)?;
    let c = confusion(m.labels().map_err(failed)?, &pred).map_err(failed)?;
    metrics(&c).map_err(failed)
}

pub fn evaluate(cfg: &PipelineConfig, store: &mut ArtifactStore) -> Result<StageOutput, PipelineError> {
    let validation = load_matrix(store, "validation")?;
    let test = load_matrix(store, "test")?;
    let sampling = cfg.resample.strategy.as_str().to_string();
    let mut runs = Vec::new();
    let mut all = Vec::new();
    for name in evaluated_models(cfg, store) {
        let model = load_model(store, &name)?;
        let v = evaluate_on(&model, &validation)?;
        let t = evaluate_on(&model, &test)?;
        all.push(json!({"model": name, "sampling": sampling, "validation": v, "test": t}));
        runs.push(RunResult {
            model: name,
            sampling: sampling.clone(),
            report: t,
        });
    }
    let table = results_table(&runs);
    store.put("evaluate", "metrics", "json", &to_json(&all))?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(failed)?;
    store.put("evaluate", "results", "csv", &buf)?;
    store.put("evaluate", "results", "txt", table.to_text().as_bytes())?;
    let summary: BTreeMap<&str, Value> = runs
        .iter()
        .map(|r| {
            (
                r.model.as_str(),
                json!({"weighted_f1": r.report.weighted_f1, "death_recall": r.report.death_recall,
                       "recovered_recall": r.report.recovered_recall}),
            )
        })
        .collect();
    Ok(StageOutput {
        rows_in: test.n_rows(),
        rows_out: runs.len(),
        skipped: false,
        details: json!({"test": summary}),
    })
}

/// Largest `|base + Σphi − margin|` over the explained rows.
pub const LOCAL_ACCURACY_TOLERANCE: f64 = 1e-9;

pub fn explain(cfg: &PipelineConfig, store: &mut ArtifactStore) -> Result<StageOutput, PipelineError> {
    let test = load_matrix(store, "test")?;
    let model = load_model(store, &cfg.explain.model)?;
    let ensemble = model
        .tree_ensemble()
        .ok_or_else(|| failed(format!("{} is not a tree model", cfg.explain.model)))?;
    let vectors = explain_matrix(ensemble, &test).map_err(failed)?;
    let max_dev = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (v.total() - ensemble.margin(test.row(i))).abs())
        .fold(0.0, f64::max);
    if max_dev > LOCAL_ACCURACY_TOLERANCE {
        return Err(failed(format!("local accuracy violated by {max_dev:e}")));
    }
    let names = test.column_names();
    store.put("explain", "shap_values", "csv", &csv_bytes(|b| write_shap_values(b, &vectors, &names))?)?;

    let mut rankings = Vec::new();
    for scope in ShapScope::ALL {
        match aggregate_shap(&vectors, &test, &cfg.groups, scope) {
            Ok(r) => rankings.extend(r),
            Err(ExplainError::Scope(m)) => log::warn!("{m}; ranking skipped"),
            Err(e) => return Err(failed(e)),
        }
    }
    store.put("explain", "rankings", "csv", &csv_bytes(|b| write_rankings(b, &rankings, cfg.explain.rank_n))?)?;

    let groups = row_groups(&test, &cfg.groups).map_err(failed)?;
    let counts = group_counts(&groups);
    let mut summaries = Vec::new();
    for g in SpeciesGroup::ALL {
        if counts.get(&g).copied().unwrap_or(0) > 0 {
            summaries.push(shap_summary(&vectors, &test, &cfg.groups, g, cfg.explain.top_k).map_err(failed)?);
        }
    }
    store.put("explain", "summary_points", "csv", &csv_bytes(|b| write_summary(b, &summaries, &test))?)?;
    let group_rows: BTreeMap<&str, usize> = counts.iter().map(|(g, c)| (g.as_str(), *c)).collect();
    Ok(StageOutput {
        rows_in: test.n_rows(),
        rows_out: vectors.len(),
        skipped: false,
        details: json!({
            "model": cfg.explain.model,
            "max_local_accuracy_error": max_dev,
            "group_rows": group_rows,
            "flagged_placements": flagged_placements(&cfg.groups),
            "rankings": rankings.len(),
        }),
    })
}

/// Placements listed in the run report for review (horse).
fn flagged_placements(groups: &crate::explain::SpeciesGroupMap) -> Vec<Value> {
    groups
        .entries()
        .filter(|(s, _)| s.eq_ignore_ascii_case("horse"))
        .map(|(s, g)| json!({"species": s, "group": g.as_str()}))
        .collect()
}

pub fn run_stage(stage: Stage, cfg: &PipelineConfig, store: &mut ArtifactStore) -> Result<StageOutput, PipelineError> {
    match stage {
        Stage::Ingest => ingest(cfg, store),
        Stage::Harmonize => harmonize(cfg, store),
        Stage::Prepare => prepare(cfg, store),
        Stage::Split => split(cfg, store),
        Stage::Resample => resample_stage(cfg, store),
        Stage::Train => train(cfg, store),
        Stage::Ssl => ssl(cfg, store),
        Stage::Evaluate => evaluate(cfg, store),
        Stage::Explain => explain(cfg, store),
    }
}
