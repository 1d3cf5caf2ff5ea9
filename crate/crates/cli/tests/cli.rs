use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vetpv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vetpv"))
        .args(args)
        .env_remove("VETPV_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A small corpus plus a config that trains a single tree.
fn workspace(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().to_str().unwrap();
    let o = vetpv(&["synth", "--out", data, "--reports", "600", "--quarters", "2", "--seed", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = dir.path().join("run.ini");
    std::fs::write(
        &cfg,
        format!(
            "seed = 11\nthreads = 1\n[paths]\ninput_dir = json\nveddra = veddra_hlt.tsv\n\
             atcvet = atcvet_subgroups.tsv\ndescriptors = descriptors.tsv\noutput_dir = out\n\
             [train]\nmodels = tree\n[explain]\nmodel = tree\n{extra}"
        ),
    )
    .unwrap();
    (dir, cfg)
}

fn manifest_names(run_dir: &Path) -> Vec<String> {
    std::fs::read_to_string(run_dir.join("manifest.tsv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect()
}

#[test]
fn missing_ontology_file_is_a_validation_error() {
    let (dir, cfg) = workspace("");
    std::fs::remove_file(dir.path().join("veddra_hlt.tsv")).unwrap();
    let o = vetpv(&["run", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("veddra_hlt.tsv"));
    assert!(!dir.path().join("out").exists(), "no stage may run");
}

#[test]
fn ssl_without_trained_baseline_names_the_missing_artifact() {
    let (_dir, cfg) = workspace("[ssl]\nenabled = true\nbase = tree\n");
    let c = cfg.to_str().unwrap();
    for stage in ["ingest", "harmonize", "prepare", "split", "resample"] {
        let o = vetpv(&[stage, "-c", c]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let o = vetpv(&["ssl", "-c", c]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("model_tree.*.txt"), "{}", stderr(&o));
}

#[test]
fn evaluate_after_train_writes_metrics() {
    let (dir, cfg) = workspace("");
    let c = cfg.to_str().unwrap();
    for stage in ["ingest", "harmonize", "prepare", "split", "resample", "train"] {
        let o = vetpv(&[stage, "-c", c]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let run = dir.path().join("out/run");
    assert!(!manifest_names(&run).contains(&"results.csv".to_string()));
    let o = vetpv(&["evaluate", "-c", c]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names = manifest_names(&run);
    for n in ["results.csv", "results.txt", "metrics.json"] {
        assert!(names.contains(&n.to_string()), "{n} missing from {names:?}");
    }
}

#[test]
fn run_lists_nine_stages_and_report_merges_runs() {
    let (dir, cfg) = workspace("");
    let c = cfg.to_str().unwrap();
    let o = vetpv(&["run", "-c", c]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = vetpv(&["run", "-c", c, "--set", "name=under", "--set", "resample.strategy=undersample"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/run/run_report.json")).unwrap()).unwrap();
    let stages: Vec<&str> = report["stages"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(
        stages,
        ["ingest", "harmonize", "prepare", "split", "resample", "train", "ssl", "evaluate", "explain"]
    );
    assert_eq!(report["stages"][6]["status"], "skipped");

    let o = vetpv(&["report", "-c", c]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(dir.path().join("out/summary_table.csv")).unwrap();
    let header = table.lines().next().unwrap();
    assert!(header.starts_with("model,none:F1,"), "{header}");
    assert!(header.contains("undersample:F1"), "{header}");
    assert_eq!(table.lines().count(), 2);
}

#[test]
fn unknown_override_key_exits_with_one() {
    let (_dir, cfg) = workspace("");
    let o = vetpv(&["ingest", "-c", cfg.to_str().unwrap(), "--set", "train.modles=tree"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("train.modles"));
}

#[test]
fn failing_stage_exits_with_two_and_is_recorded() {
    let (dir, cfg) = workspace("");
    let c = cfg.to_str().unwrap();
    assert!(vetpv(&["ingest", "-c", c]).status.success());
    for f in std::fs::read_dir(dir.path().join("json")).unwrap() {
        std::fs::write(f.unwrap().path(), b"not gzip").unwrap();
    }
    let o = vetpv(&["ingest", "-c", c]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/run/run_report.json")).unwrap()).unwrap();
    assert_eq!(report["failed_stage"], "ingest");
    assert!(manifest_names(&dir.path().join("out/run")).contains(&"main.copy".to_string()));
}
