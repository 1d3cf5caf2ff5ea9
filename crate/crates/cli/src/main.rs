use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vetpv::pipeline::{aggregate_results, run_stages, PipelineConfig, PipelineError, Stage, ENV_OUTPUT_DIR};
use vetpv::synth::{generate, write_corpus, SynthParams};

/// Adverse-event outcome modelling pipeline.
#[derive(Parser)]
#[command(name = "vetpv", version)]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Override a setting, e.g. `--set resample.strategy=undersample`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage from ingest to explain.
    Run(ConfigArgs),
    /// Parse the JSON reports into the four bulk tables.
    Ingest(ConfigArgs),
    /// Map terms and codes and attach descriptors.
    Harmonize(ConfigArgs),
    /// Normalize, filter, impute, encode and prune.
    Prepare(ConfigArgs),
    /// Materialize train, validation and test matrices.
    Split(ConfigArgs),
    /// Resample the training matrix.
    Resample(ConfigArgs),
    /// Fit the configured models.
    Train(ConfigArgs),
    /// Pseudo-label unlabeled reports and retrain the base model.
    Ssl(ConfigArgs),
    /// Score every trained model on validation and test.
    Evaluate(ConfigArgs),
    /// Compute SHAP values and group rankings.
    Explain(ConfigArgs),
    /// Merge the results of every run in the output directory.
    Report {
        /// Configuration whose output directory is scanned.
        #[arg(short, long, conflicts_with = "output_dir")]
        config: Option<PathBuf>,
        /// Output directory to scan.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Write a synthetic corpus with its ontology and descriptor tables.
    Synth {
        /// Destination directory.
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthParams::default().n_reports)]
        reports: usize,
        #[arg(long, default_value_t = SynthParams::default().n_quarters)]
        quarters: usize,
        #[arg(long, default_value_t = SynthParams::default().seed)]
        seed: u64,
        /// Write plain `.json` instead of `.json.gz`.
        #[arg(long)]
        no_gzip: bool,
    },
}

fn load(args: &ConfigArgs) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load_with(&args.config, &args.overrides)?;
    cfg.validate()?;
    eprintln!("# effective configuration (hash {})", cfg.hash());
    eprint!("{}", cfg.effective());
    Ok(cfg)
}

fn stages(cfg: &ConfigArgs, stages: &[Stage]) -> Result<(), PipelineError> {
    let cfg = load(cfg)?;
    let report = run_stages(&cfg, stages)?;
    for s in &report.stages {
        println!("{:<10} {:<8} {:>8.2}s {:>7} -> {}", s.name, s.status, s.seconds, s.rows_in, s.rows_out);
    }
    println!("artifacts: {}", cfg.run_dir().display());
    Ok(())
}

fn dispatch(cmd: Command) -> Result<(), PipelineError> {
    match cmd {
        Command::Run(a) => stages(&a, &Stage::ALL),
        Command::Ingest(a) => stages(&a, &[Stage::Ingest]),
        Command::Harmonize(a) => stages(&a, &[Stage::Harmonize]),
        Command::Prepare(a) => stages(&a, &[Stage::Prepare]),
        Command::Split(a) => stages(&a, &[Stage::Split]),
        Command::Resample(a) => stages(&a, &[Stage::Resample]),
        Command::Train(a) => stages(&a, &[Stage::Train]),
        Command::Ssl(a) => stages(&a, &[Stage::Ssl]),
        Command::Evaluate(a) => stages(&a, &[Stage::Evaluate]),
        Command::Explain(a) => stages(&a, &[Stage::Explain]),
        Command::Report { config, output_dir } => {
            let dir = match (config, output_dir) {
                (Some(c), _) => PipelineConfig::load(&c)?.paths.output_dir,
                (None, Some(d)) => d,
                (None, None) => std::env::var_os(ENV_OUTPUT_DIR).map(PathBuf::from).ok_or_else(|| {
                    PipelineError::Config(format!("give --config, --output-dir or set {ENV_OUTPUT_DIR}"))
                })?,
            };
            let table = aggregate_results(&dir)?;
            print!("{}", table.to_text());
            Ok(())
        }
        Command::Synth {
            out,
            reports,
            quarters,
            seed,
            no_gzip,
        } => {
            let params = SynthParams {
                n_reports: reports,
                n_quarters: quarters,
                seed,
                ..Default::default()
            };
            let (corpus, _) = generate(&params);
            write_corpus(&corpus, &out, !no_gzip).map_err(|e| PipelineError::Io { path: out.clone(), source: e })?;
            println!("wrote {reports} reports to {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
