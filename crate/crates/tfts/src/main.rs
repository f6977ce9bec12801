use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rust_decimal::Decimal;
use tfts_core::cohort::{generate_cohort, generate_history, CohortSpec};
use tfts_core::harness::PriceTable;
use tfts_core::model::{ConditionId, TraceRecord};
use tfts_core::pipeline::AnalysisConfig;
use tfts_core::writers::{FaultConfig, FaultKind};

use tfts::io::{expand_inputs, history_path, load_records, read_jsonl, write_jsonl, IoError};
use tfts::remote::RemoteConfig;
use tfts::report::{aggregate_scored, detail_csv, frontier_csv, load_prices, results_csv, score_traces, ScoredNight};
use tfts::runner::{prepare, prepare_output_dir, run_condition, write_run, BackendConfig, RunError, RunManifest};
use tfts::sweep::{fault_sweep, sweep_csv};

/// Partitioned sleep-insight pipeline: data generation, condition runs and scoring.
///
/// Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print one
/// line to stderr: `error kind=<Kind> message=<json string>`.
#[derive(Parser)]
#[command(name = "tfts", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic cohort plus its warm-up history.
    GenData(GenData),
    /// Run one condition over a cohort and persist the traces.
    Run(Run),
    /// Score traces; writes per-night scores and the result tables.
    Score(Score),
    /// Rebuild result tables from score files.
    Aggregate(Aggregate),
    /// Cost/error frontier from score files.
    Frontier(Frontier),
    /// Injected-versus-measured fault rates.
    FaultSweep(FaultSweep),
    /// Check a cohort file or trace files without writing anything.
    Validate(Validate),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    users: u32,
    #[arg(long)]
    nights: u32,
    #[arg(long, default_value = "2026-02-10")]
    start_date: NaiveDate,
    #[arg(long, default_value = "0.3")]
    event_rate: Decimal,
    /// Nights of history before the start date; written to `<stem>.history.jsonl`.
    #[arg(long, default_value_t = 14)]
    warmup: u32,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Template,
    Faulty,
    Remote,
}

#[derive(Args)]
struct Run {
    #[arg(long)]
    cohort: PathBuf,
    /// Defaults to `<stem>.history.jsonl` next to the cohort when present.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    condition: ConditionId,
    #[arg(long, value_enum)]
    backend: BackendKind,
    /// Model name; required for the remote backend.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    force: bool,
    /// Price table CSV; when given, traces carry their cost.
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    p_numeric: f64,
    #[arg(long, default_value_t = 0.0)]
    p_tag: f64,
    #[arg(long, default_value_t = 0.0)]
    p_swap: f64,
    #[arg(long, default_value_t = 0.0)]
    p_schema: f64,
    /// Artifact corruption rate for replacement conditions (faulty backend).
    #[arg(long, default_value_t = 0.0)]
    p_artifact: f64,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long, default_value = "TFTS_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value_t = 60_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 2)]
    max_retries: u32,
}

#[derive(Args)]
struct Score {
    /// Trace files or run directories.
    #[arg(long, required = true, num_args = 1..)]
    traces: Vec<PathBuf>,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct Aggregate {
    /// Score files or directories holding `scores.jsonl`.
    #[arg(long, required = true, num_args = 1..)]
    scores: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct Frontier {
    #[arg(long, required = true, num_args = 1..)]
    scores: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct FaultSweep {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    p_numeric: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    p_tag: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    p_swap: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    p_schema: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    max_in_flight: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct Validate {
    #[arg(long)]
    cohort: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    traces: Vec<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{1}")]
    Other(&'static str, String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Run(e) => e.kind(),
            CliError::Io(e) => e.kind(),
            CliError::Other(kind, _) => kind,
        }
    }
}

fn refuse_existing_file(path: &Path, force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(RunError::OutputExists(path.to_path_buf()).into());
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| IoError::io(path, e).into())
}

fn gen_data(a: GenData) -> Result<(), CliError> {
    let spec = CohortSpec {
        seed: a.seed,
        n_users: a.users,
        nights_per_user: a.nights,
        start_date: a.start_date,
        event_rate: a.event_rate,
        warmup_nights: a.warmup,
        ..CohortSpec::default()
    };
    let invalid = |e: tfts_core::cohort::InvalidSpec| CliError::Other("InvalidSpec", e.to_string());
    let cohort = generate_cohort(&spec).map_err(invalid)?;
    let history = generate_history(&spec).map_err(invalid)?;
    let history_file = history_path(&a.out);
    refuse_existing_file(&a.out, a.force)?;
    refuse_existing_file(&history_file, a.force)?;
    write_jsonl(&a.out, &cohort)?;
    write_jsonl(&history_file, &history)?;
    println!("gen-data records={} history={} out={}", cohort.len(), history.len(), a.out.display());
    Ok(())
}

fn load_price_table(path: Option<&Path>) -> Result<Option<PriceTable>, CliError> {
    Ok(path.map(load_prices).transpose()?)
}

fn run(a: Run) -> Result<(), CliError> {
    let backend = match a.backend {
        BackendKind::Template => BackendConfig::Template,
        BackendKind::Faulty => BackendConfig::Faulty(FaultConfig {
            p_numeric: a.p_numeric,
            p_tag_add: a.p_tag,
            p_metric_swap: a.p_swap,
            p_schema: a.p_schema,
            p_artifact: a.p_artifact,
            ..FaultConfig::none(a.seed)
        }),
        BackendKind::Remote => {
            let model = a
                .model
                .clone()
                .ok_or(CliError::Other("ConfigError", "--model is required for the remote backend".into()))?;
            let base_url = a
                .base_url
                .clone()
                .ok_or(CliError::Other("ConfigError", "--base-url is required for the remote backend".into()))?;
            BackendConfig::Remote(RemoteConfig {
                timeout_ms: a.timeout_ms,
                max_retries: a.max_retries,
                max_in_flight: a.max_in_flight,
                ..RemoteConfig::new(&base_url, &model, &a.api_key_env)
            })
        }
    };
    let cfg = AnalysisConfig::default();
    let manifest = RunManifest {
        cohort: a.cohort,
        history: a.history,
        condition: a.condition,
        seed: a.seed,
        max_in_flight: a.max_in_flight,
        rule_version: cfg.rule.rule_version.clone(),
        threshold_version: cfg.threshold_version.clone(),
        out: a.out,
        backend,
    };
    let prices = load_price_table(a.prices.as_deref())?;
    let model = manifest.backend.build()?.model().to_string();
    prepare_output_dir(&manifest.out, a.force)?;
    let output = run_condition(&manifest, &cfg, prices.as_ref())?;
    let path = write_run(&manifest, &model, &output)?;
    let calls: usize = output.traces.iter().map(|t| t.calls.len()).sum();
    println!(
        "run condition={} model={} nights={} skipped={} calls={} traces={}",
        manifest.condition,
        model,
        output.traces.len(),
        output.skipped.len(),
        calls,
        path.display()
    );
    Ok(())
}

fn write_tables(dir: &Path, scored: &[ScoredNight]) -> Result<(), CliError> {
    let rows = aggregate_scored(scored);
    write_file(&dir.join("results.csv"), &results_csv(&rows))?;
    write_file(&dir.join("results_detail.csv"), &detail_csv(&rows))?;
    Ok(())
}

fn score(a: Score) -> Result<(), CliError> {
    let prices = load_price_table(a.prices.as_deref())?;
    let mut scored = Vec::new();
    for path in expand_inputs(&a.traces, "traces__")? {
        let traces: Vec<TraceRecord> = read_jsonl(&path)?;
        scored.extend(
            score_traces(&traces, prices.as_ref()).map_err(|e| CliError::Other("UnknownModel", e.to_string()))?,
        );
    }
    prepare_output_dir(&a.out, a.force)?;
    write_jsonl(&a.out.join("scores.jsonl"), &scored)?;
    write_tables(&a.out, &scored)?;
    println!("score nights={} out={}", scored.len(), a.out.display());
    Ok(())
}

fn read_scores(inputs: &[PathBuf]) -> Result<Vec<ScoredNight>, CliError> {
    let mut scored = Vec::new();
    for path in expand_inputs(inputs, "scores")? {
        scored.extend(read_jsonl::<ScoredNight>(&path)?);
    }
    Ok(scored)
}

fn aggregate(a: Aggregate) -> Result<(), CliError> {
    let scored = read_scores(&a.scores)?;
    prepare_output_dir(&a.out, a.force)?;
    write_tables(&a.out, &scored)?;
    println!("aggregate nights={} out={}", scored.len(), a.out.display());
    Ok(())
}

fn frontier(a: Frontier) -> Result<(), CliError> {
    let scored = read_scores(&a.scores)?;
    refuse_existing_file(&a.out, a.force)?;
    let rows = aggregate_scored(&scored);
    write_file(&a.out, &frontier_csv(&rows))?;
    println!("frontier rows={} out={}", rows.len(), a.out.display());
    Ok(())
}

fn sweep(a: FaultSweep) -> Result<(), CliError> {
    let grid: Vec<(FaultKind, Vec<f64>)> = [
        (FaultKind::Numeric, a.p_numeric),
        (FaultKind::TagAdd, a.p_tag),
        (FaultKind::MetricSwap, a.p_swap),
        (FaultKind::Schema, a.p_schema),
    ]
    .into_iter()
    .filter(|(_, ps)| !ps.is_empty())
    .collect();
    if grid.is_empty() {
        return Err(CliError::Other("ConfigError", "no probabilities given".into()));
    }
    refuse_existing_file(&a.out, a.force)?;
    let cfg = AnalysisConfig::default();
    let (nights, _) = prepare(&a.cohort, a.history.as_deref(), &cfg)?;
    let rows = fault_sweep(&nights, &grid, a.seed, &cfg, a.max_in_flight)?;
    write_file(&a.out, &sweep_csv(&rows))?;
    let calibrated = rows.iter().filter(|r| r.calibrated()).count();
    println!("fault-sweep points={} calibrated={} out={}", rows.len(), calibrated, a.out.display());
    Ok(())
}

fn validate(a: Validate) -> Result<(), CliError> {
    if a.cohort.is_none() && a.traces.is_empty() {
        return Err(CliError::Other("ConfigError", "nothing to validate; pass --cohort or --traces".into()));
    }
    let cfg = AnalysisConfig::default();
    if let Some(path) = &a.cohort {
        let records = load_records(path, &cfg.vocabulary)?;
        println!("valid cohort records={} path={}", records.len(), path.display());
    }
    for path in expand_inputs(&a.traces, "traces__")? {
        let traces: Vec<TraceRecord> = read_jsonl(&path)?;
        if let Some(t) = traces.iter().find(|t| t.calls.len() != t.condition.calls_per_night()) {
            return Err(CliError::Other(
                "CallCountViolation",
                format!("{}: night {} has {} calls", path.display(), t.night, t.calls.len()),
            ));
        }
        println!("valid traces records={} path={}", traces.len(), path.display());
    }
    Ok(())
}

fn fail(kind: &str, message: &str) {
    eprintln!("error kind={kind} message={}", serde_json::to_string(message).expect("string serializes"));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            fail("UsageError", e.kind().as_str().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Run(a) => run(a),
        Command::Score(a) => score(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Frontier(a) => frontier(a),
        Command::FaultSweep(a) => sweep(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            fail(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
