//! Condition runs over a cohort file, and the run directory layout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tfts_core::harness::{HarnessError, NightRunner, PriceTable};
use tfts_core::model::{ConditionId, NightKey, TraceRecord};
use tfts_core::pipeline::{reference_nights, AnalysisConfig, NightContext, NightSkip};
use tfts_core::prompts::{demonstrations, Demonstration};
use tfts_core::writers::{FaultConfig, FaultConfigError, FaultyBackend, TemplateBackend, WriterBackend};

use crate::io::{history_path, load_records, write_jsonl, IoError};
use crate::remote::{RemoteBackend, RemoteConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Template,
    Faulty(FaultConfig),
    Remote(RemoteConfig),
}

impl BackendConfig {
    pub fn build(&self) -> Result<Box<dyn WriterBackend>, RunError> {
        Ok(match self {
            BackendConfig::Template => Box::new(TemplateBackend),
            BackendConfig::Faulty(config) => Box::new(FaultyBackend::new(config.clone())?),
            BackendConfig::Remote(config) => {
                if std::env::var(&config.api_key_env).is_err() {
                    return Err(RunError::BackendUnavailable(format!(
                        "environment variable {} is not set",
                        config.api_key_env
                    )));
                }
                Box::new(RemoteBackend::new(config.clone()))
            }
        })
    }
}

/// Everything that determines a run, written next to its traces as `manifest.toml`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub cohort: PathBuf,
    pub history: Option<PathBuf>,
    pub condition: ConditionId,
    pub seed: u64,
    pub max_in_flight: usize,
    pub rule_version: String,
    pub threshold_version: String,
    pub out: PathBuf,
    pub backend: BackendConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Fault(#[from] FaultConfigError),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("{0} exists and is not empty; pass --force to overwrite")]
    OutputExists(PathBuf),
    #[error("{0}")]
    Config(String),
}

impl RunError {
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Io(e) => e.kind(),
            RunError::Harness(HarnessError::Cost(_)) => "UnknownModel",
            RunError::Harness(_) => "HarnessError",
            RunError::Fault(_) => "InvalidProbability",
            RunError::BackendUnavailable(_) => "BackendUnavailable",
            RunError::OutputExists(_) => "OutputExists",
            RunError::Config(_) => "ConfigError",
        }
    }
}

/// Scoreable nights and the nights skipped with their reason.
pub type Prepared = (Vec<NightContext>, Vec<(NightKey, NightSkip)>);

pub struct RunOutput {
    pub traces: Vec<TraceRecord>,
    pub skipped: Vec<(NightKey, NightSkip)>,
}

/// Runs one condition over prepared nights on at most `threads` workers.
/// Traces come back in night order whatever the scheduling.
pub fn run_nights(
    nights: &[NightContext],
    condition: ConditionId,
    backend: &dyn WriterBackend,
    cfg: &AnalysisConfig,
    demos: &[Demonstration],
    prices: Option<&PriceTable>,
    threads: usize,
) -> Result<Vec<TraceRecord>, RunError> {
    if condition.replaced_layer().is_some() && !backend.supports_artifacts() {
        return Err(HarnessError::ArtifactsUnsupported(backend.model().into()).into());
    }
    let runner = NightRunner { backend, cfg, demos, prices };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| RunError::Config(e.to_string()))?;
    let traces: Result<Vec<TraceRecord>, HarnessError> =
        pool.install(|| nights.par_iter().map(|ctx| runner.run_night(condition, ctx)).collect());
    Ok(traces?)
}

/// Loads the cohort and its history and prepares every scoreable night.
pub fn prepare(cohort: &Path, history: Option<&Path>, cfg: &AnalysisConfig) -> Result<Prepared, RunError> {
    let records = load_records(cohort, &cfg.vocabulary)?;
    let history = match history {
        Some(path) => load_records(path, &cfg.vocabulary)?,
        None => {
            let implied = history_path(cohort);
            if implied.exists() {
                load_records(&implied, &cfg.vocabulary)?
            } else {
                Vec::new()
            }
        }
    };
    Ok(reference_nights(&records, &history, cfg))
}

pub fn run_condition(
    manifest: &RunManifest,
    cfg: &AnalysisConfig,
    prices: Option<&PriceTable>,
) -> Result<RunOutput, RunError> {
    let backend = manifest.backend.build()?;
    let (nights, skipped) = prepare(&manifest.cohort, manifest.history.as_deref(), cfg)?;
    let demos = demonstrations();
    let traces =
        run_nights(&nights, manifest.condition, backend.as_ref(), cfg, &demos, prices, manifest.max_in_flight)?;
    Ok(RunOutput { traces, skipped })
}

/// Creates `dir`, refusing a non-empty one unless `force`.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<(), RunError> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir).map_err(|e| IoError::io(dir, e))?.next().is_some();
        if non_empty && !force {
            return Err(RunError::OutputExists(dir.to_path_buf()));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    Ok(())
}

pub fn trace_file_name(condition: ConditionId, model: &str) -> String {
    let model: String =
        model.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect();
    format!("traces__{condition}__{model}.jsonl")
}

/// Writes traces, skip log and manifest. Returns the trace file path.
pub fn write_run(manifest: &RunManifest, model: &str, output: &RunOutput) -> Result<PathBuf, RunError> {
    let dir = &manifest.out;
    let traces = dir.join(trace_file_name(manifest.condition, model));
    write_jsonl(&traces, &output.traces)?;

    let mut skips = String::new();
    for (night, reason) in &output.skipped {
        let _ = writeln!(skips, "{night}\t{reason}");
    }
    let path = dir.join("skips.txt");
    std::fs::write(&path, skips).map_err(|e| IoError::io(&path, e))?;

    let text = toml::to_string(manifest).map_err(|e| RunError::Config(e.to_string()))?;
    let path = dir.join("manifest.toml");
    std::fs::write(&path, text).map_err(|e| IoError::io(&path, e))?;
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tfts_core::cohort::{generate_cohort, CohortSpec};

    #[test]
    fn manifest_round_trips_through_toml() {
        let manifest = RunManifest {
            cohort: "c.jsonl".into(),
            history: None,
            condition: ConditionId::ReplaceRanker,
            seed: 3,
            max_in_flight: 2,
            rule_version: "select-v1".into(),
            threshold_version: "attr-gate-v1".into(),
            out: "out".into(),
            backend: BackendConfig::Faulty(FaultConfig { p_artifact: 0.3, ..FaultConfig::none(3) }),
        };
        let text = toml::to_string(&manifest).unwrap();
        assert_eq!(toml::from_str::<RunManifest>(&text).unwrap(), manifest);
    }

    #[test]
    fn without_history_early_nights_are_logged_as_skips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let spec = CohortSpec { n_users: 1, nights_per_user: 7, ..CohortSpec::default() };
        write_jsonl(&path, &generate_cohort(&spec).unwrap()).unwrap();
        let (nights, skipped) = prepare(&path, None, &AnalysisConfig::default()).unwrap();
        assert_eq!((nights.len(), skipped.len()), (2, 5));
        assert!(skipped.iter().all(|(_, s)| *s == NightSkip::ColdStart));
    }

    #[test]
    fn output_dir_is_not_overwritten() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x"), "").unwrap();
        assert!(matches!(prepare_output_dir(dir.path(), false), Err(RunError::OutputExists(_))));
        assert!(prepare_output_dir(dir.path(), true).is_ok());
        assert!(prepare_output_dir(&dir.path().join("fresh"), false).is_ok());
    }

    #[test]
    fn model_names_are_file_safe() {
        assert_eq!(trace_file_name(ConditionId::Tfts, "org/model 1"), "traces__tfts__org_model_1.jsonl");
    }
}
