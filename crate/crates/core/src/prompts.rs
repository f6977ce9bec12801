//! Prompts for the one-call baselines.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::{compare_all, compute_baseline};
use crate::metric::MetricId;
use crate::model::{InsightOutput, InsightSchema, UserNightRecord};
use crate::num;
use crate::pipeline::AnalysisConfig;

/// User ids starting with this prefix are reserved for demonstrations.
pub const DEMO_PREFIX: &str = "demo-";

const DEMONSTRATIONS_JSON: &str = include_str!("../fixtures/demonstrations.json");

/// One worked night shown to the few-shot baseline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demonstration {
    pub record: UserNightRecord,
    pub table: Vec<String>,
    pub output: InsightOutput,
}

/// The two demonstrations shipped with the crate.
pub fn demonstrations() -> Vec<Demonstration> {
    serde_json::from_str(DEMONSTRATIONS_JSON).expect("bundled demonstrations parse")
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("night {0} collides with a demonstration")]
    DemonstrationLeak(String),
}

fn own_history<'a>(record: &UserNightRecord, history: &'a [UserNightRecord]) -> Vec<&'a UserNightRecord> {
    let mut own: Vec<&UserNightRecord> =
        history.iter().filter(|r| r.user_id == record.user_id && r.date < record.date).collect();
    own.sort_by_key(|r| r.date);
    own
}

fn value_list(values: &BTreeMap<MetricId, rust_decimal::Decimal>) -> String {
    let parts: Vec<String> = values.iter().map(|(m, v)| format!("{}={}", m.as_str(), v)).collect();
    parts.join(", ")
}

fn schema_text(cfg: &AnalysisConfig) -> String {
    InsightSchema::by_id(&cfg.schema_id).map(|s| s.describe()).unwrap_or_default()
}

/// Raw record, history values, schema and the shared rules. No examples.
pub fn build_zero_shot_prompt(record: &UserNightRecord, history: &[UserNightRecord], cfg: &AnalysisConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "You write one sleep insight for a user as a single JSON object.");
    let _ = writeln!(out, "schema_id: {}", cfg.schema_id);
    let _ = writeln!(out, "{}", cfg.rule_text());
    let _ = writeln!(out, "{}", cfg.attribution_text());
    let record_json = serde_json::to_string(record).expect("record serializes");
    let _ = writeln!(out, "Tonight's record: {record_json}");
    let own = own_history(record, history);
    let window = &own[own.len().saturating_sub(cfg.window_nights)..];
    if window.is_empty() {
        let _ = writeln!(out, "History: none. No baseline is available for any metric.");
    } else {
        let _ = writeln!(out, "History (oldest first, last {} nights):", window.len());
        for r in window {
            let _ = writeln!(out, "{}: {}", r.date, value_list(&r.values));
        }
    }
    let _ = writeln!(out, "Output schema:\n{}", schema_text(cfg));
    let _ = writeln!(out, "Reply with the JSON object only.");
    out
}

/// `metric | current | baseline | delta` rows for every metric in the record.
pub fn metric_table(record: &UserNightRecord, history: &[UserNightRecord], cfg: &AnalysisConfig) -> Vec<String> {
    let own: Vec<UserNightRecord> = own_history(record, history).into_iter().cloned().collect();
    let baselines = record.values.keys().map(|&m| (m, compute_baseline(&own, m, cfg.window_nights))).collect();
    let comparisons = compare_all(record, &baselines);
    record
        .values
        .iter()
        .map(|(&m, &v)| match comparisons.iter().find(|c| c.metric == m) {
            Some(c) => format!(
                "{} | {} | {} | {}%",
                m.as_str(),
                num::format_fixed(c.current, m.precision()),
                num::format_fixed(c.baseline_mean, m.precision()),
                num::signed_pct(c.pct_delta)
            ),
            None => format!("{} | {} | n/a | n/a", m.as_str(), num::format_fixed(v, m.precision())),
        })
        .collect()
}

/// Zero-shot content plus the metric table, grounding instructions and the
/// worked demonstrations.
pub fn build_few_shot_prompt(
    record: &UserNightRecord,
    history: &[UserNightRecord],
    cfg: &AnalysisConfig,
    demos: &[Demonstration],
) -> Result<String, PromptError> {
    let leaked = record.user_id.starts_with(DEMO_PREFIX)
        || demos.iter().any(|d| d.record.user_id == record.user_id && d.record.date == record.date);
    if leaked {
        return Err(PromptError::DemonstrationLeak(format!("{} {}", record.user_id, record.date)));
    }
    let mut out = build_zero_shot_prompt(record, history, cfg);
    let _ = writeln!(out, "Metric table (metric | current | baseline | delta):");
    for row in metric_table(record, history, cfg) {
        let _ = writeln!(out, "{row}");
    }
    let _ = writeln!(
        out,
        "Every number you write must be copied from the metric table. Do not compute new numbers. \
         Only use tags admitted by the attribution rule."
    );
    for (i, demo) in demos.iter().enumerate() {
        let _ = writeln!(out, "Example {}:", i + 1);
        let _ = writeln!(out, "events: {}", serde_json::to_string(&demo.record.events).expect("events serialize"));
        for row in &demo.table {
            let _ = writeln!(out, "{row}");
        }
        let _ = writeln!(out, "output: {}", serde_json::to_string(&demo.output).expect("output serializes"));
    }
    Ok(out)
}
