#![allow(dead_code)]

use tfts_core::cohort::{generate_cohort, generate_history, CohortSpec};
use tfts_core::model::UserNightRecord;
use tfts_core::pipeline::{reference_nights, AnalysisConfig, NightContext};

pub const FIG4_NIGHT: &str = include_str!("../../fixtures/fig4_night.jsonl");
pub const FIG4_OUTPUT: &str = include_str!("../../fixtures/fig4_output.json");

pub fn parse_jsonl(text: &str) -> Vec<UserNightRecord> {
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// The worked night and its 14-night history.
pub fn fig4() -> (UserNightRecord, Vec<UserNightRecord>) {
    let mut all = parse_jsonl(FIG4_NIGHT);
    let night = all.pop().unwrap();
    (night, all)
}

pub fn fig4_context() -> NightContext {
    let (night, history) = fig4();
    NightContext::reference(&night, &history, &AnalysisConfig::default()).unwrap()
}

/// Reference contexts for every scoreable night of a seeded cohort.
pub fn cohort_nights(spec: &CohortSpec) -> Vec<NightContext> {
    let records = generate_cohort(spec).unwrap();
    let history = generate_history(spec).unwrap();
    let (nights, _) = reference_nights(&records, &history, &AnalysisConfig::default());
    nights
}
