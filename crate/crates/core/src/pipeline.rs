//! Runs the deterministic layers for one night and replays the downstream
//! layers when one of them is replaced.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    attribute, baseline_window, build_packet, compare_all, compute_baseline, format_reference_report, rank,
    ReferenceReport, RuleError, SelectionRule, DEFAULT_WINDOW_NIGHTS, THRESHOLD_VERSION,
};
use crate::metric::{default_candidates, MetricId, Tag, TagVocabulary, DEFAULT_VOCABULARY};
use crate::model::{
    build_fact_bank, AttributionSet, BaselineStats, ChartPoint, ComparisonFact, FactBank, RankingDecision,
    ReferenceFacts, StyleConstraints, UserNightRecord, WriterPacket, SCHEMA_V1,
};

/// Everything the deterministic layers and the prompts share.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub rule: SelectionRule,
    pub window_nights: usize,
    pub threshold: Decimal,
    pub threshold_version: String,
    pub candidates: Vec<Tag>,
    pub vocabulary: TagVocabulary,
    pub style: StyleConstraints,
    pub schema_id: String,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            rule: SelectionRule::default(),
            window_nights: DEFAULT_WINDOW_NIGHTS,
            threshold: Decimal::new(5, 1),
            threshold_version: THRESHOLD_VERSION.into(),
            candidates: default_candidates(),
            vocabulary: TagVocabulary(DEFAULT_VOCABULARY.iter().map(|t| Tag::new(t)).collect()),
            style: StyleConstraints::default(),
            schema_id: SCHEMA_V1.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("threshold {0} is outside (0, 1]")]
    Threshold(Decimal),
    #[error("window_nights must be at least 1")]
    Window,
    #[error("candidate {0} is not in the tag vocabulary")]
    Candidate(Tag),
    #[error("unknown schema {0}")]
    Schema(String),
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.rule.validate()?;
        if self.threshold <= Decimal::ZERO || self.threshold > Decimal::ONE {
            return Err(ConfigError::Threshold(self.threshold));
        }
        if self.window_nights < 1 {
            return Err(ConfigError::Window);
        }
        if let Some(c) = self.candidates.iter().find(|c| !self.vocabulary.contains(c)) {
            return Err(ConfigError::Candidate(c.clone()));
        }
        if crate::model::InsightSchema::by_id(&self.schema_id).is_none() {
            return Err(ConfigError::Schema(self.schema_id.clone()));
        }
        Ok(())
    }

    /// The selection rule as given to prompts.
    pub fn rule_text(&self) -> String {
        let weights: Vec<String> =
            MetricId::ALL.iter().map(|&m| format!("{}={}", m.as_str(), self.rule.weight(m))).collect();
        format!(
            "Selection rule ({}): baseline = mean of the last {} nights that have the metric. \
             pct_delta = round_half_away_from_zero(100 * (current - baseline) / baseline). \
             A metric is eligible when it has at least {} baseline nights and a non-zero baseline. \
             score = weight * |pct_delta| with weights {}. Select the eligible metric with the highest score; \
             ties go to the metric listed first in: {}.",
            self.rule.rule_version,
            self.window_nights,
            self.rule.min_baseline_nights,
            weights.join(", "),
            MetricId::ALL.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", ")
        )
    }

    /// The attribution gate as given to prompts.
    pub fn attribution_text(&self) -> String {
        let names: Vec<&str> = self.candidates.iter().map(Tag::as_str).collect();
        format!(
            "Attribution rule ({}): tag candidates are {}. A candidate's evidence is the highest strength of \
             tonight's logged events with that tag (0 if none). Include a tag only when evidence >= {}. \
             List included tags by descending evidence, ties by name. Never include any other tag.",
            self.threshold_version,
            names.join(", "),
            self.threshold
        )
    }
}

/// Why a night produced no insight.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum NightSkip {
    #[error("cold start: no eligible metric")]
    ColdStart,
    #[error("{0}")]
    Invalid(String),
}

/// All reference layer outputs for one night.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NightContext {
    pub record: UserNightRecord,
    /// Same user, strictly earlier nights, oldest first.
    pub history: Vec<UserNightRecord>,
    pub baselines: BTreeMap<MetricId, BaselineStats>,
    pub comparisons: Vec<ComparisonFact>,
    pub report: ReferenceReport,
    pub ranking: RankingDecision,
    pub attribution: AttributionSet,
    pub bank: FactBank,
    pub chart: Vec<ChartPoint>,
    pub packet: WriterPacket,
}

impl NightContext {
    /// Runs every deterministic layer. `history` may contain other users and
    /// later nights; only the user's earlier nights are used.
    pub fn reference(
        record: &UserNightRecord,
        history: &[UserNightRecord],
        cfg: &AnalysisConfig,
    ) -> Result<NightContext, NightSkip> {
        let mut own: Vec<UserNightRecord> =
            history.iter().filter(|r| r.user_id == record.user_id && r.date < record.date).cloned().collect();
        own.sort_by_key(|r| r.date);

        let baselines: BTreeMap<MetricId, BaselineStats> =
            record.values.keys().map(|&m| (m, compute_baseline(&own, m, cfg.window_nights))).collect();
        let comparisons = compare_all(record, &baselines);
        let report = format_reference_report(record, &comparisons);
        let ranking = rank(&comparisons, &baselines, &cfg.rule).map_err(|_| NightSkip::ColdStart)?;
        let attribution = attribute(&record.events, &cfg.candidates, cfg.threshold);

        let (bank, chart, packet) =
            replay(record, &own, cfg, &report, &comparisons, &ranking, &attribution).map_err(NightSkip::Invalid)?;
        Ok(NightContext {
            record: record.clone(),
            history: own,
            baselines,
            comparisons,
            report,
            ranking,
            attribution,
            bank,
            chart,
            packet,
        })
    }

    pub fn chart_for(&self, metric: MetricId, cfg: &AnalysisConfig) -> Vec<ChartPoint> {
        chart(&self.record, &self.history, metric, cfg.window_nights)
    }

    pub fn downstream(
        &self,
        cfg: &AnalysisConfig,
        report: &ReferenceReport,
        comparisons: &[ComparisonFact],
        ranking: &RankingDecision,
        attribution: &AttributionSet,
    ) -> Result<WriterPacket, String> {
        replay(&self.record, &self.history, cfg, report, comparisons, ranking, attribution).map(|(_, _, p)| p)
    }

    pub fn reference_facts(&self) -> ReferenceFacts {
        ReferenceFacts { bank: self.bank.clone(), ranking: self.ranking.clone(), attribution: self.attribution.clone() }
    }
}

/// Baseline nights of `metric` followed by the current night.
fn chart(record: &UserNightRecord, history: &[UserNightRecord], metric: MetricId, window: usize) -> Vec<ChartPoint> {
    let mut chart = baseline_window(history, metric, window);
    if let Some(value) = record.value(metric) {
        chart.push(ChartPoint { date: record.date, value });
    }
    chart
}

/// Fact bank, chart and packet from the given layer outputs.
fn replay(
    record: &UserNightRecord,
    history: &[UserNightRecord],
    cfg: &AnalysisConfig,
    report: &ReferenceReport,
    comparisons: &[ComparisonFact],
    ranking: &RankingDecision,
    attribution: &AttributionSet,
) -> Result<(FactBank, Vec<ChartPoint>, WriterPacket), String> {
    let bank = build_fact_bank(record, comparisons, ranking, attribution).map_err(|e| e.to_string())?;
    let chart = chart(record, history, ranking.selected, cfg.window_nights);
    let packet =
        build_packet(&bank, report, attribution, &chart, cfg.style, &cfg.schema_id).map_err(|e| e.to_string())?;
    Ok((bank, chart, packet))
}

/// Pairs every record with the reference context for its night, in
/// (user_id, date) order. Cold-start and invalid nights are returned separately.
pub fn reference_nights(
    records: &[UserNightRecord],
    history: &[UserNightRecord],
    cfg: &AnalysisConfig,
) -> (Vec<NightContext>, Vec<(crate::model::NightKey, NightSkip)>) {
    let mut all: Vec<UserNightRecord> = history.iter().chain(records).cloned().collect();
    all.sort_by(|a, b| (&a.user_id, a.date).cmp(&(&b.user_id, b.date)));
    let mut ordered: Vec<&UserNightRecord> = records.iter().collect();
    ordered.sort_by(|a, b| (&a.user_id, a.date).cmp(&(&b.user_id, b.date)));

    let mut nights = Vec::new();
    let mut skipped = Vec::new();
    for record in ordered {
        let start = all.partition_point(|r| r.user_id < record.user_id);
        let end = all.partition_point(|r| (&r.user_id, r.date) < (&record.user_id, record.date));
        match NightContext::reference(record, &all[start..end], cfg) {
            Ok(ctx) => nights.push(ctx),
            Err(skip) => skipped.push((record.key(), skip)),
        }
    }
    (nights, skipped)
}
