use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::metric::{MetricId, Tag};

/// Identifier of the only insight schema shipped.
pub const SCHEMA_V1: &str = "tfts.insight.v1";

/// Length bounds for the free-text headline fields, in characters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleConstraints {
    pub title_max: usize,
    pub core_insight_max: usize,
    pub how_to_improve_max: usize,
}

impl Default for StyleConstraints {
    fn default() -> Self {
        StyleConstraints { title_max: 60, core_insight_max: 280, how_to_improve_max: 280 }
    }
}

/// A versioned output schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InsightSchema {
    pub id: &'static str,
    pub bounds: StyleConstraints,
}

impl InsightSchema {
    pub fn by_id(id: &str) -> Option<InsightSchema> {
        (id == SCHEMA_V1).then(|| InsightSchema { id: SCHEMA_V1, bounds: StyleConstraints::default() })
    }

    /// Human-readable description embedded in prompts.
    pub fn describe(&self) -> String {
        alloc::format!(
            "{{\n  \"headline\": {{\n    \"title\": string, non-empty, at most {} characters,\n    \
             \"core_insight\": string, non-empty, at most {} characters,\n    \
             \"how_to_improve\": string, non-empty, at most {} characters\n  }},\n  \
             \"analysis_card\": {{\n    \"metric_id\": one of sleep_score, duration_min, deep_min, rem_min, light_min, hrv_ms, heart_rate_bpm, resp_rate_brpm, snore_pct,\n    \
             \"finding_statement\": string, non-empty,\n    \
             \"tags\": array of {{\"name\": string, \"evidence\": optional decimal string}},\n    \
             \"chart\": array of {{\"date\": \"YYYY-MM-DD\", \"value\": decimal string}}\n  }}\n}}\n\
             No other fields are allowed.",
            self.bounds.title_max, self.bounds.core_insight_max, self.bounds.how_to_improve_max
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartPoint {
    pub date: NaiveDate,
    pub value: Decimal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Headline {
    pub title: String,
    pub core_insight: String,
    pub how_to_improve: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputTag {
    pub name: Tag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Decimal>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisCard {
    pub metric_id: MetricId,
    pub finding_statement: String,
    pub tags: Vec<OutputTag>,
    pub chart: Vec<ChartPoint>,
}

/// The schema-constrained insight for one night.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsightOutput {
    pub headline: Headline,
    pub analysis_card: AnalysisCard,
}

/// Free-text fields that carry user-facing claims.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextField {
    Title,
    CoreInsight,
    HowToImprove,
    FindingStatement,
}

impl TextField {
    pub const ALL: [TextField; 4] =
        [TextField::Title, TextField::CoreInsight, TextField::HowToImprove, TextField::FindingStatement];
}

impl InsightOutput {
    pub fn field(&self, field: TextField) -> &str {
        match field {
            TextField::Title => &self.headline.title,
            TextField::CoreInsight => &self.headline.core_insight,
            TextField::HowToImprove => &self.headline.how_to_improve,
            TextField::FindingStatement => &self.analysis_card.finding_statement,
        }
    }

    pub fn field_mut(&mut self, field: TextField) -> &mut String {
        match field {
            TextField::Title => &mut self.headline.title,
            TextField::CoreInsight => &mut self.headline.core_insight,
            TextField::HowToImprove => &mut self.headline.how_to_improve,
            TextField::FindingStatement => &mut self.analysis_card.finding_statement,
        }
    }

    /// Canonical JSON rendering.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("insight output serializes")
    }
}
