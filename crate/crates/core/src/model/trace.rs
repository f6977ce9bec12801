use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::evaluator::SchemaError;
use crate::model::facts::{AttributionSet, FactBank, RankingDecision};
use crate::model::output::InsightOutput;
use crate::model::packet::WriterPacket;
use crate::model::record::NightKey;
use crate::writers::{FiredFaults, LayerArtifact};

/// Analytical layers, in pipeline order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerId {
    ReferenceReport,
    Comparison,
    Ranker,
    Attribution,
    Handoff,
}

impl LayerId {
    pub const ALL: [LayerId; 5] =
        [LayerId::ReferenceReport, LayerId::Comparison, LayerId::Ranker, LayerId::Attribution, LayerId::Handoff];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerId::ReferenceReport => "reference_report",
            LayerId::Comparison => "comparison",
            LayerId::Ranker => "ranker",
            LayerId::Attribution => "attribution",
            LayerId::Handoff => "handoff",
        }
    }
}

/// The eight experimental conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionId {
    Tfts,
    StructuredZeroShot,
    StructuredFewShot,
    ReplaceReferenceReport,
    ReplaceComparison,
    ReplaceRanker,
    ReplaceAttribution,
    ReplaceHandoff,
}

impl ConditionId {
    pub const ALL: [ConditionId; 8] = [
        ConditionId::Tfts,
        ConditionId::StructuredZeroShot,
        ConditionId::StructuredFewShot,
        ConditionId::ReplaceReferenceReport,
        ConditionId::ReplaceComparison,
        ConditionId::ReplaceRanker,
        ConditionId::ReplaceAttribution,
        ConditionId::ReplaceHandoff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionId::Tfts => "tfts",
            ConditionId::StructuredZeroShot => "structured-zero-shot",
            ConditionId::StructuredFewShot => "structured-few-shot",
            ConditionId::ReplaceReferenceReport => "replace-reference-report",
            ConditionId::ReplaceComparison => "replace-comparison",
            ConditionId::ReplaceRanker => "replace-ranker",
            ConditionId::ReplaceAttribution => "replace-attribution",
            ConditionId::ReplaceHandoff => "replace-handoff",
        }
    }

    pub fn replaced_layer(self) -> Option<LayerId> {
        match self {
            ConditionId::ReplaceReferenceReport => Some(LayerId::ReferenceReport),
            ConditionId::ReplaceComparison => Some(LayerId::Comparison),
            ConditionId::ReplaceRanker => Some(LayerId::Ranker),
            ConditionId::ReplaceAttribution => Some(LayerId::Attribution),
            ConditionId::ReplaceHandoff => Some(LayerId::Handoff),
            _ => None,
        }
    }

    /// Model calls per night: artifact + writer for replacements, one otherwise.
    pub fn calls_per_night(self) -> usize {
        if self.replaced_layer().is_some() {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown condition {0}")]
pub struct UnknownCondition(pub String);

impl FromStr for ConditionId {
    type Err = UnknownCondition;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConditionId::ALL.iter().copied().find(|c| c.as_str() == s).ok_or_else(|| UnknownCondition(s.into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Artifact,
    Writer,
}

/// Usage of one model call.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallUsage {
    pub kind: CallKind,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_body: Option<String>,
}

/// The deterministic layer outputs every trace is scored against.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFacts {
    pub bank: FactBank,
    pub ranking: RankingDecision,
    pub attribution: AttributionSet,
}

/// What happened to the generated artifact in a replacement condition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactRecord {
    pub layer: LayerId,
    pub prompt: String,
    pub raw_text: String,
    pub parsed: Option<LayerArtifact>,
    /// Parse failure, backend failure, or downstream rejection of the artifact.
    pub error: Option<String>,
    /// False when the night fell back to the reference output.
    pub applied: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupted: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedOutput {
    Output(InsightOutput),
    SchemaError(SchemaError),
}

/// Persisted per-night, per-condition record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub condition: ConditionId,
    pub model: String,
    pub night: NightKey,
    pub schema_id: String,
    pub reference: ReferenceFacts,
    /// Packet handed to the writer; absent for the one-call baselines.
    pub packet: Option<WriterPacket>,
    pub artifact: Option<ArtifactRecord>,
    pub prompt: String,
    pub raw_output: String,
    pub parsed: ParsedOutput,
    pub calls: Vec<CallUsage>,
    pub latency_ms: u64,
    pub cost_usd: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faults: Option<FiredFaults>,
}

impl TraceRecord {
    pub fn input_tokens(&self) -> u64 {
        self.calls.iter().map(|c| c.input_tokens).sum()
    }

    pub fn output_tokens(&self) -> u64 {
        self.calls.iter().map(|c| c.output_tokens).sum()
    }
}
