//! Shared domain types: records, facts, the writer packet, the output schema and traces.
//!
//! Every type serializes to a single JSON object with lower_snake_case keys,
//! ISO-8601 dates, and decimals as strings carrying their exact precision.

mod facts;
mod output;
mod packet;
mod record;
mod trace;

pub use facts::{
    build_fact_bank, AllowedNumber, AttributionSet, BaselineStats, ComparisonFact, Direction, FactBank, FactBankError,
    FactValue, RankingDecision, TagEvidence,
};
pub use output::{
    AnalysisCard, ChartPoint, Headline, InsightOutput, InsightSchema, OutputTag, StyleConstraints, TextField, SCHEMA_V1,
};
pub use packet::{WriterPacket, NO_TAGS_MARKER};
pub use record::{LoggedEvent, NightKey, RecordViolation, UserNightRecord};
pub use trace::{
    ArtifactRecord, CallKind, CallUsage, ConditionId, LayerId, ParsedOutput, ReferenceFacts, TraceRecord,
    UnknownCondition,
};
