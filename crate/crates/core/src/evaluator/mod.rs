//! Deterministic scoring of saved traces: schema validity, numeric grounding,
//! selection compliance and attribution compliance.

pub mod claims;
pub mod schema;
pub mod score;

pub use claims::{check_claim, extract_claims, extract_from_text, is_supported, NumericClaim, GRAMMAR_VERSION};
pub use schema::{parse_output, SchemaError, SchemaErrorKind};
pub use score::{aggregate, percent_1dp, score_night, AggregateError, ConditionAggregate, NightScore, NightUsage};
