use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::artifact::corrupt_artifact;
use super::template::template_output;
use super::{offline_response, WriterBackend, WriterError, WriterHint, WriterRequest, WriterResponse};
use crate::evaluator::{extract_claims, is_supported, NumericClaim};
use crate::metric::{MetricId, Tag, UnitClass, DEFAULT_VOCABULARY};
use crate::model::{InsightOutput, OutputTag, WriterPacket};
use crate::num;
use crate::rng::{purpose, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    pub seed: u64,
    pub p_numeric: f64,
    pub p_tag_add: f64,
    pub p_metric_swap: f64,
    pub p_schema: f64,
    /// Probability of corrupting a layer artifact in replacement conditions.
    #[serde(default)]
    pub p_artifact: f64,
    /// Tags the tag-add fault may draw from.
    #[serde(default = "default_vocabulary")]
    pub vocabulary: Vec<Tag>,
}

fn default_vocabulary() -> Vec<Tag> {
    DEFAULT_VOCABULARY.iter().map(|t| Tag::new(t)).collect()
}

impl FaultConfig {
    pub fn none(seed: u64) -> FaultConfig {
        FaultConfig {
            seed,
            p_numeric: 0.0,
            p_tag_add: 0.0,
            p_metric_swap: 0.0,
            p_schema: 0.0,
            p_artifact: 0.0,
            vocabulary: default_vocabulary(),
        }
    }

    pub fn validate(&self) -> Result<(), FaultConfigError> {
        let probs = [
            ("p_numeric", self.p_numeric),
            ("p_tag_add", self.p_tag_add),
            ("p_metric_swap", self.p_metric_swap),
            ("p_schema", self.p_schema),
            ("p_artifact", self.p_artifact),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(FaultConfigError { name, value: p });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{name} = {value} is not a probability")]
pub struct FaultConfigError {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Numeric,
    TagAdd,
    MetricSwap,
    Schema,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaFault {
    Truncate,
    DropField,
    WrongType,
    OverlongTitle,
}

/// Side channel describing what the fault backend did to one output.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiredFaults {
    #[serde(default)]
    pub fired: Vec<FaultKind>,
    /// Faults that were drawn but had nothing to act on.
    #[serde(default)]
    pub not_applicable: Vec<FaultKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_fault: Option<SchemaFault>,
    #[serde(default)]
    pub artifact_corrupted: bool,
}

impl FiredFaults {
    pub fn has(&self, kind: FaultKind) -> bool {
        self.fired.contains(&kind)
    }
}

fn render_claim_value(claim: &NumericClaim, value: Decimal) -> String {
    if claim.unit_class == UnitClass::HoursMinutes {
        num::hours_minutes(value)
    } else {
        num::format_fixed(value, claim.precision)
    }
}

/// Replaces the claim's number with the smallest upward step that the allowed
/// numbers no longer support.
fn perturb_claim(output: &mut InsightOutput, claim: &NumericClaim, packet: &WriterPacket) {
    let step = Decimal::new(1, claim.precision);
    let mut moved = claim.clone();
    loop {
        moved.value += step;
        if !is_supported(&moved, &packet.allowed_numbers) {
            break;
        }
    }
    let text = output.field_mut(claim.field);
    let literal = &text[claim.span.0..claim.span.1];
    let replacement = if claim.unit_class == UnitClass::HoursMinutes {
        render_claim_value(claim, moved.value)
    } else {
        let number_len = literal
            .char_indices()
            .find(|&(i, c)| i > 0 && !(c.is_ascii_digit() || c == '.'))
            .map_or(literal.len(), |(i, _)| i);
        format!("{}{}", render_claim_value(claim, moved.value), &literal[number_len..])
    };
    text.replace_range(claim.span.0..claim.span.1, &replacement);
}

fn floor_char_boundary(s: &str, mut i: usize) -> usize {
    while !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}

fn break_schema(output: &InsightOutput, fault: SchemaFault, title_max: usize) -> String {
    let mut value = serde_json::to_value(output).expect("output serializes");
    match fault {
        SchemaFault::Truncate => {
            let raw = output.to_json();
            return raw[..floor_char_boundary(&raw, raw.len() / 2)].to_string();
        }
        SchemaFault::DropField => {
            value["headline"].as_object_mut().expect("headline object").remove("how_to_improve");
        }
        SchemaFault::WrongType => {
            value["analysis_card"]["metric_id"] = serde_json::Value::from(5);
        }
        SchemaFault::OverlongTitle => {
            let title = &output.headline.title;
            let mut long = title.clone();
            while long.chars().count() <= title_max {
                long.push_str(" / ");
                long.push_str(title);
            }
            value["headline"]["title"] = serde_json::Value::from(long);
        }
    }
    serde_json::to_string_pretty(&value).expect("value serializes")
}

/// Template output with independently drawn faults. The per-night stream is
/// keyed by the packet's night; the four fault draws come first, in the order
/// numeric, tag add, metric swap, schema, and the choices follow.
pub fn faulty_write(packet: &WriterPacket, config: &FaultConfig) -> (String, FiredFaults) {
    let mut stream = Stream::for_night(config.seed, purpose::WRITER_FAULT, &packet.night.user_id, packet.night.date);
    let numeric = stream.chance(config.p_numeric);
    let tag_add = stream.chance(config.p_tag_add);
    let swap = stream.chance(config.p_metric_swap);
    let schema = stream.chance(config.p_schema);

    let mut out = template_output(packet);
    let mut faults = FiredFaults::default();

    if numeric {
        let claims = extract_claims(&out);
        if claims.is_empty() {
            faults.not_applicable.push(FaultKind::Numeric);
        } else {
            let claim = &claims[stream.below(claims.len() as u64) as usize];
            perturb_claim(&mut out, claim, packet);
            faults.fired.push(FaultKind::Numeric);
        }
    }
    if tag_add {
        let outside: Vec<&Tag> =
            config.vocabulary.iter().filter(|t| !packet.allowed_tags.iter().any(|a| &a.tag == *t)).collect();
        if outside.is_empty() {
            faults.not_applicable.push(FaultKind::TagAdd);
        } else {
            let tag = outside[stream.below(outside.len() as u64) as usize];
            out.analysis_card.tags.push(OutputTag { name: tag.clone(), evidence: None });
            faults.fired.push(FaultKind::TagAdd);
        }
    }
    if swap {
        let others: Vec<MetricId> = MetricId::ALL.iter().copied().filter(|&m| m != packet.selected).collect();
        out.analysis_card.metric_id = others[stream.below(others.len() as u64) as usize];
        faults.fired.push(FaultKind::MetricSwap);
    }
    let raw = if schema {
        const MODES: [SchemaFault; 4] =
            [SchemaFault::Truncate, SchemaFault::DropField, SchemaFault::WrongType, SchemaFault::OverlongTitle];
        let fault = MODES[stream.below(MODES.len() as u64) as usize];
        faults.fired.push(FaultKind::Schema);
        faults.schema_fault = Some(fault);
        break_schema(&out, fault, packet.style_constraints.title_max)
    } else {
        out.to_json()
    };
    (raw, faults)
}

/// Fault-injecting backend. Writer requests go through [`faulty_write`];
/// artifact requests return the reference artifact, corrupted with
/// probability `p_artifact`.
#[derive(Clone, Debug)]
pub struct FaultyBackend {
    pub config: FaultConfig,
}

impl FaultyBackend {
    pub fn new(config: FaultConfig) -> Result<FaultyBackend, FaultConfigError> {
        config.validate()?;
        Ok(FaultyBackend { config })
    }
}

impl WriterBackend for FaultyBackend {
    fn model(&self) -> &str {
        "faulty"
    }

    fn write(&self, request: &WriterRequest) -> Result<WriterResponse, WriterError> {
        let (raw, faults) = match &request.hint {
            Some(WriterHint::Packet(packet)) => faulty_write(packet, &self.config),
            Some(WriterHint::Artifact(hint)) => {
                let mut stream = Stream::new(
                    self.config.seed,
                    &[
                        purpose::ARTIFACT_FAULT,
                        crate::rng::fnv1a(hint.night.user_id.as_bytes()),
                        crate::rng::day_number(hint.night.date),
                        hint.reference.layer() as u64,
                    ],
                );
                let mut faults = FiredFaults::default();
                let artifact = if stream.chance(self.config.p_artifact) {
                    match corrupt_artifact(hint, &self.config.vocabulary, &mut stream) {
                        Some(bad) => {
                            faults.artifact_corrupted = true;
                            bad
                        }
                        None => hint.reference.clone(),
                    }
                } else {
                    hint.reference.clone()
                };
                (artifact.to_json(), faults)
            }
            None => return Err(WriterError::BackendRefusal("fault backend needs a structured hint".into())),
        };
        let mut response = offline_response(request, raw);
        response.faults = Some(faults);
        Ok(response)
    }
}
