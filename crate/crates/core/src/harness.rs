//! Per-night condition runs and cost accounting.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::evaluator::{parse_output, SchemaError, SchemaErrorKind};
use crate::model::{ArtifactRecord, CallKind, CallUsage, ConditionId, ParsedOutput, TraceRecord, WriterPacket};
use crate::pipeline::{AnalysisConfig, NightContext};
use crate::prompts::{build_few_shot_prompt, build_zero_shot_prompt, Demonstration, PromptError};
use crate::writers::{
    apply_artifact, artifact_prompt, parse_artifact, ArtifactHint, FiredFaults, WriterBackend, WriterError, WriterHint,
    WriterRequest, WriterResponse,
};

/// USD per token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPrice {
    pub input_per_token: Decimal,
    pub output_per_token: Decimal,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable(pub BTreeMap<String, ModelPrice>);

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CostError {
    #[error("model {0} is not in the price table")]
    UnknownModel(String),
    #[error("negative price for model {0}")]
    NegativePrice(String),
}

impl PriceTable {
    pub fn insert(&mut self, model: &str, price: ModelPrice) -> Result<(), CostError> {
        if price.input_per_token.is_sign_negative() || price.output_per_token.is_sign_negative() {
            return Err(CostError::NegativePrice(model.into()));
        }
        self.0.insert(model.into(), price);
        Ok(())
    }

    pub fn get(&self, model: &str) -> Result<&ModelPrice, CostError> {
        self.0.get(model).ok_or_else(|| CostError::UnknownModel(model.into()))
    }
}

/// Sum over every call of the trace, artifact calls included.
pub fn cost_of(trace: &TraceRecord, prices: &PriceTable) -> Result<Decimal, CostError> {
    let price = prices.get(&trace.model)?;
    Ok(trace
        .calls
        .iter()
        .map(|c| {
            Decimal::from(c.input_tokens) * price.input_per_token
                + Decimal::from(c.output_tokens) * price.output_per_token
        })
        .sum())
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("backend {0} cannot produce layer artifacts")]
    ArtifactsUnsupported(String),
}

/// What a condition run needs besides the night itself.
pub struct NightRunner<'a> {
    pub backend: &'a dyn WriterBackend,
    pub cfg: &'a AnalysisConfig,
    pub demos: &'a [Demonstration],
    pub prices: Option<&'a PriceTable>,
}

struct Call {
    usage: CallUsage,
    raw: String,
    faults: Option<FiredFaults>,
    error: Option<WriterError>,
}

fn call(backend: &dyn WriterBackend, kind: CallKind, request: &WriterRequest) -> Call {
    match backend.write(request) {
        Ok(WriterResponse {
            raw_text,
            input_tokens,
            output_tokens,
            latency_ms,
            attempts,
            request_body,
            response_body,
            faults,
        }) => Call {
            usage: CallUsage {
                kind,
                input_tokens,
                output_tokens,
                latency_ms,
                attempts,
                error: None,
                request_body,
                response_body,
            },
            raw: raw_text,
            faults,
            error: None,
        },
        Err(e) => Call {
            usage: CallUsage {
                kind,
                input_tokens: 0,
                output_tokens: 0,
                latency_ms: 0,
                attempts: 1,
                error: Some(e.to_string()),
                request_body: None,
                response_body: None,
            },
            raw: String::new(),
            faults: None,
            error: Some(e),
        },
    }
}

impl NightRunner<'_> {
    fn request(&self, prompt: String, hint: WriterHint) -> WriterRequest {
        WriterRequest::new(prompt, &self.cfg.schema_id, Some(hint))
    }

    /// Runs one condition on one night. Backend failures end up in the trace.
    pub fn run_night(&self, condition: ConditionId, ctx: &NightContext) -> Result<TraceRecord, HarnessError> {
        let cfg = self.cfg;
        let mut calls = alloc::vec::Vec::new();
        let mut artifact = None;
        let mut artifact_corrupted = false;

        let (prompt, packet): (String, Option<WriterPacket>) = match condition {
            ConditionId::Tfts => (ctx.packet.render_prompt(), Some(ctx.packet.clone())),
            ConditionId::StructuredZeroShot => (build_zero_shot_prompt(&ctx.record, &ctx.history, cfg), None),
            ConditionId::StructuredFewShot => {
                (build_few_shot_prompt(&ctx.record, &ctx.history, cfg, self.demos)?, None)
            }
            _ => {
                let layer = condition.replaced_layer().expect("replacement condition");
                if !self.backend.supports_artifacts() {
                    return Err(HarnessError::ArtifactsUnsupported(self.backend.model().into()));
                }
                let prompt = artifact_prompt(layer, ctx, cfg);
                let request = self.request(prompt.clone(), WriterHint::Artifact(ArtifactHint::new(layer, ctx)));
                let result = call(self.backend, CallKind::Artifact, &request);
                artifact_corrupted = result.faults.as_ref().is_some_and(|f| f.artifact_corrupted);
                let (parsed, error, used) = match &result.error {
                    Some(e) => (None, Some(e.to_string()), None),
                    None => match parse_artifact(&result.raw, layer) {
                        Err(e) => (None, Some(e.to_string()), None),
                        Ok(a) => match apply_artifact(&a, ctx, cfg) {
                            Ok(p) => (Some(a), None, Some(p)),
                            Err(e) => (Some(a), Some(e.to_string()), None),
                        },
                    },
                };
                artifact = Some(ArtifactRecord {
                    layer,
                    prompt,
                    raw_text: result.raw,
                    parsed,
                    error,
                    applied: used.is_some(),
                    corrupted: result.faults.map(|f| f.artifact_corrupted),
                });
                calls.push(result.usage);
                let packet = used.unwrap_or_else(|| ctx.packet.clone());
                (packet.render_prompt(), Some(packet))
            }
        };

        // offline backends answer every writer call from a packet; baselines get the reference one
        let hint_packet = packet.clone().unwrap_or_else(|| ctx.packet.clone());
        let writer =
            call(self.backend, CallKind::Writer, &self.request(prompt.clone(), WriterHint::Packet(hint_packet)));
        calls.push(writer.usage);

        let parsed = match &writer.error {
            Some(e) => ParsedOutput::SchemaError(SchemaError {
                kind: SchemaErrorKind::Parse,
                detail: format!("writer call failed: {e}"),
            }),
            None => match parse_output(&writer.raw, &cfg.schema_id) {
                Ok(output) => ParsedOutput::Output(output),
                Err(e) => ParsedOutput::SchemaError(e),
            },
        };
        let faults = match (writer.faults, artifact_corrupted) {
            (Some(mut f), corrupted) => {
                f.artifact_corrupted |= corrupted;
                Some(f)
            }
            (None, true) => Some(FiredFaults { artifact_corrupted: true, ..FiredFaults::default() }),
            (None, false) => None,
        };
        let mut trace = TraceRecord {
            condition,
            model: self.backend.model().into(),
            night: ctx.record.key(),
            schema_id: cfg.schema_id.clone(),
            reference: ctx.reference_facts(),
            packet,
            artifact,
            prompt,
            raw_output: writer.raw,
            parsed,
            latency_ms: calls.iter().map(|c| c.latency_ms).sum(),
            calls,
            cost_usd: None,
            faults,
        };
        if let Some(prices) = self.prices {
            trace.cost_usd = Some(cost_of(&trace, prices)?);
        }
        Ok(trace)
    }
}
