//! The bounded writer interface and its offline backends.
//!
//! A backend turns one prompt into one raw text. Offline backends cannot read
//! prose, so requests may carry a structured hint with the facts the prompt
//! was rendered from; remote backends ignore it.

mod artifact;
mod faulty;
mod template;

pub use artifact::{
    apply_artifact, artifact_prompt, corrupt_artifact, parse_artifact, reference_artifact, ArtifactError, ArtifactHint,
    ComparisonRow, LayerArtifact,
};
pub use faulty::{faulty_write, FaultConfig, FaultConfigError, FaultKind, FaultyBackend, FiredFaults, SchemaFault};
pub use template::{template_write, TemplateBackend};

use alloc::string::String;
use serde::{Deserialize, Serialize};

use crate::model::WriterPacket;

/// Structured facts behind a prompt, for offline backends only.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriterHint {
    Packet(WriterPacket),
    Artifact(ArtifactHint),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WriterRequest {
    pub prompt_text: String,
    pub schema_id: String,
    pub max_output_tokens: u32,
    /// Ask for greedy decoding where the provider supports it.
    pub deterministic: bool,
    pub hint: Option<WriterHint>,
}

impl WriterRequest {
    pub fn new(prompt_text: String, schema_id: &str, hint: Option<WriterHint>) -> WriterRequest {
        WriterRequest { prompt_text, schema_id: schema_id.into(), max_output_tokens: 1024, deterministic: true, hint }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct WriterResponse {
    pub raw_text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
    pub attempts: u32,
    pub request_body: Option<String>,
    pub response_body: Option<String>,
    /// Faults injected by the fault backend, for test assertions.
    pub faults: Option<FiredFaults>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum WriterError {
    #[error("timeout after {0} ms")]
    Timeout(u64),
    #[error("transport failure: {0}")]
    TransportFailure(String),
    #[error("authentication failed")]
    AuthFailure,
    #[error("provider error: HTTP {0}")]
    ProviderError(u16),
    #[error("backend refused: {0}")]
    BackendRefusal(String),
}

/// One call in, one response out. Implementations must be safe to call concurrently.
pub trait WriterBackend: Send + Sync {
    fn model(&self) -> &str;

    fn write(&self, request: &WriterRequest) -> Result<WriterResponse, WriterError>;

    /// Whether the backend can produce layer artifacts.
    fn supports_artifacts(&self) -> bool {
        true
    }
}

/// Whitespace-token approximation used by the offline backends.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Simulated offline latency, a fixed function of the token counts.
pub fn simulated_latency_ms(input_tokens: u64, output_tokens: u64) -> u64 {
    150 + input_tokens / 20 + 4 * output_tokens
}

pub(crate) fn offline_response(request: &WriterRequest, raw_text: String) -> WriterResponse {
    let input_tokens = approx_tokens(&request.prompt_text);
    let output_tokens = approx_tokens(&raw_text);
    WriterResponse {
        raw_text,
        input_tokens,
        output_tokens,
        latency_ms: simulated_latency_ms(input_tokens, output_tokens),
        attempts: 1,
        ..WriterResponse::default()
    }
}
