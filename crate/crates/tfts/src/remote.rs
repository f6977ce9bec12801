//! Chat-completion writer over HTTP.
//!
//! Wire shape: `POST {base_url}/chat/completions` with `model`, `messages`,
//! `max_tokens` and, for deterministic requests, `temperature: 0`. Usage is
//! read from `usage.prompt_tokens` / `usage.completion_tokens`.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tfts_core::writers::{WriterBackend, WriterError, WriterRequest, WriterResponse};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key. The key itself is never stored.
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout() -> u64 {
    60_000
}
fn default_retries() -> u32 {
    2
}
fn default_in_flight() -> usize {
    4
}

impl RemoteConfig {
    pub fn new(base_url: &str, model: &str, api_key_env: &str) -> Self {
        RemoteConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: api_key_env.into(),
            timeout_ms: default_timeout(),
            max_retries: default_retries(),
            max_in_flight: default_in_flight(),
        }
    }
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    slots: Slots,
}

enum Attempt {
    Done(WriterResponse),
    Retry(WriterError),
    Fatal(WriterError),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let slots = Slots { free: Mutex::new(config.max_in_flight.max(1)), cv: Condvar::new() };
        RemoteBackend { config, agent, slots }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn body(&self, request: &WriterRequest) -> String {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "max_tokens": request.max_output_tokens,
        });
        if request.deterministic {
            body["temperature"] = json!(0);
        }
        body.to_string()
    }

    fn attempt(&self, key: &str, body: &str) -> Attempt {
        let result = self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {key}"))
            .header("Content-Type", "application/json")
            .send(body);
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(WriterError::Timeout(self.config.timeout_ms)),
            Err(e) => return Attempt::Retry(WriterError::TransportFailure(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(WriterError::Timeout(self.config.timeout_ms)),
            Err(e) => return Attempt::Retry(WriterError::TransportFailure(e.to_string())),
        };
        match status {
            200..=299 => {}
            401 | 403 => return Attempt::Fatal(WriterError::AuthFailure),
            408 | 429 | 500..=599 => return Attempt::Retry(WriterError::ProviderError(status)),
            _ => return Attempt::Fatal(WriterError::ProviderError(status)),
        }
        let parsed: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Attempt::Fatal(WriterError::TransportFailure(format!("unreadable response: {e}"))),
        };
        let Some(content) = parsed.pointer("/choices/0/message/content").and_then(Value::as_str) else {
            return Attempt::Fatal(WriterError::TransportFailure("response has no message content".into()));
        };
        let tokens = |field: &str| parsed.pointer(&format!("/usage/{field}")).and_then(Value::as_u64).unwrap_or(0);
        Attempt::Done(WriterResponse {
            raw_text: content.to_string(),
            input_tokens: tokens("prompt_tokens"),
            output_tokens: tokens("completion_tokens"),
            response_body: Some(text),
            ..WriterResponse::default()
        })
    }
}

impl WriterBackend for RemoteBackend {
    fn model(&self) -> &str {
        &self.config.model
    }

    fn write(&self, request: &WriterRequest) -> Result<WriterResponse, WriterError> {
        let key = std::env::var(&self.config.api_key_env).map_err(|_| WriterError::AuthFailure)?;
        let body = self.body(request);
        let _slot = self.slots.acquire();
        let mut elapsed = 0u64;
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let started = Instant::now();
            let outcome = self.attempt(&key, &body);
            elapsed += started.elapsed().as_millis() as u64;
            match outcome {
                Attempt::Done(mut response) => {
                    response.latency_ms = elapsed;
                    response.attempts = attempts;
                    response.request_body = Some(body);
                    return Ok(response);
                }
                Attempt::Retry(_) if attempts <= self.config.max_retries => {
                    std::thread::sleep(Duration::from_millis(50 * u64::from(attempts)));
                }
                Attempt::Retry(e) | Attempt::Fatal(e) => return Err(e),
            }
        }
    }
}
