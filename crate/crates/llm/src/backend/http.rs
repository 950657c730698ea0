use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use log::{debug, warn};
use rand::Rng;
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, Sent};
use crate::{ChatRequest, ChatResponse, LlmError, Usage};

pub const API_KEY_ENV: &str = "METAGENTE_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub factor: f64,
    /// Relative jitter applied to each delay, e.g. 0.2 for ±20%.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            initial_backoff_ms: 500,
            factor: 2.0,
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based), without jitter.
    pub fn base_delay(&self, retry: u32) -> Duration {
        let ms = self.initial_backoff_ms as f64 * self.factor.powi(retry as i32);
        Duration::from_millis(ms.round() as u64)
    }

    fn jittered_delay(&self, retry: u32) -> Duration {
        let base = self.base_delay(retry).as_secs_f64();
        let j = if self.jitter > 0.0 {
            rand::thread_rng().gen_range(-self.jitter..=self.jitter)
        } else {
            0.0
        };
        Duration::from_secs_f64((base * (1.0 + j)).max(0.0))
    }
}

/// How a response schema is conveyed to the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaMode {
    /// `response_format: {type: json_schema, ...}`.
    #[default]
    Native,
    /// Schema appended to the last message as an instruction, for endpoints
    /// without schema-constrained generation.
    Instruct,
}

/// OpenAI-compatible `POST <base_url>/chat/completions`.
pub struct HttpBackend {
    client: Client,
    base_url: String,
    api_key: String,
    retry: RetryPolicy,
    schema_mode: SchemaMode,
    network_requests: AtomicU64,
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(default)]
    model: Option<String>,
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpBackend {
    pub fn new(
        base_url: impl Into<String>,
        api_key: impl Into<String>,
        retry: RetryPolicy,
        schema_mode: SchemaMode,
        timeout: Duration,
    ) -> Result<Self, LlmError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpBackend {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            retry,
            schema_mode,
            network_requests: AtomicU64::new(0),
        })
    }

    /// The JSON body sent for `request`.
    pub fn wire_body(&self, request: &ChatRequest) -> Value {
        let mut messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| json!({"role": m.role, "content": m.content}))
            .collect();
        let mut body = json!({
            "model": request.model_id,
            "temperature": request.temperature,
        });
        if let Some(schema) = &request.response_schema {
            match self.schema_mode {
                SchemaMode::Native => {
                    body["response_format"] = json!({
                        "type": "json_schema",
                        "json_schema": {"name": schema.name, "schema": schema.schema, "strict": true},
                    });
                }
                SchemaMode::Instruct => {
                    let note = format!(
                        "\n\nRespond with a single JSON object that satisfies this JSON schema and nothing else:\n{}",
                        schema.schema
                    );
                    if let Some(Value::String(s)) = messages.last_mut().and_then(|m| m.get_mut("content")) {
                        s.push_str(&note);
                    }
                    body["response_format"] = json!({"type": "json_object"});
                }
            }
        }
        body["messages"] = Value::Array(messages);
        body
    }

    fn attempt(&self, body: &Value) -> Result<ChatResponse, LlmError> {
        let started = Instant::now();
        self.network_requests.fetch_add(1, Ordering::SeqCst);
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| LlmError::Network {
                attempts: 1,
                message: e.to_string(),
            })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Network {
            attempts: 1,
            message: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(LlmError::Http {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let wire: WireResponse =
            serde_json::from_str(&text).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::MalformedResponse("no message content".into()))?;
        let usage = wire.usage.map_or(Usage::default(), |u| Usage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        });
        Ok(ChatResponse {
            content,
            model_id: wire.model.unwrap_or_default(),
            usage,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "live"
    }

    fn send(&self, request: &ChatRequest) -> Result<Sent, LlmError> {
        let body = self.wire_body(request);
        let max = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.attempt(&body) {
                Ok(mut response) => {
                    if response.model_id.is_empty() {
                        response.model_id = request.model_id.clone();
                    }
                    debug!("{} answered in {} attempt(s)", request.model_id, attempt);
                    return Ok(Sent { response, attempts: attempt });
                }
                Err(e) if e.is_transient() => {
                    if attempt >= max {
                        let message = match e {
                            LlmError::Network { message, .. } => message,
                            other => other.to_string(),
                        };
                        return Err(LlmError::Network { attempts: attempt, message });
                    }
                    let delay = self.retry.jittered_delay(attempt - 1);
                    warn!("attempt {attempt}/{max} failed ({e}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn network_requests(&self) -> u64 {
        self.network_requests.load(Ordering::SeqCst)
    }
}
