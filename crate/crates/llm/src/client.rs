use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::schema::{parse_json_content, validate};
use crate::{ChatRequest, ChatResponse, LlmError, Message};

/// Anything that can answer a chat request. Implemented by [`LlmClient`];
/// callers wrap it to add budgets or tracing.
pub trait ChatModel: Send + Sync {
    fn complete(&self, request: ChatRequest) -> Result<ChatResponse, LlmError>;
}

pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;
pub const DEFAULT_MAX_REASKS: u32 = 2;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemetrySnapshot {
    /// Backend sends, re-asks included.
    pub calls: u64,
    pub calls_by_model: BTreeMap<String, u64>,
    pub transport_attempts: u64,
    pub last_attempts: u32,
    pub reasks: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub network_requests: u64,
}

struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.max {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// Shared client handle: bounds concurrent requests, enforces structured
/// output with validate-and-re-ask, and keeps usage telemetry.
pub struct LlmClient {
    backend: Arc<dyn Backend>,
    limiter: Limiter,
    max_reasks: u32,
    telemetry: Mutex<TelemetrySnapshot>,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self::with_limits(backend, DEFAULT_MAX_IN_FLIGHT, DEFAULT_MAX_REASKS)
    }

    pub fn with_limits(backend: Arc<dyn Backend>, max_in_flight: usize, max_reasks: u32) -> Self {
        LlmClient {
            backend,
            limiter: Limiter {
                max: max_in_flight.max(1),
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
            },
            max_reasks,
            telemetry: Mutex::new(TelemetrySnapshot::default()),
        }
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn telemetry(&self) -> TelemetrySnapshot {
        let mut t = self.telemetry.lock().unwrap().clone();
        t.network_requests = self.backend.network_requests();
        t
    }

    fn send_once(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let sent = {
            let _permit = self.limiter.acquire();
            self.backend.send(request)
        };
        let mut t = self.telemetry.lock().unwrap();
        t.calls += 1;
        *t.calls_by_model.entry(request.model_id.clone()).or_insert(0) += 1;
        let sent = sent?;
        t.transport_attempts += sent.attempts as u64;
        t.last_attempts = sent.attempts;
        t.prompt_tokens += sent.response.usage.prompt_tokens;
        t.completion_tokens += sent.response.usage.completion_tokens;
        Ok(sent.response)
    }
}

impl ChatModel for LlmClient {
    fn complete(&self, request: ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let Some(schema) = request.response_schema.clone() else {
            return self.send_once(&request);
        };
        let mut request = request;
        let mut attempts = 0;
        loop {
            attempts += 1;
            let response = self.send_once(&request)?;
            let problem = match parse_json_content(&response.content) {
                Ok(value) => match validate(&value, &schema.schema) {
                    Ok(()) => {
                        return Ok(ChatResponse {
                            content: value.to_string(),
                            ..response
                        })
                    }
                    Err(e) => e,
                },
                Err(e) => e,
            };
            if attempts > self.max_reasks {
                return Err(LlmError::SchemaViolation {
                    schema: schema.name.clone(),
                    attempts,
                    message: problem,
                });
            }
            warn!("response violated schema `{}`: {problem}; re-asking", schema.name);
            self.telemetry.lock().unwrap().reasks += 1;
            request.messages.push(Message::assistant(response.content));
            request.messages.push(Message::user(format!(
                "Your previous reply did not satisfy the required JSON schema ({problem}). \
                 Reply again with only a JSON object that satisfies the schema."
            )));
        }
    }
}
