use std::sync::atomic::{AtomicU64, Ordering};

use super::{Backend, Sent};
use crate::{ChatRequest, ChatResponse, LlmError, Usage};

type Script = dyn Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync;

/// Answers every request with a caller-supplied function. Token usage is
/// estimated at four characters per token.
pub struct ScriptedBackend {
    name: String,
    script: Box<Script>,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn new(
        name: impl Into<String>,
        script: impl Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync + 'static,
    ) -> Self {
        ScriptedBackend {
            name: name.into(),
            script: Box::new(script),
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

impl Backend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn send(&self, request: &ChatRequest) -> Result<Sent, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let content = (self.script)(request)?;
        let prompt_tokens = request.messages.iter().map(|m| estimate_tokens(&m.content)).sum();
        Ok(Sent {
            response: ChatResponse {
                usage: Usage {
                    prompt_tokens,
                    completion_tokens: estimate_tokens(&content),
                },
                content,
                model_id: request.model_id.clone(),
                latency_ms: 0,
            },
            attempts: 1,
        })
    }
}
