use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("network failure after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("response did not match schema `{schema}` after {attempts} attempt(s): {message}")]
    SchemaViolation {
        schema: String,
        attempts: u32,
        message: String,
    },
    #[error("replay miss: no cassette entry for fingerprint {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("cassette {path}: {message}")]
    Cassette { path: PathBuf, message: String },
    #[error("call budget of {limit} requests exhausted")]
    BudgetExhausted { limit: usize },
    #[error("configuration: {0}")]
    Config(String),
}

impl LlmError {
    /// Whether the transport should try the call again.
    pub fn is_transient(&self) -> bool {
        match self {
            LlmError::Network { .. } => true,
            LlmError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}
