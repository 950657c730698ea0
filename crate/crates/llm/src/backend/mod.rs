//! Interchangeable transports behind one trait, selected by name at runtime
//! through [`BackendRegistry`].

mod http;
mod record;
mod registry;
mod replay;
mod scripted;

pub use http::{HttpBackend, RetryPolicy, SchemaMode, API_KEY_ENV};
pub use record::RecordingBackend;
pub use registry::{BackendConfig, BackendFactory, BackendRegistry};
pub use replay::ReplayBackend;
pub use scripted::ScriptedBackend;

use crate::{ChatRequest, ChatResponse, LlmError};

/// A delivered response together with how many transport attempts it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sent {
    pub response: ChatResponse,
    pub attempts: u32,
}

pub trait Backend: Send + Sync {
    /// Registry name of this backend kind.
    fn name(&self) -> &str;

    fn send(&self, request: &ChatRequest) -> Result<Sent, LlmError>;

    /// Requests that reached the network. Zero for offline backends.
    fn network_requests(&self) -> u64 {
        0
    }
}
