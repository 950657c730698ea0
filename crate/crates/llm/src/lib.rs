//! Chat-completion transport for OpenAI-compatible endpoints.
//!
//! Backends (`live`, `record`, `replay`, plus anything a caller registers)
//! sit behind [`Backend`] and are constructed by name through
//! [`BackendRegistry`]. [`LlmClient`] adds the in-flight cap, structured
//! output enforcement and telemetry on top of whichever backend is chosen.

pub mod backend;
pub mod cassette;
mod client;
mod error;
mod fingerprint;
pub mod schema;
mod types;

pub use backend::{Backend, BackendConfig, BackendRegistry, Sent};
pub use cassette::{Cassette, CassetteEntry, CassetteWriter};
pub use client::{ChatModel, LlmClient, TelemetrySnapshot, DEFAULT_MAX_IN_FLIGHT, DEFAULT_MAX_REASKS};
pub use error::LlmError;
pub use fingerprint::{canonical_json, fingerprint};
pub use types::{ChatRequest, ChatResponse, Message, ModelTiers, ResponseSchema, Role, Tier, Usage};
