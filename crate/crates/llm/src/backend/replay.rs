use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{Backend, Sent};
use crate::cassette::Cassette;
use crate::fingerprint::fingerprint;
use crate::{ChatRequest, LlmError};

/// Serves recorded responses by request fingerprint. Never touches the
/// network; an unknown fingerprint is an error.
pub struct ReplayBackend {
    cassette: Cassette,
    served: AtomicU64,
}

impl ReplayBackend {
    pub fn new(cassette: Cassette) -> Self {
        ReplayBackend {
            cassette,
            served: AtomicU64::new(0),
        }
    }

    pub fn open(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(Cassette::load(path)?))
    }

    pub fn served(&self) -> u64 {
        self.served.load(Ordering::SeqCst)
    }

    pub fn cassette(&self) -> &Cassette {
        &self.cassette
    }
}

impl Backend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn send(&self, request: &ChatRequest) -> Result<Sent, LlmError> {
        let fp = fingerprint(request);
        let entry = self
            .cassette
            .get(&fp)
            .ok_or(LlmError::ReplayMiss { fingerprint: fp })?;
        self.served.fetch_add(1, Ordering::SeqCst);
        Ok(Sent {
            response: entry.response.clone(),
            attempts: 1,
        })
    }
}
