use std::sync::Arc;

use super::{Backend, Sent};
use crate::cassette::CassetteWriter;
use crate::{ChatRequest, LlmError};

/// Forwards to an inner backend and appends every exchange to a cassette.
pub struct RecordingBackend {
    inner: Arc<dyn Backend>,
    writer: CassetteWriter,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn Backend>, writer: CassetteWriter) -> Self {
        RecordingBackend { inner, writer }
    }

    pub fn writer(&self) -> &CassetteWriter {
        &self.writer
    }
}

impl Backend for RecordingBackend {
    fn name(&self) -> &str {
        "record"
    }

    fn send(&self, request: &ChatRequest) -> Result<Sent, LlmError> {
        let sent = self.inner.send(request)?;
        self.writer.record(request, &sent.response)?;
        Ok(sent)
    }

    fn network_requests(&self) -> u64 {
        self.inner.network_requests()
    }
}
