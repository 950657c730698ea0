//! Line-delimited request/response recordings.
//!
//! Each line is one JSON object with `fingerprint`, `request`, `response`
//! and `recorded_at`. Fingerprints are unique within a file.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::fingerprint::fingerprint;
use crate::{ChatRequest, ChatResponse, LlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
    pub recorded_at: String,
}

/// An in-memory cassette, indexed by fingerprint.
#[derive(Debug, Clone, Default)]
pub struct Cassette {
    entries: Vec<CassetteEntry>,
    index: HashMap<String, usize>,
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let err = |message: String| LlmError::Cassette {
            path: path.to_path_buf(),
            message,
        };
        let file = File::open(path).map_err(|e| err(e.to_string()))?;
        let mut cassette = Cassette::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry =
                serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
            if !cassette.push(entry) {
                return Err(err(format!("line {}: duplicate fingerprint", i + 1)));
            }
        }
        Ok(cassette)
    }

    /// Adds an entry; returns false if its fingerprint is already present.
    pub fn push(&mut self, entry: CassetteEntry) -> bool {
        if self.index.contains_key(&entry.fingerprint) {
            return false;
        }
        self.index.insert(entry.fingerprint.clone(), self.entries.len());
        self.entries.push(entry);
        true
    }

    pub fn get(&self, fingerprint: &str) -> Option<&CassetteEntry> {
        self.index.get(fingerprint).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[CassetteEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Appends entries to a cassette file. Writes go through one lock, so the
/// writer can be shared by concurrent workers.
#[derive(Debug)]
pub struct CassetteWriter {
    path: PathBuf,
    inner: Mutex<WriterState>,
}

#[derive(Debug)]
struct WriterState {
    file: File,
    seen: HashSet<String>,
}

impl CassetteWriter {
    /// Opens `path` for appending, creating it if needed. Fingerprints
    /// already in the file are not written again.
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        let seen = if path.exists() {
            Cassette::load(path)?
                .entries
                .into_iter()
                .map(|e| e.fingerprint)
                .collect()
        } else {
            HashSet::new()
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| LlmError::Cassette {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Cassette {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        Ok(CassetteWriter {
            path: path.to_path_buf(),
            inner: Mutex::new(WriterState { file, seen }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one entry. Returns false when the fingerprint was already
    /// recorded.
    pub fn record(&self, request: &ChatRequest, response: &ChatResponse) -> Result<bool, LlmError> {
        let fp = fingerprint(request);
        let mut state = self.inner.lock().expect("cassette writer poisoned");
        if state.seen.contains(&fp) {
            return Ok(false);
        }
        let entry = CassetteEntry {
            fingerprint: fp.clone(),
            request: request.clone(),
            response: response.clone(),
            recorded_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        };
        let mut line = serde_json::to_string(&entry).expect("entry serializes");
        line.push('\n');
        state
            .file
            .write_all(line.as_bytes())
            .and_then(|_| state.file.flush())
            .map_err(|e| LlmError::Cassette {
                path: self.path.clone(),
                message: e.to_string(),
            })?;
        state.seen.insert(fp);
        Ok(true)
    }
}
