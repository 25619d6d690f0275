//! Record and replay of backend exchanges, one JSON object per line.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendResponse, GenerationRequest, RequestKind};
use crate::budget::CallPermit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    pub kind: RequestKind,
    pub response: BackendResponse,
}

/// Wraps a backend and logs every successful exchange.
pub struct RecordingBackend<B> {
    inner: B,
    entries: Mutex<Vec<TranscriptEntry>>,
    sink: Option<Mutex<File>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, entries: Mutex::new(Vec::new()), sink: None }
    }

    /// Also appends each entry to `path` as it happens.
    pub fn to_file(inner: B, path: &Path) -> Result<Self, BackendError> {
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| BackendError::Io(e.to_string()))?;
        Ok(Self { inner, entries: Mutex::new(Vec::new()), sink: Some(Mutex::new(file)) })
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn write_to(&self, path: &Path) -> Result<(), BackendError> {
        write_transcript(path, &self.entries())
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn invoke(&self, request: &GenerationRequest, permit: &CallPermit) -> Result<BackendResponse, BackendError> {
        let response = self.inner.invoke(request, permit)?;
        let entry = TranscriptEntry { fingerprint: request.fingerprint(), kind: request.kind, response: response.clone() };
        if let Some(sink) = &self.sink {
            let line = serde_json::to_string(&entry).map_err(|e| BackendError::Io(e.to_string()))?;
            writeln!(sink.lock().unwrap(), "{line}").map_err(|e| BackendError::Io(e.to_string()))?;
        }
        self.entries.lock().unwrap().push(entry);
        Ok(response)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

pub fn write_transcript(path: &Path, entries: &[TranscriptEntry]) -> Result<(), BackendError> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).map_err(|e| BackendError::Io(e.to_string()))?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| BackendError::Io(e.to_string()))
}

/// Serves recorded responses by fingerprint; repeated fingerprints are
/// served in recording order.
#[derive(Debug)]
pub struct ReplayBackend {
    queues: Mutex<HashMap<String, VecDeque<BackendResponse>>>,
}

impl ReplayBackend {
    pub fn new(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let mut queues: HashMap<String, VecDeque<BackendResponse>> = HashMap::new();
        for e in entries {
            queues.entry(e.fingerprint).or_default().push_back(e.response);
        }
        Self { queues: Mutex::new(queues) }
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let file = File::open(path).map_err(|e| BackendError::Io(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| BackendError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(|e| BackendError::Io(format!("line {}: {e}", i + 1)))?);
        }
        Ok(Self::new(entries))
    }

    /// Entries not yet served.
    pub fn remaining(&self) -> usize {
        self.queues.lock().unwrap().values().map(VecDeque::len).sum()
    }
}

impl Backend for ReplayBackend {
    fn invoke(&self, request: &GenerationRequest, _permit: &CallPermit) -> Result<BackendResponse, BackendError> {
        let fingerprint = request.fingerprint();
        self.queues
            .lock()
            .unwrap()
            .get_mut(&fingerprint)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| BackendError::UnmatchedFingerprint { fingerprint, kind: request.kind.to_string() })
    }

    fn name(&self) -> &str {
        "replay"
    }
}
