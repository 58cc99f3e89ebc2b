use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{fingerprint, BackendError, ChatBackend, ChatRequest, ChatResponse};

/// One line of a cassette file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub response: ChatResponse,
}

/// Append-only store of request fingerprint to response. Later lines win
/// over earlier ones with the same fingerprint.
pub struct Cassette {
    path: PathBuf,
    entries: RwLock<HashMap<String, ChatResponse>>,
    writer: Mutex<()>,
}

impl Cassette {
    /// Loads `path` if it exists; a missing file is an empty cassette.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let path = path.into();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = fs::File::open(&path).map_err(|e| cassette_err(&path, e))?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| cassette_err(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CassetteEntry = serde_json::from_str(&line)
                    .map_err(|e| cassette_err(&path, format!("line {}: {e}", lineno + 1)))?;
                let previous = entries.insert(entry.fingerprint.clone(), entry.response.clone());
                if previous.is_some_and(|p| p != entry.response) {
                    log::warn!(
                        "{}: duplicate fingerprint {} on line {}, keeping the later response",
                        path.display(),
                        entry.fingerprint,
                        lineno + 1
                    );
                }
            }
        }
        Ok(Cassette {
            path,
            entries: RwLock::new(entries),
            writer: Mutex::new(()),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn replay(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let fp = fingerprint(req);
        self.entries
            .read()
            .unwrap()
            .get(&fp)
            .cloned()
            .ok_or(BackendError::ReplayMiss { fingerprint: fp })
    }

    /// Appends the pair to the file and the in-memory index. An exchange
    /// already present with the same response is not written again.
    pub fn record(&self, req: &ChatRequest, resp: &ChatResponse) -> Result<CassetteEntry, BackendError> {
        let entry = CassetteEntry {
            fingerprint: fingerprint(req),
            response: resp.clone(),
        };
        let mut line = serde_json::to_string(&entry).map_err(|e| cassette_err(&self.path, e))?;
        line.push('\n');

        let _guard = self.writer.lock().unwrap();
        if self.entries.read().unwrap().get(&entry.fingerprint) == Some(&entry.response) {
            return Ok(entry);
        }
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| cassette_err(&self.path, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| cassette_err(&self.path, e))?;
        file.write_all(line.as_bytes()).map_err(|e| cassette_err(&self.path, e))?;
        let previous = self
            .entries
            .write()
            .unwrap()
            .insert(entry.fingerprint.clone(), entry.response.clone());
        if previous.is_some() {
            log::warn!(
                "{}: re-recorded fingerprint {}, last write wins",
                self.path.display(),
                entry.fingerprint
            );
        }
        Ok(entry)
    }
}

fn cassette_err(path: &Path, detail: impl ToString) -> BackendError {
    BackendError::Cassette {
        path: path.display().to_string(),
        detail: detail.to_string(),
    }
}

/// Serves responses from a cassette; never touches the network.
pub struct ReplayBackend {
    cassette: Arc<Cassette>,
}

impl ReplayBackend {
    pub fn new(cassette: Arc<Cassette>) -> Self {
        ReplayBackend { cassette }
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self, BackendError> {
        Ok(ReplayBackend::new(Arc::new(Cassette::open(path)?)))
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.cassette.replay(req)
    }

    fn backend_id(&self) -> &str {
        "replay"
    }
}

/// Forwards to `inner` and appends every successful exchange to the cassette.
pub struct RecordingBackend<B> {
    inner: B,
    cassette: Arc<Cassette>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B, cassette: Arc<Cassette>) -> Self {
        RecordingBackend { inner, cassette }
    }

    pub fn cassette(&self) -> &Arc<Cassette> {
        &self.cassette
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let resp = self.inner.complete(req)?;
        self.cassette.record(req, &resp)?;
        Ok(resp)
    }

    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }
}
