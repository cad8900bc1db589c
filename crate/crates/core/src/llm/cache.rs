use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendKind, Completion, CompletionRequest, LlmError};

/// One line of the cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub digest: String,
    pub request: CompletionRequest,
    pub text: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    /// Serve hits from disk; forward misses and append the result.
    Record,
    /// Serve hits from disk; a miss is an error.
    Replay,
}

/// Digest-keyed record/replay wrapper. Reads go through a shared lock,
/// appends are serialized.
pub struct CachedBackend {
    inner: Option<Arc<dyn Backend>>,
    path: PathBuf,
    mode: CacheMode,
    entries: RwLock<HashMap<String, String>>,
    writer: Mutex<()>,
}

fn cache_err(path: &Path, e: impl std::fmt::Display) -> LlmError {
    LlmError::Cache { path: path.display().to_string(), message: e.to_string() }
}

fn load(path: &Path) -> Result<HashMap<String, String>, LlmError> {
    let mut map = HashMap::new();
    if !path.exists() {
        return Ok(map);
    }
    let text = std::fs::read_to_string(path).map_err(|e| cache_err(path, e))?;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: CacheEntry = serde_json::from_str(line).map_err(|e| cache_err(path, format!("line {}: {e}", i + 1)))?;
        // first recording wins, so a replay never changes under a re-record
        map.entry(entry.digest).or_insert(entry.text);
    }
    Ok(map)
}

/// Wraps `backend` in record mode backed by `cache_path`.
pub fn with_cache(backend: Arc<dyn Backend>, cache_path: &Path) -> Result<CachedBackend, LlmError> {
    CachedBackend::record(backend, cache_path)
}

impl CachedBackend {
    pub fn record(backend: Arc<dyn Backend>, path: &Path) -> Result<Self, LlmError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| cache_err(path, e))?;
        }
        // fail now rather than after the first paid request
        OpenOptions::new().create(true).append(true).open(path).map_err(|e| cache_err(path, e))?;
        Ok(CachedBackend {
            entries: RwLock::new(load(path)?),
            inner: Some(backend),
            path: path.to_path_buf(),
            mode: CacheMode::Record,
            writer: Mutex::new(()),
        })
    }

    /// Pure replay: never reaches any other backend.
    pub fn replay(path: &Path) -> Result<Self, LlmError> {
        Ok(CachedBackend {
            entries: RwLock::new(load(path)?),
            inner: None,
            path: path.to_path_buf(),
            mode: CacheMode::Replay,
            writer: Mutex::new(()),
        })
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, digest: &str) -> bool {
        self.entries.read().expect("cache lock").contains_key(digest)
    }

    fn append(&self, request: &CompletionRequest, digest: &str, text: &str) -> Result<(), LlmError> {
        let entry = CacheEntry {
            digest: digest.to_string(),
            request: request.clone(),
            text: text.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        };
        let mut line = serde_json::to_string(&entry).map_err(|e| cache_err(&self.path, e))?;
        line.push('\n');
        let _guard = self.writer.lock().expect("cache writer");
        let mut entries = self.entries.write().expect("cache lock");
        if entries.contains_key(digest) {
            return Ok(());
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(|e| cache_err(&self.path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| cache_err(&self.path, e))?;
        entries.insert(digest.to_string(), text.to_string());
        Ok(())
    }
}

impl Backend for CachedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        request.validate()?;
        let digest = request.digest();
        if let Some(text) = self.entries.read().expect("cache lock").get(&digest) {
            return Ok(Completion { text: text.clone(), backend: BackendKind::Replay, latency_ms: 0, request_digest: digest });
        }
        let inner = match (&self.inner, self.mode) {
            (Some(inner), CacheMode::Record) => inner,
            _ => return Err(LlmError::CacheMiss { digest }),
        };
        let completion = inner.complete(request)?;
        self.append(request, &digest, &completion.text)?;
        Ok(Completion { request_digest: digest, ..completion })
    }

    fn max_in_flight(&self) -> usize {
        self.inner.as_ref().map_or(super::DEFAULT_IN_FLIGHT, |b| b.max_in_flight())
    }

    fn network_calls(&self) -> usize {
        self.inner.as_ref().map_or(0, |b| b.network_calls())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Message, MockBackend};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Echo(AtomicUsize);

    impl Backend for Echo {
        fn complete(&self, r: &CompletionRequest) -> Result<Completion, LlmError> {
            let n = self.0.fetch_add(1, Ordering::SeqCst);
            Ok(Completion {
                text: format!("{}#{n}", r.last_user().unwrap_or("")),
                backend: BackendKind::Live,
                latency_ms: 1,
                request_digest: r.digest(),
            })
        }

        fn network_calls(&self) -> usize {
            self.0.load(Ordering::SeqCst)
        }
    }

    fn req(s: &str) -> CompletionRequest {
        CompletionRequest::new("m", vec![Message::user(s)])
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c/cache.jsonl");
        let rec = with_cache(Arc::new(Echo(AtomicUsize::new(0))), &path).unwrap();
        let a = rec.complete(&req("a")).unwrap();
        assert_eq!(a.backend, BackendKind::Live);
        let again = rec.complete(&req("a")).unwrap();
        assert_eq!(again.text, a.text);
        assert_eq!(again.backend, BackendKind::Replay);
        assert_eq!(rec.network_calls(), 1);

        let rep = CachedBackend::replay(&path).unwrap();
        let r = rep.complete(&req("a")).unwrap();
        assert_eq!(r.text, a.text);
        assert_eq!(r.backend, BackendKind::Replay);
        match rep.complete(&req("b")) {
            Err(LlmError::CacheMiss { digest }) => assert_eq!(digest, req("b").digest()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reordered_file_replays_the_same() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let rec = with_cache(Arc::new(MockBackend::default()), &path).unwrap();
        let _ = rec.complete(&req("x"));
        let rec = with_cache(Arc::new(Echo(AtomicUsize::new(0))), &path).unwrap();
        let texts: Vec<String> = ["p", "q", "r"].iter().map(|s| rec.complete(&req(s)).unwrap().text).collect();
        let mut lines: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
        lines.reverse();
        std::fs::write(&path, lines.join("\n")).unwrap();
        let rep = CachedBackend::replay(&path).unwrap();
        for (s, t) in ["p", "q", "r"].iter().zip(texts) {
            assert_eq!(rep.complete(&req(s)).unwrap().text, t);
        }
    }

    #[test]
    fn unwritable_path_fails_up_front() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "").unwrap();
        let err = with_cache(Arc::new(MockBackend::default()), &blocker.join("cache.jsonl"));
        assert!(matches!(err, Err(LlmError::Cache { .. })));
    }
}
