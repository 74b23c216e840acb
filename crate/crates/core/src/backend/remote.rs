//! Chat-completion client with an admission limit, retries and a
//! transcript cache, plus a cache-only replayer.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompt::{decode_batch, decode_response, render_batch_prompt, render_prompt, SYSTEM};
use super::{BackendError, ReasoningBackend, ReasoningRequest, ReasoningResponse};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub batch_size: usize,
    pub max_concurrent_requests: usize,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub cache_dir: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: "https://openrouter.ai/api/v1".into(),
            model: "openai/gpt-4o".into(),
            api_key_env: "SPECFORGE_API_KEY".into(),
            batch_size: 8,
            max_concurrent_requests: 16,
            timeout_secs: 120,
            retries: 3,
            backoff_ms: 500,
            cache_dir: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.batch_size == 0 {
            return Err(BackendError::Config("batch_size must be at least 1".into()));
        }
        if self.timeout_secs == 0 {
            return Err(BackendError::Config("timeout must be positive".into()));
        }
        if self.max_concurrent_requests == 0 {
            return Err(BackendError::Config("max_concurrent_requests must be at least 1".into()));
        }
        Ok(())
    }
}

/// One cached exchange.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key: String,
    pub request: serde_json::Value,
    pub response: String,
    pub tokens_used: u64,
}

/// One JSON file per request hash.
#[derive(Clone, Debug)]
pub struct TranscriptCache {
    dir: PathBuf,
}

impl TranscriptCache {
    pub fn new(dir: impl Into<PathBuf>) -> TranscriptCache {
        TranscriptCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(model: &str, payload: &serde_json::Value) -> String {
        let mut h = Sha256::new();
        h.update(model.as_bytes());
        h.update([0]);
        h.update(serde_json::to_vec(payload).expect("json values serialize"));
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn load(&self, key: &str) -> Option<TranscriptEntry> {
        let text = fs::read_to_string(self.path(key)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn store(&self, entry: &TranscriptEntry) -> std::io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join(format!(".{}.tmp", entry.key));
        fs::write(&tmp, serde_json::to_string_pretty(entry).expect("entries serialize"))?;
        fs::rename(tmp, self.path(&entry.key))
    }

    /// Every cached entry, sorted by key.
    pub fn entries(&self) -> Vec<TranscriptEntry> {
        let Ok(rd) = fs::read_dir(&self.dir) else { return Vec::new() };
        let mut out: Vec<TranscriptEntry> = rd
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .filter_map(|e| serde_json::from_str(&fs::read_to_string(e.path()).ok()?).ok())
            .collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        out
    }
}

fn single_payload(req: &ReasoningRequest) -> serde_json::Value {
    serde_json::json!({ "request": req })
}

fn batch_payload(reqs: &[ReasoningRequest]) -> serde_json::Value {
    serde_json::json!({ "batch": reqs })
}

/// Counting semaphore bounding in-flight HTTP requests.
struct Admission {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Admission);

impl Admission {
    fn new(n: usize) -> Admission {
        Admission {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("admission lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("admission lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("admission lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteBackend {
    cfg: BackendConfig,
    agent: ureq::Agent,
    admission: Admission,
    cache: Option<TranscriptCache>,
    api_key: Option<String>,
    charged: Charged,
}

/// Keys already charged by this backend. Each transcript's tokens count
/// once, so a run's total equals the sum over the transcripts it used.
#[derive(Default)]
struct Charged(Mutex<HashSet<String>>);

impl Charged {
    fn charge(&self, key: &str, tokens: u64) -> u64 {
        if self.0.lock().expect("charged keys").insert(key.to_string()) {
            tokens
        } else {
            0
        }
    }
}

impl RemoteBackend {
    pub fn new(cfg: BackendConfig) -> Result<RemoteBackend, BackendError> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let api_key = std::env::var(&cfg.api_key_env).ok();
        Ok(RemoteBackend {
            admission: Admission::new(cfg.max_concurrent_requests),
            cache: cfg.cache_dir.clone().map(TranscriptCache::new),
            cfg,
            agent,
            api_key,
            charged: Charged::default(),
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    /// Sends one chat exchange; returns the assistant content and tokens.
    fn chat(&self, user: &str) -> Result<(String, u64), BackendError> {
        let url = format!("{}/chat/completions", self.cfg.endpoint.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": SYSTEM},
                {"role": "user", "content": user},
            ],
        });
        let mut last = String::new();
        for attempt in 0..=self.cfg.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.cfg.backoff_ms << (attempt - 1).min(10)));
            }
            let _permit = self.admission.acquire();
            let mut req = self.agent.post(&url).header("Content-Type", "application/json");
            if let Some(k) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {k}"));
            }
            let mut resp = match req.send(serde_json::to_vec(&body).expect("json values serialize")) {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let text = match resp.body_mut().read_to_string() {
                Ok(t) => t,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            if status == 429 || status >= 500 {
                last = format!("HTTP {status}");
                continue;
            }
            if !(200..300).contains(&status) {
                return Err(BackendError::Transport {
                    attempts: attempt + 1,
                    message: format!("HTTP {status}: {text}"),
                });
            }
            let v: serde_json::Value = serde_json::from_str(&text).unwrap_or(serde_json::Value::Null);
            let tokens = v["usage"]["total_tokens"].as_u64().unwrap_or(0);
            let content = v["choices"][0]["message"]["content"].as_str().map_or(text.clone(), str::to_string);
            return Ok((content, tokens));
        }
        Err(BackendError::Transport {
            attempts: self.cfg.retries + 1,
            message: last,
        })
    }

    fn exchange(&self, payload: serde_json::Value, user: impl FnOnce() -> String) -> Result<(String, u64), BackendError> {
        let key = TranscriptCache::key(&self.cfg.model, &payload);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.load(&key)) {
            return Ok((hit.response, self.charged.charge(&key, hit.tokens_used)));
        }
        let (content, tokens) = self.chat(&user())?;
        let charged = self.charged.charge(&key, tokens);
        if let Some(c) = &self.cache {
            let entry = TranscriptEntry {
                key,
                request: payload,
                response: content.clone(),
                tokens_used: tokens,
            };
            if let Err(e) = c.store(&entry) {
                log::warn!("could not write transcript {}: {e}", entry.key);
            }
        }
        Ok((content, charged))
    }
}

fn batch_responses(reqs: &[ReasoningRequest], content: String, tokens: u64) -> Vec<Result<ReasoningResponse, BackendError>> {
    decode_batch(reqs, &content)
        .into_iter()
        .enumerate()
        .map(|(i, body)| {
            Ok(ReasoningResponse {
                body,
                raw: content.clone(),
                // The whole exchange is charged to its first item.
                tokens_used: if i == 0 { tokens } else { 0 },
            })
        })
        .collect()
}

impl ReasoningBackend for RemoteBackend {
    fn submit(&self, req: &ReasoningRequest) -> Result<ReasoningResponse, BackendError> {
        let (content, tokens) = self.exchange(single_payload(req), || render_prompt(req))?;
        Ok(ReasoningResponse {
            body: decode_response(req, &content),
            raw: content,
            tokens_used: tokens,
        })
    }

    fn submit_batch(&self, reqs: &[ReasoningRequest]) -> Vec<Result<ReasoningResponse, BackendError>> {
        let chunks: Vec<&[ReasoningRequest]> = reqs.chunks(self.cfg.batch_size).collect();
        let mut out = Vec::with_capacity(reqs.len());
        let results: Vec<Vec<Result<ReasoningResponse, BackendError>>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|chunk| {
                    s.spawn(move || {
                        if chunk.len() == 1 {
                            return vec![self.submit(&chunk[0])];
                        }
                        match self.exchange(batch_payload(chunk), || render_batch_prompt(chunk)) {
                            Ok((content, tokens)) => batch_responses(chunk, content, tokens),
                            Err(e) => chunk.iter().map(|_| Err(e.clone())).collect(),
                        }
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("batch worker panicked")).collect()
        });
        for r in results {
            out.extend(r);
        }
        out
    }
}

/// Serves requests from a transcript cache only; never touches the network.
pub struct ReplayBackend {
    cache: TranscriptCache,
    model: String,
    batch_size: usize,
    charged: Charged,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>, model: &str, batch_size: usize) -> Result<ReplayBackend, BackendError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(BackendError::Config(format!("transcript cache {} does not exist", dir.display())));
        }
        Ok(ReplayBackend {
            cache: TranscriptCache::new(dir),
            model: model.to_string(),
            batch_size: batch_size.max(1),
            charged: Charged::default(),
        })
    }

    fn lookup(&self, payload: &serde_json::Value) -> Result<TranscriptEntry, BackendError> {
        let key = TranscriptCache::key(&self.model, payload);
        let mut hit = self.cache.load(&key).ok_or_else(|| BackendError::CacheMiss(key.clone()))?;
        hit.tokens_used = self.charged.charge(&key, hit.tokens_used);
        Ok(hit)
    }
}

impl ReasoningBackend for ReplayBackend {
    fn submit(&self, req: &ReasoningRequest) -> Result<ReasoningResponse, BackendError> {
        let hit = self.lookup(&single_payload(req))?;
        Ok(ReasoningResponse {
            body: decode_response(req, &hit.response),
            raw: hit.response,
            tokens_used: hit.tokens_used,
        })
    }

    fn submit_batch(&self, reqs: &[ReasoningRequest]) -> Vec<Result<ReasoningResponse, BackendError>> {
        let mut out = Vec::with_capacity(reqs.len());
        for chunk in reqs.chunks(self.batch_size) {
            if chunk.len() == 1 {
                out.push(self.submit(&chunk[0]));
                continue;
            }
            match self.lookup(&batch_payload(chunk)) {
                Ok(hit) => out.extend(batch_responses(chunk, hit.response, hit.tokens_used)),
                Err(e) => out.extend(chunk.iter().map(|_| Err(e.clone()))),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(BackendConfig::default().validate().is_ok());
        let bad = BackendConfig {
            batch_size: 0,
            ..BackendConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = BackendConfig {
            timeout_secs: 0,
            ..BackendConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cache_keys_depend_on_model_and_payload() {
        let p = serde_json::json!({"a": 1});
        assert_eq!(TranscriptCache::key("m", &p), TranscriptCache::key("m", &p));
        assert_ne!(TranscriptCache::key("m", &p), TranscriptCache::key("n", &p));
        assert_eq!(TranscriptCache::key("m", &p).len(), 64);
    }

    #[test]
    fn admission_limits_concurrency() {
        let a = Admission::new(2);
        let live = std::sync::atomic::AtomicUsize::new(0);
        let peak = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    let _p = a.acquire();
                    let n = live.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
                    peak.fetch_max(n, std::sync::atomic::Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    live.fetch_sub(1, std::sync::atomic::Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(std::sync::atomic::Ordering::SeqCst) <= 2);
    }
}
