//! Chat-completion transport used by the LLM-backed agents.
//!
//! Wire contract: POST `{model, messages: [{role, content}], temperature,
//! max_tokens}`; the first choice's message content is the reply. Every
//! exchange is written to the transcript directory with a digest of the
//! request so runs can be audited.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{AgentError, Result};

pub trait CompletionClient: Send + Sync {
    fn complete(&self, system: &str, user: &str, schema_tag: &str) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            temperature: 0.7,
            max_tokens: 4096,
            timeout_secs: 120,
            max_retries: 2,
            api_key_env: None,
        }
    }
}

pub fn request_digest(system: &str, user: &str, schema_tag: &str) -> String {
    let mut h = Sha256::new();
    for part in [system, user, schema_tag] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub schema_tag: String,
    pub system: String,
    pub user: String,
    pub response: Option<String>,
    pub error: Option<String>,
}

/// Appends exchanges as numbered JSON files under a directory.
#[derive(Debug)]
pub struct TranscriptSink {
    dir: PathBuf,
    next: Mutex<u64>,
}

impl TranscriptSink {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| AgentError::io(&dir, e))?;
        let existing = std::fs::read_dir(&dir).map_err(|e| AgentError::io(&dir, e))?.count() as u64;
        Ok(Self {
            dir,
            next: Mutex::new(existing),
        })
    }

    pub fn record(&self, entry: &TranscriptEntry) -> Result<PathBuf> {
        let mut n = self.next.lock().expect("transcript counter poisoned");
        let path = self.dir.join(format!("{:05}-{}.json", *n, entry.schema_tag));
        *n += 1;
        let text = serde_json::to_string_pretty(entry).map_err(|e| AgentError::json(&path, e))?;
        std::fs::write(&path, text).map_err(|e| AgentError::io(&path, e))?;
        Ok(path)
    }
}

pub struct HttpCompletionClient {
    cfg: CompletionConfig,
    http: reqwest::blocking::Client,
    transcripts: Option<TranscriptSink>,
}

impl HttpCompletionClient {
    pub fn new(cfg: CompletionConfig, transcripts: Option<TranscriptSink>) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| AgentError::Completion(e.to_string()))?;
        Ok(Self { cfg, http, transcripts })
    }

    fn send(&self, system: &str, user: &str) -> Result<String> {
        let body = json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        });
        let mut req = self.http.post(&self.cfg.endpoint).json(&body);
        if let Some(var) = &self.cfg.api_key_env {
            if let Ok(token) = std::env::var(var) {
                req = req.bearer_auth(token);
            }
        }
        let resp = req.send().map_err(|e| AgentError::Completion(e.to_string()))?;
        let status = resp.status();
        let value: serde_json::Value = resp.json().map_err(|e| AgentError::Completion(e.to_string()))?;
        if !status.is_success() {
            return Err(AgentError::Completion(format!("endpoint returned {status}: {value}")));
        }
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| AgentError::Completion(format!("response has no message content: {value}")))
    }
}

impl CompletionClient for HttpCompletionClient {
    fn complete(&self, system: &str, user: &str, schema_tag: &str) -> Result<String> {
        let digest = request_digest(system, user, schema_tag);
        let mut last = None;
        for attempt in 0..=self.cfg.max_retries {
            let outcome = self.send(system, user);
            if let Some(sink) = &self.transcripts {
                sink.record(&TranscriptEntry {
                    digest: digest.clone(),
                    schema_tag: schema_tag.to_string(),
                    system: system.to_string(),
                    user: user.to_string(),
                    response: outcome.as_ref().ok().cloned(),
                    error: outcome.as_ref().err().map(|e| e.to_string()),
                })?;
            }
            match outcome {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("completion attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                }
            }
        }
        Err(last.unwrap_or_else(|| AgentError::Completion("no attempt made".into())))
    }
}

/// Replays canned responses in order; used for tests and offline runs.
#[derive(Default)]
pub struct ScriptedCompletionClient {
    responses: Mutex<VecDeque<String>>,
    requests: Mutex<Vec<(String, String, String)>>,
}

impl ScriptedCompletionClient {
    pub fn new(responses: impl IntoIterator<Item = String>) -> Self {
        Self {
            responses: Mutex::new(responses.into_iter().collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Requests seen so far as (system, user, schema_tag).
    pub fn requests(&self) -> Vec<(String, String, String)> {
        self.requests.lock().expect("poisoned").clone()
    }
}

impl CompletionClient for ScriptedCompletionClient {
    fn complete(&self, system: &str, user: &str, schema_tag: &str) -> Result<String> {
        self.requests
            .lock()
            .expect("poisoned")
            .push((system.into(), user.into(), schema_tag.into()));
        self.responses
            .lock()
            .expect("poisoned")
            .pop_front()
            .ok_or_else(|| AgentError::Completion("scripted responses exhausted".into()))
    }
}
