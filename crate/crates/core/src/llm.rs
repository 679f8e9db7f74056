//! Provider-agnostic chat-completion transport with retries, timeouts,
//! transcript capture, and offline backends.
//!
//! Three backends share one interface: `Remote` speaks the common
//! chat-completions JSON wire shape against any compatible endpoint;
//! `Scripted` replays canned replies keyed by call tag; `UniformOption`
//! synthesizes a well-formed reply around a uniformly random legal option.
//! The offline backends perform no network activity at all.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("completion call failed: {0}")]
    ClientFailure(String),
    #[error("no scripted reply registered for tag {0}")]
    MissingScript(String),
}

/// Identifies one completion call within a run: which game, player, and
/// timestep it serves, plus a per-player sequence number that keeps tags
/// unique when a player is queried several times per timestep (meetings).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallTag {
    pub game: String,
    pub player: u8,
    pub timestep: u32,
    pub call_index: u32,
}

impl fmt::Display for CallTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:p{}:t{}:c{}",
            self.game, self.player, self.timestep, self.call_index
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// One chat-completion request. The first message is the system text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub tag: CallTag,
}

/// Generation parameters shared by all calls of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for LlmParams {
    fn default() -> Self {
        Self {
            model: "gpt-3.5-turbo".into(),
            temperature: 0.7,
            max_tokens: 512,
        }
    }
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

pub enum Backend {
    Remote(RemoteBackend),
    Scripted(ScriptedBackend),
    UniformOption(UniformBackend),
}

impl Backend {
    pub fn scripted(replies: BTreeMap<String, String>) -> Self {
        Backend::Scripted(ScriptedBackend { replies })
    }

    pub fn uniform(seed: u64) -> Self {
        Backend::UniformOption(UniformBackend {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::Remote(_) => "remote",
            Backend::Scripted(_) => "scripted",
            Backend::UniformOption(_) => "uniform",
        }
    }

    fn complete_raw(&self, request: &ChatRequest) -> Result<String, LlmError> {
        match self {
            Backend::Remote(remote) => remote.complete(request),
            Backend::Scripted(scripted) => scripted.complete(request),
            Backend::UniformOption(uniform) => uniform.complete(request),
        }
    }
}

/// Canned replies looked up exactly by call tag.
pub struct ScriptedBackend {
    replies: BTreeMap<String, String>,
}

impl ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let key = request.tag.to_string();
        self.replies
            .get(&key)
            .cloned()
            .ok_or(LlmError::MissingScript(key))
    }
}

/// Builder for scripted reply tables.
#[derive(Default)]
pub struct ScriptBuilder {
    replies: BTreeMap<String, String>,
}

impl ScriptBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reply(mut self, tag: &CallTag, text: impl Into<String>) -> Self {
        self.replies.insert(tag.to_string(), text.into());
        self
    }

    pub fn build(self) -> Backend {
        Backend::scripted(self.replies)
    }
}

/// Synthesizes a parseable reply around one uniformly chosen option from the
/// numbered "Available actions:" list of the request's user message.
pub struct UniformBackend {
    rng: Mutex<ChaCha8Rng>,
}

/// Pull the numbered option display strings back out of a rendered prompt.
pub fn extract_option_displays(prompt: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut in_section = false;
    for line in prompt.lines() {
        if line.trim() == "Available actions:" {
            in_section = true;
            continue;
        }
        if in_section {
            let trimmed = line.trim();
            let Some((number, rest)) = trimmed.split_once(". ") else {
                break;
            };
            if number.chars().all(|c| c.is_ascii_digit()) && !number.is_empty() {
                out.push(rest.to_owned());
            } else {
                break;
            }
        }
    }
    out
}

impl UniformBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let user = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .ok_or_else(|| LlmError::ClientFailure("request has no user message".into()))?;
        let options = extract_option_displays(&user.content);
        if options.is_empty() {
            // Not an action prompt (interviews, annotation); answer blandly.
            return Ok("I have nothing further to add.".to_owned());
        }
        let pick = {
            let mut rng = self.rng.lock().expect("rng lock");
            rng.gen_range(0..options.len())
        };
        Ok(format!(
            "[Condensed Memory]\nNothing new to report.\n\n[Thinking Process]\nI will pick one of the available actions.\n\n[Action] {}",
            options[pick]
        ))
    }
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL; "/chat/completions" is appended unless already present.
    pub endpoint: String,
    pub api_key: String,
    pub timeout: Duration,
    /// Total attempts per call.
    pub retries: u32,
    /// Base delay for exponential backoff between attempts.
    pub backoff: Duration,
    /// Optional cap on concurrent in-flight calls.
    pub max_in_flight: Option<u32>,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    gate: Option<Gate>,
}

/// Counting semaphore for the in-flight cap.
struct Gate {
    permits: Mutex<u32>,
    available: Condvar,
}

impl Gate {
    fn new(permits: u32) -> Self {
        Self {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut permits = self.permits.lock().expect("gate lock");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("gate wait");
        }
        *permits -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.gate.permits.lock().expect("gate lock") += 1;
        self.gate.available.notify_one();
    }
}

enum AttemptError {
    Transient(String),
    Fatal(String),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::ClientFailure(format!("building http client: {e}")))?;
        let gate = config.max_in_flight.map(Gate::new);
        Ok(Self {
            config,
            client,
            gate,
        })
    }

    fn url(&self) -> String {
        let base = self.config.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_owned()
        } else {
            format!("{base}/chat/completions")
        }
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let _permit = self.gate.as_ref().map(|g| g.acquire());
        let attempts = self.config.retries.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.try_once(request) {
                Ok(reply) => return Ok(reply),
                Err(AttemptError::Fatal(e)) => return Err(LlmError::ClientFailure(e)),
                Err(AttemptError::Transient(e)) => {
                    last = e;
                    if attempt < attempts {
                        let delay = self.config.backoff * 2u32.pow(attempt - 1);
                        std::thread::sleep(delay);
                    }
                }
            }
        }
        Err(LlmError::ClientFailure(format!(
            "{last} (after {attempts} attempts)"
        )))
    }

    fn try_once(&self, request: &ChatRequest) -> Result<String, AttemptError> {
        let body = serde_json::json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let response = self
            .client
            .post(self.url())
            .bearer_auth(&self.config.api_key)
            .json(&body)
            .send()
            .map_err(|e| AttemptError::Transient(format!("request error: {e}")))?;
        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(AttemptError::Transient(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(format!("status {status}")));
        }
        let value: serde_json::Value = response
            .json()
            .map_err(|e| AttemptError::Transient(format!("invalid json: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| AttemptError::Fatal("reply missing choices[0].message.content".into()))
    }
}

// ---------------------------------------------------------------------------
// Transcript and client
// ---------------------------------------------------------------------------

/// One request/reply pair, as persisted to the transcript journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub tag: CallTag,
    pub model: String,
    pub system: String,
    pub user: String,
    pub reply: Option<String>,
    pub error: Option<String>,
    /// Set when the agent could not parse the reply and fell back to a
    /// random legal action.
    pub fallback_used: bool,
}

/// Append-only journal of every completion call made through a client.
#[derive(Default)]
pub struct Transcript {
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.entries.lock().expect("transcript lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("transcript lock").clone()
    }

    pub fn mark_fallback(&self, tag: &CallTag) {
        let mut entries = self.entries.lock().expect("transcript lock");
        if let Some(entry) = entries.iter_mut().rev().find(|e| &e.tag == tag) {
            entry.fallback_used = true;
        }
    }

    fn record(&self, request: &ChatRequest, result: &Result<String, LlmError>) {
        let system = request
            .messages
            .iter()
            .find(|m| m.role == "system")
            .map(|m| m.content.clone())
            .unwrap_or_default();
        let user = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.clone())
            .unwrap_or_default();
        let entry = TranscriptEntry {
            tag: request.tag.clone(),
            model: request.model.clone(),
            system,
            user,
            reply: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(|e| e.to_string()),
            fallback_used: false,
        };
        self.entries.lock().expect("transcript lock").push(entry);
    }

    pub fn write_jsonl<W: std::io::Write>(&self, mut writer: W) -> std::io::Result<()> {
        for entry in self.entries.lock().expect("transcript lock").iter() {
            serde_json::to_writer(&mut writer, entry)?;
            writeln!(writer)?;
        }
        Ok(())
    }
}

/// A backend plus its transcript. Every `complete` call is journaled,
/// successful or not.
pub struct LlmClient {
    backend: Backend,
    transcript: Transcript,
}

impl LlmClient {
    pub fn new(backend: Backend) -> Self {
        Self {
            backend,
            transcript: Transcript::default(),
        }
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let result = self.backend.complete_raw(request);
        self.transcript.record(request, &result);
        result
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}
