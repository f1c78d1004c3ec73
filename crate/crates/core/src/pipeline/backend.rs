//! Text generation backends.
//!
//! [`RemoteBackend`] talks to an OpenAI-compatible chat-completion endpoint.
//! [`MockBackend`] replays canned completions keyed by the SHA-256 of the
//! prompt and never touches the network.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::promptc::content_checksum;
use crate::text;

pub const API_KEY_ENV: &str = "DOCENT_API_KEY";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("no script entry for prompt {0}")]
    NoScriptEntry(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("invalid reply: {0}")]
    InvalidReply(String),
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::RateLimited { .. })
    }
}

/// Prompt in, completion text out.
pub trait GenerationBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;

    fn name(&self) -> &str;

    /// Maximum number of requests the backend accepts at once; `None` means
    /// unlimited.
    fn max_concurrency(&self) -> Option<usize> {
        None
    }
}

impl<T: GenerationBackend + ?Sized> GenerationBackend for Arc<T> {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }

    fn name(&self) -> &str {
        (**self).name()
    }

    fn max_concurrency(&self) -> Option<usize> {
        (**self).max_concurrency()
    }
}

type Fallback = Arc<dyn Fn(&str) -> Option<String> + Send + Sync>;

/// Deterministic, network-free backend.
#[derive(Clone, Default)]
pub struct MockBackend {
    script: HashMap<String, String>,
    fallback: Option<Fallback>,
}

impl std::fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockBackend")
            .field("entries", &self.script.len())
            .field("fallback", &self.fallback.is_some())
            .finish()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScriptEntry {
    checksum: String,
    completion: String,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("malformed script entry at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MockBackend {
    /// A backend that knows nothing and fails every request.
    pub fn silent() -> Self {
        MockBackend::default()
    }

    pub fn new(script: HashMap<String, String>) -> Self {
        MockBackend { script, fallback: None }
    }

    /// Falls back to [`synthesize_dialogue`] for unscripted prompts.
    pub fn synthesizing() -> Self {
        MockBackend::default().with_fallback(|p| Some(synthesize_dialogue(p)))
    }

    pub fn with_fallback(mut self, f: impl Fn(&str) -> Option<String> + Send + Sync + 'static) -> Self {
        self.fallback = Some(Arc::new(f));
        self
    }

    pub fn insert(&mut self, checksum: impl Into<String>, completion: impl Into<String>) {
        self.script.insert(checksum.into(), completion.into());
    }

    /// Scripts `completion` for the exact prompt text.
    pub fn insert_prompt(&mut self, prompt: &str, completion: impl Into<String>) {
        self.insert(content_checksum(prompt), completion);
    }

    /// Reads JSONL lines of `{"checksum": "...", "completion": "..."}`.
    pub fn from_script_reader<R: BufRead>(reader: R) -> Result<Self, ScriptError> {
        let mut script = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(&line)
                .map_err(|e| ScriptError::Malformed { line: idx + 1, reason: e.to_string() })?;
            script.insert(entry.checksum, entry.completion);
        }
        Ok(MockBackend::new(script))
    }

    pub fn from_script_file(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        let file = std::fs::File::open(path)?;
        MockBackend::from_script_reader(std::io::BufReader::new(file))
    }

    pub fn script_to_jsonl(&self) -> String {
        let mut entries: Vec<_> = self.script.iter().collect();
        entries.sort();
        entries
            .into_iter()
            .map(|(c, t)| {
                serde_json::to_string(&ScriptEntry { checksum: c.clone(), completion: t.clone() })
                    .expect("script entry serializes")
                    + "\n"
            })
            .collect()
    }
}

impl GenerationBackend for MockBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let checksum = content_checksum(prompt);
        if let Some(text) = self.script.get(&checksum) {
            return Ok(text.clone());
        }
        self.fallback.as_ref().and_then(|f| f(prompt)).ok_or(BackendError::NoScriptEntry(checksum))
    }

    fn name(&self) -> &str {
        "mock"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub max_concurrency: Option<usize>,
}

fn default_timeout() -> u64 {
    120
}

/// OpenAI-compatible chat-completion client. The request is a single user
/// message holding the prompt; the reply is the first choice's content.
pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: String,
    // built lazily: a blocking client must not be created on an async runtime thread
    client: OnceLock<Result<reqwest::blocking::Client, String>>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig, api_key: impl Into<String>) -> Self {
        RemoteBackend { config, api_key: api_key.into(), client: OnceLock::new() }
    }

    /// Reads the credential from `DOCENT_API_KEY`.
    pub fn from_env(config: RemoteConfig) -> Result<Self, BackendError> {
        let key = std::env::var(API_KEY_ENV).map_err(|_| BackendError::Auth(format!("{API_KEY_ENV} is not set")))?;
        Ok(RemoteBackend::new(config, key))
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, BackendError> {
        self.client
            .get_or_init(|| {
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs(self.config.timeout_secs))
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| BackendError::Transport(e.clone()))
    }
}

impl GenerationBackend for RemoteBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let resp = self.client()?.post(&url).bearer_auth(&self.api_key).json(&body).send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;

        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(BackendError::Auth(format!("endpoint returned {status}")));
        }
        if status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            let retry_after = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(BackendError::RateLimited { retry_after });
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(BackendError::Transport(format!("endpoint returned {status}: {text}")));
        }
        let json: serde_json::Value = resp.json().map_err(|e| BackendError::InvalidReply(e.to_string()))?;
        json["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| BackendError::InvalidReply("no choices[0].message.content".into()))
    }

    fn name(&self) -> &str {
        "remote"
    }

    fn max_concurrency(&self) -> Option<usize> {
        self.config.max_concurrency
    }
}

const STUDENT_LINES: [&str; 8] = [
    "It makes me feel calm, but a little curious too.",
    "I can see a few people and some bright shapes near the middle.",
    "The dark parts seem to push the bright parts forward.",
    "It feels balanced, but one side looks heavier than the other.",
    "I think the empty space makes the main figure stand out more.",
    "Maybe the artist wanted to show how people lived at that time.",
    "I think I would feel peaceful there, like time is moving slowly.",
    "I think it is a strong work because everything leads my eye to the center.",
];

const FEEDBACK_LINES: [&str; 4] = [
    "That's a thoughtful answer.",
    "I like how carefully you looked.",
    "Great observation.",
    "Thank you for sharing that idea.",
];

fn first_question(text: &str) -> String {
    text::segments(text)
        .into_iter()
        .find(|s| s.is_question())
        .map(|s| s.raw.trim().to_owned())
        .unwrap_or_else(|| text.trim().to_owned())
}

/// Builds a short, well-formed student/teacher dialogue from a rendered
/// generation prompt by walking its questioning examples in flow order.
pub fn synthesize_dialogue(prompt: &str) -> String {
    let questions: Vec<String> =
        prompt.lines().filter_map(|l| l.strip_prefix("Questioning example: ")).map(first_question).collect();
    let artwork = prompt
        .split_once("Artwork for appreciation:")
        .and_then(|(_, rest)| rest.lines().map(str::trim).find(|l| !l.is_empty()))
        .and_then(|l| l.split_once(": ").map(|(name, _)| name.to_owned()))
        .unwrap_or_else(|| "this artwork".to_owned());
    let salt = content_checksum(prompt).bytes().fold(0usize, |acc, b| acc.wrapping_add(b as usize));

    let mut out = format!("student: Hi! I'm ready to look at {artwork}.\n");
    let mut prev_feedback = "Welcome, let's look at it together.".to_owned();
    for (i, q) in questions.iter().enumerate() {
        out.push_str(&format!("teacher: {prev_feedback} {q}\n"));
        out.push_str(&format!("student: {}\n", STUDENT_LINES[i % STUDENT_LINES.len()]));
        prev_feedback = FEEDBACK_LINES[(salt + i) % FEEDBACK_LINES.len()].to_owned();
    }
    out.push_str(&format!("teacher: {prev_feedback} You did a wonderful job appreciating {artwork} today.\n"));
    out
}
