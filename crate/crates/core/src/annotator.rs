//! Client for LLM relevance scoring: prompt templates, reply parsing,
//! retrying backends, a shared rate limiter and ordered batch scoring.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::io::write_json;
use crate::model::RelevanceScore;
use crate::seed;

pub const QUERY_GENERATION: &str = "Your task is to write a <LANG> query that seeks information existing in a given context passage.
The query should be relevant to the passage but does not need to cover the entire scope of the passage.
The query should be in <LANG>, short, simple and in the style of web search query such as question-based or keyword-based.

The passage is:
<PASSAGE>";

pub const RELEVANCE_SCORING: &str = "You are a search quality rater evaluating the relevance of passages. Given a query and a passage, you must provide a score on an integer scale of 0 to 3 within brackets [] with the following meanings:
[3] = Highly relevant: The passage is dedicated to the query and contains the exact answer.
[2] = Relevant: The passage provides a partial answer to the query, but it lacks the exact information needed, so it cannot be considered highly relevant.
[1] = Related: The passage seems related to the query but does not answer it.
[0] = Irrelevant: The passage has nothing to do with the query.

Query:
<QUERY>

Passage:
<PASSAGE>";

pub const URL_ENV: &str = "GRADREL_ANNOTATOR_URL";
pub const TOKEN_ENV: &str = "GRADREL_ANNOTATOR_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    QueryGeneration,
    RelevanceScoring,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub text: &'static str,
}

impl PromptTemplate {
    pub fn query_generation() -> Self {
        PromptTemplate {
            name: TemplateName::QueryGeneration,
            text: QUERY_GENERATION,
        }
    }

    pub fn relevance_scoring() -> Self {
        PromptTemplate {
            name: TemplateName::RelevanceScoring,
            text: RELEVANCE_SCORING,
        }
    }

    /// Substitute `<NAME>` placeholders in one pass, so placeholder-like
    /// text inside the substituted values is left alone.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, AnnotatorError> {
        let mut out = String::with_capacity(self.text.len() + 256);
        let mut rest = self.text;
        while let Some(open) = rest.find('<') {
            out.push_str(&rest[..open]);
            let tail = &rest[open..];
            let close = tail.find('>');
            let name = close.map(|c| &tail[1..c]);
            match name.filter(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_uppercase())) {
                Some(n) => {
                    let value = vars
                        .iter()
                        .find(|(k, _)| *k == n)
                        .ok_or_else(|| AnnotatorError::Template(format!("no value for <{n}>")))?;
                    out.push_str(value.1);
                    rest = &tail[n.len() + 2..];
                }
                None => {
                    out.push('<');
                    rest = &tail[1..];
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

pub fn scoring_prompt(query: &str, passage: &str) -> String {
    PromptTemplate::relevance_scoring()
        .render(&[("QUERY", query), ("PASSAGE", passage)])
        .expect("template placeholders are fixed")
}

pub fn query_generation_prompt(language_name: &str, passage: &str) -> String {
    PromptTemplate::query_generation()
        .render(&[("LANG", language_name), ("PASSAGE", passage)])
        .expect("template placeholders are fixed")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotatorError {
    #[error("unparseable reply ({reason}): {raw_reply:?}")]
    PermanentParse { raw_reply: String, reason: String },
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("template: {0}")]
    Template(String),
}

impl AnnotatorError {
    pub fn class(&self) -> &'static str {
        match self {
            AnnotatorError::PermanentParse { .. } => "parse",
            AnnotatorError::Transport { .. } => "transport",
            AnnotatorError::Template(_) => "template",
        }
    }

    pub fn raw_reply(&self) -> Option<&str> {
        match self {
            AnnotatorError::PermanentParse { raw_reply, .. } => Some(raw_reply),
            _ => None,
        }
    }
}

/// Score from the first bracketed integer in `reply`. In strict mode the
/// reply must begin with it (after leading whitespace).
pub fn parse_score(reply: &str, strict: bool) -> Result<RelevanceScore, AnnotatorError> {
    let fail = |reason: String| AnnotatorError::PermanentParse {
        raw_reply: reply.to_string(),
        reason,
    };
    let mut from = 0;
    while let Some(open) = reply[from..].find('[').map(|i| i + from) {
        let Some(close) = reply[open..].find(']').map(|i| i + open) else {
            break;
        };
        let inner = reply[open + 1..close].trim();
        if let Ok(v) = inner.parse::<i64>() {
            if strict && !reply.trim_start().starts_with('[') || strict && reply.len() - reply.trim_start().len() != open {
                return Err(fail("strict mode: reply does not start with the bracketed score".into()));
            }
            return RelevanceScore::new(v).map_err(|e| fail(e.to_string()));
        }
        if strict {
            break;
        }
        from = open + 1;
    }
    Err(fail("no bracketed integer".into()))
}

/// Anything that turns a prompt into a reply.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    /// One attempt; errors are transport failures and may be retried.
    fn complete(&self, prompt: &str) -> Result<String, String>;
}

type ReplyFn = dyn Fn(&str) -> Result<String, String> + Send + Sync;

/// Local deterministic backend.
pub struct StubBackend {
    reply: Box<ReplyFn>,
}

impl StubBackend {
    /// Reply `[s]` with `s` hashed from the prompt.
    pub fn hashed(seed: u64) -> Self {
        StubBackend::from_fn(move |prompt| {
            let s = seed::fnv1a(seed::derive(seed, "stub"), prompt.as_bytes()) % 4;
            Ok(format!("[{s}]"))
        })
    }

    pub fn fixed(reply: &str) -> Self {
        let reply = reply.to_string();
        StubBackend::from_fn(move |_| Ok(reply.clone()))
    }

    pub fn from_fn(f: impl Fn(&str) -> Result<String, String> + Send + Sync + 'static) -> Self {
        StubBackend { reply: Box::new(f) }
    }
}

impl Backend for StubBackend {
    fn name(&self) -> &str {
        "stub"
    }

    fn complete(&self, prompt: &str) -> Result<String, String> {
        (self.reply)(prompt)
    }
}

/// JSON POST `{"prompt": ..., "options": ...}` → `{"reply": ...}`.
pub struct HttpBackend {
    url: String,
    token: Option<String>,
    /// Opaque decoding parameters forwarded with every request.
    pub options: serde_json::Value,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    options: &'a serde_json::Value,
}

#[derive(Deserialize)]
struct WireReply {
    reply: String,
}

impl HttpBackend {
    pub fn new(url: &str, token: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpBackend {
            url: url.to_string(),
            token,
            options: serde_json::Value::Null,
            agent,
        }
    }

    /// Endpoint from `GRADREL_ANNOTATOR_URL`, optional bearer token from
    /// `GRADREL_ANNOTATOR_TOKEN`.
    pub fn from_env(timeout: Duration) -> Option<Self> {
        let url = std::env::var(URL_ENV).ok().filter(|u| !u.is_empty())?;
        Some(HttpBackend::new(&url, std::env::var(TOKEN_ENV).ok(), timeout))
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        &self.url
    }

    fn complete(&self, prompt: &str) -> Result<String, String> {
        let mut req = self.agent.post(&self.url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(WireRequest {
                prompt,
                options: &self.options,
            })
            .map_err(|e| e.to_string())?;
        let body: WireReply = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        Ok(body.reply)
    }
}

/// Spaces requests at least `1/rps` apart across all threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(requests_per_second: Option<f64>) -> Self {
        let interval = requests_per_second
            .filter(|r| *r > 0.0 && r.is_finite())
            .map(|r| Duration::from_secs_f64(1.0 / r));
        RateLimiter {
            interval,
            next: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        let Some(interval) = self.interval else { return };
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub requests_per_second: Option<f64>,
    pub concurrency: usize,
    pub strict: bool,
    pub cache_dir: Option<PathBuf>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            max_attempts: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8000,
            requests_per_second: None,
            concurrency: 4,
            strict: false,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringRequest {
    pub query: String,
    pub passage: String,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringResponse {
    pub score: RelevanceScore,
    pub raw_reply: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub index: usize,
    pub error_class: String,
    pub message: String,
    pub raw_reply: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureManifest {
    pub backend: String,
    pub options: serde_json::Value,
    pub requests: usize,
    pub failures: Vec<FailureEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    /// One slot per request, in request order.
    pub responses: Vec<Option<ScoringResponse>>,
    pub failures: Vec<FailureEntry>,
}

pub struct AnnotatorClient<B> {
    backend: B,
    config: ClientConfig,
    limiter: RateLimiter,
}

fn prompt_hash(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl<B: Backend> AnnotatorClient<B> {
    pub fn new(backend: B, config: ClientConfig) -> Self {
        AnnotatorClient {
            limiter: RateLimiter::new(config.requests_per_second),
            backend,
            config,
        }
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    fn cache_path(&self, prompt: &str) -> Option<PathBuf> {
        self.config
            .cache_dir
            .as_ref()
            .map(|d| d.join(format!("{}.txt", prompt_hash(prompt))))
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .config
            .initial_backoff_ms
            .saturating_mul(1 << attempt.min(20))
            .min(self.config.max_backoff_ms);
        Duration::from_millis(ms)
    }

    /// Send `prompt`, retrying transport failures and unparseable replies
    /// with exponential backoff; `parse` validates each reply.
    fn complete_with<T>(
        &self,
        prompt: &str,
        parse: impl Fn(&str) -> Result<T, AnnotatorError>,
    ) -> Result<(T, String), AnnotatorError> {
        let cached = self.cache_path(prompt);
        if let Some(reply) = cached.as_deref().and_then(|p| fs::read_to_string(p).ok()) {
            if let Ok(v) = parse(&reply) {
                return Ok((v, reply));
            }
        }
        let attempts = self.config.max_attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt - 1));
            }
            self.limiter.acquire();
            match self.backend.complete(prompt) {
                Ok(reply) => match parse(&reply) {
                    Ok(v) => {
                        if let Some(p) = &cached {
                            store(p, &reply);
                        }
                        return Ok((v, reply));
                    }
                    Err(e) => last = Some(e),
                },
                Err(message) => {
                    last = Some(AnnotatorError::Transport {
                        attempts: attempt + 1,
                        message,
                    })
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    pub fn score_pair(&self, request: &ScoringRequest) -> Result<ScoringResponse, AnnotatorError> {
        let prompt = scoring_prompt(&request.query, &request.passage);
        let strict = self.config.strict;
        let (score, raw_reply) = self.complete_with(&prompt, |r| parse_score(r, strict))?;
        Ok(ScoringResponse { score, raw_reply })
    }

    pub fn generate_query(&self, language_name: &str, passage: &str) -> Result<String, AnnotatorError> {
        let prompt = query_generation_prompt(language_name, passage);
        let (q, _) = self.complete_with(&prompt, |r| {
            let q = r.trim();
            if q.is_empty() {
                Err(AnnotatorError::PermanentParse {
                    raw_reply: r.to_string(),
                    reason: "empty query".into(),
                })
            } else {
                Ok(q.to_string())
            }
        })?;
        Ok(q)
    }

    /// Score every request with at most `concurrency` in flight. Failures
    /// are isolated per request and listed in the outcome.
    pub fn batch_score(&self, requests: &[ScoringRequest]) -> BatchOutcome {
        let slots: Vec<Mutex<Option<Result<ScoringResponse, AnnotatorError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.config.concurrency.clamp(1, requests.len().max(1));
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= requests.len() {
                        break;
                    }
                    let r = self.score_pair(&requests[i]);
                    *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
                });
            }
        });
        let mut responses = Vec::with_capacity(requests.len());
        let mut failures = Vec::new();
        for (index, slot) in slots.into_iter().enumerate() {
            match slot.into_inner().unwrap_or_else(|e| e.into_inner()) {
                Some(Ok(r)) => responses.push(Some(r)),
                Some(Err(e)) => {
                    failures.push(FailureEntry {
                        index,
                        error_class: e.class().into(),
                        message: e.to_string(),
                        raw_reply: e.raw_reply().map(String::from),
                    });
                    responses.push(None);
                }
                None => unreachable!("every slot is filled"),
            }
        }
        BatchOutcome { responses, failures }
    }

    pub fn failure_manifest(&self, outcome: &BatchOutcome, options: serde_json::Value) -> FailureManifest {
        FailureManifest {
            backend: self.backend.name().to_string(),
            options,
            requests: outcome.responses.len(),
            failures: outcome.failures.clone(),
        }
    }
}

fn store(path: &Path, reply: &str) {
    if let Some(dir) = path.parent() {
        let _ = fs::create_dir_all(dir);
    }
    if let Err(e) = fs::write(path, reply) {
        log::warn!("annotator cache write {}: {e}", path.display());
    }
}

pub fn write_failure_manifest(path: &Path, manifest: &FailureManifest) -> crate::Result<()> {
    write_json(path, manifest)
}
