//! Chat-completion transport.
//!
//! Every call carries a [`CallTag`] (episode id plus a per-episode sequence
//! number) so transcripts can be recorded under concurrency and replayed by
//! key without a network.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::TokenUsage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    /// Passed through verbatim when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_effort: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    #[serde(default)]
    pub usage: TokenUsage,
}

impl ChatResponse {
    /// Response with usage estimated at four characters per token.
    pub fn estimated(req: &ChatRequest, content: impl Into<String>) -> Self {
        let content = content.into();
        let prompt = req
            .messages
            .iter()
            .map(|m| m.content.len() as u64)
            .sum::<u64>()
            .div_ceil(4);
        let completion = (content.len() as u64).div_ceil(4);
        ChatResponse {
            content,
            usage: TokenUsage {
                prompt_tokens: prompt,
                thoughts_tokens: 0,
                total_tokens: prompt + completion,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallTag {
    pub instance_id: String,
    pub seq: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unexpected response shape: {0}")]
    Protocol(String),
    #[error("replay: {0}")]
    Replay(String),
    #[error("configuration: {0}")]
    Config(String),
}

impl ClientError {
    pub fn is_transient(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, tag: &CallTag, req: &ChatRequest) -> Result<ChatResponse, ClientError>;
}

impl<C: ChatClient + ?Sized> ChatClient for Box<C> {
    fn complete(&self, tag: &CallTag, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        (**self).complete(tag, req)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for std::sync::Arc<C> {
    fn complete(&self, tag: &CallTag, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        (**self).complete(tag, req)
    }
}

/// OpenAI-compatible `POST .../chat/completions` over blocking HTTP.
pub struct HttpClient {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpClient {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpClient {
            agent,
            url: url.into(),
            api_key,
        }
    }

    /// Reads the credential from `key_var`; a missing variable is an error.
    pub fn from_env(url: impl Into<String>, key_var: &str, timeout: Duration) -> Result<Self, ClientError> {
        let key = std::env::var(key_var)
            .map_err(|_| ClientError::Config(format!("environment variable {key_var} is not set")))?;
        Ok(HttpClient::new(url, Some(key), timeout))
    }
}

fn parse_completion(body: &Value) -> Result<ChatResponse, ClientError> {
    let content = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ClientError::Protocol("missing choices[0].message.content".into()))?;
    let n = |path: &str| body.pointer(path).and_then(Value::as_u64).unwrap_or(0);
    let prompt = n("/usage/prompt_tokens");
    let completion = n("/usage/completion_tokens");
    let total = match n("/usage/total_tokens") {
        0 => prompt + completion,
        t => t,
    };
    Ok(ChatResponse {
        content: content.to_string(),
        usage: TokenUsage {
            prompt_tokens: prompt,
            thoughts_tokens: n("/usage/completion_tokens_details/reasoning_tokens"),
            total_tokens: total.max(prompt),
        },
    })
}

impl ChatClient for HttpClient {
    fn complete(&self, _tag: &CallTag, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let mut body = json!({
            "model": req.model,
            "messages": req.messages,
            "temperature": req.temperature,
        });
        if let Some(effort) = &req.reasoning_effort {
            body["reasoning_effort"] = json!(effort);
        }
        let mut call = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(&body)
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ClientError::Http { status, body: text });
        }
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ClientError::Protocol(e.to_string()))?;
        parse_completion(&value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryConfig {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            max_retries: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryConfig {
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1 << attempt.min(16)).min(self.max_delay)
    }
}

struct Bucket {
    tokens: f64,
    last: Instant,
}

/// Token bucket: `rate` requests per second with bursts up to `burst`.
pub struct RateLimiter {
    rate: f64,
    burst: f64,
    state: Mutex<Bucket>,
}

impl RateLimiter {
    pub fn new(rate: f64, burst: u32) -> Self {
        let burst = f64::from(burst.max(1));
        RateLimiter {
            rate,
            burst,
            state: Mutex::new(Bucket {
                tokens: burst,
                last: Instant::now(),
            }),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut b = self.state.lock().expect("rate limiter lock");
                let now = Instant::now();
                b.tokens = (b.tokens + now.duration_since(b.last).as_secs_f64() * self.rate).min(self.burst);
                b.last = now;
                if b.tokens >= 1.0 {
                    b.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - b.tokens) / self.rate)
            };
            std::thread::sleep(wait);
        }
    }
}

struct Inflight {
    max: usize,
    count: Mutex<usize>,
    freed: Condvar,
}

impl Inflight {
    fn enter(&self) -> InflightGuard<'_> {
        let mut n = self.count.lock().expect("in-flight lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("in-flight lock");
        }
        *n += 1;
        InflightGuard(self)
    }
}

struct InflightGuard<'a>(&'a Inflight);

impl Drop for InflightGuard<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().expect("in-flight lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Adds rate limiting, a cap on concurrent requests and exponential
/// backoff on transient failures.
pub struct ThrottledClient<C> {
    inner: C,
    retry: RetryConfig,
    limiter: Option<RateLimiter>,
    inflight: Inflight,
}

impl<C: ChatClient> ThrottledClient<C> {
    pub fn new(inner: C, retry: RetryConfig, limiter: Option<RateLimiter>, max_inflight: usize) -> Self {
        ThrottledClient {
            inner,
            retry,
            limiter,
            inflight: Inflight {
                max: max_inflight.max(1),
                count: Mutex::new(0),
                freed: Condvar::new(),
            },
        }
    }
}

impl<C: ChatClient> ChatClient for ThrottledClient<C> {
    fn complete(&self, tag: &CallTag, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let mut attempt = 0;
        loop {
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            let result = {
                let _slot = self.inflight.enter();
                self.inner.complete(tag, req)
            };
            match result {
                Err(e) if e.is_transient() && attempt < self.retry.max_retries => {
                    let wait = self.retry.delay(attempt);
                    attempt += 1;
                    tracing::warn!(instance = %tag.instance_id, seq = tag.seq, attempt, error = %e, "retrying chat call");
                    std::thread::sleep(wait);
                }
                other => return other,
            }
        }
    }
}

type ScriptFn = dyn Fn(&CallTag, &ChatRequest) -> Result<ChatResponse, ClientError> + Send + Sync;

/// In-process stand-in for an endpoint.
pub struct ScriptedClient {
    script: Box<ScriptFn>,
    calls: AtomicUsize,
}

impl ScriptedClient {
    pub fn from_fn(
        f: impl Fn(&CallTag, &ChatRequest) -> Result<ChatResponse, ClientError> + Send + Sync + 'static,
    ) -> Self {
        ScriptedClient {
            script: Box::new(f),
            calls: AtomicUsize::new(0),
        }
    }

    /// Plays `replies` in order across all callers, then fails.
    pub fn sequence(replies: Vec<Result<String, ClientError>>) -> Self {
        let queue = Mutex::new(VecDeque::from(replies));
        ScriptedClient::from_fn(move |_, req| {
            let next = queue.lock().expect("script lock").pop_front();
            match next {
                Some(Ok(text)) => Ok(ChatResponse::estimated(req, text)),
                Some(Err(e)) => Err(e),
                None => Err(ClientError::Transport("script exhausted".into())),
            }
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&self, tag: &CallTag, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.script)(tag, req)
    }
}

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub instance_id: String,
    pub seq: u64,
    pub request: ChatRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<ChatResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Appends every call and its outcome as a JSON line.
pub struct RecordingClient<C> {
    inner: C,
    out: Mutex<Box<dyn Write + Send>>,
}

impl<C: ChatClient> RecordingClient<C> {
    pub fn new(inner: C, out: Box<dyn Write + Send>) -> Self {
        RecordingClient {
            inner,
            out: Mutex::new(out),
        }
    }
}

impl<C: ChatClient> ChatClient for RecordingClient<C> {
    fn complete(&self, tag: &CallTag, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let result = self.inner.complete(tag, req);
        let entry = TranscriptEntry {
            instance_id: tag.instance_id.clone(),
            seq: tag.seq,
            request: req.clone(),
            response: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(ToString::to_string),
        };
        let line = serde_json::to_string(&entry).expect("transcript entry serializes");
        let mut out = self.out.lock().expect("transcript lock");
        writeln!(out, "{line}")
            .and_then(|_| out.flush())
            .map_err(|e| ClientError::Transport(format!("writing transcript: {e}")))?;
        result
    }
}

/// Answers from a recorded transcript; any request that differs from the
/// recording is an error.
pub struct ReplayClient {
    entries: HashMap<(String, u64), TranscriptEntry>,
}

impl ReplayClient {
    pub fn from_entries(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        ReplayClient {
            entries: entries
                .into_iter()
                .map(|e| ((e.instance_id.clone(), e.seq), e))
                .collect(),
        }
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self, ClientError> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| ClientError::Replay(format!("reading transcript: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line)
                .map_err(|e| ClientError::Replay(format!("transcript line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        Ok(ReplayClient::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatClient for ReplayClient {
    fn complete(&self, tag: &CallTag, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let key = (tag.instance_id.clone(), tag.seq);
        let entry = self
            .entries
            .get(&key)
            .ok_or_else(|| ClientError::Replay(format!("no recorded call {}#{}", tag.instance_id, tag.seq)))?;
        if &entry.request != req {
            return Err(ClientError::Replay(format!(
                "request {}#{} differs from the recording",
                tag.instance_id, tag.seq
            )));
        }
        match (&entry.response, &entry.error) {
            (Some(r), _) => Ok(r.clone()),
            (None, Some(e)) => Err(ClientError::Transport(e.clone())),
            (None, None) => Err(ClientError::Replay(format!(
                "entry {}#{} has no outcome",
                tag.instance_id, tag.seq
            ))),
        }
    }
}
