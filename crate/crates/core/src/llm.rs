//! Chat-completions client with retries, plus record/replay cassettes for
//! offline runs.

use crate::rng::{derive_seed, SplitMix64};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

pub const ENV_API_KEY: &str = "RISKCPT_API_KEY";
pub const ENV_BASE_URL: &str = "RISKCPT_BASE_URL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("API error {status}: {body}")]
    Api { status: u16, body: String },
    #[error("completion contained no text")]
    EmptyCompletion,
    #[error("no cassette entry for request {0}")]
    CassetteMiss(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cassette I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl LlmError {
    pub fn is_transport(&self) -> bool {
        matches!(self, LlmError::Transport { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_name: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub seed: u64,
}

impl ChatRequest {
    pub fn new(
        model_name: impl Into<String>,
        system: impl Into<String>,
        user: impl Into<String>,
        seed: u64,
    ) -> Self {
        Self {
            model_name: model_name.into(),
            system: system.into(),
            user: user.into(),
            temperature: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.model_name.trim().is_empty() {
            return Err(LlmError::Config("model name is empty".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::Config(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        Ok(())
    }

    /// JSON body sent on the wire. Field order is fixed, so equal requests
    /// serialise to identical bytes.
    pub fn body(&self) -> String {
        #[derive(Serialize)]
        struct Message<'a> {
            role: &'a str,
            content: &'a str,
        }
        #[derive(Serialize)]
        struct Body<'a> {
            model: &'a str,
            messages: [Message<'a>; 2],
            temperature: f64,
            seed: u64,
        }
        serde_json::to_string(&Body {
            model: &self.model_name,
            messages: [
                Message {
                    role: "system",
                    content: &self.system,
                },
                Message {
                    role: "user",
                    content: &self.user,
                },
            ],
            temperature: self.temperature,
            seed: self.seed,
        })
        .expect("request body serialises")
    }

    /// SHA-256 of [`ChatRequest::body`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.body().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub system_fingerprint: Option<String>,
    pub attempts: usize,
}

/// Anything that can answer a chat request.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Full-jitter delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: usize, rng: &mut SplitMix64) -> Duration {
        let cap = self.base_delay.as_secs_f64() * self.factor.powi(retry as i32);
        Duration::from_secs_f64(rng.random_range(0.0..=cap))
    }
}

pub fn is_retryable_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

#[derive(Debug, Clone)]
pub struct HttpChatClient {
    base_url: String,
    api_key: String,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            retry: RetryPolicy::default(),
            agent,
        }
    }

    /// Reads the credential and base URL from the environment.
    pub fn from_env() -> Result<Self, LlmError> {
        let key = std::env::var(ENV_API_KEY)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::Config(format!("{ENV_API_KEY} is not set")))?;
        let base = std::env::var(ENV_BASE_URL).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        Ok(Self::new(base, key))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }

    fn send_once(&self, body: &str) -> Result<(u16, String), String> {
        let mut resp = self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok((status, text))
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    system_fingerprint: Option<String>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

pub fn parse_completion(body: &str) -> Result<(String, Option<String>), LlmError> {
    let wire: WireResponse =
        serde_json::from_str(body).map_err(|e| LlmError::Malformed(e.to_string()))?;
    let text = wire
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .filter(|t| !t.trim().is_empty())
        .ok_or(LlmError::EmptyCompletion)?;
    Ok((text, wire.system_fingerprint))
}

impl ChatBackend for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        request.validate()?;
        let body = request.body();
        let mut rng = SplitMix64::new(derive_seed(request.seed, &body));
        let mut last_error = String::new();
        for attempt in 1..=self.retry.max_attempts {
            match self.send_once(&body) {
                Ok((200..=299, text)) => {
                    let (text, system_fingerprint) = parse_completion(&text)?;
                    return Ok(Completion {
                        text,
                        system_fingerprint,
                        attempts: attempt,
                    });
                }
                Ok((status, text)) if !is_retryable_status(status) => {
                    return Err(LlmError::Api { status, body: text });
                }
                Ok((status, text)) => last_error = format!("HTTP {status}: {text}"),
                Err(e) => last_error = e,
            }
            if attempt < self.retry.max_attempts {
                let delay = self.retry.delay(attempt - 1, &mut rng);
                log::warn!("chat request failed ({last_error}); retrying in {delay:?}");
                std::thread::sleep(delay);
            }
        }
        Err(LlmError::Transport {
            attempts: self.retry.max_attempts,
            message: last_error,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub request_hash: String,
    pub response_text: String,
}

/// Replays stored responses keyed by request hash.
///
/// A request sent more than once (a parse retry re-sends identical bytes)
/// gets its recorded responses in order, cycling once they run out.
#[derive(Debug, Default)]
pub struct Cassette {
    entries: HashMap<String, Vec<String>>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let mut cassette = Self::default();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: CassetteEntry =
                serde_json::from_str(&line).map_err(|e| LlmError::Malformed(e.to_string()))?;
            cassette
                .entries
                .entry(e.request_hash)
                .or_default()
                .push(e.response_text);
        }
        Ok(cassette)
    }

    pub fn insert(&mut self, request: &ChatRequest, response_text: impl Into<String>) {
        self.entries
            .entry(request.hash())
            .or_default()
            .push(response_text.into());
    }

    /// Number of stored responses.
    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatBackend for Cassette {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        request.validate()?;
        let hash = request.hash();
        let responses = self
            .entries
            .get(&hash)
            .ok_or_else(|| LlmError::CassetteMiss(hash.clone()))?;
        let mut cursors = self.cursors.lock().expect("cassette cursor lock");
        let cursor = cursors.entry(hash).or_insert(0);
        let text = responses[*cursor % responses.len()].clone();
        *cursor += 1;
        Ok(Completion {
            text,
            system_fingerprint: None,
            attempts: 1,
        })
    }
}

/// Forwards to an inner backend and appends every successful exchange to a
/// cassette file.
pub struct Recorder<B> {
    inner: B,
    path: PathBuf,
    out: Mutex<File>,
}

impl<B: ChatBackend> Recorder<B> {
    pub fn new(inner: B, path: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let path = path.into();
        let out = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            inner,
            path,
            out: Mutex::new(out),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl<B: ChatBackend> ChatBackend for Recorder<B> {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        let completion = self.inner.complete(request)?;
        let line = serde_json::to_string(&CassetteEntry {
            request_hash: request.hash(),
            response_text: completion.text.clone(),
        })
        .map_err(|e| LlmError::Malformed(e.to_string()))?;
        let mut out = self.out.lock().expect("cassette writer poisoned");
        writeln!(out, "{line}")?;
        out.flush()?;
        Ok(completion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ChatRequest {
        ChatRequest::new("gpt-4o-2024-05-13", "sys", "user \"quoted\"", 3)
    }

    #[test]
    fn body_is_stable_and_ordered() {
        let body = req().body();
        assert_eq!(
            body,
            r#"{"model":"gpt-4o-2024-05-13","messages":[{"role":"system","content":"sys"},{"role":"user","content":"user \"quoted\""}],"temperature":1.0,"seed":3}"#
        );
        assert_eq!(req().hash(), req().hash());
        let mut other = req();
        other.seed = 4;
        assert_ne!(other.hash(), req().hash());
    }

    #[test]
    fn validation() {
        let mut r = req();
        r.model_name = " ".into();
        assert!(matches!(r.validate(), Err(LlmError::Config(_))));
        let mut r = req();
        r.temperature = -0.1;
        assert!(r.validate().is_err());
    }

    #[test]
    fn parse_wire_response() {
        let (text, fp) =
            parse_completion(r#"{"choices":[{"message":{"role":"assistant","content":"answer: 5"}}],"system_fingerprint":"fp_1"}"#)
                .unwrap();
        assert_eq!(text, "answer: 5");
        assert_eq!(fp.as_deref(), Some("fp_1"));
        assert!(matches!(
            parse_completion(r#"{"choices":[]}"#),
            Err(LlmError::EmptyCompletion)
        ));
        assert!(matches!(
            parse_completion(r#"{"choices":[{"message":{"content":""}}]}"#),
            Err(LlmError::EmptyCompletion)
        ));
    }

    #[test]
    fn retry_delays_are_bounded() {
        let policy = RetryPolicy::default();
        let mut rng = SplitMix64::new(1);
        for retry in 0..4 {
            let d = policy.delay(retry, &mut rng);
            assert!(d <= Duration::from_secs_f64(2f64.powi(retry as i32)));
        }
    }

    #[test]
    fn retryable_statuses() {
        assert!(is_retryable_status(429));
        assert!(is_retryable_status(503));
        assert!(!is_retryable_status(401));
        assert!(!is_retryable_status(400));
    }

    #[test]
    fn repeated_requests_replay_in_order() {
        let mut c = Cassette::default();
        c.insert(&req(), "first");
        c.insert(&req(), "second");
        let got: Vec<String> = (0..3).map(|_| c.complete(&req()).unwrap().text).collect();
        assert_eq!(got, ["first", "second", "first"]);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn cassette_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cassette.jsonl");
        let mut live = Cassette::default();
        live.insert(&req(), "answer: 12");
        {
            let rec = Recorder::new(live, &path).unwrap();
            assert_eq!(rec.complete(&req()).unwrap().text, "answer: 12");
        }
        let replay = Cassette::load(&path).unwrap();
        assert_eq!(replay.len(), 1);
        assert_eq!(replay.complete(&req()).unwrap().text, "answer: 12");
        let mut other = req();
        other.user = "different".into();
        assert!(matches!(
            replay.complete(&other),
            Err(LlmError::CassetteMiss(_))
        ));
    }
}
