//! LLM backend abstraction: completion with transport retry, acceptance
//! retry, rate limiting, and an audit trail.
//!
//! Two backends ship with the crate. [`HttpBackend`] speaks the common
//! chat-completion JSON shape. [`ScriptedBackend`] replays canned responses
//! keyed by prompt identity ([`PromptEnvelope::key`]) and is what makes
//! end-to-end runs deterministic and offline-testable: each key holds an
//! ordered response list consumed by a cursor, with the last response
//! repeating once exhausted.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::prompt::{PromptEnvelope, PromptKind};

/// Acceptance retry budget: how many completions may be requested for one
/// prompt before the task is declared problematic.
pub const DEFAULT_MAX_ATTEMPTS: u32 = 10;
/// Transport retry budget per completion attempt.
pub const DEFAULT_TRANSPORT_RETRIES: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("no scripted response for prompt key {0}")]
    FixtureMiss(String),
    #[error("fixture file {path}: {detail}")]
    FixtureFormat { path: String, detail: String },
    #[error("transport failure after {attempts} tries: {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Which backend implementation to construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Http,
}

/// Everything needed to construct a [`Gateway`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// HTTP endpoint (required for `Http`).
    pub endpoint: Option<String>,
    pub model_name: String,
    /// Bearer token for HTTP backends.
    pub api_key: Option<String>,
    /// Directory of fixture files (required for `Scripted`).
    pub fixtures_dir: Option<PathBuf>,
    pub max_attempts: u32,
    pub transport_retries: u32,
    /// Request ceiling enforced over any sliding 60-second window.
    pub requests_per_minute: Option<u32>,
}

impl BackendConfig {
    pub fn scripted(fixtures_dir: impl Into<PathBuf>) -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            endpoint: None,
            model_name: "scripted".to_string(),
            api_key: None,
            fixtures_dir: Some(fixtures_dir.into()),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            transport_retries: DEFAULT_TRANSPORT_RETRIES,
            requests_per_minute: None,
        }
    }

    pub fn http(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::Http,
            endpoint: Some(endpoint.into()),
            model_name: model_name.into(),
            api_key: None,
            fixtures_dir: None,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            transport_retries: DEFAULT_TRANSPORT_RETRIES,
            requests_per_minute: None,
        }
    }
}

/// One model completion, after stop-sequence truncation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    /// 1-based acceptance attempt that produced this completion.
    pub attempt: u32,
    pub truncated_by_stop: bool,
}

/// Audit record of one request/response round trip.
#[derive(Debug, Clone, Serialize)]
pub struct Exchange {
    pub key: String,
    pub kind: PromptKind,
    pub attempt: u32,
    pub request: serde_json::Value,
    pub response: String,
}

/// Chronological audit trail of every backend round trip in a run.
pub type Transcript = Vec<Exchange>;

/// Result of the acceptance retry loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AcceptanceOutcome {
    Accepted(Completion),
    /// Every attempt was rejected by the acceptance predicate.
    Exhausted { attempts: u32 },
}

/// Raw backend response before gateway post-processing.
#[derive(Debug, Clone)]
pub struct RawResponse {
    pub text: String,
    /// What was sent, for the audit trail.
    pub request: serde_json::Value,
}

/// A completion provider. Implementations must be safe to call from
/// multiple worker threads.
pub trait Backend: Send + Sync {
    fn complete_once(&self, envelope: &PromptEnvelope) -> Result<RawResponse, GatewayError>;
    fn name(&self) -> &'static str;
}

/// Time source abstraction so rate-limiting is testable without waiting.
pub trait Clock: Send + Sync {
    fn now(&self) -> Instant;
    fn sleep(&self, duration: Duration);
}

/// Wall-clock implementation used outside tests.
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Instant {
        Instant::now()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Sliding-window rate limiter: at most `limit` acquisitions within any
/// 60-second window, blocking via the injected clock when the window is
/// full.
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    history: Mutex<VecDeque<Instant>>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn per_minute(limit: u32, clock: Arc<dyn Clock>) -> Self {
        RateLimiter {
            limit: limit.max(1) as usize,
            window: Duration::from_secs(60),
            history: Mutex::new(VecDeque::new()),
            clock,
        }
    }

    /// Block until a request slot is available, then claim it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let now = self.clock.now();
                let mut history = self.history.lock().expect("limiter lock");
                while history
                    .front()
                    .is_some_and(|&t| t + self.window <= now)
                {
                    history.pop_front();
                }
                if history.len() < self.limit {
                    history.push_back(now);
                    return;
                }
                *history.front().expect("non-empty") + self.window - now
            };
            self.clock.sleep(wait);
        }
    }
}

/// Scripted backend: responses loaded from JSON fixture files, each of the
/// form `{"key": "<prompt key>", "responses": ["...", ...]}`. A file may
/// use the key `"default"` to serve as a catch-all pool.
pub struct ScriptedBackend {
    responses: HashMap<String, Vec<String>>,
    fallback: Option<Vec<String>>,
    cursors: Mutex<HashMap<String, usize>>,
}

/// Fixture key that matches any prompt without a dedicated entry.
pub const FALLBACK_KEY: &str = "default";

#[derive(Debug, Deserialize)]
struct FixtureFile {
    key: String,
    responses: Vec<String>,
}

impl ScriptedBackend {
    /// Load every `*.json` fixture in a directory (sorted by file name).
    pub fn from_dir(dir: &Path) -> Result<Self, GatewayError> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|err| GatewayError::Config(format!("fixtures dir {}: {err}", dir.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|path| path.extension().is_some_and(|ext| ext == "json"))
            .collect();
        paths.sort();
        let mut entries = Vec::new();
        for path in paths {
            let display = path.display().to_string();
            let text = std::fs::read_to_string(&path).map_err(|err| {
                GatewayError::FixtureFormat {
                    path: display.clone(),
                    detail: err.to_string(),
                }
            })?;
            let fixture: FixtureFile =
                serde_json::from_str(&text).map_err(|err| GatewayError::FixtureFormat {
                    path: display.clone(),
                    detail: err.to_string(),
                })?;
            entries.push((display, fixture));
        }
        let mut backend = ScriptedBackend {
            responses: HashMap::new(),
            fallback: None,
            cursors: Mutex::new(HashMap::new()),
        };
        for (path, fixture) in entries {
            let slot = if fixture.key == FALLBACK_KEY {
                &mut backend.fallback
            } else {
                match backend.responses.entry(fixture.key.clone()) {
                    std::collections::hash_map::Entry::Occupied(_) => {
                        return Err(GatewayError::FixtureFormat {
                            path,
                            detail: format!("duplicate key {:?}", fixture.key),
                        })
                    }
                    std::collections::hash_map::Entry::Vacant(v) => {
                        v.insert(fixture.responses);
                        continue;
                    }
                }
            };
            if slot.is_some() {
                return Err(GatewayError::FixtureFormat {
                    path,
                    detail: "duplicate default key".to_string(),
                });
            }
            *slot = Some(fixture.responses);
        }
        Ok(backend)
    }

    /// Build directly from (key, responses) pairs; used by tests.
    pub fn from_entries(entries: impl IntoIterator<Item = (String, Vec<String>)>) -> Self {
        let mut responses = HashMap::new();
        let mut fallback = None;
        for (key, pool) in entries {
            if key == FALLBACK_KEY {
                fallback = Some(pool);
            } else {
                responses.insert(key, pool);
            }
        }
        ScriptedBackend {
            responses,
            fallback,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    /// Known fixture keys (for diagnostics).
    pub fn keys(&self) -> Vec<String> {
        let mut keys: Vec<String> = self.responses.keys().cloned().collect();
        keys.sort();
        keys
    }
}

impl Backend for ScriptedBackend {
    fn complete_once(&self, envelope: &PromptEnvelope) -> Result<RawResponse, GatewayError> {
        let key = envelope.key();
        let pool = self
            .responses
            .get(&key)
            .or(self.fallback.as_ref())
            .ok_or_else(|| GatewayError::FixtureMiss(key.clone()))?;
        if pool.is_empty() {
            return Err(GatewayError::FixtureMiss(key));
        }
        let index = {
            let mut cursors = self.cursors.lock().expect("cursor lock");
            let cursor = cursors.entry(key.clone()).or_insert(0);
            let index = (*cursor).min(pool.len() - 1);
            *cursor += 1;
            index
        };
        Ok(RawResponse {
            text: pool[index].clone(),
            request: serde_json::json!({
                "backend": "scripted",
                "key": key,
                "index": index,
            }),
        })
    }

    fn name(&self) -> &'static str {
        "scripted"
    }
}

/// Chat-completion HTTP backend. Sends the envelope's wire JSON and reads
/// `choices[0].message.content` (falling back to `choices[0].text`).
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(config: &BackendConfig) -> Result<Self, GatewayError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| GatewayError::Config("http backend needs an endpoint".to_string()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|err| GatewayError::Config(err.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint,
            model: config.model_name.clone(),
            api_key: config.api_key.clone(),
        })
    }
}

impl Backend for HttpBackend {
    fn complete_once(&self, envelope: &PromptEnvelope) -> Result<RawResponse, GatewayError> {
        let body = envelope.to_wire_json(&self.model);
        let mut request = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|err| GatewayError::Transport {
            attempts: 1,
            detail: err.to_string(),
        })?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(GatewayError::Transport {
                attempts: 1,
                detail: format!("http status {status}"),
            });
        }
        if !status.is_success() {
            return Err(GatewayError::Protocol(format!("http status {status}")));
        }
        let value: serde_json::Value = response
            .json()
            .map_err(|err| GatewayError::Protocol(format!("bad response body: {err}")))?;
        let text = extract_completion_text(&value)
            .ok_or_else(|| GatewayError::Protocol("no completion text in response".to_string()))?;
        Ok(RawResponse {
            text,
            request: body,
        })
    }

    fn name(&self) -> &'static str {
        "http"
    }
}

fn extract_completion_text(value: &serde_json::Value) -> Option<String> {
    let choice = value.get("choices")?.get(0)?;
    choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(|v| v.as_str())
        .map(str::to_string)
}

/// Trim the completion at the first occurrence of the stop sequence.
fn truncate_at_stop(text: &str, stop: Option<&str>) -> (String, bool) {
    if let Some(stop) = stop {
        if !stop.is_empty() {
            if let Some(pos) = text.find(stop) {
                return (text[..pos].to_string(), true);
            }
        }
    }
    (text.to_string(), false)
}

/// The entry point callers use: a backend plus retry policy and optional
/// rate limiting.
pub struct Gateway {
    backend: Box<dyn Backend>,
    limiter: Option<RateLimiter>,
    max_attempts: u32,
    transport_retries: u32,
}

impl Gateway {
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        let backend: Box<dyn Backend> = match config.kind {
            BackendKind::Scripted => {
                let dir = config.fixtures_dir.as_ref().ok_or_else(|| {
                    GatewayError::Config("scripted backend needs fixtures_dir".to_string())
                })?;
                Box::new(ScriptedBackend::from_dir(dir)?)
            }
            BackendKind::Http => Box::new(HttpBackend::new(config)?),
        };
        let limiter = config
            .requests_per_minute
            .map(|rpm| RateLimiter::per_minute(rpm, Arc::new(SystemClock)));
        Ok(Gateway {
            backend,
            limiter,
            max_attempts: config.max_attempts.max(1),
            transport_retries: config.transport_retries,
        })
    }

    /// Wrap an arbitrary backend (tests, custom integrations).
    pub fn with_backend(backend: Box<dyn Backend>, max_attempts: u32) -> Self {
        Gateway {
            backend,
            limiter: None,
            max_attempts: max_attempts.max(1),
            transport_retries: DEFAULT_TRANSPORT_RETRIES,
        }
    }

    pub fn set_rate_limiter(&mut self, limiter: RateLimiter) {
        self.limiter = Some(limiter);
    }

    pub fn max_attempts(&self) -> u32 {
        self.max_attempts
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    /// One completion. Transport failures are retried up to the transport
    /// budget (immediately — the HTTP client supplies its own timeouts);
    /// any other error aborts.
    pub fn complete(
        &self,
        envelope: &PromptEnvelope,
        transcript: &mut Transcript,
    ) -> Result<Completion, GatewayError> {
        self.complete_attempt(envelope, 1, transcript)
    }

    fn complete_attempt(
        &self,
        envelope: &PromptEnvelope,
        attempt: u32,
        transcript: &mut Transcript,
    ) -> Result<Completion, GatewayError> {
        let mut last_detail = String::new();
        let tries = self.transport_retries + 1;
        for _ in 0..tries {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match self.backend.complete_once(envelope) {
                Ok(raw) => {
                    let (text, truncated_by_stop) =
                        truncate_at_stop(&raw.text, envelope.decode.stop.as_deref());
                    transcript.push(Exchange {
                        key: envelope.key(),
                        kind: envelope.kind,
                        attempt,
                        request: raw.request,
                        response: text.clone(),
                    });
                    return Ok(Completion {
                        text,
                        attempt,
                        truncated_by_stop,
                    });
                }
                Err(GatewayError::Transport { detail, .. }) => last_detail = detail,
                Err(other) => return Err(other),
            }
        }
        Err(GatewayError::Transport {
            attempts: tries,
            detail: last_detail,
        })
    }

    /// Request completions until the acceptance predicate passes on the
    /// assembled text (seed + completion) or the attempt budget runs out.
    pub fn complete_until_acceptable(
        &self,
        envelope: &PromptEnvelope,
        accept: &dyn Fn(&str) -> bool,
        transcript: &mut Transcript,
    ) -> Result<AcceptanceOutcome, GatewayError> {
        for attempt in 1..=self.max_attempts {
            let completion = self.complete_attempt(envelope, attempt, transcript)?;
            if accept(&envelope.assemble(&completion.text)) {
                return Ok(AcceptanceOutcome::Accepted(completion));
            }
        }
        Ok(AcceptanceOutcome::Exhausted {
            attempts: self.max_attempts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::build_zero_shot;
    use crate::runtime::SubjectProgram;

    fn envelope() -> PromptEnvelope {
        let program = SubjectProgram::new("t", "add", "def add(a, b):\n    return a + b\n");
        build_zero_shot(&program).unwrap()
    }

    fn scripted_gateway(responses: Vec<String>, max_attempts: u32) -> Gateway {
        let key = envelope().key();
        Gateway::with_backend(
            Box::new(ScriptedBackend::from_entries([(key, responses)])),
            max_attempts,
        )
    }

    #[test]
    fn scripted_cursor_advances_and_last_response_repeats() {
        let gateway = scripted_gateway(vec!["one".into(), "two".into()], 10);
        let mut transcript = Transcript::new();
        let env = envelope();
        assert_eq!(gateway.complete(&env, &mut transcript).unwrap().text, "one");
        assert_eq!(gateway.complete(&env, &mut transcript).unwrap().text, "two");
        assert_eq!(gateway.complete(&env, &mut transcript).unwrap().text, "two");
        assert_eq!(transcript.len(), 3);
    }

    #[test]
    fn missing_fixture_key_is_an_error() {
        let gateway = Gateway::with_backend(
            Box::new(ScriptedBackend::from_entries(Vec::<(String, Vec<String>)>::new())),
            10,
        );
        let mut transcript = Transcript::new();
        let err = gateway.complete(&envelope(), &mut transcript).unwrap_err();
        assert!(matches!(err, GatewayError::FixtureMiss(_)));
    }

    #[test]
    fn fallback_pool_serves_unknown_keys() {
        let gateway = Gateway::with_backend(
            Box::new(ScriptedBackend::from_entries([(
                FALLBACK_KEY.to_string(),
                vec!["generic".to_string()],
            )])),
            10,
        );
        let mut transcript = Transcript::new();
        let completion = gateway.complete(&envelope(), &mut transcript).unwrap();
        assert_eq!(completion.text, "generic");
    }

    #[test]
    fn stop_sequence_truncates_completion() {
        // zero-shot stop is a double quote
        let gateway = scripted_gateway(vec!["add(1, 1) == 2\n\"junk after stop".into()], 10);
        let mut transcript = Transcript::new();
        let completion = gateway.complete(&envelope(), &mut transcript).unwrap();
        assert_eq!(completion.text, "add(1, 1) == 2\n");
        assert!(completion.truncated_by_stop);
    }

    #[test]
    fn acceptance_succeeds_on_the_tenth_attempt() {
        let mut responses: Vec<String> = (0..9).map(|i| format!("nothing useful {i}")).collect();
        responses.push("add(2, 2) == 4".to_string());
        let gateway = scripted_gateway(responses, 10);
        let mut transcript = Transcript::new();
        let accept =
            |text: &str| text.contains("assert") && text.contains("add");
        let outcome = gateway
            .complete_until_acceptable(&envelope(), &accept, &mut transcript)
            .unwrap();
        match outcome {
            AcceptanceOutcome::Accepted(completion) => {
                assert_eq!(completion.attempt, 10);
                assert_eq!(completion.text, "add(2, 2) == 4");
            }
            AcceptanceOutcome::Exhausted { .. } => panic!("should accept attempt 10"),
        }
        assert_eq!(transcript.len(), 10);
    }

    #[test]
    fn acceptance_exhausts_after_budget() {
        let responses: Vec<String> = (0..10).map(|i| format!("nothing useful {i}")).collect();
        let gateway = scripted_gateway(responses, 10);
        let mut transcript = Transcript::new();
        let accept = |text: &str| text.contains("add(");
        let outcome = gateway
            .complete_until_acceptable(&envelope(), &accept, &mut transcript)
            .unwrap();
        assert_eq!(outcome, AcceptanceOutcome::Exhausted { attempts: 10 });
        assert_eq!(transcript.len(), 10);
    }

    struct FlakyBackend {
        failures_before_success: Mutex<u32>,
    }

    impl Backend for FlakyBackend {
        fn complete_once(&self, _: &PromptEnvelope) -> Result<RawResponse, GatewayError> {
            let mut left = self.failures_before_success.lock().unwrap();
            if *left > 0 {
                *left -= 1;
                return Err(GatewayError::Transport {
                    attempts: 1,
                    detail: "connection reset".to_string(),
                });
            }
            Ok(RawResponse {
                text: "ok".to_string(),
                request: serde_json::json!({}),
            })
        }

        fn name(&self) -> &'static str {
            "flaky"
        }
    }

    #[test]
    fn transport_errors_retry_up_to_budget() {
        let gateway = Gateway::with_backend(
            Box::new(FlakyBackend {
                failures_before_success: Mutex::new(3),
            }),
            10,
        );
        let mut transcript = Transcript::new();
        let completion = gateway.complete(&envelope(), &mut transcript).unwrap();
        assert_eq!(completion.text, "ok");

        let gateway = Gateway::with_backend(
            Box::new(FlakyBackend {
                failures_before_success: Mutex::new(4),
            }),
            10,
        );
        let err = gateway.complete(&envelope(), &mut transcript).unwrap_err();
        assert!(matches!(err, GatewayError::Transport { attempts: 4, .. }));
    }

    struct FakeClock {
        base: Instant,
        offset: Mutex<Duration>,
        sleeps: Mutex<Vec<Duration>>,
    }

    impl FakeClock {
        fn new() -> Self {
            FakeClock {
                base: Instant::now(),
                offset: Mutex::new(Duration::ZERO),
                sleeps: Mutex::new(Vec::new()),
            }
        }
    }

    impl Clock for FakeClock {
        fn now(&self) -> Instant {
            self.base + *self.offset.lock().unwrap()
        }

        fn sleep(&self, duration: Duration) {
            *self.offset.lock().unwrap() += duration;
            self.sleeps.lock().unwrap().push(duration);
        }
    }

    #[test]
    fn rate_limiter_never_exceeds_ceiling_in_any_window() {
        let clock = Arc::new(FakeClock::new());
        let limiter = RateLimiter::per_minute(3, clock.clone());
        let mut stamps = Vec::new();
        for _ in 0..10 {
            limiter.acquire();
            stamps.push(clock.now());
        }
        // Sliding-window property: the 4th request after any given one must
        // start at least a full window later.
        for window in stamps.windows(4) {
            assert!(window[3] >= window[0] + Duration::from_secs(60));
        }
        // The first three were immediate; later ones had to wait.
        assert!(!clock.sleeps.lock().unwrap().is_empty());
    }
}
