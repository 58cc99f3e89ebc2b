use std::collections::VecDeque;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use url::Url;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, ResponseFormat};
use crate::http::{Clock, HttpClient, HttpResponse};

pub const ENV_API_KEY: &str = "URBANMAS_API_KEY";
pub const ENV_API_BASE: &str = "URBANMAS_API_BASE";
pub const ENV_MODEL: &str = "URBANMAS_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub api_base: String,
    #[serde(skip_serializing)]
    pub api_key: String,
    pub model: String,
    pub temperature: Option<f32>,
    pub top_p: Option<f32>,
    /// Sent as the provider's `seed` parameter, offset by the variant seed.
    pub seed: Option<u64>,
    pub max_in_flight: usize,
    pub requests_per_minute: usize,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub timeout_s: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            api_base: "https://api.openai.com/v1".into(),
            api_key: String::new(),
            model: "gpt-5".into(),
            temperature: None,
            top_p: None,
            seed: None,
            max_in_flight: 4,
            requests_per_minute: 60,
            max_attempts: 3,
            backoff_base_ms: 500,
            timeout_s: 120,
        }
    }
}

impl LiveConfig {
    /// Overlays `URBANMAS_API_KEY`, `URBANMAS_API_BASE` and `URBANMAS_MODEL`.
    pub fn with_env(mut self) -> Self {
        if let Ok(key) = std::env::var(ENV_API_KEY) {
            self.api_key = key;
        }
        if let Ok(base) = std::env::var(ENV_API_BASE) {
            self.api_base = base;
        }
        if let Ok(model) = std::env::var(ENV_MODEL) {
            self.model = model;
        }
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.api_key.is_empty() {
            return Err(BackendError::Config(format!("{ENV_API_KEY} is not set")));
        }
        if self.max_in_flight == 0 || self.requests_per_minute == 0 || self.max_attempts == 0 {
            return Err(BackendError::Config(
                "max_in_flight, requests_per_minute and max_attempts must be positive".into(),
            ));
        }
        Url::parse(&self.api_base).map_err(|e| BackendError::Config(format!("api_base: {e}")))?;
        Ok(())
    }
}

struct ThrottleState {
    in_flight: usize,
    window: VecDeque<Duration>,
}

/// Bounds concurrent requests and the number of request starts in any
/// sliding 60-second window.
pub struct Throttle {
    max_in_flight: usize,
    per_minute: usize,
    clock: Arc<dyn Clock>,
    state: Mutex<ThrottleState>,
    freed: Condvar,
}

pub struct Permit<'a> {
    throttle: &'a Throttle,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.throttle.state.lock().unwrap();
        st.in_flight -= 1;
        self.throttle.freed.notify_one();
    }
}

const WINDOW: Duration = Duration::from_secs(60);

impl Throttle {
    pub fn new(max_in_flight: usize, per_minute: usize, clock: Arc<dyn Clock>) -> Self {
        Throttle {
            max_in_flight: max_in_flight.max(1),
            per_minute: per_minute.max(1),
            clock,
            state: Mutex::new(ThrottleState {
                in_flight: 0,
                window: VecDeque::new(),
            }),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        loop {
            let mut st = self.state.lock().unwrap();
            while st.in_flight >= self.max_in_flight {
                st = self.freed.wait(st).unwrap();
            }
            let now = self.clock.now();
            while st.window.front().is_some_and(|t| *t + WINDOW <= now) {
                st.window.pop_front();
            }
            if st.window.len() < self.per_minute {
                st.window.push_back(now);
                st.in_flight += 1;
                return Permit { throttle: self };
            }
            let wait = *st.window.front().unwrap() + WINDOW - now;
            drop(st);
            self.clock.sleep(wait);
        }
    }
}

/// OpenAI-compatible `/chat/completions` client.
pub struct LiveBackend {
    cfg: LiveConfig,
    endpoint: Url,
    http: Arc<dyn HttpClient>,
    clock: Arc<dyn Clock>,
    throttle: Throttle,
    calls: AtomicU64,
}

impl LiveBackend {
    pub fn new(cfg: LiveConfig, http: Arc<dyn HttpClient>, clock: Arc<dyn Clock>) -> Result<Self, BackendError> {
        cfg.validate()?;
        let base = cfg.api_base.trim_end_matches('/');
        let endpoint = Url::parse(&format!("{base}/chat/completions"))
            .map_err(|e| BackendError::Config(format!("api_base: {e}")))?;
        let throttle = Throttle::new(cfg.max_in_flight, cfg.requests_per_minute, clock.clone());
        Ok(LiveBackend {
            cfg,
            endpoint,
            http,
            clock,
            throttle,
            calls: AtomicU64::new(0),
        })
    }

    /// HTTP requests sent so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn request_body(&self, req: &ChatRequest) -> Value {
        let user_content = if req.image_refs.is_empty() {
            Value::String(req.user_prompt.clone())
        } else {
            let mut parts = vec![json!({"type": "text", "text": req.user_prompt})];
            for r in &req.image_refs {
                parts.push(json!({"type": "image_url", "image_url": {"url": image_url(r)}}));
            }
            Value::Array(parts)
        };
        let mut body = json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": user_content},
            ],
        });
        let obj = body.as_object_mut().unwrap();
        if req.response_format == ResponseFormat::StructuredObject {
            obj.insert("response_format".into(), json!({"type": "json_object"}));
        }
        if let Some(t) = self.cfg.temperature {
            obj.insert("temperature".into(), json!(t));
        }
        if let Some(p) = self.cfg.top_p {
            obj.insert("top_p".into(), json!(p));
        }
        if let Some(seed) = self.cfg.seed {
            obj.insert("seed".into(), json!(seed + u64::from(req.variant_seed)));
        }
        body
    }

    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.cfg.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16)))
    }
}

fn image_url(reference: &str) -> String {
    if reference.starts_with("http://") || reference.starts_with("https://") || reference.starts_with("data:") {
        return reference.to_string();
    }
    let path = Path::new(reference);
    match std::fs::read(path) {
        Ok(bytes) => {
            let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
                Some("png") => "image/png",
                Some("webp") => "image/webp",
                _ => "image/jpeg",
            };
            format!(
                "data:{mime};base64,{}",
                base64::engine::general_purpose::STANDARD.encode(bytes)
            )
        }
        Err(e) => {
            log::warn!("cannot read image {reference}: {e}; sending the path as-is");
            reference.to_string()
        }
    }
}

fn parse_completion(resp: &HttpResponse) -> Result<String, BackendError> {
    let v: Value = serde_json::from_slice(&resp.body).map_err(|e| BackendError::Envelope(e.to_string()))?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Null => Ok(String::new()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        other => Err(BackendError::Envelope(format!("unexpected content {other}"))),
    }
}

fn is_transient(status: u16) -> bool {
    status == 408 || status == 429 || status >= 500
}

impl ChatBackend for LiveBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        req.validate()?;
        let body = self.request_body(req);
        let headers = [("Authorization", format!("Bearer {}", self.cfg.api_key))];
        let mut last = String::new();
        for attempt in 1..=self.cfg.max_attempts {
            let started = self.clock.now();
            let outcome = {
                let _permit = self.throttle.acquire();
                self.calls.fetch_add(1, Ordering::SeqCst);
                self.http.post_json(&self.endpoint, &headers, &body)
            };
            match outcome {
                Ok(resp) if resp.is_success() => {
                    let text = parse_completion(&resp)?;
                    let latency = self.clock.now().saturating_sub(started);
                    return Ok(ChatResponse {
                        text,
                        latency_ms: latency.as_millis() as u64,
                        backend_id: format!("live:{}", self.cfg.model),
                    });
                }
                Ok(resp) if resp.status == 401 || resp.status == 403 => {
                    return Err(BackendError::Authentication(resp.text()));
                }
                Ok(resp) if is_transient(resp.status) => {
                    last = format!("HTTP {}: {}", resp.status, resp.text());
                }
                Ok(resp) => {
                    return Err(BackendError::Http {
                        status: resp.status,
                        body: resp.text(),
                    });
                }
                Err(e) => last = e.to_string(),
            }
            if attempt < self.cfg.max_attempts {
                let wait = self.backoff(attempt);
                log::warn!("chat request attempt {attempt} failed ({last}); retrying in {wait:?}");
                self.clock.sleep(wait);
            }
        }
        Err(BackendError::TransportExhausted {
            attempts: self.cfg.max_attempts,
            last,
        })
    }

    fn backend_id(&self) -> &str {
        "live"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{Headers, ManualClock, SystemClock, TransportError};
    use std::sync::atomic::AtomicUsize;

    /// Scripted transport: pops statuses from a queue, tracks concurrency.
    struct Scripted {
        statuses: Mutex<VecDeque<u16>>,
        in_flight: AtomicUsize,
        max_seen: AtomicUsize,
        clock: Arc<dyn Clock>,
        starts: Mutex<Vec<Duration>>,
        bodies: Mutex<Vec<Value>>,
        hold: Duration,
    }

    impl Scripted {
        fn new(statuses: &[u16], clock: Arc<dyn Clock>, hold: Duration) -> Self {
            Scripted {
                statuses: Mutex::new(statuses.iter().copied().collect()),
                in_flight: AtomicUsize::new(0),
                max_seen: AtomicUsize::new(0),
                clock,
                starts: Mutex::new(Vec::new()),
                bodies: Mutex::new(Vec::new()),
                hold,
            }
        }
    }

    impl HttpClient for Scripted {
        fn get(&self, _: &Url, _: Headers<'_>) -> Result<HttpResponse, TransportError> {
            unreachable!()
        }

        fn post_json(&self, _: &Url, headers: Headers<'_>, body: &Value) -> Result<HttpResponse, TransportError> {
            assert_eq!(headers[0].1, "Bearer k");
            self.starts.lock().unwrap().push(self.clock.now());
            self.bodies.lock().unwrap().push(body.clone());
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.max_seen.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(self.hold);
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            let status = self.statuses.lock().unwrap().pop_front().unwrap_or(200);
            if status == 0 {
                return Err(TransportError("connection reset".into()));
            }
            let body = if status == 200 {
                json!({"choices": [{"message": {"role": "assistant", "content": "{\"ok\": 1}"}}]})
                    .to_string()
            } else {
                "oops".to_string()
            };
            Ok(HttpResponse { status, body: body.into_bytes() })
        }
    }

    fn cfg() -> LiveConfig {
        LiveConfig {
            api_key: "k".into(),
            api_base: "http://llm.test/v1/".into(),
            ..LiveConfig::default()
        }
    }

    fn req() -> ChatRequest {
        ChatRequest::new("sys", "user", ResponseFormat::StructuredObject)
    }

    #[test]
    fn retries_transient_failures_with_exponential_backoff() {
        let clock = Arc::new(ManualClock::default());
        let http = Arc::new(Scripted::new(&[503, 0, 200], clock.clone(), Duration::ZERO));
        let backend = LiveBackend::new(cfg(), http.clone(), clock.clone()).unwrap();
        let resp = backend.complete(&req()).unwrap();
        assert_eq!(resp.text, "{\"ok\": 1}");
        assert_eq!(backend.requests_sent(), 3);
        assert_eq!(clock.sleeps(), vec![Duration::from_millis(500), Duration::from_millis(1000)]);
        let body = &http.bodies.lock().unwrap()[0];
        assert_eq!(body["response_format"]["type"], "json_object");
        assert_eq!(body["model"], "gpt-5");
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let clock = Arc::new(ManualClock::default());
        let http = Arc::new(Scripted::new(&[500, 502, 429, 200], clock.clone(), Duration::ZERO));
        let backend = LiveBackend::new(cfg(), http, clock).unwrap();
        let err = backend.complete(&req()).unwrap_err();
        assert!(matches!(err, BackendError::TransportExhausted { attempts: 3, .. }), "{err}");
    }

    #[test]
    fn auth_failures_are_not_retried() {
        let clock = Arc::new(ManualClock::default());
        let http = Arc::new(Scripted::new(&[401], clock.clone(), Duration::ZERO));
        let backend = LiveBackend::new(cfg(), http, clock).unwrap();
        assert!(matches!(backend.complete(&req()), Err(BackendError::Authentication(_))));
        assert_eq!(backend.requests_sent(), 1);
    }

    #[test]
    fn missing_key_is_a_config_error() {
        let clock = Arc::new(ManualClock::default());
        let http = Arc::new(Scripted::new(&[], clock.clone(), Duration::ZERO));
        let err = LiveBackend::new(LiveConfig::default(), http, clock).err().unwrap();
        assert!(matches!(err, BackendError::Config(_)));
    }

    #[test]
    fn images_and_seed_in_request_body() {
        let clock = Arc::new(ManualClock::default());
        let http = Arc::new(Scripted::new(&[], clock.clone(), Duration::ZERO));
        let backend = LiveBackend::new(LiveConfig { seed: Some(7), ..cfg() }, http, clock).unwrap();
        let body = backend.request_body(&req().with_seed(1).with_images(vec!["https://img.test/a.jpg".into()]));
        assert_eq!(body["seed"], 8);
        assert_eq!(body["messages"][1]["content"][1]["image_url"]["url"], "https://img.test/a.jpg");
    }

    #[test]
    fn never_exceeds_in_flight_bound() {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock::default());
        let http = Arc::new(Scripted::new(&[], clock.clone(), Duration::from_millis(15)));
        let backend = LiveBackend::new(
            LiveConfig { max_in_flight: 2, requests_per_minute: 1000, ..cfg() },
            http.clone(),
            clock,
        )
        .unwrap();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| backend.complete(&req()).unwrap());
            }
        });
        assert!(http.max_seen.load(Ordering::SeqCst) <= 2);
        assert_eq!(backend.requests_sent(), 8);
    }

    #[test]
    fn never_exceeds_requests_per_minute() {
        let clock = Arc::new(ManualClock::default());
        let http = Arc::new(Scripted::new(&[], clock.clone(), Duration::ZERO));
        let backend = LiveBackend::new(
            LiveConfig { requests_per_minute: 5, ..cfg() },
            http.clone(),
            clock.clone(),
        )
        .unwrap();
        for _ in 0..17 {
            backend.complete(&req()).unwrap();
            clock.advance(Duration::from_secs(1));
        }
        let starts = http.starts.lock().unwrap().clone();
        assert_eq!(starts.len(), 17);
        for (i, t) in starts.iter().enumerate() {
            let in_window = starts[i..].iter().filter(|u| **u < *t + WINDOW).count();
            assert!(in_window <= 5, "{in_window} requests within 60s of {t:?}");
        }
    }
}
