//! Minimal blocking HTTP and clock abstractions shared by the live chat
//! backend and the geo clients. Tests swap in stubs for both.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;
use url::Url;

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, Clone, Error)]
#[error("transport error: {0}")]
pub struct TransportError(pub String);

pub type Headers<'a> = &'a [(&'a str, String)];

pub trait HttpClient: Send + Sync {
    fn get(&self, url: &Url, headers: Headers<'_>) -> Result<HttpResponse, TransportError>;

    fn post_json(
        &self,
        url: &Url,
        headers: Headers<'_>,
        body: &serde_json::Value,
    ) -> Result<HttpResponse, TransportError>;
}

pub struct ReqwestClient {
    inner: reqwest::blocking::Client,
}

impl ReqwestClient {
    pub fn new(timeout: Duration) -> Result<Self, TransportError> {
        let inner = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("urbanmas/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(ReqwestClient { inner })
    }

    fn send(&self, mut builder: reqwest::blocking::RequestBuilder, headers: Headers<'_>) -> Result<HttpResponse, TransportError> {
        for (name, value) in headers {
            builder = builder.header(*name, value);
        }
        let resp = builder.send().map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.bytes().map_err(|e| TransportError(e.to_string()))?.to_vec();
        Ok(HttpResponse { status, body })
    }
}

impl HttpClient for ReqwestClient {
    fn get(&self, url: &Url, headers: Headers<'_>) -> Result<HttpResponse, TransportError> {
        self.send(self.inner.get(url.clone()), headers)
    }

    fn post_json(&self, url: &Url, headers: Headers<'_>, body: &serde_json::Value) -> Result<HttpResponse, TransportError> {
        self.send(self.inner.post(url.clone()).json(body), headers)
    }
}

/// Refuses every request. Used wherever the network must stay untouched.
#[derive(Debug, Default)]
pub struct NoNetwork {
    attempts: std::sync::atomic::AtomicUsize,
}

impl NoNetwork {
    pub fn attempts(&self) -> usize {
        self.attempts.load(std::sync::atomic::Ordering::SeqCst)
    }

    fn refuse(&self, url: &Url) -> TransportError {
        self.attempts.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        TransportError(format!("network disabled (attempted {url})"))
    }
}

impl HttpClient for NoNetwork {
    fn get(&self, url: &Url, _: Headers<'_>) -> Result<HttpResponse, TransportError> {
        Err(self.refuse(url))
    }

    fn post_json(&self, url: &Url, _: Headers<'_>, _: &serde_json::Value) -> Result<HttpResponse, TransportError> {
        Err(self.refuse(url))
    }
}

/// Answers GET requests with a function of the URL; POSTs are refused.
/// Serves canned upstream responses in examples and tests.
pub struct FnClient<F> {
    respond: F,
}

impl<F> FnClient<F>
where
    F: Fn(&Url) -> Result<HttpResponse, TransportError> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        FnClient { respond }
    }
}

impl<F> HttpClient for FnClient<F>
where
    F: Fn(&Url) -> Result<HttpResponse, TransportError> + Send + Sync,
{
    fn get(&self, url: &Url, _: Headers<'_>) -> Result<HttpResponse, TransportError> {
        (self.respond)(url)
    }

    fn post_json(&self, url: &Url, _: Headers<'_>, _: &serde_json::Value) -> Result<HttpResponse, TransportError> {
        Err(TransportError(format!("POST not supported by this client ({url})")))
    }
}

pub trait Clock: Send + Sync {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Virtual clock: `sleep` advances time instantly.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: Mutex<Duration>,
    slept: Mutex<Vec<Duration>>,
}

impl ManualClock {
    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.slept.lock().unwrap().clone()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.slept.lock().unwrap().push(d);
        self.advance(d);
    }
}

/// Enforces a minimum spacing between successive calls.
pub struct MinInterval {
    interval: Duration,
    last: Mutex<Option<Duration>>,
}

impl MinInterval {
    pub fn new(interval: Duration) -> Self {
        MinInterval {
            interval,
            last: Mutex::new(None),
        }
    }

    /// Blocks until `interval` has passed since the previous call returned.
    pub fn wait(&self, clock: &dyn Clock) {
        let mut last = self.last.lock().unwrap();
        if let Some(prev) = *last {
            let due = prev + self.interval;
            let now = clock.now();
            if due > now {
                clock.sleep(due - now);
            }
        }
        *last = Some(clock.now());
    }
}
