//! Minimal blocking HTTP abstraction shared by the OpenAlex and embedding
//! clients. Tests swap in a mock [`Transport`].

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

pub const ENV_HTTP_TIMEOUT_MS: &str = "IMPACT_HTTP_TIMEOUT_MS";
const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

impl HttpResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    /// 429 and 5xx are worth retrying.
    pub fn is_transient(&self) -> bool {
        self.status == 429 || self.status >= 500
    }
}

/// Connection-level failure (DNS, TLS, timeout). Always treated as transient.
#[derive(Debug, Clone, Error)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<HttpResponse, TransportError>;
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
    ) -> Result<HttpResponse, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .user_agent("impact/0.1")
            .build();
        Self {
            agent: config.into(),
        }
    }

    /// Timeout from `IMPACT_HTTP_TIMEOUT_MS`, default 30 s.
    pub fn from_env() -> Self {
        let ms = std::env::var(ENV_HTTP_TIMEOUT_MS)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(DEFAULT_TIMEOUT_MS);
        Self::new(Duration::from_millis(ms))
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, TransportError> {
        let mut resp = self
            .agent
            .get(url)
            .call()
            .map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }

    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
    ) -> Result<HttpResponse, TransportError> {
        let mut req = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(key) = bearer {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body)
            .map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// Exponential backoff: attempt `i` (0-based) waits `base_delay * 2^(i-1)` before running.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(attempts: u32) -> Self {
        Self {
            attempts,
            base_delay: Duration::ZERO,
        }
    }

    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt == 0 {
            Duration::ZERO
        } else {
            self.base_delay * 2u32.saturating_pow(attempt - 1)
        }
    }
}

/// Outcome of [`send_with_retry`] after the final attempt.
#[derive(Debug)]
pub enum RetryOutcome {
    Done(HttpResponse),
    /// Every attempt failed transiently; carries the last response or error text.
    Exhausted { last_status: Option<u16>, last_error: String },
}

/// Runs `send` until it yields a non-transient response or attempts run out.
pub fn send_with_retry<F>(policy: &RetryPolicy, mut send: F) -> RetryOutcome
where
    F: FnMut() -> Result<HttpResponse, TransportError>,
{
    let mut last_status = None;
    let mut last_error = String::new();
    for attempt in 0..policy.attempts.max(1) {
        let wait = policy.delay_before(attempt);
        if !wait.is_zero() {
            thread::sleep(wait);
        }
        match send() {
            Ok(resp) if !resp.is_transient() => return RetryOutcome::Done(resp),
            Ok(resp) => {
                last_status = Some(resp.status);
                last_error = format!("HTTP {}", resp.status);
            }
            Err(e) => {
                last_status = None;
                last_error = e.to_string();
            }
        }
        log::debug!("attempt {} failed: {last_error}", attempt + 1);
    }
    RetryOutcome::Exhausted {
        last_status,
        last_error,
    }
}

/// Spaces calls at least `1 / max_per_second` apart across threads.
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(max_per_second: f64) -> Self {
        let interval = if max_per_second > 0.0 && max_per_second.is_finite() {
            Duration::from_secs_f64(1.0 / max_per_second)
        } else {
            Duration::ZERO
        };
        Self {
            interval,
            next: Mutex::new(Instant::now()),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(0.0)
    }

    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(100),
        };
        assert_eq!(p.delay_before(0), Duration::ZERO);
        assert_eq!(p.delay_before(1), Duration::from_millis(100));
        assert_eq!(p.delay_before(2), Duration::from_millis(200));
    }

    #[test]
    fn retries_only_transient_failures() {
        let calls = Cell::new(0);
        let out = send_with_retry(&RetryPolicy::no_delay(3), || {
            calls.set(calls.get() + 1);
            Ok(HttpResponse {
                status: 503,
                body: String::new(),
            })
        });
        assert_eq!(calls.get(), 3);
        assert!(matches!(out, RetryOutcome::Exhausted { last_status: Some(503), .. }));

        calls.set(0);
        let out = send_with_retry(&RetryPolicy::no_delay(3), || {
            calls.set(calls.get() + 1);
            Ok(HttpResponse {
                status: 404,
                body: String::new(),
            })
        });
        assert_eq!(calls.get(), 1);
        assert!(matches!(out, RetryOutcome::Done(r) if r.status == 404));
    }

    #[test]
    fn rate_limiter_spaces_calls() {
        let rl = RateLimiter::new(100.0);
        let start = Instant::now();
        for _ in 0..5 {
            rl.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(35));
    }
}
