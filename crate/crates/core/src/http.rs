//! Blocking JSON-over-HTTP POST client with bounded retries.

use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("request to {url} failed after {attempts} attempt(s): {message}")]
    Network {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("{url} answered HTTP {status}: {body}")]
    Status {
        url: String,
        status: u16,
        body: String,
    },
    #[error("{url} returned a malformed response: {message}")]
    Malformed { url: String, message: String },
}

impl TransportError {
    /// Network failures, timeouts and 5xx/429 answers may succeed on retry.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Network { .. } => true,
            TransportError::Status { status, .. } => *status >= 500 || *status == 429,
            TransportError::Malformed { .. } => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Extra attempts after the first one.
    pub retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 2,
            initial_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_secs(2),
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.initial_backoff
            .checked_mul(factor)
            .unwrap_or(self.max_backoff)
            .min(self.max_backoff)
    }
}

#[derive(Debug, Clone)]
pub struct JsonEndpoint {
    url: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl JsonEndpoint {
    pub fn new(url: impl Into<String>, timeout: Duration, retry: RetryPolicy) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        JsonEndpoint {
            url: url.into(),
            agent,
            retry,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// POSTs `body` (already-serialized JSON) and parses the JSON answer.
    /// The request is idempotent, so retryable failures are re-sent with
    /// exponential backoff.
    pub fn post(&self, body: &[u8]) -> Result<Value, TransportError> {
        let mut attempt = 0u32;
        loop {
            match self.post_once(body, attempt + 1) {
                Err(err) if err.is_retryable() && attempt < self.retry.retries => {
                    log::warn!("{err}; retrying");
                    std::thread::sleep(self.retry.backoff(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn post_once(&self, body: &[u8], attempts: u32) -> Result<Value, TransportError> {
        let network = |message: String| TransportError::Network {
            url: self.url.clone(),
            attempts,
            message,
        };
        let mut response = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| network(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| network(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status {
                url: self.url.clone(),
                status,
                body: text.chars().take(200).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Malformed {
            url: self.url.clone(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            retries: 5,
            initial_backoff: Duration::from_millis(10),
            max_backoff: Duration::from_millis(35),
        };
        assert_eq!(p.backoff(0), Duration::from_millis(10));
        assert_eq!(p.backoff(1), Duration::from_millis(20));
        assert_eq!(p.backoff(2), Duration::from_millis(35));
        assert_eq!(p.backoff(40), Duration::from_millis(35));
    }

    #[test]
    fn retryable_classification() {
        let status = |s| TransportError::Status {
            url: "u".into(),
            status: s,
            body: String::new(),
        };
        assert!(status(503).is_retryable());
        assert!(status(429).is_retryable());
        assert!(!status(404).is_retryable());
        assert!(!TransportError::Malformed {
            url: "u".into(),
            message: "x".into()
        }
        .is_retryable());
    }

    #[test]
    fn unreachable_endpoint_is_a_network_error() {
        // port 9 (discard) on localhost is closed in the test sandbox
        let ep = JsonEndpoint::new(
            "http://127.0.0.1:9/",
            Duration::from_millis(300),
            RetryPolicy {
                retries: 1,
                initial_backoff: Duration::from_millis(1),
                max_backoff: Duration::from_millis(1),
            },
        );
        match ep.post(b"{}").unwrap_err() {
            TransportError::Network { attempts, .. } => assert_eq!(attempts, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
