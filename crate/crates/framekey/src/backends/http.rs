//! HTTP transport, retry policy, and the embedding wire protocol.
//!
//! Backends talk JSON-over-HTTP through the [`HttpJsonTransport`] trait so
//! tests can substitute a replay transport that serves recorded responses and
//! asserts the exact request bytes. The wire formats are documented in
//! `docs/PROTOCOL.md` and pinned by golden fixtures.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::EmbedderBackend;
use crate::error::{Error, Result};
use crate::kfm::EmbeddingVector;

/// A transport failure, tagged with whether a retry can help.
#[derive(Debug)]
pub enum TransportFailure {
    Retryable(String),
    Permanent(String),
}

impl TransportFailure {
    pub fn message(&self) -> &str {
        match self {
            TransportFailure::Retryable(m) | TransportFailure::Permanent(m) => m,
        }
    }
}

/// Blocking JSON POST. Implementations do not retry; [`RetryPolicy`] wraps
/// them.
pub trait HttpJsonTransport: Send + Sync {
    fn post_json(&self, url: &str, body: &Value) -> std::result::Result<Value, TransportFailure>;
}

/// Exponential-backoff retry: `max_attempts` tries, sleeping
/// `initial_backoff * 2^i` between them.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    pub fn post_with_retries(
        &self,
        transport: &dyn HttpJsonTransport,
        backend: &str,
        url: &str,
        body: &Value,
    ) -> Result<Value> {
        let mut backoff = self.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.max_attempts.max(1) {
            match transport.post_json(url, body) {
                Ok(value) => return Ok(value),
                Err(TransportFailure::Permanent(message)) => {
                    return Err(Error::Backend {
                        backend: backend.to_string(),
                        message,
                    })
                }
                Err(TransportFailure::Retryable(message)) => {
                    log::warn!("{backend}: attempt {attempt}/{} failed: {message}", self.max_attempts);
                    last = message;
                    if attempt < self.max_attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(Error::Backend {
            backend: backend.to_string(),
            message: format!("gave up after {} attempts: {last}", self.max_attempts),
        })
    }
}

/// Production transport over a blocking reqwest client, with optional bearer
/// auth. Connection errors, timeouts, 408/429 and 5xx are retryable; other
/// non-2xx statuses are permanent.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
    auth_token: Option<String>,
}

impl ReqwestTransport {
    pub fn new(auth_token: Option<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Backend {
                backend: "http".into(),
                message: e.to_string(),
            })?;
        Ok(ReqwestTransport { client, auth_token })
    }
}

impl HttpJsonTransport for ReqwestTransport {
    fn post_json(&self, url: &str, body: &Value) -> std::result::Result<Value, TransportFailure> {
        let mut request = self.client.post(url).json(body);
        if let Some(token) = &self.auth_token {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .map_err(|e| TransportFailure::Retryable(format!("request to {url} failed: {e}")))?;
        let status = response.status();
        if status.is_success() {
            response
                .json()
                .map_err(|e| TransportFailure::Permanent(format!("invalid JSON from {url}: {e}")))
        } else if status.as_u16() == 408 || status.as_u16() == 429 || status.is_server_error() {
            Err(TransportFailure::Retryable(format!("{url} returned {status}")))
        } else {
            Err(TransportFailure::Permanent(format!("{url} returned {status}")))
        }
    }
}

/// Replay transport for recorded-response tests: serves fixture responses in
/// order and fails permanently if a request does not match its fixture.
pub struct ReplayTransport {
    exchanges: Vec<(Value, Value)>,
    cursor: AtomicUsize,
    log: Mutex<Vec<Value>>,
}

impl ReplayTransport {
    pub fn new(exchanges: Vec<(Value, Value)>) -> Self {
        ReplayTransport {
            exchanges,
            cursor: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Requests observed so far.
    pub fn requests(&self) -> Vec<Value> {
        self.log.lock().unwrap().clone()
    }

    pub fn exhausted(&self) -> bool {
        self.cursor.load(Ordering::SeqCst) >= self.exchanges.len()
    }
}

impl HttpJsonTransport for ReplayTransport {
    fn post_json(&self, _url: &str, body: &Value) -> std::result::Result<Value, TransportFailure> {
        let index = self.cursor.fetch_add(1, Ordering::SeqCst);
        self.log.lock().unwrap().push(body.clone());
        let Some((expected, response)) = self.exchanges.get(index) else {
            return Err(TransportFailure::Permanent(format!(
                "replay transport has no fixture for request #{index}"
            )));
        };
        if expected != body {
            return Err(TransportFailure::Permanent(format!(
                "request #{index} does not match its fixture:\nexpected {expected}\ngot      {body}"
            )));
        }
        Ok(response.clone())
    }
}

/// Embedding request: exactly one of `texts` or `images` (base64 PNG).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbedRequest {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub texts: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub images: Option<Vec<String>>,
}

/// Embedding response: one vector per input, all of length `dim`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
}

/// HTTP embedding backend: batches inputs and retries transient failures.
pub struct HttpEmbedder {
    transport: Box<dyn HttpJsonTransport>,
    endpoint: String,
    batch_size: usize,
    retry: RetryPolicy,
    declared_dim: Mutex<Option<usize>>,
}

pub const DEFAULT_EMBED_BATCH_SIZE: usize = 32;

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, transport: Box<dyn HttpJsonTransport>) -> Self {
        HttpEmbedder {
            transport,
            endpoint: endpoint.into(),
            batch_size: DEFAULT_EMBED_BATCH_SIZE,
            retry: RetryPolicy::default(),
            declared_dim: Mutex::new(None),
        }
    }

    /// Convenience constructor over the production transport.
    pub fn over_http(endpoint: impl Into<String>, auth_token: Option<String>) -> Result<Self> {
        Ok(Self::new(endpoint, Box::new(ReqwestTransport::new(auth_token)?)))
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_expected_dim(self, dim: usize) -> Self {
        *self.declared_dim.lock().unwrap() = Some(dim);
        self
    }

    fn embed_batched(&self, total: usize, request_for: impl Fn(usize, usize) -> EmbedRequest) -> Result<Vec<EmbeddingVector>> {
        let mut out = Vec::with_capacity(total);
        let mut offset = 0;
        while offset < total {
            let len = self.batch_size.min(total - offset);
            let request = request_for(offset, len);
            let body = serde_json::to_value(&request)?;
            let value =
                self.retry
                    .post_with_retries(self.transport.as_ref(), "http-embedder", &self.endpoint, &body)?;
            let response: EmbedResponse = serde_json::from_value(value).map_err(|e| Error::Backend {
                backend: "http-embedder".into(),
                message: format!("malformed embedding response: {e}"),
            })?;
            if response.vectors.len() != len {
                return Err(Error::Backend {
                    backend: "http-embedder".into(),
                    message: format!(
                        "batch at offset {offset} asked for {len} vectors, got {}",
                        response.vectors.len()
                    ),
                });
            }
            let mut declared = self.declared_dim.lock().unwrap();
            let dim = *declared.get_or_insert(response.dim);
            if response.dim != dim {
                return Err(Error::DimensionMismatch(format!(
                    "embedding response declares dim {} but the backend previously declared {dim}",
                    response.dim
                )));
            }
            for (i, vector) in response.vectors.into_iter().enumerate() {
                if vector.len() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "item {} has length {}, expected {dim}",
                        offset + i,
                        vector.len()
                    )));
                }
                out.push(EmbeddingVector::new(vector));
            }
            offset += len;
        }
        Ok(out)
    }
}

impl EmbedderBackend for HttpEmbedder {
    fn name(&self) -> &str {
        "http"
    }

    fn dim(&self) -> Option<usize> {
        *self.declared_dim.lock().unwrap()
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        self.embed_batched(texts.len(), |offset, len| EmbedRequest {
            texts: Some(texts[offset..offset + len].to_vec()),
            images: None,
        })
    }

    fn embed_images(&self, images: &[Vec<u8>]) -> Result<Vec<EmbeddingVector>> {
        use base64::Engine;
        let encoded: Vec<String> = images
            .iter()
            .map(|bytes| base64::engine::general_purpose::STANDARD.encode(bytes))
            .collect();
        self.embed_batched(encoded.len(), |offset, len| EmbedRequest {
            texts: None,
            images: Some(encoded[offset..offset + len].to_vec()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn response(n: usize, dim: usize) -> Value {
        json!({ "vectors": vec![vec![1.0; dim]; n], "dim": dim })
    }

    #[test]
    fn batching_issues_ceil_requests() {
        let texts: Vec<String> = (0..100).map(|i| format!("t{i}")).collect();
        let exchanges: Vec<(Value, Value)> = (0..4)
            .map(|b| {
                let lo = b * 32;
                let hi = (lo + 32).min(100);
                (
                    json!({ "texts": texts[lo..hi].to_vec() }),
                    response(hi - lo, 4),
                )
            })
            .collect();
        let replay = ReplayTransport::new(exchanges);
        let embedder = HttpEmbedder::new("http://embed.test/v1", Box::new(replay));
        let vectors = embedder.embed_texts(&texts).unwrap();
        assert_eq!(vectors.len(), 100);
        assert_eq!(embedder.dim(), Some(4));
    }

    #[test]
    fn replay_determinism_identical_batches() {
        let texts: Vec<String> = vec!["a".into(), "b".into()];
        let request = json!({ "texts": ["a", "b"] });
        let replay = ReplayTransport::new(vec![
            (request.clone(), response(2, 3)),
            (request.clone(), response(2, 3)),
        ]);
        let embedder = HttpEmbedder::new("http://embed.test/v1", Box::new(replay));
        let first = embedder.embed_texts(&texts).unwrap();
        let second = embedder.embed_texts(&texts).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn wrong_length_vector_names_the_item() {
        let replay = ReplayTransport::new(vec![(
            json!({ "texts": ["a", "b"] }),
            json!({ "vectors": [[1.0, 0.0], [1.0, 0.0, 0.0]], "dim": 2 }),
        )]);
        let embedder = HttpEmbedder::new("http://embed.test/v1", Box::new(replay));
        let err = embedder
            .embed_texts(&["a".to_string(), "b".to_string()])
            .unwrap_err()
            .to_string();
        assert!(err.contains("item 1"), "{err}");
    }

    struct Flaky {
        failures: AtomicUsize,
        calls: AtomicUsize,
    }

    impl HttpJsonTransport for Flaky {
        fn post_json(&self, _url: &str, _body: &Value) -> std::result::Result<Value, TransportFailure> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self.failures.load(Ordering::SeqCst) > 0 {
                self.failures.fetch_sub(1, Ordering::SeqCst);
                return Err(TransportFailure::Retryable("boom".into()));
            }
            Ok(json!({ "vectors": [[1.0, 0.0]], "dim": 2 }))
        }
    }

    #[test]
    fn retry_recovers_from_transient_failures() {
        let flaky = Flaky {
            failures: AtomicUsize::new(2),
            calls: AtomicUsize::new(0),
        };
        let retry = RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(1),
        };
        let value = retry
            .post_with_retries(&flaky, "test", "http://x", &json!({}))
            .unwrap();
        assert_eq!(value["dim"], 2);
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retry_gives_up_after_max_attempts() {
        let flaky = Flaky {
            failures: AtomicUsize::new(10),
            calls: AtomicUsize::new(0),
        };
        let retry = RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(1),
        };
        let err = retry
            .post_with_retries(&flaky, "test", "http://x", &json!({}))
            .unwrap_err();
        assert!(err.to_string().contains("3 attempts"));
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn permanent_failure_not_retried() {
        struct Permanent(AtomicUsize);
        impl HttpJsonTransport for Permanent {
            fn post_json(&self, _u: &str, _b: &Value) -> std::result::Result<Value, TransportFailure> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Err(TransportFailure::Permanent("401 unauthorized".into()))
            }
        }
        let transport = Permanent(AtomicUsize::new(0));
        let err = RetryPolicy::default()
            .post_with_retries(&transport, "test", "http://x", &json!({}))
            .unwrap_err();
        assert!(err.to_string().contains("401"));
        assert_eq!(transport.0.load(Ordering::SeqCst), 1);
    }
}
