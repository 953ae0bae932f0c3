//! Client side of the scoring service protocol.
//!
//! Requests are JSON objects posted to `{endpoint}/score`:
//!
//! ```text
//! {"kind":"image"|"text","payload":"<base64 image bytes | utf-8 text>","labels":[{label_id,name,prompt_text,hypothesis_text} x10]}
//! ```
//!
//! and a successful response is `{"scores":[10 reals],"model_id":"..."}`.
//! Anything else from a 200 response is a protocol violation. Transport
//! failures and 5xx statuses are retried up to the configured budget.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{BackendKind, ScorerError, ScoringBackend};
use crate::labels::{validate_score_vector, Label, LabelSpace, ScoreVector};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// Carries one encoded request to the service and returns the raw reply.
/// `Err` means nothing usable came back (connection refused, timeout, ...).
pub trait Transport: Send + Sync {
    fn post_score(&self, body: &[u8]) -> Result<TransportResponse, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Image,
    Text,
}

#[derive(Debug, Serialize)]
pub struct ScoreRequest<'a> {
    pub kind: RequestKind,
    pub payload: String,
    pub labels: &'a [Label],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreResponse {
    scores: Vec<f64>,
    model_id: String,
}

/// Decodes and checks a 200 response body.
pub fn parse_score_response(body: &[u8]) -> Result<(ScoreVector, String), ScorerError> {
    let response: ScoreResponse = serde_json::from_slice(body)
        .map_err(|e| ScorerError::ProtocolViolation(format!("malformed response: {e}")))?;
    if response.model_id.is_empty() {
        return Err(ScorerError::ProtocolViolation("empty model_id".into()));
    }
    let vector = validate_score_vector(&response.scores)
        .map_err(|e| ScorerError::ProtocolViolation(e.to_string()))?;
    Ok((vector, response.model_id))
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    score_url: String,
}

impl HttpTransport {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, ScorerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ScorerError::BackendUnavailable(e.to_string()))?;
        Ok(HttpTransport {
            client,
            score_url: format!("{}/score", endpoint.trim_end_matches('/')),
        })
    }
}

impl Transport for HttpTransport {
    fn post_score(&self, body: &[u8]) -> Result<TransportResponse, String> {
        let response = self
            .client
            .post(&self.score_url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec())
            .send()
            .map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let body = response.bytes().map_err(|e| e.to_string())?.to_vec();
        Ok(TransportResponse { status, body })
    }
}

/// One recorded request/response pair.
///
/// `request` of `null` matches any request. `error` simulates a transport
/// failure. `body` may be a JSON value (sent compactly) or a raw string.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exchange {
    #[serde(default)]
    pub request: Option<serde_json::Value>,
    #[serde(default)]
    pub status: Option<u16>,
    #[serde(default)]
    pub body: Option<serde_json::Value>,
    #[serde(default)]
    pub error: Option<String>,
}

/// Replays a recorded transcript in order, checking each outgoing request
/// against the recording.
pub struct ReplayTransport {
    exchanges: Mutex<VecDeque<Exchange>>,
}

impl ReplayTransport {
    pub fn new(exchanges: Vec<Exchange>) -> Self {
        ReplayTransport {
            exchanges: Mutex::new(exchanges.into()),
        }
    }

    /// Reads a line-delimited transcript file.
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let exchanges = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<Exchange>, _>>()
            .map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(ReplayTransport::new(exchanges))
    }

    pub fn remaining(&self) -> usize {
        self.exchanges.lock().unwrap().len()
    }
}

impl Transport for ReplayTransport {
    fn post_score(&self, body: &[u8]) -> Result<TransportResponse, String> {
        let exchange = self
            .exchanges
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| "transcript exhausted".to_string())?;
        if let Some(expected) = &exchange.request {
            let actual: serde_json::Value =
                serde_json::from_slice(body).map_err(|e| format!("request is not JSON: {e}"))?;
            if &actual != expected {
                return Err("request does not match transcript".into());
            }
        }
        if let Some(error) = exchange.error {
            return Err(error);
        }
        let body = match exchange.body {
            Some(serde_json::Value::String(raw)) => raw.into_bytes(),
            Some(value) => serde_json::to_vec(&value).expect("JSON value serializes"),
            None => Vec::new(),
        };
        Ok(TransportResponse {
            status: exchange.status.unwrap_or(200),
            body,
        })
    }
}

/// Scoring backend that delegates to the inference service.
pub struct RemoteBackend<T: Transport> {
    transport: T,
    retry_budget: u32,
    backoff: Duration,
    model_id: Option<String>,
}

impl RemoteBackend<HttpTransport> {
    pub fn http(endpoint: &str, timeout: Duration, retry_budget: u32) -> Result<Self, ScorerError> {
        Ok(RemoteBackend::new(
            HttpTransport::new(endpoint, timeout)?,
            retry_budget,
        ))
    }
}

impl<T: Transport> RemoteBackend<T> {
    pub fn new(transport: T, retry_budget: u32) -> Self {
        RemoteBackend {
            transport,
            retry_budget,
            backoff: Duration::from_millis(200),
            model_id: None,
        }
    }

    /// Delay before retry `n` is `n * backoff`.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    /// Model id recorded in scorer descriptors.
    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = Some(model_id.into());
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// `image_path` is set for image requests so a 422 reply can be reported
    /// as an undecodable image.
    fn request(
        &self,
        kind: RequestKind,
        payload: String,
        labels: &LabelSpace,
        image_path: Option<&Path>,
    ) -> Result<ScoreVector, ScorerError> {
        let body = serde_json::to_vec(&ScoreRequest {
            kind,
            payload,
            labels: labels.labels(),
        })
        .expect("request serializes");

        let mut attempt = 0;
        loop {
            let error = match self.transport.post_score(&body) {
                Ok(TransportResponse { status: 200, body }) => {
                    return parse_score_response(&body).map(|(vector, _)| vector)
                }
                Ok(TransportResponse { status, body }) if status >= 500 => {
                    ScorerError::BackendUnavailable(format!(
                        "status {status}: {}",
                        String::from_utf8_lossy(&body)
                    ))
                }
                Ok(TransportResponse { status, body }) => {
                    let detail = String::from_utf8_lossy(&body);
                    return Err(match image_path {
                        Some(path) if status == 422 => ScorerError::UnreadableImage {
                            path: path.to_path_buf(),
                            detail: format!("service could not decode image: {detail}"),
                        },
                        _ => ScorerError::ProtocolViolation(format!(
                            "service rejected request with status {status}: {detail}"
                        )),
                    });
                }
                Err(detail) => ScorerError::BackendUnavailable(detail),
            };
            if attempt >= self.retry_budget {
                return Err(error);
            }
            attempt += 1;
            log::warn!(
                "scoring request failed ({error}); retry {attempt}/{}",
                self.retry_budget
            );
            std::thread::sleep(self.backoff * attempt);
        }
    }
}

impl<T: Transport> ScoringBackend for RemoteBackend<T> {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn model_id(&self) -> Option<&str> {
        self.model_id.as_deref()
    }

    fn score_image(
        &self,
        image_path: &Path,
        labels: &LabelSpace,
    ) -> Result<ScoreVector, ScorerError> {
        let bytes = fs::read(image_path).map_err(|e| ScorerError::UnreadableImage {
            path: image_path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let payload = base64::engine::general_purpose::STANDARD.encode(bytes);
        self.request(RequestKind::Image, payload, labels, Some(image_path))
    }

    fn score_text(&self, content: &str, labels: &LabelSpace) -> Result<ScoreVector, ScorerError> {
        if content.trim().is_empty() {
            return Err(ScorerError::EmptyText);
        }
        self.request(RequestKind::Text, content.to_string(), labels, None)
    }
}
