//! HTTP client for a chat-completions endpoint.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use reqwest::header::{AUTHORIZATION, CONTENT_TYPE};

use super::{wire, Backend, BackendError, Completion, CompletionRequest};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "LLM_API_KEY";

const RETRY_BACKOFF: Duration = Duration::from_millis(250);

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    client: reqwest::Client,
    endpoint: String,
    api_key: Option<String>,
}

impl RemoteBackend {
    /// `endpoint` is the full URL of the chat-completions path.
    pub fn new(endpoint: &str, api_key: Option<String>) -> Result<Self, BackendError> {
        reqwest::Url::parse(endpoint).map_err(|e| BackendError::Unavailable {
            endpoint: endpoint.to_string(),
            reason: format!("invalid URL: {e}"),
        })?;
        Ok(Self {
            client: reqwest::Client::new(),
            endpoint: endpoint.to_string(),
            api_key,
        })
    }

    /// Reads the key from `LLM_API_KEY`.
    pub fn from_env(endpoint: &str) -> Result<Self, BackendError> {
        Self::new(endpoint, std::env::var(API_KEY_ENV).ok())
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Checks that something accepts TCP connections at the endpoint.
    pub async fn probe(&self, timeout: Duration) -> Result<(), BackendError> {
        let unavailable = |reason: String| BackendError::Unavailable {
            endpoint: self.endpoint.clone(),
            reason,
        };
        let url = reqwest::Url::parse(&self.endpoint).map_err(|e| unavailable(e.to_string()))?;
        let host = url
            .host_str()
            .ok_or_else(|| unavailable("URL has no host".into()))?;
        let port = url
            .port_or_known_default()
            .ok_or_else(|| unavailable("URL has no port".into()))?;
        match tokio::time::timeout(timeout, tokio::net::TcpStream::connect((host, port))).await {
            Ok(Ok(_)) => Ok(()),
            Ok(Err(e)) => Err(unavailable(e.to_string())),
            Err(_) => Err(unavailable("connection timed out".into())),
        }
    }

    async fn post_once(&self, body: &str, timeout: Duration) -> Result<String, String> {
        let mut req = self
            .client
            .post(&self.endpoint)
            .header(CONTENT_TYPE, "application/json")
            .timeout(timeout)
            .body(body.to_string());
        if let Some(key) = &self.api_key {
            req = req.header(AUTHORIZATION, format!("Bearer {key}"));
        }
        let response = req.send().await.map_err(|e| e.to_string())?;
        let status = response.status();
        let text = response.text().await.map_err(|e| e.to_string())?;
        if status.is_success() {
            Ok(text)
        } else {
            Err(format!("HTTP {status}: {text}"))
        }
    }
}

#[async_trait]
impl Backend for RemoteBackend {
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let body = wire::request_body(request);
        let timeout = Duration::from_secs_f64(request.params.request_timeout);
        let started = Instant::now();
        let text = match self.post_once(&body, timeout).await {
            Ok(text) => text,
            Err(first) => {
                tracing::warn!(endpoint = %self.endpoint, error = %first, "completion failed, retrying once");
                tokio::time::sleep(RETRY_BACKOFF).await;
                self.post_once(&body, timeout).await.map_err(|reason| {
                    BackendError::Unavailable {
                        endpoint: self.endpoint.clone(),
                        reason,
                    }
                })?
            }
        };
        wire::parse_response(&text, started.elapsed().as_secs_f64())
    }
}
