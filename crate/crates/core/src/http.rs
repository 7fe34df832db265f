//! Minimal blocking JSON-over-HTTP helper shared by the embedding and
//! completion clients.

use std::thread;
use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PostError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("response is not valid JSON: {0}")]
    Decode(String),
}

impl PostError {
    /// Connection failures, rate limiting and server errors are worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            PostError::Transport(_) => true,
            PostError::Status { status, .. } => *status == 429 || *status >= 500,
            PostError::Decode(_) => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone)]
pub struct JsonEndpoint {
    agent: ureq::Agent,
    url: String,
    bearer_token: Option<String>,
}

impl JsonEndpoint {
    pub fn new(url: impl Into<String>, bearer_token: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            url: url.into(),
            bearer_token,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn post(&self, body: &Value) -> Result<Value, PostError> {
        let mut request = self.agent.post(&self.url).header("Accept", "application/json");
        if let Some(token) = &self.bearer_token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| PostError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| PostError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(PostError::Status { status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| PostError::Decode(e.to_string()))
    }

    /// Posts with exponential backoff on transient failures.
    pub fn post_with_retry(&self, body: &Value, policy: &RetryPolicy) -> Result<Value, PostError> {
        let mut backoff = policy.initial_backoff;
        let mut attempt = 0;
        loop {
            match self.post(body) {
                Err(e) if e.is_transient() && attempt < policy.max_retries => {
                    attempt += 1;
                    thread::sleep(backoff);
                    backoff = backoff.saturating_mul(2);
                }
                other => return other,
            }
        }
    }
}

/// Reads a secret from the named environment variable, if set and non-empty.
pub fn token_from_env(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|v| !v.trim().is_empty())
}
