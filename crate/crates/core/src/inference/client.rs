use std::path::Path;
use std::time::{Duration, Instant};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::GenerationParams;

/// When set to anything other than "" or "0", HTTP endpoints refuse to be
/// constructed or used.
pub const OFFLINE_ENV: &str = "MEDQA_OFFLINE";

fn offline() -> bool {
    std::env::var(OFFLINE_ENV).is_ok_and(|v| !v.is_empty() && v != "0")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApiStyle {
    /// `/v1/chat/completions`: `messages` in, `choices[0].message.content` out.
    #[default]
    Chat,
    /// `/v1/completions`: `prompt` in, `choices[0].text` out.
    Completion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): doubling from the base,
    /// capped.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(
            self.base_backoff_ms
                .saturating_mul(factor)
                .min(self.max_backoff_ms),
        )
    }
}

/// Endpoint configuration file. Credentials are never stored here, only the
/// name of the environment variable holding them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub api_style: ApiStyle,
    /// Request path; defaults to the standard path for `api_style`.
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    /// Hosted chat APIs reject `repetition_penalty`; self-hosted servers
    /// usually accept it.
    #[serde(default)]
    pub send_repetition_penalty: bool,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout() -> u64 {
    60
}

fn default_concurrency() -> usize {
    4
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_style: ApiStyle::default(),
            path: None,
            auth_env: None,
            timeout_secs: default_timeout(),
            max_concurrency: default_concurrency(),
            send_repetition_penalty: false,
            retry: RetryPolicy::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        if cfg.max_concurrency == 0 {
            return Err("max_concurrency must be at least 1".into());
        }
        if cfg.timeout_secs == 0 {
            return Err("timeout_secs must be positive".into());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn url(&self) -> String {
        let path = self.path.as_deref().unwrap_or(match self.api_style {
            ApiStyle::Chat => "/v1/chat/completions",
            ApiStyle::Completion => "/v1/completions",
        });
        format!("{}{}", self.base_url.trim_end_matches('/'), path)
    }

    /// Model and origin, with any userinfo, path and query removed.
    pub fn redacted_identity(&self) -> String {
        let (scheme, rest) = self
            .base_url
            .split_once("://")
            .unwrap_or(("", self.base_url.as_str()));
        let authority = rest.split(['/', '?', '#']).next().unwrap_or("");
        let host = authority.rsplit('@').next().unwrap_or(authority);
        if scheme.is_empty() {
            format!("{} @ {host}", self.model)
        } else {
            format!("{} @ {scheme}://{host}", self.model)
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EndpointError {
    #[error("network access is disabled ({OFFLINE_ENV} is set)")]
    Offline,
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
    #[error("authentication rejected with HTTP {status}")]
    Auth { status: u16 },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Status {
        status: u16,
        body: String,
        attempts: u32,
    },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("malformed response payload: {0}")]
    MalformedPayload(String),
}

impl EndpointError {
    fn is_transient(&self) -> bool {
        match self {
            EndpointError::Timeout { .. } | EndpointError::Transport { .. } => true,
            EndpointError::Status { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            _ => false,
        }
    }

    fn with_attempts(self, n: u32) -> Self {
        match self {
            EndpointError::Timeout { .. } => EndpointError::Timeout { attempts: n },
            EndpointError::Status { status, body, .. } => EndpointError::Status {
                status,
                body,
                attempts: n,
            },
            EndpointError::Transport { message, .. } => EndpointError::Transport {
                message,
                attempts: n,
            },
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Requests issued, including the successful one.
    pub attempts: u32,
    pub latency_ms: u64,
}

/// Anything that turns a prompt into generated text.
pub trait Completer: Sync {
    fn model_name(&self) -> &str;
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Completion, EndpointError>;
}

/// Chat-completion compatible HTTP endpoint with bounded retries.
pub struct HttpEndpoint {
    config: EndpointConfig,
    agent: ureq::Agent,
    credential: Option<String>,
}

impl HttpEndpoint {
    pub fn new(config: EndpointConfig) -> Result<Self, EndpointError> {
        if offline() {
            return Err(EndpointError::Offline);
        }
        let credential = match &config.auth_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| EndpointError::MissingCredential(var.clone()))?,
            ),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            agent,
            credential,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn request_body(&self, prompt: &str, params: &GenerationParams) -> Value {
        let mut body = match self.config.api_style {
            ApiStyle::Chat => json!({
                "model": self.config.model,
                "messages": [{"role": "user", "content": prompt}],
            }),
            ApiStyle::Completion => json!({
                "model": self.config.model,
                "prompt": prompt,
            }),
        };
        body["temperature"] = json!(params.temperature);
        body["top_p"] = json!(params.top_p);
        body["max_tokens"] = json!(params.max_new_tokens);
        if self.config.send_repetition_penalty {
            body["repetition_penalty"] = json!(params.repetition_penalty);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Result<String, EndpointError> {
        if offline() {
            return Err(EndpointError::Offline);
        }
        let mut req = self.agent.post(&self.config.url());
        if let Some(key) = &self.credential {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => EndpointError::Timeout { attempts: 1 },
            other => EndpointError::Transport {
                message: other.to_string(),
                attempts: 1,
            },
        })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => EndpointError::Timeout { attempts: 1 },
            other => EndpointError::Transport {
                message: other.to_string(),
                attempts: 1,
            },
        })?;
        match status {
            200..=299 => extract_text(&text, self.config.api_style),
            401 | 403 => Err(EndpointError::Auth { status }),
            _ => Err(EndpointError::Status {
                status,
                body: text.chars().take(500).collect(),
                attempts: 1,
            }),
        }
    }
}

fn extract_text(payload: &str, style: ApiStyle) -> Result<String, EndpointError> {
    let v: Value = serde_json::from_str(payload)
        .map_err(|e| EndpointError::MalformedPayload(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| EndpointError::MalformedPayload("no choices[0]".into()))?;
    let text = match style {
        ApiStyle::Chat => choice.get("message").and_then(|m| m.get("content")),
        ApiStyle::Completion => choice.get("text"),
    };
    text.and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| EndpointError::MalformedPayload("choice carries no text".into()))
}

impl Completer for HttpEndpoint {
    fn model_name(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Completion, EndpointError> {
        let body = self.request_body(prompt, params);
        let policy = self.config.retry;
        let mut attempts = 0;
        loop {
            attempts += 1;
            let started = Instant::now();
            match self.attempt(&body) {
                Ok(text) => {
                    if attempts > 1 {
                        info!("request succeeded after {attempts} attempts");
                    }
                    return Ok(Completion {
                        text,
                        attempts,
                        latency_ms: started.elapsed().as_millis() as u64,
                    });
                }
                Err(e) if e.is_transient() && attempts <= policy.max_retries => {
                    let delay = policy.backoff(attempts);
                    warn!("attempt {attempts} failed ({e}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
                Err(e) => return Err(e.with_attempts(attempts)),
            }
        }
    }
}
