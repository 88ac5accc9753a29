use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Generator, GeneratorError, GeneratorRequest};
use crate::domain::Provenance;

/// Retries apply to transport failures, 5xx and 429 responses only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff_ms: 500,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = self.multiplier.max(1.0).powi(retry as i32);
        Duration::from_millis((self.initial_backoff_ms as f64 * factor) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteGeneratorConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    max_tokens: u32,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Failure {
    Transient(String),
    RateLimited,
    Fatal(String),
}

/// Blocking chat-completion client.
pub struct RemoteGenerator {
    config: RemoteGeneratorConfig,
    client: reqwest::blocking::Client,
}

impl RemoteGenerator {
    pub fn new(config: RemoteGeneratorConfig) -> Result<Self, GeneratorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GeneratorError::BackendUnavailable(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn attempt(&self, request: &GeneratorRequest) -> Result<String, Failure> {
        let body = ChatRequest {
            model: &request.model_id,
            messages: vec![ChatMessage {
                role: "user",
                content: &request.prompt_text,
            }],
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            seed: request.seed,
        };
        let mut http = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            http = http.bearer_auth(key);
        }
        let response = http.send().map_err(|e| Failure::Transient(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 {
            return Err(Failure::RateLimited);
        }
        if status.is_server_error() {
            return Err(Failure::Transient(format!("server returned {status}")));
        }
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(Failure::Fatal(format!("server returned {status}: {text}")));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| Failure::Fatal(format!("malformed completion response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Failure::Fatal("completion response has no choices".into()))
    }
}

impl Generator for RemoteGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<String, GeneratorError> {
        request.validate()?;
        let policy = &self.config.retry;
        let mut retry = 0;
        loop {
            let failure = match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(reason)) => return Err(GeneratorError::BackendUnavailable(reason)),
                Err(f) => f,
            };
            if retry >= policy.max_retries {
                return Err(match failure {
                    Failure::RateLimited => GeneratorError::RateLimited { attempts: retry + 1 },
                    Failure::Transient(reason) | Failure::Fatal(reason) => {
                        GeneratorError::BackendUnavailable(reason)
                    }
                });
            }
            let delay = policy.backoff(retry);
            log::debug!("generator request failed, retrying in {delay:?}");
            thread::sleep(delay);
            retry += 1;
        }
    }

    fn provenance(&self) -> Provenance {
        Provenance::Generated
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_is_exponential() {
        let policy = RetryPolicy::default();
        assert_eq!(policy.backoff(0), Duration::from_millis(500));
        assert_eq!(policy.backoff(1), Duration::from_millis(1000));
        assert_eq!(policy.backoff(2), Duration::from_millis(2000));
    }

    #[test]
    fn wire_shape() {
        let body = ChatRequest {
            model: "deepseek-coder-1.3b",
            messages: vec![ChatMessage {
                role: "user",
                content: "write a program",
            }],
            max_tokens: 256,
            temperature: 0.2,
            seed: None,
        };
        assert_eq!(
            serde_json::to_string(&body).unwrap(),
            r#"{"model":"deepseek-coder-1.3b","messages":[{"role":"user","content":"write a program"}],"max_tokens":256,"temperature":0.2}"#
        );
    }
}
