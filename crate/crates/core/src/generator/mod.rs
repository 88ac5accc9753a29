//! Code-generation backends and completion-to-source extraction.

mod extract;
mod remote;
mod replay;

pub use extract::extract_code;
pub use remote::{RemoteGenerator, RemoteGeneratorConfig, RetryPolicy};
pub use replay::{ReplayGenerator, ReplayScript};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Provenance;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("generator backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("generator backend rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("replay script has no entry for {task_id}/{attempt_index}")]
    ScriptMiss { task_id: String, attempt_index: u32 },
    #[error("invalid replay script: {0}")]
    InvalidScript(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Decoding parameters; no defaults are implied by any particular model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingParams {
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            max_tokens: 1024,
            temperature: 0.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorRequest {
    pub prompt_text: String,
    pub model_id: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
    /// Routing metadata for keyed backends such as replay.
    pub task_id: String,
    pub attempt_index: u32,
}

impl GeneratorRequest {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.prompt_text.is_empty() {
            return Err(GeneratorError::InvalidRequest("prompt_text is empty".into()));
        }
        if self.max_tokens == 0 {
            return Err(GeneratorError::InvalidRequest("max_tokens must be > 0".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GeneratorError::InvalidRequest("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

pub trait Generator: Send + Sync {
    fn generate(&self, request: &GeneratorRequest) -> Result<String, GeneratorError>;

    fn provenance(&self) -> Provenance;
}
