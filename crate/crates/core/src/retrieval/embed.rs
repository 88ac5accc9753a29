use std::marker::PhantomData;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingVector, RetrievalError};
use crate::scalar::EmbeddingScalar;

/// Dimension of the hashed fallback embedder.
pub const FALLBACK_DIMENSION: usize = 384;

/// Source of embedding vectors.
pub trait Embedder<T: EmbeddingScalar>: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>, RetrievalError>;
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.chars().flat_map(char::to_lowercase).collect())
}

/// 64-bit FNV-1a over the token's UTF-8 bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |hash, b| (hash ^ u64::from(*b)).wrapping_mul(PRIME))
}

/// Deterministic token-frequency embedder: every token is hashed into one
/// of `dimension` buckets, bucket counts are L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedEmbedder<T> {
    dimension: usize,
    _scalar: PhantomData<fn() -> T>,
}

impl<T> HashedEmbedder<T> {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self {
            dimension,
            _scalar: PhantomData,
        }
    }
}

impl<T> Default for HashedEmbedder<T> {
    fn default() -> Self {
        Self::new(FALLBACK_DIMENSION)
    }
}

impl<T: EmbeddingScalar> Embedder<T> for HashedEmbedder<T> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>, RetrievalError> {
        if text.trim().is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let mut counts = vec![T::zero(); self.dimension];
        for token in tokenize(text) {
            let bucket = (fnv1a64(token.as_bytes()) % self.dimension as u64) as usize;
            counts[bucket] = counts[bucket] + T::one();
        }
        EmbeddingVector::normalize(counts)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RemoteEmbedderConfig {
    pub endpoint: String,
    pub model: String,
    pub dimension: usize,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    30
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: [&'a str; 1],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// Client for an embeddings endpoint speaking
/// `{model, input:[text]} -> {data:[{embedding:[...]}]}`.
pub struct RemoteEmbedder<T> {
    config: RemoteEmbedderConfig,
    client: reqwest::blocking::Client,
    _scalar: PhantomData<fn() -> T>,
}

impl<T> RemoteEmbedder<T> {
    pub fn new(config: RemoteEmbedderConfig) -> Result<Self, RetrievalError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| RetrievalError::ProviderUnavailable(e.to_string()))?;
        Ok(Self {
            config,
            client,
            _scalar: PhantomData,
        })
    }
}

impl<T: EmbeddingScalar> Embedder<T> for RemoteEmbedder<T> {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>, RetrievalError> {
        if text.trim().is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let mut request = self.client.post(&self.config.endpoint).json(&EmbeddingRequest {
            model: &self.config.model,
            input: [text],
        });
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let unavailable = |e: reqwest::Error| RetrievalError::ProviderUnavailable(e.to_string());
        let response = request.send().map_err(unavailable)?.error_for_status().map_err(unavailable)?;
        let body: EmbeddingResponse = response.json().map_err(unavailable)?;
        let values = body
            .data
            .into_iter()
            .next()
            .ok_or_else(|| RetrievalError::ProviderUnavailable("response carried no embedding".into()))?
            .embedding;
        if values.len() != self.config.dimension {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.config.dimension,
                found: values.len(),
            });
        }
        let values = values
            .into_iter()
            .map(|v| T::from_f64(v).unwrap_or_else(T::nan))
            .collect();
        EmbeddingVector::normalize(values)
    }
}
