//! Retrieval memory of successful repairs.
//!
//! Embeddings are L2-normalized on construction, so similarity is a plain
//! dot product. The store is an append-only JSONL file scanned linearly.

mod embed;
mod store;

pub use embed::{
    fnv1a64, tokenize, Embedder, HashedEmbedder, RemoteEmbedder, RemoteEmbedderConfig,
    FALLBACK_DIMENSION,
};
pub use store::{content_id, LoadedStore, RepairRecord, ScoredRecord, SharedStore, VectorStore};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::EmbeddingScalar;

/// Default number of examples injected into a prompt.
pub const DEFAULT_RETRIEVAL_K: usize = 3;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("text has no tokens; refusing to store a zero vector")]
    ZeroVector,
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding is not unit length")]
    NotNormalized,
    #[error("record label is not all-clean")]
    NotClean,
    #[error("record id {0} already stored with different content")]
    DuplicateId(String),
    #[error("corrupt store {path} at line {line}: {reason}")]
    CorruptStore { path: String, line: usize, reason: String },
    #[error("store persistence failed: {0}")]
    PersistenceFailure(#[from] std::io::Error),
}

/// Unit-length embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
}

impl<T: EmbeddingScalar> EmbeddingVector<T> {
    /// Normalizes `values` to unit length. Zero and non-finite vectors are
    /// rejected.
    pub fn normalize(values: Vec<T>) -> Result<Self, RetrievalError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NotNormalized);
        }
        let norm = values.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if norm == T::zero() {
            return Err(RetrievalError::ZeroVector);
        }
        Ok(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Wraps values that are already unit length, checking the tolerance.
    pub fn from_normalized(values: Vec<T>) -> Result<Self, RetrievalError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NotNormalized);
        }
        let norm = values.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if (norm - T::one()).abs() > T::norm_tolerance() {
            return Err(RetrievalError::NotNormalized);
        }
        Ok(Self { values })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

impl<T: EmbeddingScalar> Serialize for EmbeddingVector<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.values.serialize(serializer)
    }
}

impl<'de, T: EmbeddingScalar> Deserialize<'de> for EmbeddingVector<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<T>::deserialize(deserializer)?;
        Self::from_normalized(values).map_err(serde::de::Error::custom)
    }
}

/// Cosine similarity of two unit vectors.
pub fn cosine<T: EmbeddingScalar>(
    a: &EmbeddingVector<T>,
    b: &EmbeddingVector<T>,
) -> Result<T, RetrievalError> {
    if a.dimension() != b.dimension() {
        return Err(RetrievalError::DimensionMismatch {
            expected: a.dimension(),
            found: b.dimension(),
        });
    }
    let dot = a.values.iter().zip(&b.values).map(|(x, y)| *x * *y).sum::<T>();
    Ok(dot.max(-T::one()).min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(dim: usize, i: usize) -> EmbeddingVector<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        EmbeddingVector::normalize(v).unwrap()
    }

    #[test]
    fn normalize_rejects_zero() {
        assert!(matches!(
            EmbeddingVector::<f64>::normalize(vec![0.0; 4]),
            Err(RetrievalError::ZeroVector)
        ));
    }

    #[test]
    fn normalized_has_unit_norm() {
        let v = EmbeddingVector::normalize(vec![3.0f64, 4.0]).unwrap();
        assert_eq!(v.values(), &[0.6, 0.8]);
    }

    #[test]
    fn self_similarity_and_orthogonality() {
        let v = EmbeddingVector::normalize(vec![1.0f64, 2.0, -3.0]).unwrap();
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() <= 1e-9);
        assert_eq!(cosine(&basis(5, 1), &basis(5, 3)).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            cosine(&basis(3, 0), &basis(4, 0)),
            Err(RetrievalError::DimensionMismatch { expected: 3, found: 4 })
        ));
    }

    #[test]
    fn deserialize_checks_norm() {
        let ok: EmbeddingVector<f64> = serde_json::from_str("[0.6,0.8]").unwrap();
        assert_eq!(ok.dimension(), 2);
        assert!(serde_json::from_str::<EmbeddingVector<f64>>("[1.0,1.0]").is_err());
    }
}
