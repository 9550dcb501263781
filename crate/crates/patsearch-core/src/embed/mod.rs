//! Text-to-vector providers: a deterministic local hash embedder and a
//! remote embedding-API client behind one trait.

mod local;
mod remote;

pub use local::{local_hash_embed, LocalHashEmbedder};
pub use remote::RemoteEmbedder;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable holding the remote embedding API key.
pub const EMBEDDER_API_KEY_VAR: &str = "EMBEDDER_API_KEY";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("text is empty")]
    EmptyText,
    #[error("remote embedder unavailable after {attempts} attempts: {reason}")]
    RemoteUnavailable { attempts: u32, reason: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("batch chunk {start}..{end} failed: {source}")]
    BatchChunkFailed {
        start: usize,
        end: usize,
        #[source]
        source: Box<EmbedError>,
    },
    #[error("invalid embedder config: {0}")]
    InvalidConfig(String),
    #[error("invalid embedder response: {0}")]
    InvalidResponse(String),
}

/// A fixed-dimension dense vector for a document or query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

impl EmbeddingVector {
    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Remote,
    Local,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub provider: ProviderKind,
    pub model_name: String,
    pub dimension: usize,
    pub endpoint_url: Option<String>,
    pub batch_size: usize,
    pub timeout_ms: u64,
    pub normalize: bool,
    pub seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Local,
            model_name: "local-hash".to_string(),
            dimension: 1536,
            endpoint_url: None,
            batch_size: 16,
            timeout_ms: 10_000,
            normalize: true,
            seed: 42,
        }
    }
}

/// A text encoder producing fixed-dimension vectors. Implementations are
/// immutable after construction and safe to share across threads.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    /// Embeds many texts; output order matches input order and each element
    /// equals `embed_text` of the corresponding input.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts
            .iter()
            .enumerate()
            .map(|(i, text)| {
                self.embed_text(text).map_err(|e| match e {
                    EmbedError::EmptyText => EmbedError::EmptyText,
                    other => EmbedError::BatchChunkFailed {
                        start: i,
                        end: i + 1,
                        source: Box::new(other),
                    },
                })
            })
            .collect()
    }
}

/// Builds the provider selected by `config`.
pub fn build_embedder(config: &EmbedderConfig) -> Result<Box<dyn Embedder>, EmbedError> {
    match config.provider {
        ProviderKind::Local => Ok(Box::new(LocalHashEmbedder::new(
            config.dimension,
            config.seed,
        )?)),
        ProviderKind::Remote => Ok(Box::new(RemoteEmbedder::from_config(config)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_local_embedder_respects_dimension() {
        let config = EmbedderConfig {
            dimension: 32,
            ..EmbedderConfig::default()
        };
        let embedder = build_embedder(&config).unwrap();
        assert_eq!(embedder.dimension(), 32);
        assert_eq!(embedder.embed_text("hello").unwrap().values.len(), 32);
    }

    #[test]
    fn remote_without_endpoint_is_invalid() {
        let config = EmbedderConfig {
            provider: ProviderKind::Remote,
            ..EmbedderConfig::default()
        };
        assert!(matches!(
            build_embedder(&config),
            Err(EmbedError::InvalidConfig(_))
        ));
    }

    #[test]
    fn empty_text_is_rejected() {
        let embedder = LocalHashEmbedder::new(8, 1).unwrap();
        assert!(matches!(
            embedder.embed_text("   "),
            Err(EmbedError::EmptyText)
        ));
    }
}
