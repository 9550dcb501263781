//! Remote embedding-API client: HTTP POST `{model, input}` returning
//! `{data: [{embedding}]}`, bearer-authenticated from the environment.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedError, Embedder, EmbedderConfig, EmbeddingVector, EMBEDDER_API_KEY_VAR};

const MAX_ATTEMPTS: u32 = 3;
const BACKOFF_BASE_MS: u64 = 50;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f32>,
}

pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    dimension: usize,
    batch_size: usize,
    normalize: bool,
    api_key: String,
}

impl RemoteEmbedder {
    pub fn from_config(config: &EmbedderConfig) -> Result<Self, EmbedError> {
        let endpoint = config
            .endpoint_url
            .clone()
            .ok_or_else(|| EmbedError::InvalidConfig("remote provider requires endpoint_url".into()))?;
        let api_key = std::env::var(EMBEDDER_API_KEY_VAR).map_err(|_| {
            EmbedError::InvalidConfig(format!("{EMBEDDER_API_KEY_VAR} is not set"))
        })?;
        if config.batch_size == 0 {
            return Err(EmbedError::InvalidConfig("batch_size must be positive".into()));
        }
        if config.dimension == 0 {
            return Err(EmbedError::InvalidConfig("dimension must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| EmbedError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            client,
            endpoint,
            model: config.model_name.clone(),
            dimension: config.dimension,
            batch_size: config.batch_size,
            normalize: config.normalize,
            api_key,
        })
    }

    fn post_chunk(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let request = EmbedRequest {
            model: &self.model,
            input: texts,
        };
        let mut last_reason = String::new();
        for attempt in 1..=MAX_ATTEMPTS {
            if attempt > 1 {
                std::thread::sleep(Duration::from_millis(
                    BACKOFF_BASE_MS << (attempt - 2).min(8),
                ));
            }
            let sent = self
                .client
                .post(&self.endpoint)
                .bearer_auth(&self.api_key)
                .json(&request)
                .send();
            match sent {
                Ok(resp) if resp.status().is_success() => {
                    return self.parse_response(resp, texts.len());
                }
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_server_error() || status.as_u16() == 429 {
                        last_reason = format!("HTTP {status}");
                    } else {
                        return Err(EmbedError::RemoteUnavailable {
                            attempts: attempt,
                            reason: format!("HTTP {status}"),
                        });
                    }
                }
                Err(e) => last_reason = e.to_string(),
            }
        }
        Err(EmbedError::RemoteUnavailable {
            attempts: MAX_ATTEMPTS,
            reason: last_reason,
        })
    }

    fn parse_response(
        &self,
        resp: reqwest::blocking::Response,
        expected_count: usize,
    ) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let body: EmbedResponse = resp
            .json()
            .map_err(|e| EmbedError::InvalidResponse(e.to_string()))?;
        if body.data.len() != expected_count {
            return Err(EmbedError::InvalidResponse(format!(
                "expected {} embeddings, got {}",
                expected_count,
                body.data.len()
            )));
        }
        body.data
            .into_iter()
            .map(|datum| {
                if datum.embedding.len() != self.dimension {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.dimension,
                        got: datum.embedding.len(),
                    });
                }
                if datum.embedding.iter().any(|v| !v.is_finite()) {
                    return Err(EmbedError::InvalidResponse(
                        "embedding contains a non-finite component".into(),
                    ));
                }
                let values = if self.normalize {
                    normalize_l2(datum.embedding)?
                } else {
                    datum.embedding
                };
                Ok(EmbeddingVector {
                    values,
                    source_id: None,
                })
            })
            .collect()
    }
}

fn normalize_l2(values: Vec<f32>) -> Result<Vec<f32>, EmbedError> {
    let norm_sq: f64 = values.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
    if norm_sq == 0.0 {
        return Err(EmbedError::InvalidResponse("embedding is the zero vector".into()));
    }
    let norm = norm_sq.sqrt();
    Ok(values.iter().map(|&v| (f64::from(v) / norm) as f32).collect())
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut vectors = self.post_chunk(std::slice::from_ref(&text.to_string()))?;
        Ok(vectors.remove(0))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if let Some(empty) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(EmbedError::BatchChunkFailed {
                start: empty,
                end: empty + 1,
                source: Box::new(EmbedError::EmptyText),
            });
        }
        let mut out = Vec::with_capacity(texts.len());
        for (chunk_index, chunk) in texts.chunks(self.batch_size).enumerate() {
            let start = chunk_index * self.batch_size;
            let end = start + chunk.len();
            let vectors = self.post_chunk(chunk).map_err(|e| EmbedError::BatchChunkFailed {
                start,
                end,
                source: Box::new(e),
            })?;
            out.extend(vectors);
        }
        Ok(out)
    }
}
