//! Single abstraction over all external model calls.
//!
//! Every capability the pipeline needs — embedding, text generation
//! (synthetic queries, polishing, answering, semantic-graph emission) and
//! judging — goes through [`InferenceClient`], which wraps a [`Backend`]
//! with retries and an optional content-addressed response cache.
//! [`mock::MockBackend`] provides a deterministic offline implementation of
//! every capability; [`http::LiveBackend`] speaks the OpenAI-compatible
//! embeddings and chat-completions HTTP contract.

pub mod cache;
pub mod http;
pub mod mock;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts;

pub use cache::ResponseCache;
pub use http::LiveBackend;
pub use mock::{mock_embed, MockBackend};

/// Fixed decoding budget for answer generation.
pub const MAX_TOKENS_ANSWER: u32 = 256;
/// Fixed decoding budget per polishing call.
pub const MAX_TOKENS_POLISH: u32 = 128;
/// Fixed decoding budget per synthetic query.
pub const MAX_TOKENS_PER_QUERY: u32 = 64;
/// Fixed decoding budget for judging calls.
pub const MAX_TOKENS_JUDGE: u32 = 256;
/// Fixed decoding budget for PENMAN emission.
pub const MAX_TOKENS_PENMAN: u32 = 256;

/// Connection details for one OpenAI-compatible endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceEndpoint {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key; the key itself
    /// is never stored or logged.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_timeout() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    3
}

impl InferenceEndpoint {
    pub fn validate(&self) -> Result<(), ClientError> {
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(ClientError::InvalidEndpoint(format!(
                "base_url {:?} is not an http(s) URL",
                self.base_url
            )));
        }
        let rest = self
            .base_url
            .trim_start_matches("https://")
            .trim_start_matches("http://");
        if rest.is_empty() || rest.starts_with('/') {
            return Err(ClientError::InvalidEndpoint(format!(
                "base_url {:?} has no host",
                self.base_url
            )));
        }
        if !self.timeout_s.is_finite() || self.timeout_s <= 0.0 {
            return Err(ClientError::InvalidEndpoint(format!(
                "timeout_s must be positive, got {}",
                self.timeout_s
            )));
        }
        Ok(())
    }
}

/// A dense embedding. Values are finite and, after [`try_normalized`]
/// (`EmbeddingVector::try_normalized`), have unit L2 norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// Scale to unit L2 norm; `None` for the zero vector (no direction).
    pub fn try_normalized(&self) -> Option<Self> {
        let norm = self.l2_norm();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        Some(Self {
            values: self
                .values
                .iter()
                .map(|&v| ((v as f64) / norm) as f32)
                .collect(),
        })
    }
}

/// Cosine similarity, accumulated in f64.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| (x as f64) * (y as f64))
        .sum();
    let na = a.l2_norm();
    let nb = b.l2_norm();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// One generation call. Reproducibility-sensitive calls use temperature 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub user_content: String,
    pub max_tokens: u32,
    pub temperature: f32,
}

impl GenerationRequest {
    pub fn deterministic(system_prompt: String, user_content: String, max_tokens: u32) -> Self {
        Self {
            system_prompt,
            user_content,
            max_tokens,
            temperature: 0.0,
        }
    }
}

/// Raw backend completion before client-level validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    /// True when the backend stopped because of the token limit.
    pub truncated: bool,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("endpoint unavailable after {attempts} attempt(s): {reason}")]
    EndpointUnavailable { attempts: u32, reason: String },
    #[error("backend returned embeddings of differing dimensions ({first} vs {other})")]
    DimensionMismatch { first: usize, other: usize },
    #[error("completion was truncated by the max_tokens limit")]
    ResponseTruncated,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid endpoint configuration: {0}")]
    InvalidEndpoint(String),
    #[error("backend returned an invalid response: {0}")]
    InvalidResponse(String),
}

/// The raw transport under [`InferenceClient`]: either a live HTTP endpoint
/// or a deterministic mock.
pub trait Backend: Send + Sync {
    /// Stable identifier used in cache keys, e.g. `"mock:d64:s0"` or
    /// `"live:all-MiniLM-L6-v2"`.
    fn id(&self) -> String;
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ClientError>;
    fn complete(&self, req: &GenerationRequest) -> Result<Completion, ClientError>;
}

/// Exponential backoff starting at `base_delay`, doubling per attempt.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            base_delay: Duration::ZERO,
        }
    }

    pub fn from_endpoint(e: &InferenceEndpoint) -> Self {
        Self {
            max_retries: e.max_retries,
            base_delay: Duration::from_secs(1),
        }
    }
}

/// Client used by the whole pipeline for one capability.
///
/// Clients are reentrant and shareable across threads; they hold no mutable
/// state beyond the optional on-disk cache, which is content-addressed and
/// therefore safe under concurrent writers.
pub struct InferenceClient {
    backend: Arc<dyn Backend>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
}

impl InferenceClient {
    pub fn new(
        backend: Arc<dyn Backend>,
        cache: Option<ResponseCache>,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            backend,
            cache,
            retry,
        }
    }

    /// Deterministic offline client: mock backend, no cache, no retries.
    pub fn offline_mock(seed: u64, dim: usize) -> Self {
        Self::new(
            Arc::new(MockBackend::new(seed, dim)),
            None,
            RetryPolicy::none(),
        )
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    /// Embed each text, preserving order. All vectors come back with the same
    /// dimension and unit L2 norm.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ClientError> {
        if texts.is_empty() {
            return Err(ClientError::EmptyInput("embed: no texts"));
        }
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(ClientError::EmptyInput("embed: blank text"));
        }
        let key = self.cache.as_ref().map(|c| {
            c.key(&[
                "embed",
                &self.backend.id(),
                &serde_json::to_string(texts).expect("serializable"),
            ])
        });
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(vectors) = cache.get::<Vec<EmbeddingVector>>(key) {
                return self.validate_embeddings(texts.len(), vectors);
            }
        }
        let vectors = self.with_retry(|| self.backend.embed(texts))?;
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            cache.put(key, &vectors);
        }
        self.validate_embeddings(texts.len(), vectors)
    }

    fn validate_embeddings(
        &self,
        expected: usize,
        vectors: Vec<EmbeddingVector>,
    ) -> Result<Vec<EmbeddingVector>, ClientError> {
        if vectors.len() != expected {
            return Err(ClientError::InvalidResponse(format!(
                "expected {expected} embeddings, got {}",
                vectors.len()
            )));
        }
        let first = vectors
            .first()
            .map(|v| v.dim())
            .ok_or(ClientError::EmptyInput("embed: no texts"))?;
        let mut out = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.dim() != first {
                return Err(ClientError::DimensionMismatch {
                    first,
                    other: v.dim(),
                });
            }
            if v.values.iter().any(|x| !x.is_finite()) {
                return Err(ClientError::InvalidResponse(
                    "embedding contains a non-finite value".into(),
                ));
            }
            let normalized = v.try_normalized().ok_or_else(|| {
                ClientError::InvalidResponse("embedding is the zero vector".into())
            })?;
            out.push(normalized);
        }
        Ok(out)
    }

    /// Run one generation request and return the trimmed completion text.
    /// Truncation by the token limit is reported as [`ClientError::ResponseTruncated`].
    pub fn generate(&self, req: &GenerationRequest) -> Result<String, ClientError> {
        let completion = self.complete_raw(req)?;
        if completion.truncated {
            return Err(ClientError::ResponseTruncated);
        }
        Ok(completion.text.trim().to_string())
    }

    /// Like [`generate`](Self::generate) but keeps truncated output, for
    /// callers that can use a partial completion.
    pub fn complete_raw(&self, req: &GenerationRequest) -> Result<Completion, ClientError> {
        if req.system_prompt.trim().is_empty() {
            return Err(ClientError::EmptyInput("generate: blank system prompt"));
        }
        if req.user_content.trim().is_empty() {
            return Err(ClientError::EmptyInput("generate: blank user content"));
        }
        let key = self.cache.as_ref().map(|c| {
            c.key(&[
                "complete",
                &self.backend.id(),
                &serde_json::to_string(req).expect("serializable"),
            ])
        });
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(completion) = cache.get::<Completion>(key) {
                return Ok(completion);
            }
        }
        let completion = self.with_retry(|| self.backend.complete(req))?;
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            cache.put(key, &completion);
        }
        Ok(completion)
    }

    /// Generate up to `n` distinct synthetic queries for one sentence.
    /// Blank generations are filtered; if everything is blank the sentence
    /// itself is returned as a single fallback query.
    pub fn doc2query(&self, sentence: &str, n: usize) -> Result<Vec<String>, ClientError> {
        if sentence.trim().is_empty() {
            return Err(ClientError::EmptyInput("doc2query: blank sentence"));
        }
        if n == 0 {
            return Err(ClientError::EmptyInput("doc2query: n must be >= 1"));
        }
        let req = GenerationRequest::deterministic(
            doc2query_system(n),
            sentence.to_string(),
            MAX_TOKENS_PER_QUERY * n as u32,
        );
        // A truncated query list is still usable; blank lines are dropped.
        let completion = self.complete_raw(&req)?;
        let mut seen = std::collections::BTreeSet::new();
        let mut queries = Vec::new();
        for line in completion.text.lines() {
            let q = strip_list_prefix(line);
            if q.is_empty() {
                continue;
            }
            if seen.insert(q.to_string()) {
                queries.push(q.to_string());
            }
            if queries.len() == n {
                break;
            }
        }
        if queries.is_empty() {
            queries.push(sentence.to_string());
        }
        Ok(queries)
    }

    fn with_retry<T>(&self, call: impl Fn() -> Result<T, ClientError>) -> Result<T, ClientError> {
        let attempts = self.retry.max_retries + 1;
        let mut last_reason = String::new();
        for attempt in 0..attempts {
            match call() {
                Ok(value) => return Ok(value),
                Err(ClientError::EndpointUnavailable { reason, .. }) => {
                    last_reason = reason;
                    if attempt + 1 < attempts && !self.retry.base_delay.is_zero() {
                        std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt));
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Err(ClientError::EndpointUnavailable {
            attempts,
            reason: last_reason,
        })
    }
}

/// Doc2query system prompt carrying the requested query count, so the
/// backend (live or mock) knows how many lines to produce.
pub fn doc2query_system(n: usize) -> String {
    format!(
        "{}\nWrite exactly {n} questions.",
        prompts::DOC2QUERY_SYSTEM
    )
}

/// Strip `- ` bullets and `1.` / `1)` numbering that chat models like to add,
/// without touching queries that genuinely start with digits.
fn strip_list_prefix(line: &str) -> &str {
    let trimmed = line.trim();
    if let Some(rest) = trimmed.strip_prefix("- ") {
        return rest.trim();
    }
    let digits_end = trimmed
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(trimmed.len());
    if digits_end > 0 {
        let rest = &trimmed[digits_end..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim();
        }
    }
    trimmed
}
