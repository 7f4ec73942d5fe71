//! Text generation and embedding providers.
//!
//! Two implementations sit behind [`Generator`] and [`Embedder`]: an HTTP
//! client for chat-completions/embeddings endpoints ([`remote`]) and a
//! seeded, fully offline mock ([`mock`]).

pub mod limit;
pub mod mock;
pub mod remote;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use mock::{LookupEmbedder, MockEmbedder, MockGenerator};
pub use remote::{ChatCompletionsClient, EmbeddingsClient, RemoteConfig, RetryPolicy};

/// Default in-flight request bound per backend handle.
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system: Option<String>,
    pub prompt: String,
    pub n: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Only honoured by the mock (and by remote servers that accept `seed`).
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.n < 1 {
            return Err(BackendError::InvalidRequest("n must be at least 1".into()));
        }
        if self.max_tokens < 1 {
            return Err(BackendError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest("temperature must be a nonnegative number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResponse {
    /// Exactly `n` completions; duplicates are kept.
    pub completions: Vec<String>,
    pub model_id: String,
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingResponse {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend unreachable after {attempts} attempts: {last_error}")]
    BackendUnreachable { attempts: u32, last_error: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request rejected with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("text {index} has no tokens")]
    EmptyTokenization { index: usize },
    #[error("embedding dimension {got} differs from {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no input texts")]
    EmptyInput,
    #[error("embedding for text {index} has zero norm")]
    DegenerateVector { index: usize },
}

/// Produces `n` completions for a prompt.
pub trait Generator: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError>;

    fn model_id(&self) -> &str;

    fn max_in_flight(&self) -> usize {
        DEFAULT_MAX_IN_FLIGHT
    }
}

/// Produces unit-norm token and sentence vectors.
pub trait Embedder: Send + Sync {
    /// One [`EmbeddingResponse`] per text, with one vector per token of [`tokenize`].
    fn embed_tokens(&self, texts: &[&str]) -> Result<Vec<EmbeddingResponse>, BackendError>;

    /// One vector per whole text.
    fn embed_sentence(&self, texts: &[&str]) -> Result<EmbeddingResponse, BackendError>;

    fn model_id(&self) -> &str;
}

impl<T: Generator + ?Sized> Generator for &T {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        (**self).generate(request)
    }
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

impl<T: Generator + ?Sized> Generator for std::sync::Arc<T> {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        (**self).generate(request)
    }
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Splits on Unicode whitespace, then detaches every punctuation character
/// (anything neither alphanumeric nor whitespace) into its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for c in word.chars() {
            if is_punctuation(c) {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

/// Scales `v` to unit length; `None` for a zero vector.
pub fn l2_normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Checks that every vector has the same length and returns it.
pub(crate) fn common_dim(vectors: &[Vec<f64>]) -> Result<usize, BackendError> {
    let dim = vectors.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(BackendError::MalformedResponse("empty embedding vector".into()));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(BackendError::DimensionMismatch { expected: dim, got: v.len() });
    }
    Ok(dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_detaches_punctuation() {
        assert_eq!(tokenize("Returns the id."), vec!["Returns", "the", "id", "."]);
        assert_eq!(tokenize("foo(bar, baz)\tqux"), vec!["foo", "(", "bar", ",", "baz", ")", "qux"]);
        assert_eq!(tokenize("a\u{00a0}b"), vec!["a", "b"]);
        assert!(tokenize("  \n ").is_empty());
        assert_eq!(tokenize("Größe_x"), vec!["Größe", "_", "x"]);
    }

    #[test]
    fn request_validation() {
        let mut r =
            GenerationRequest { system: None, prompt: "p".into(), n: 4, temperature: 0.8, max_tokens: 128, seed: None };
        assert!(r.validate().is_ok());
        r.n = 0;
        assert!(r.validate().is_err());
        r.n = 1;
        r.max_tokens = 0;
        assert!(r.validate().is_err());
        r.max_tokens = 1;
        r.temperature = -0.1;
        assert!(r.validate().is_err());
    }

    #[test]
    fn dimension_checks() {
        assert_eq!(common_dim(&[vec![1.0, 0.0], vec![0.0, 1.0]]), Ok(2));
        assert_eq!(
            common_dim(&[vec![1.0, 0.0], vec![1.0]]),
            Err(BackendError::DimensionMismatch { expected: 2, got: 1 })
        );
    }
}
