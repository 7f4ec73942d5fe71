//! Offline backends whose outputs are pure functions of `(seed, input)`.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{
    common_dim, l2_normalize, tokenize, BackendError, Embedder, EmbeddingResponse, GenerationRequest,
    GenerationResponse, Generator,
};

/// Mock embedding width.
pub const MOCK_DIM: usize = 64;

fn hash64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

type Responder = dyn Fn(&GenerationRequest, usize) -> String + Send + Sync;

#[derive(Clone)]
enum Mode {
    Auto,
    Fixed(String),
    Custom(Arc<Responder>),
}

/// Deterministic text generator.
///
/// In the default mode a prompt that asks for a `Best: <number>` verdict gets
/// one, with the option picked by hashing the prompt; any other prompt gets a
/// short summary sentence built from identifiers in the prompt.
#[derive(Clone)]
pub struct MockGenerator {
    seed: u64,
    model_id: String,
    mode: Mode,
}

impl std::fmt::Debug for MockGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockGenerator").field("seed", &self.seed).field("model_id", &self.model_id).finish()
    }
}

impl MockGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed, model_id: "mock-generator".into(), mode: Mode::Auto }
    }

    /// Always answers with `text`.
    pub fn fixed(text: impl Into<String>) -> Self {
        Self { seed: 0, model_id: "mock-fixed".into(), mode: Mode::Fixed(text.into()) }
    }

    /// Answers completion `i` of each request with `f(request, i)`.
    pub fn with_responder<F>(f: F) -> Self
    where
        F: Fn(&GenerationRequest, usize) -> String + Send + Sync + 'static,
    {
        Self { seed: 0, model_id: "mock-custom".into(), mode: Mode::Custom(Arc::new(f)) }
    }

    pub fn with_model_id(mut self, id: impl Into<String>) -> Self {
        self.model_id = id.into();
        self
    }

    fn auto(&self, req: &GenerationRequest, index: usize) -> String {
        let seed = req.seed.unwrap_or(self.seed);
        let h = hash64(&[&seed.to_le_bytes(), req.prompt.as_bytes(), &(index as u64).to_le_bytes()]);
        if req.prompt.contains("Best: <number>") {
            let options = (1..).take_while(|k| req.prompt.contains(&format!("\nOption {k}:"))).count().max(1);
            let k = 1 + (h % options as u64) as usize;
            return format!("Best: {k}\nIt matches the requested quality most closely.");
        }
        summary_sentence(&req.prompt, h)
    }
}

fn summary_sentence(prompt: &str, h: u64) -> String {
    let mut words: Vec<&str> = prompt
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() > 2 && w.chars().next().is_some_and(char::is_alphabetic))
        .collect();
    words.dedup();
    let pick = |k: u64| -> &str {
        if words.is_empty() {
            "value"
        } else {
            words[((h >> (k * 8)) % words.len() as u64) as usize]
        }
    };
    let (a, b, c) = (pick(1), pick(2), pick(3));
    match h % 4 {
        0 => format!("Returns the {a} for the given {b}."),
        1 => format!("Updates {a} using {b} and {c}."),
        2 => format!("Checks whether {a} matches {b}. Throws an error if {c} is invalid."),
        _ => format!("Computes {a} from {b}, skipping inactive {c} entries."),
    }
}

impl Generator for MockGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        request.validate()?;
        let start = Instant::now();
        let completions = (0..request.n)
            .map(|i| match &self.mode {
                Mode::Auto => self.auto(request, i),
                Mode::Fixed(t) => t.clone(),
                Mode::Custom(f) => f(request, i),
            })
            .collect();
        Ok(GenerationResponse {
            completions,
            model_id: self.model_id.clone(),
            latency: start.elapsed().max(Duration::ZERO),
        })
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// Seeded random projection embedder: each token maps to a fixed Gaussian
/// vector of width [`MOCK_DIM`], normalized. A sentence vector is the
/// normalized sum of its token vectors.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    seed: u64,
    model_id: String,
}

impl MockEmbedder {
    pub fn new(seed: u64) -> Self {
        Self { seed, model_id: "mock-embedder".into() }
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(hash64(&[&self.seed.to_le_bytes(), token.as_bytes()]));
        let raw: Vec<f64> = (0..MOCK_DIM).map(|_| rng.sample(StandardNormal)).collect();
        l2_normalize(raw).expect("gaussian draw is nonzero")
    }
}

impl Embedder for MockEmbedder {
    fn embed_tokens(&self, texts: &[&str]) -> Result<Vec<EmbeddingResponse>, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::EmptyInput);
        }
        texts
            .iter()
            .enumerate()
            .map(|(index, text)| {
                let tokens = tokenize(text);
                if tokens.is_empty() {
                    return Err(BackendError::EmptyTokenization { index });
                }
                let vectors: Vec<_> = tokens.iter().map(|t| self.token_vector(t)).collect();
                Ok(EmbeddingResponse { vectors, dim: MOCK_DIM })
            })
            .collect()
    }

    fn embed_sentence(&self, texts: &[&str]) -> Result<EmbeddingResponse, BackendError> {
        let per_text = self.embed_tokens(texts)?;
        let vectors = per_text
            .into_iter()
            .enumerate()
            .map(|(index, r)| {
                let mut sum = vec![0.0; MOCK_DIM];
                for v in &r.vectors {
                    sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                }
                l2_normalize(sum).ok_or(BackendError::DegenerateVector { index })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EmbeddingResponse { vectors, dim: MOCK_DIM })
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// Embedder backed by a fixed token → vector table. Sentence vectors are the
/// normalized sum of token vectors, as with [`MockEmbedder`].
#[derive(Debug, Clone, Default)]
pub struct LookupEmbedder {
    table: HashMap<String, Vec<f64>>,
}

impl LookupEmbedder {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        Self {
            table: entries
                .into_iter()
                .map(|(k, v)| (k.into(), l2_normalize(v).expect("lookup vectors must be nonzero")))
                .collect(),
        }
    }

    fn lookup(&self, token: &str) -> Result<Vec<f64>, BackendError> {
        self.table
            .get(token)
            .cloned()
            .ok_or_else(|| BackendError::MalformedResponse(format!("no vector for token `{token}`")))
    }
}

impl Embedder for LookupEmbedder {
    fn embed_tokens(&self, texts: &[&str]) -> Result<Vec<EmbeddingResponse>, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::EmptyInput);
        }
        texts
            .iter()
            .enumerate()
            .map(|(index, text)| {
                let tokens = tokenize(text);
                if tokens.is_empty() {
                    return Err(BackendError::EmptyTokenization { index });
                }
                let vectors = tokens.iter().map(|t| self.lookup(t)).collect::<Result<Vec<_>, _>>()?;
                let dim = common_dim(&vectors)?;
                Ok(EmbeddingResponse { vectors, dim })
            })
            .collect()
    }

    fn embed_sentence(&self, texts: &[&str]) -> Result<EmbeddingResponse, BackendError> {
        let per_text = self.embed_tokens(texts)?;
        let dim = per_text[0].dim;
        let mut vectors = Vec::new();
        for (index, r) in per_text.into_iter().enumerate() {
            if r.dim != dim {
                return Err(BackendError::DimensionMismatch { expected: dim, got: r.dim });
            }
            let mut sum = vec![0.0; dim];
            for v in &r.vectors {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            }
            vectors.push(l2_normalize(sum).ok_or(BackendError::DegenerateVector { index })?);
        }
        Ok(EmbeddingResponse { vectors, dim })
    }

    fn model_id(&self) -> &str {
        "lookup"
    }
}
