//! HTTP clients for chat-completions and embeddings endpoints.
//!
//! Request bodies follow the widely implemented `/chat/completions` and
//! `/embeddings` JSON contracts, so hosted APIs and local inference servers
//! are interchangeable. The API key is read from the environment variable
//! named in [`RemoteConfig::api_key_env`] at request time and never logged.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::limit::ConcurrencyLimit;
use super::{
    common_dim, l2_normalize, tokenize, BackendError, Embedder, EmbeddingResponse, GenerationRequest,
    GenerationResponse, Generator, DEFAULT_MAX_IN_FLIGHT,
};

/// Exponential backoff: `base_delay * factor^(attempt-1)` between attempts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 5, base_delay: Duration::from_secs(1), factor: 2.0 }
    }
}

impl RetryPolicy {
    /// Delay slept after failed attempt number `attempt` (1-based).
    pub fn delay_after(&self, attempt: u32) -> Duration {
        self.base_delay.mul_f64(self.factor.powi(attempt.saturating_sub(1) as i32))
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// Base URL up to and including the API version, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

fn default_timeout() -> u64 {
    120
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: None,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            timeout_secs: default_timeout(),
            retry: RetryPolicy::default(),
        }
    }
}

enum Failure {
    Retry { rate_limited: bool, detail: String },
    Fatal(BackendError),
}

struct Transport {
    config: RemoteConfig,
    http: reqwest::blocking::Client,
    limit: ConcurrencyLimit,
}

impl Transport {
    fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::InvalidRequest(format!("http client: {e}")))?;
        let limit = ConcurrencyLimit::new(config.max_in_flight);
        Ok(Self { config, http, limit })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn attempt(&self, url: &str, body: &Value) -> Result<Value, Failure> {
        let mut req = self.http.post(url).json(body);
        if let Some(var) = &self.config.api_key_env {
            if let Ok(key) = std::env::var(var) {
                req = req.bearer_auth(key);
            }
        }
        let resp = req.send().map_err(|e| Failure::Retry { rate_limited: false, detail: e.to_string() })?;
        let status = resp.status();
        if status.is_success() {
            return resp.json::<Value>().map_err(|e| Failure::Fatal(BackendError::MalformedResponse(e.to_string())));
        }
        let code = status.as_u16();
        let text = resp.text().unwrap_or_default();
        if code == 429 {
            Err(Failure::Retry { rate_limited: true, detail: format!("HTTP 429: {text}") })
        } else if status.is_server_error() {
            Err(Failure::Retry { rate_limited: false, detail: format!("HTTP {code}: {text}") })
        } else {
            Err(Failure::Fatal(BackendError::Rejected { status: code, body: text }))
        }
    }

    /// POSTs `body`, retrying transport errors, 5xx and 429 per the policy.
    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let _permit = self.limit.acquire();
        let url = self.url(path);
        let policy = self.config.retry;
        let attempts = policy.max_attempts.max(1);
        let mut last = (false, String::new());
        for attempt in 1..=attempts {
            match self.attempt(&url, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry { rate_limited, detail }) => {
                    log::warn!("{url}: attempt {attempt}/{attempts} failed: {detail}");
                    last = (rate_limited, detail);
                    if attempt < attempts {
                        std::thread::sleep(policy.delay_after(attempt));
                    }
                }
            }
        }
        Err(if last.0 {
            BackendError::RateLimited { attempts }
        } else {
            BackendError::BackendUnreachable { attempts, last_error: last.1 }
        })
    }
}

/// Generator speaking the chat-completions contract.
pub struct ChatCompletionsClient {
    transport: Transport,
}

impl ChatCompletionsClient {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        Ok(Self { transport: Transport::new(config)? })
    }

    fn body(&self, req: &GenerationRequest, n: usize) -> Value {
        let mut messages = Vec::new();
        if let Some(system) = &req.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": req.prompt}));
        let mut body = json!({
            "model": self.transport.config.model,
            "messages": messages,
            "n": n,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

fn parse_choices(v: &Value) -> Result<Vec<String>, BackendError> {
    let choices = v
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::MalformedResponse("missing `choices` array".into()))?;
    choices
        .iter()
        .map(|c| {
            c.pointer("/message/content")
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| BackendError::MalformedResponse("choice without `message.content`".into()))
        })
        .collect()
}

impl Generator for ChatCompletionsClient {
    /// Servers that ignore `n` return fewer choices; the remainder is
    /// requested in follow-up calls until `n` completions are collected.
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        request.validate()?;
        let start = Instant::now();
        let mut completions = Vec::with_capacity(request.n);
        let mut model_id = self.transport.config.model.clone();
        while completions.len() < request.n {
            let missing = request.n - completions.len();
            let v = self.transport.post("chat/completions", &self.body(request, missing))?;
            let got = parse_choices(&v)?;
            if got.is_empty() {
                return Err(BackendError::MalformedResponse("empty `choices` array".into()));
            }
            if let Some(m) = v.get("model").and_then(Value::as_str) {
                model_id = m.to_string();
            }
            completions.extend(got.into_iter().take(missing));
        }
        Ok(GenerationResponse { completions, model_id, latency: start.elapsed() })
    }

    fn model_id(&self) -> &str {
        &self.transport.config.model
    }

    fn max_in_flight(&self) -> usize {
        self.transport.limit.max()
    }
}

/// Embedder speaking the `/embeddings` contract. Token vectors are obtained
/// by sending each token of [`tokenize`] as its own input.
pub struct EmbeddingsClient {
    transport: Transport,
}

impl EmbeddingsClient {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        Ok(Self { transport: Transport::new(config)? })
    }

    fn embed_raw(&self, inputs: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let body = json!({"model": self.transport.config.model, "input": inputs});
        let v = self.transport.post("embeddings", &body)?;
        let data = v
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::MalformedResponse("missing `data` array".into()))?;
        if data.len() != inputs.len() {
            return Err(BackendError::MalformedResponse(format!(
                "{} embeddings for {} inputs",
                data.len(),
                inputs.len()
            )));
        }
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let emb: Vec<f64> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| BackendError::MalformedResponse("item without `embedding`".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| BackendError::MalformedResponse("non-numeric embedding".into())))
                .collect::<Result<_, _>>()?;
            rows.push((index, emb));
        }
        rows.sort_by_key(|(i, _)| *i);
        let vectors: Vec<Vec<f64>> = rows.into_iter().map(|(_, v)| v).collect();
        common_dim(&vectors)?;
        vectors
            .into_iter()
            .enumerate()
            .map(|(index, v)| l2_normalize(v).ok_or(BackendError::DegenerateVector { index }))
            .collect()
    }
}

impl Embedder for EmbeddingsClient {
    fn embed_tokens(&self, texts: &[&str]) -> Result<Vec<EmbeddingResponse>, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::EmptyInput);
        }
        let mut flat = Vec::new();
        let mut lens = Vec::new();
        for (index, t) in texts.iter().enumerate() {
            let toks = tokenize(t);
            if toks.is_empty() {
                return Err(BackendError::EmptyTokenization { index });
            }
            lens.push(toks.len());
            flat.extend(toks);
        }
        let mut vectors = self.embed_raw(&flat)?.into_iter();
        let dim = common_dim(&[vectors.as_slice()[0].clone()])?;
        Ok(lens
            .into_iter()
            .map(|len| EmbeddingResponse { vectors: vectors.by_ref().take(len).collect(), dim })
            .collect())
    }

    fn embed_sentence(&self, texts: &[&str]) -> Result<EmbeddingResponse, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::EmptyInput);
        }
        if let Some(index) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(BackendError::EmptyTokenization { index });
        }
        let inputs: Vec<String> = texts.iter().map(|t| t.to_string()).collect();
        let vectors = self.embed_raw(&inputs)?;
        let dim = common_dim(&vectors)?;
        Ok(EmbeddingResponse { vectors, dim })
    }

    fn model_id(&self) -> &str {
        &self.transport.config.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_policy_matches_contract() {
        let p = RetryPolicy::default();
        assert_eq!(p.max_attempts, 5);
        let delays: Vec<u64> = (1..5).map(|a| p.delay_after(a).as_secs()).collect();
        assert_eq!(delays, vec![1, 2, 4, 8]);
    }

    #[test]
    fn parse_choices_requires_content() {
        let ok = json!({"choices": [{"message": {"content": "a"}}, {"message": {"content": "b"}}]});
        assert_eq!(parse_choices(&ok).unwrap(), vec!["a", "b"]);
        assert!(parse_choices(&json!({"choices": [{"text": "a"}]})).is_err());
        assert!(parse_choices(&json!({})).is_err());
    }
}
