//! Embedding similarity metrics, Mann-Whitney significance testing and
//! base-vs-tuned reports.

mod report;
mod stats;

pub use report::{
    build_report, evaluate_predictions, MetricReport, MetricRow, ModelScores, Prediction, ReportError, ALPHA,
    REPORT_NOTES,
};
pub use stats::{mann_whitney, MannWhitneyError, StatMethod, StatMode, StatTestResult, EXACT_LIMIT};

use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, Embedder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SimilarityScore {
    pub fn new(precision: f64, recall: f64) -> Self {
        let denom = precision + recall;
        let f1 = if denom > 0.0 { 2.0 * precision * recall / denom } else { 0.0 };
        Self { precision, recall, f1 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mean_best(from: &[Vec<f64>], to: &[Vec<f64>]) -> f64 {
    let total: f64 = from.iter().map(|u| to.iter().map(|v| dot(u, v)).fold(f64::NEG_INFINITY, f64::max)).sum();
    total / from.len() as f64
}

/// BERTScore-style greedy matching: precision is the mean over candidate
/// tokens of the best cosine to any reference token, recall the reverse.
/// No baseline rescaling is applied.
pub fn token_match_f1(
    candidate: &str,
    reference: &str,
    embedder: &dyn Embedder,
) -> Result<SimilarityScore, BackendError> {
    let emb = embedder.embed_tokens(&[candidate, reference])?;
    let [cand, refr] = emb.as_slice() else {
        return Err(BackendError::MalformedResponse(format!("expected 2 token embeddings, got {}", emb.len())));
    };
    for (index, e) in [cand, refr].into_iter().enumerate() {
        if e.vectors.is_empty() {
            return Err(BackendError::EmptyTokenization { index });
        }
    }
    if cand.dim != refr.dim {
        return Err(BackendError::DimensionMismatch { expected: cand.dim, got: refr.dim });
    }
    Ok(SimilarityScore::new(mean_best(&cand.vectors, &refr.vectors), mean_best(&refr.vectors, &cand.vectors)))
}

/// Cosine between whole-text sentence vectors.
pub fn sentence_similarity(candidate: &str, reference: &str, embedder: &dyn Embedder) -> Result<f64, BackendError> {
    if candidate.trim().is_empty() || reference.trim().is_empty() {
        return Err(BackendError::EmptyInput);
    }
    let emb = embedder.embed_sentence(&[candidate, reference])?;
    let [a, b] = emb.vectors.as_slice() else {
        return Err(BackendError::MalformedResponse(format!("expected 2 sentence vectors, got {}", emb.vectors.len())));
    };
    if a.len() != b.len() {
        return Err(BackendError::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(dot(a, b).clamp(-1.0, 1.0))
}
