//! Best-of-n candidate generation: `n` comments per unit from one generator.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::backends::{GenerationRequest, Generator};
use crate::checkpoint::{CheckpointError, Stage, StageOutcome};
use crate::clock::{rfc3339_serde, Clock};
use crate::corpus::{CodeUnit, UnitId};
use crate::fsutil::{self, ReadJsonlError};

/// Candidates per unit used throughout a standard run.
pub const DEFAULT_N: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { temperature: 0.8, max_tokens: 128, seed: None }
    }
}

/// Versioned prompt asset; `{code}` in `user` is replaced by the method text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    pub system: String,
    pub user: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            version: "candidate-v1".into(),
            system: "You are a code documentation assistant.".into(),
            user: "Write a concise summary comment of one to three sentences for the following Java method. \
                   Reply with the comment text only.\n\n```java\n{code}\n```"
                .into(),
        }
    }
}

impl PromptTemplate {
    pub fn render(&self, unit: &CodeUnit) -> String {
        self.user.replace("{code}", &unit.code)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub unit_id: UnitId,
    /// Index order is the candidate's permanent identity.
    pub candidates: Vec<String>,
    pub model_id: String,
    pub generation_config: GenerationConfig,
    #[serde(with = "rfc3339_serde")]
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum CandidateError {
    #[error("n must be at least 2 for best-of-n selection, got {0}")]
    InvalidN(usize),
    #[error("no units to generate candidates for")]
    EmptyInput,
    #[error("prompt template must contain `{{code}}`")]
    TemplateMissingCode,
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub struct CandidateJob {
    pub n: usize,
    pub config: GenerationConfig,
    pub template: PromptTemplate,
    pub clock: Clock,
    pub concurrency: usize,
    pub output: PathBuf,
    pub skip_list: PathBuf,
}

impl CandidateJob {
    fn request(&self, unit: &CodeUnit) -> GenerationRequest {
        GenerationRequest {
            system: Some(self.template.system.clone()),
            prompt: self.template.render(unit),
            n: self.n,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            seed: self.config.seed,
        }
    }
}

/// Generates one [`CandidateSet`] per unit, resuming from `job.output`.
/// Units whose generation fails after the backend's retries are listed in
/// `job.skip_list` rather than dropped silently.
pub fn generate_candidates(
    units: &[CodeUnit],
    backend: &dyn Generator,
    job: &CandidateJob,
) -> Result<StageOutcome<CandidateSet>, CandidateError> {
    if job.n < 2 {
        return Err(CandidateError::InvalidN(job.n));
    }
    if units.is_empty() {
        return Err(CandidateError::EmptyInput);
    }
    if !job.template.user.contains("{code}") {
        return Err(CandidateError::TemplateMissingCode);
    }
    let concurrency = job.concurrency.min(backend.max_in_flight()).max(1);
    let stage = Stage { output: &job.output, skip_list: &job.skip_list, concurrency };
    let outcome = stage.run(
        units,
        |u| &u.id,
        |s: &CandidateSet| &s.unit_id,
        |unit| {
            let resp = backend.generate(&job.request(unit)).map_err(|e| e.to_string())?;
            if resp.completions.len() != job.n {
                return Err(format!("backend returned {} completions, expected {}", resp.completions.len(), job.n));
            }
            Ok(CandidateSet {
                unit_id: unit.id.clone(),
                candidates: resp.completions,
                model_id: resp.model_id,
                generation_config: job.config.clone(),
                created_at: job.clock.now(),
            })
        },
    )?;
    Ok(outcome)
}

pub fn load_candidates(path: &Path) -> Result<Vec<CandidateSet>, ReadJsonlError> {
    fsutil::read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendError, GenerationResponse, MockGenerator};
    use crate::corpus::synthetic::java_units;

    fn job(dir: &Path, n: usize) -> CandidateJob {
        CandidateJob {
            n,
            config: GenerationConfig { seed: Some(7), ..Default::default() },
            template: PromptTemplate::default(),
            clock: Clock::from_epoch_secs(0).unwrap(),
            concurrency: 3,
            output: dir.join("c.jsonl"),
            skip_list: dir.join("s.jsonl"),
        }
    }

    #[test]
    fn preconditions() {
        let dir = tempfile::tempdir().unwrap();
        let units = java_units(3, 1);
        let g = MockGenerator::new(0);
        assert!(matches!(generate_candidates(&units, &g, &job(dir.path(), 1)), Err(CandidateError::InvalidN(1))));
        assert!(matches!(generate_candidates(&[], &g, &job(dir.path(), 4)), Err(CandidateError::EmptyInput)));
    }

    #[test]
    fn sets_have_n_candidates_and_prompt_carries_code() {
        let dir = tempfile::tempdir().unwrap();
        let units = java_units(6, 2);
        let seen = std::sync::Mutex::new(Vec::new());
        let g = MockGenerator::with_responder(move |req, i| {
            seen.lock().unwrap().push(req.prompt.clone());
            format!("candidate {i}")
        });
        let out = generate_candidates(&units, &g, &job(dir.path(), 4)).unwrap();
        assert_eq!(out.records.len(), 6);
        for (set, unit) in out.records.iter().zip(&units) {
            assert_eq!(set.unit_id, unit.id);
            assert_eq!(set.candidates, vec!["candidate 0", "candidate 1", "candidate 2", "candidate 3"]);
        }
        let template = PromptTemplate::default();
        assert!(template.render(&units[0]).contains(&units[0].code));
    }

    struct Flaky;
    impl Generator for Flaky {
        fn generate(&self, r: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
            if r.prompt.contains("get") {
                Err(BackendError::BackendUnreachable { attempts: 5, last_error: "HTTP 500".into() })
            } else {
                MockGenerator::new(0).generate(r)
            }
        }
        fn model_id(&self) -> &str {
            "flaky"
        }
    }

    #[test]
    fn failures_go_to_skip_list() {
        let dir = tempfile::tempdir().unwrap();
        let units = java_units(20, 3);
        let j = job(dir.path(), 4);
        let out = generate_candidates(&units, &Flaky, &j).unwrap();
        assert!(!out.skipped.is_empty());
        assert_eq!(out.records.len() + out.skipped.len(), 20);
        let skips: Vec<crate::checkpoint::SkipRecord> = fsutil::read_jsonl(&j.skip_list).unwrap();
        assert_eq!(skips, out.skipped);
    }
}
