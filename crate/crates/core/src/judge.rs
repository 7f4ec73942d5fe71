//! AI judging: one best-of-n prompt per (unit, axis) and a strict verdict parser.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::axes::{AxisKey, QualityAxis};
use crate::backends::{GenerationRequest, Generator};
use crate::candidates::CandidateSet;
use crate::checkpoint::{CheckpointError, Stage, StageOutcome};
use crate::clock::{rfc3339_serde, Clock};
use crate::corpus::{CodeUnit, UnitId};
use crate::fsutil::{self, ReadJsonlError};

/// Answer format the judge is told to use; the parser accepts nothing else.
pub const VERDICT_FORMAT: &str = "Best: <number>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeTemplate {
    pub version: String,
    pub system: String,
    /// Placeholders: `{n}`, `{axis_name}`, `{axis_description}`, `{code}`, `{options}`.
    pub body: String,
    /// Appended on the single re-ask after an unparseable answer. Placeholder: `{n}`.
    pub reask: String,
}

impl Default for JudgeTemplate {
    fn default() -> Self {
        Self {
            version: "judge-v1".into(),
            system: "You are an experienced Java developer who reviews source code comments.".into(),
            body: "Below is a Java method and {n} candidate summary comments for it.\n\n\
                   Quality axis: {axis_name}\n\
                   Definition: {axis_description}\n\n\
                   Java method:\n```java\n{code}\n```\n\n\
                   Candidate summaries:\n{options}\n\n\
                   Choose the best of the {n} options along the {axis_name} quality axis. \
                   Answer in the form \"Best: <number>\" followed by one sentence of justification."
                .into(),
            reask: "\n\nYour previous answer could not be read. Reply with exactly \"Best: k\", where k is \
                    an integer from 1 to {n}, followed by one sentence of justification."
                .into(),
        }
    }
}

/// Substitutes `{name}` placeholders in one pass over the template, so
/// braces inside substituted values are never re-expanded.
fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        for (name, value) in vars {
            let key = format!("{{{name}}}");
            if tail.starts_with(&key) {
                out.push_str(value);
                rest = &tail[key.len()..];
                continue 'outer;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JudgePrompt {
    pub axis: AxisKey,
    pub unit_id: UnitId,
    pub system: String,
    pub rendered_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JudgeError {
    #[error("candidate set is for unit {set}, not {unit}")]
    UnitMismatch { unit: UnitId, set: UnitId },
    #[error("judging needs at least 2 candidates, unit {unit} has {n}")]
    TooFewCandidates { unit: UnitId, n: usize },
    #[error("no candidate set for unit {0}")]
    MissingCandidates(UnitId),
    #[error("{} unit(s) reserved for human surveys were passed to the AI judge, e.g. {}", .0.len(), .0[0])]
    ReservedOverlap(Vec<UnitId>),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl From<CheckpointError> for JudgeError {
    fn from(e: CheckpointError) -> Self {
        JudgeError::Checkpoint(e.to_string())
    }
}

pub fn build_judge_prompt(
    axis: &QualityAxis,
    unit: &CodeUnit,
    set: &CandidateSet,
    template: &JudgeTemplate,
) -> Result<JudgePrompt, JudgeError> {
    if set.unit_id != unit.id {
        return Err(JudgeError::UnitMismatch { unit: unit.id.clone(), set: set.unit_id.clone() });
    }
    let n = set.candidates.len();
    if n < 2 {
        return Err(JudgeError::TooFewCandidates { unit: unit.id.clone(), n });
    }
    let options = set
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| format!("Option {}: {}", i + 1, c))
        .collect::<Vec<_>>()
        .join("\n");
    let n_text = n.to_string();
    let rendered_text = render(
        &template.body,
        &[
            ("n", &n_text),
            ("axis_name", &axis.display_name),
            ("axis_description", &axis.description),
            ("code", &unit.code),
            ("options", &options),
        ],
    );
    Ok(JudgePrompt { axis: axis.key, unit_id: unit.id.clone(), system: template.system.clone(), rendered_text })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerdictError {
    #[error("response contains no `Best: k` verdict")]
    NoVerdict,
    #[error("verdict {k} is outside 1..={n}")]
    OutOfRange { k: String, n: usize },
    #[error("verdict parsing needs n >= 2, got {0}")]
    InvalidN(usize),
}

static VERDICT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)best\s*:\s*(\d+)").unwrap());

/// Returns the 0-based index named by the first `Best: k` in the response.
pub fn parse_verdict(response: &str, n: usize) -> Result<usize, VerdictError> {
    if n < 2 {
        return Err(VerdictError::InvalidN(n));
    }
    let caps = VERDICT.captures(response).ok_or(VerdictError::NoVerdict)?;
    let digits = &caps[1];
    match digits.parse::<usize>() {
        Ok(k) if (1..=n).contains(&k) => Ok(k - 1),
        _ => Err(VerdictError::OutOfRange { k: digits.to_string(), n }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionSource {
    Ai,
    Human,
}

/// A best-candidate judgment for one unit along one axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisSelection {
    pub unit_id: UnitId,
    pub axis: AxisKey,
    pub selected_index: usize,
    pub source: SelectionSource,
    pub raw_response: Option<String>,
    pub rewrite: Option<String>,
    pub rationale: Option<String>,
    pub annotator_id: Option<String>,
    #[serde(with = "rfc3339_serde")]
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelectionError {
    #[error("selection for {unit} picks index {index} of {n} candidates")]
    IndexOutOfRange { unit: UnitId, index: usize, n: usize },
    #[error("AI selection for {0} has no raw response")]
    MissingRawResponse(UnitId),
    #[error("human selection for {0} has no annotator id")]
    MissingAnnotator(UnitId),
}

impl AxisSelection {
    pub fn validate(&self, n: usize) -> Result<(), SelectionError> {
        if self.selected_index >= n {
            return Err(SelectionError::IndexOutOfRange { unit: self.unit_id.clone(), index: self.selected_index, n });
        }
        match self.source {
            SelectionSource::Ai if self.raw_response.is_none() => {
                Err(SelectionError::MissingRawResponse(self.unit_id.clone()))
            }
            SelectionSource::Human if self.annotator_id.is_none() => {
                Err(SelectionError::MissingAnnotator(self.unit_id.clone()))
            }
            _ => Ok(()),
        }
    }
}

pub fn load_selections(path: &Path) -> Result<Vec<AxisSelection>, ReadJsonlError> {
    fsutil::read_jsonl(path)
}

pub fn save_selections(path: &Path, selections: &[AxisSelection]) -> std::io::Result<()> {
    fsutil::write_jsonl_atomic(path, selections)
}

pub struct JudgeJob {
    pub template: JudgeTemplate,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    pub clock: Clock,
    pub concurrency: usize,
    pub output: PathBuf,
    pub skip_list: PathBuf,
}

impl JudgeJob {
    pub fn new(output: PathBuf, skip_list: PathBuf) -> Self {
        Self {
            template: JudgeTemplate::default(),
            temperature: 0.0,
            max_tokens: 64,
            seed: None,
            clock: Clock::System,
            concurrency: crate::backends::DEFAULT_MAX_IN_FLIGHT,
            output,
            skip_list,
        }
    }

    fn ask(&self, backend: &dyn Generator, prompt: &JudgePrompt, text: String) -> Result<String, String> {
        let req = GenerationRequest {
            system: Some(prompt.system.clone()),
            prompt: text,
            n: 1,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
        };
        let resp = backend.generate(&req).map_err(|e| e.to_string())?;
        resp.completions.into_iter().next().ok_or_else(|| "backend returned no completion".to_string())
    }

    /// Asks once, re-asks once with the stricter instruction, then gives up.
    fn verdict(&self, backend: &dyn Generator, prompt: &JudgePrompt, n: usize) -> Result<(usize, String), String> {
        let first = self.ask(backend, prompt, prompt.rendered_text.clone())?;
        match parse_verdict(&first, n) {
            Ok(i) => Ok((i, first)),
            Err(first_err) => {
                let stricter =
                    format!("{}{}", prompt.rendered_text, render(&self.template.reask, &[("n", &n.to_string())]));
                let second = self.ask(backend, prompt, stricter)?;
                parse_verdict(&second, n)
                    .map(|i| (i, second))
                    .map_err(|e| format!("unparseable verdict after re-ask ({first_err}; then {e})"))
            }
        }
    }
}

/// Judges every unit along one axis. Fails before any backend call if a
/// unit is in `reserved` or lacks a candidate set.
pub fn judge_corpus(
    units: &[CodeUnit],
    sets: &[CandidateSet],
    axis: &QualityAxis,
    reserved: &HashSet<UnitId>,
    backend: &dyn Generator,
    job: &JudgeJob,
) -> Result<StageOutcome<AxisSelection>, JudgeError> {
    let overlap: Vec<UnitId> = units.iter().filter(|u| reserved.contains(&u.id)).map(|u| u.id.clone()).collect();
    if !overlap.is_empty() {
        return Err(JudgeError::ReservedOverlap(overlap));
    }
    let by_unit: HashMap<&UnitId, &CandidateSet> = sets.iter().map(|s| (&s.unit_id, s)).collect();
    let mut work = Vec::with_capacity(units.len());
    for unit in units {
        let set = by_unit.get(&unit.id).ok_or_else(|| JudgeError::MissingCandidates(unit.id.clone()))?;
        let prompt = build_judge_prompt(axis, unit, set, &job.template)?;
        work.push((prompt, set.candidates.len()));
    }
    let concurrency = job.concurrency.min(backend.max_in_flight()).max(1);
    let stage = Stage { output: &job.output, skip_list: &job.skip_list, concurrency };
    let outcome = stage.run(
        &work,
        |(p, _)| &p.unit_id,
        |s: &AxisSelection| &s.unit_id,
        |(prompt, n)| {
            let (selected_index, raw) = job.verdict(backend, prompt, *n)?;
            Ok(AxisSelection {
                unit_id: prompt.unit_id.clone(),
                axis: axis.key,
                selected_index,
                source: SelectionSource::Ai,
                raw_response: Some(raw),
                rewrite: None,
                rationale: None,
                annotator_id: None,
                created_at: job.clock.now(),
            })
        },
    )?;
    Ok(outcome)
}
