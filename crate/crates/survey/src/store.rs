use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use refocus_core::clock::rfc3339_serde;
use refocus_core::fsutil::{self, ReadJsonlError};
use refocus_core::UnitId;
use serde::{Deserialize, Serialize};

use crate::model::{AuditEntry, Page1Record, PoolUnit, SubmissionRecord, SurveyDefinition, TaskPlan};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStarted {
    pub session_id: String,
    pub token_sha256: String,
    pub survey_id: String,
    pub annotator_id: String,
    pub tasks: Vec<TaskPlan>,
    #[serde(with = "rfc3339_serde")]
    pub started_at: DateTime<Utc>,
    #[serde(with = "rfc3339_serde")]
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SurveyCreated { definition: SurveyDefinition, units: Vec<PoolUnit> },
    SessionStarted(SessionStarted),
    Page1Recorded { session_id: String, unit_id: UnitId, page1: Page1Record },
    Submitted(SubmissionRecord),
}

/// Files for one survey under the data directory.
pub struct SurveyFiles {
    pub events: PathBuf,
    pub audit: PathBuf,
}

impl SurveyFiles {
    pub fn new(dir: &Path, survey_id: &str) -> Self {
        Self {
            events: dir.join(format!("{survey_id}.events.jsonl")),
            audit: dir.join(format!("{survey_id}.audit.jsonl")),
        }
    }
}

/// Every survey event log in `dir`, each as (survey id, events). A torn
/// final line left by a crash is dropped before reading.
pub fn replay(dir: &Path) -> Result<Vec<(String, Vec<Event>)>, ReadJsonlError> {
    let mut out = Vec::new();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_str().is_some_and(|s| s.ends_with(".events.jsonl")))
        .collect();
    paths.sort();
    for path in paths {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let id = name.trim_end_matches(".events.jsonl").to_string();
        let dropped = fsutil::truncate_torn_tail(&path)?;
        if dropped > 0 {
            log::warn!("dropped {dropped} bytes of a torn record from {}", path.display());
        }
        out.push((id, fsutil::read_jsonl(&path)?));
    }
    Ok(out)
}

pub fn read_audit(path: &Path) -> Result<Vec<AuditEntry>, ReadJsonlError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    fsutil::truncate_torn_tail(path)?;
    fsutil::read_jsonl(path)
}
