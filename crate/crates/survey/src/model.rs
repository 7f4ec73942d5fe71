use chrono::{DateTime, Utc};
use refocus_core::axes::AxisKey;
use refocus_core::clock::rfc3339_serde;
use refocus_core::judge::AxisSelection;
use refocus_core::UnitId;
use serde::{Deserialize, Serialize};

pub const RATIONALE_METHODS_PER_SESSION: usize = 35;
pub const AXIS_METHODS_PER_SESSION: usize = 50;
pub const RATIONALE_OPTIONS: usize = 2;
pub const AXIS_OPTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurveyKind {
    Rationale,
    Axis,
}

/// A method offered to annotators with the comments they choose among.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolUnit {
    pub unit_id: UnitId,
    pub code: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyDefinition {
    pub survey_id: String,
    pub kind: SurveyKind,
    pub axis: Option<AxisKey>,
    pub methods_per_session: usize,
    pub options_per_task: usize,
    pub unit_pool: Vec<UnitId>,
    pub allow_no_preference: bool,
    #[serde(with = "rfc3339_serde")]
    pub created_at: DateTime<Utc>,
}

impl SurveyDefinition {
    /// Checks the kind-specific shape against the pool contents.
    pub fn validate(&self, units: &[PoolUnit]) -> Result<(), String> {
        match self.kind {
            SurveyKind::Rationale => {
                if self.axis.is_some() {
                    return Err("rationale surveys have no axis".into());
                }
                if self.options_per_task != RATIONALE_OPTIONS || !self.allow_no_preference {
                    return Err("rationale surveys show 2 options and allow no preference".into());
                }
            }
            SurveyKind::Axis => {
                if self.axis.is_none() {
                    return Err("axis surveys need an axis".into());
                }
                if self.allow_no_preference {
                    return Err("axis surveys do not allow no preference".into());
                }
                if self.options_per_task < 2 {
                    return Err("axis surveys need at least 2 options".into());
                }
            }
        }
        if self.methods_per_session == 0 {
            return Err("methods_per_session must be at least 1".into());
        }
        if !self.survey_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            || self.survey_id.is_empty()
        {
            return Err(format!("survey id {:?} must be non-empty ASCII alphanumerics, '-' or '_'", self.survey_id));
        }
        let mut seen = std::collections::HashSet::new();
        for u in units {
            if !seen.insert(&u.unit_id) {
                return Err(format!("unit {} appears twice in the pool", u.unit_id));
            }
            let ok = match self.kind {
                SurveyKind::Rationale => u.candidates.len() >= RATIONALE_OPTIONS,
                SurveyKind::Axis => u.candidates.len() == self.options_per_task,
            };
            if !ok {
                return Err(format!("unit {} has {} candidates", u.unit_id, u.candidates.len()));
            }
            if u.candidates.iter().any(|c| c.trim().is_empty()) {
                return Err(format!("unit {} has an empty candidate", u.unit_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSurveyRequest {
    #[serde(default)]
    pub survey_id: Option<String>,
    pub kind: SurveyKind,
    #[serde(default)]
    pub axis: Option<AxisKey>,
    #[serde(default)]
    pub methods_per_session: Option<usize>,
    #[serde(default)]
    pub options_per_task: Option<usize>,
    pub units: Vec<PoolUnit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyCreated {
    pub survey_id: String,
    pub definition: SurveyDefinition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub survey_id: String,
    pub annotator_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    /// Sent back in the `x-session-token` header on every session request.
    pub session_token: String,
    pub survey_id: String,
    pub total_tasks: usize,
    #[serde(with = "rfc3339_serde")]
    pub expires_at: DateTime<Utc>,
}

/// One task of a session: which unit, and which candidate sits at each
/// displayed position. Never leaves the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub unit_id: UnitId,
    pub shown: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Page {
    Choose,
    Rewrite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisInstructions {
    pub key: AxisKey,
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionView {
    pub label: String,
    pub text: String,
}

/// What an annotator's browser sees. Carries no candidate indices or model ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPayload {
    pub session_id: String,
    pub unit_id: UnitId,
    /// 1-based.
    pub position: usize,
    pub total: usize,
    pub kind: SurveyKind,
    pub axis: Option<AxisInstructions>,
    pub code: String,
    pub options: Vec<OptionView>,
    pub allow_no_preference: bool,
    pub page: Page,
    /// Displayed position of the option to rewrite, on the rewrite page.
    pub rewrite_option: Option<usize>,
    pub prefill: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page1 {
    /// 0-based displayed position.
    #[serde(default)]
    pub choice: Option<usize>,
    #[serde(default)]
    pub no_preference: bool,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page2 {
    pub rewrite: String,
    pub rationale: String,
    pub elapsed_ms: u64,
}

/// Either page may be sent alone, page 1 first, or both together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRequest {
    pub unit_id: UnitId,
    #[serde(default)]
    pub page1: Option<Page1>,
    #[serde(default)]
    pub page2: Option<Page2>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page1Record {
    pub choice: Option<usize>,
    pub no_preference: bool,
    /// Displayed position whose text goes to the rewrite page; random when
    /// no preference was given.
    pub rewrite_option: usize,
    pub elapsed_ms: u64,
    #[serde(with = "rfc3339_serde")]
    pub recorded_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    MinTime,
    DuplicateRationale,
    ShortRationale,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub session_id: String,
    pub annotator_id: String,
    pub unit_id: UnitId,
    pub task_index: usize,
    pub shown: Vec<usize>,
    pub page1: Page1Record,
    pub page2: Page2,
    pub flags: Vec<Flag>,
    #[serde(with = "rfc3339_serde")]
    pub submitted_at: DateTime<Utc>,
}

impl SubmissionRecord {
    /// Candidate index of the option taken to the rewrite page.
    pub fn rewritten_index(&self) -> usize {
        self.shown[self.page1.rewrite_option]
    }

    /// Candidate index of the preferred option, `None` for no preference.
    pub fn preferred_index(&self) -> Option<usize> {
        self.page1.choice.map(|k| self.shown[k])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub unit_id: UnitId,
    pub page: Page,
    /// Tasks fully submitted so far.
    pub completed: usize,
    pub total: usize,
    pub session_complete: bool,
    pub flags: Vec<Flag>,
}

/// Exported result of one rationale-survey task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationaleRecord {
    pub unit_id: UnitId,
    pub annotator_id: String,
    pub session_id: String,
    /// Candidate indices in displayed order.
    pub shown: Vec<usize>,
    pub preferred_index: Option<usize>,
    pub no_preference: bool,
    pub rewritten_index: usize,
    pub rewrite: String,
    pub rationale: String,
    pub flags: Vec<Flag>,
    #[serde(with = "rfc3339_serde")]
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyExport {
    pub survey_id: String,
    pub kind: SurveyKind,
    pub axis: Option<AxisKey>,
    pub included: usize,
    pub excluded: usize,
    pub warnings: Vec<String>,
    pub selections: Vec<AxisSelection>,
    pub rationales: Vec<RationaleRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditDecision {
    Exclude,
    Retain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRequest {
    pub session_id: String,
    pub unit_id: UnitId,
    pub decision: AuditDecision,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub session_id: String,
    pub unit_id: UnitId,
    pub decision: AuditDecision,
    pub note: Option<String>,
    pub flags: Vec<Flag>,
    #[serde(with = "rfc3339_serde")]
    pub decided_at: DateTime<Utc>,
}

/// A flagged submission awaiting or carrying an operator decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedSubmission {
    pub session_id: String,
    pub annotator_id: String,
    pub unit_id: UnitId,
    pub flags: Vec<Flag>,
    pub rationale: String,
    pub decision: Option<AuditDecision>,
}
