use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::PathBuf;
use std::sync::{Mutex, MutexGuard};

use rand::seq::SliceRandom;
use rand::Rng;
use refocus_core::axes::Taxonomy;
use refocus_core::fsutil::JsonlAppender;
use refocus_core::judge::{AxisSelection, SelectionSource};
use refocus_core::{Clock, UnitId};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::*;
use crate::store::{self, Event, SessionStarted, SurveyFiles};

/// Thresholds for automatic quality-control flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcThresholds {
    pub min_page_ms: u64,
    pub duplicate_rationale_tasks: usize,
    pub min_rationale_words: usize,
}

impl Default for QcThresholds {
    fn default() -> Self {
        Self { min_page_ms: 5_000, duplicate_rationale_tasks: 3, min_rationale_words: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub operator_token: String,
    pub thresholds: QcThresholds,
    pub session_ttl: chrono::Duration,
    pub taxonomy: Taxonomy,
    pub clock: Clock,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>, operator_token: impl Into<String>) -> Self {
        Self {
            data_dir: data_dir.into(),
            operator_token: operator_token.into(),
            thresholds: QcThresholds::default(),
            session_ttl: chrono::Duration::days(7),
            taxonomy: Taxonomy::default(),
            clock: Clock::System,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("operator token missing or wrong")]
    Unauthorized,
    #[error("session token missing or wrong")]
    InvalidSessionToken,
    #[error("unknown survey {0}")]
    UnknownSurvey(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("survey {0} already exists")]
    SurveyExists(String),
    #[error("invalid survey definition: {0}")]
    InvalidDefinition(String),
    #[error("annotator {annotator_id} is already enrolled in survey {survey_id}")]
    AlreadyEnrolled { annotator_id: String, survey_id: String },
    #[error("pool has {available} units but a session needs {needed}")]
    PoolExhausted { available: usize, needed: usize },
    #[error("session expired at {0}")]
    SessionExpired(String),
    #[error("session is complete")]
    SessionComplete,
    #[error("submission is for unit {got} but the current task is {expected}")]
    OutOfOrder { expected: UnitId, got: UnitId },
    #[error("{field}: {reason}")]
    ValidationFailed { field: String, reason: String },
    #[error("no submission for unit {unit_id} in session {session_id}")]
    UnknownSubmission { session_id: String, unit_id: UnitId },
    #[error("storage: {0}")]
    Storage(#[from] io::Error),
    #[error("replaying survey logs: {0}")]
    Replay(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Unauthorized => "unauthorized",
            Self::InvalidSessionToken => "invalid_session_token",
            Self::UnknownSurvey(_) => "unknown_survey",
            Self::UnknownSession(_) => "unknown_session",
            Self::SurveyExists(_) => "survey_exists",
            Self::InvalidDefinition(_) => "invalid_definition",
            Self::AlreadyEnrolled { .. } => "already_enrolled",
            Self::PoolExhausted { .. } => "pool_exhausted",
            Self::SessionExpired(_) => "session_expired",
            Self::SessionComplete => "session_complete",
            Self::OutOfOrder { .. } => "out_of_order",
            Self::ValidationFailed { .. } => "validation_failed",
            Self::UnknownSubmission { .. } => "unknown_submission",
            Self::Storage(_) => "storage",
            Self::Replay(_) => "replay",
        }
    }

    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Self::ValidationFailed { field: field.into(), reason: reason.into() }
    }
}

struct SurveyState {
    def: SurveyDefinition,
    units: HashMap<UnitId, PoolUnit>,
    files: SurveyFiles,
    log: Option<JsonlAppender>,
    sessions: Vec<String>,
    submissions: Vec<SubmissionRecord>,
    audit: Vec<AuditEntry>,
}

struct SessionState {
    started: SessionStarted,
    cursor: usize,
    pending: Option<Page1Record>,
}

#[derive(Default)]
struct State {
    surveys: BTreeMap<String, SurveyState>,
    sessions: HashMap<String, SessionState>,
}

impl State {
    fn apply(&mut self, event: Event, dir: &std::path::Path) -> Result<(), String> {
        match event {
            Event::SurveyCreated { definition, units } => {
                let id = definition.survey_id.clone();
                let files = SurveyFiles::new(dir, &id);
                self.surveys.insert(
                    id,
                    SurveyState {
                        def: definition,
                        units: units.into_iter().map(|u| (u.unit_id.clone(), u)).collect(),
                        files,
                        log: None,
                        sessions: Vec::new(),
                        submissions: Vec::new(),
                        audit: Vec::new(),
                    },
                );
            }
            Event::SessionStarted(started) => {
                let survey = self
                    .surveys
                    .get_mut(&started.survey_id)
                    .ok_or_else(|| format!("session {} for unknown survey", started.session_id))?;
                survey.sessions.push(started.session_id.clone());
                self.sessions.insert(started.session_id.clone(), SessionState { started, cursor: 0, pending: None });
            }
            Event::Page1Recorded { session_id, page1, .. } => {
                let s = self
                    .sessions
                    .get_mut(&session_id)
                    .ok_or_else(|| format!("page for unknown session {session_id}"))?;
                s.pending = Some(page1);
            }
            Event::Submitted(record) => {
                let s = self
                    .sessions
                    .get_mut(&record.session_id)
                    .ok_or_else(|| format!("submission for unknown session {}", record.session_id))?;
                s.pending = None;
                s.cursor = s.cursor.max(record.task_index + 1);
                let survey = self.surveys.get_mut(&s.started.survey_id).ok_or("submission for unknown survey")?;
                survey.submissions.push(record);
            }
        }
        Ok(())
    }
}

fn sha256_hex(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

fn normalize_rationale(s: &str) -> String {
    s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

fn option_label(k: usize) -> String {
    if k < 26 {
        char::from(b'A' + k as u8).to_string()
    } else {
        format!("#{}", k + 1)
    }
}

/// The survey service state machine. HTTP handlers in [`crate::http`] are a
/// thin layer over these methods.
pub struct SurveyService {
    config: ServiceConfig,
    state: Mutex<State>,
}

impl SurveyService {
    /// Opens the data directory and replays every survey log found there.
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(&config.data_dir)?;
        let mut state = State::default();
        for (id, events) in store::replay(&config.data_dir).map_err(|e| ServiceError::Replay(e.to_string()))? {
            for event in events {
                state.apply(event, &config.data_dir).map_err(|e| ServiceError::Replay(format!("{id}: {e}")))?;
            }
        }
        for survey in state.surveys.values_mut() {
            survey.audit = store::read_audit(&survey.files.audit).map_err(|e| ServiceError::Replay(e.to_string()))?;
            survey.log = Some(JsonlAppender::open(&survey.files.events)?);
        }
        log::info!("survey service loaded {} surveys, {} sessions", state.surveys.len(), state.sessions.len());
        Ok(Self { config, state: Mutex::new(state) })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn check_operator(&self, bearer: Option<&str>) -> Result<(), ServiceError> {
        match bearer {
            Some(t)
                if !self.config.operator_token.is_empty()
                    && sha256_hex(t) == sha256_hex(&self.config.operator_token) =>
            {
                Ok(())
            }
            _ => Err(ServiceError::Unauthorized),
        }
    }

    fn commit(&self, state: &mut State, survey_id: &str, event: Event) -> Result<(), ServiceError> {
        let survey = state.surveys.get_mut(survey_id).ok_or_else(|| ServiceError::UnknownSurvey(survey_id.into()))?;
        survey.log.as_mut().expect("log opened").append(&event)?;
        state.apply(event, &self.config.data_dir).map_err(ServiceError::Replay)
    }

    pub fn create_survey(&self, req: CreateSurveyRequest) -> Result<SurveyCreated, ServiceError> {
        let (methods, options, no_pref) = match req.kind {
            SurveyKind::Rationale => (RATIONALE_METHODS_PER_SESSION, RATIONALE_OPTIONS, true),
            SurveyKind::Axis => (AXIS_METHODS_PER_SESSION, AXIS_OPTIONS, false),
        };
        let definition = SurveyDefinition {
            survey_id: req.survey_id.unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string()),
            kind: req.kind,
            axis: req.axis,
            methods_per_session: req.methods_per_session.unwrap_or(methods),
            options_per_task: req.options_per_task.unwrap_or(options),
            unit_pool: req.units.iter().map(|u| u.unit_id.clone()).collect(),
            allow_no_preference: no_pref,
            created_at: self.config.clock.now(),
        };
        definition.validate(&req.units).map_err(ServiceError::InvalidDefinition)?;
        if definition.unit_pool.len() < definition.methods_per_session {
            return Err(ServiceError::PoolExhausted {
                available: definition.unit_pool.len(),
                needed: definition.methods_per_session,
            });
        }
        let mut state = self.lock();
        let id = definition.survey_id.clone();
        if state.surveys.contains_key(&id) {
            return Err(ServiceError::SurveyExists(id));
        }
        let files = SurveyFiles::new(&self.config.data_dir, &id);
        let mut log = JsonlAppender::open(&files.events)?;
        let event = Event::SurveyCreated { definition: definition.clone(), units: req.units };
        log.append(&event)?;
        state.apply(event, &self.config.data_dir).map_err(ServiceError::Replay)?;
        state.surveys.get_mut(&id).expect("just inserted").log = Some(log);
        log::info!("created {:?} survey {id}", definition.kind);
        Ok(SurveyCreated { survey_id: id, definition })
    }

    pub fn survey(&self, survey_id: &str) -> Result<SurveyDefinition, ServiceError> {
        let state = self.lock();
        state.surveys.get(survey_id).map(|s| s.def.clone()).ok_or_else(|| ServiceError::UnknownSurvey(survey_id.into()))
    }

    pub fn create_session(&self, req: CreateSessionRequest) -> Result<SessionCreated, ServiceError> {
        if req.annotator_id.trim().is_empty() {
            return Err(ServiceError::invalid("annotator_id", "must not be empty"));
        }
        let mut state = self.lock();
        let survey =
            state.surveys.get(&req.survey_id).ok_or_else(|| ServiceError::UnknownSurvey(req.survey_id.clone()))?;
        let kind = survey.def.kind;
        for s in state.sessions.values() {
            if s.started.annotator_id != req.annotator_id {
                continue;
            }
            let other_kind = state.surveys[&s.started.survey_id].def.kind;
            if s.started.survey_id == req.survey_id || (kind == SurveyKind::Axis && other_kind == SurveyKind::Axis) {
                return Err(ServiceError::AlreadyEnrolled {
                    annotator_id: req.annotator_id.clone(),
                    survey_id: s.started.survey_id.clone(),
                });
            }
        }
        let def = &survey.def;
        if def.unit_pool.len() < def.methods_per_session {
            return Err(ServiceError::PoolExhausted {
                available: def.unit_pool.len(),
                needed: def.methods_per_session,
            });
        }

        let mut rng = rand::rng();
        let picks = rand::seq::index::sample(&mut rng, def.unit_pool.len(), def.methods_per_session);
        let mut order: Vec<usize> = picks.into_vec();
        order.shuffle(&mut rng);
        let tasks = order
            .into_iter()
            .map(|i| {
                let unit_id = def.unit_pool[i].clone();
                let available = survey.units[&unit_id].candidates.len();
                let mut shown = rand::seq::index::sample(&mut rng, available, def.options_per_task).into_vec();
                shown.shuffle(&mut rng);
                TaskPlan { unit_id, shown }
            })
            .collect::<Vec<_>>();

        let now = self.config.clock.now();
        let token = uuid::Uuid::new_v4().simple().to_string();
        let started = SessionStarted {
            session_id: uuid::Uuid::new_v4().simple().to_string(),
            token_sha256: sha256_hex(&token),
            survey_id: req.survey_id.clone(),
            annotator_id: req.annotator_id,
            tasks,
            started_at: now,
            expires_at: now + self.config.session_ttl,
        };
        let created = SessionCreated {
            session_id: started.session_id.clone(),
            session_token: token,
            survey_id: started.survey_id.clone(),
            total_tasks: started.tasks.len(),
            expires_at: started.expires_at,
        };
        self.commit(&mut state, &req.survey_id, Event::SessionStarted(started))?;
        Ok(created)
    }

    fn session<'s>(
        &self,
        state: &'s State,
        session_id: &str,
        token: Option<&str>,
    ) -> Result<&'s SessionState, ServiceError> {
        let s = state.sessions.get(session_id).ok_or_else(|| ServiceError::UnknownSession(session_id.into()))?;
        match token {
            Some(t) if sha256_hex(t) == s.started.token_sha256 => {}
            _ => return Err(ServiceError::InvalidSessionToken),
        }
        if self.config.clock.now() > s.started.expires_at {
            return Err(ServiceError::SessionExpired(refocus_core::clock::rfc3339(&s.started.expires_at)));
        }
        if s.cursor >= s.started.tasks.len() {
            return Err(ServiceError::SessionComplete);
        }
        Ok(s)
    }

    pub fn next_task(&self, session_id: &str, token: Option<&str>) -> Result<TaskPayload, ServiceError> {
        let state = self.lock();
        let s = self.session(&state, session_id, token)?;
        let survey = &state.surveys[&s.started.survey_id];
        let plan = &s.started.tasks[s.cursor];
        let unit = &survey.units[&plan.unit_id];
        let options = plan
            .shown
            .iter()
            .enumerate()
            .map(|(k, &c)| OptionView { label: option_label(k), text: unit.candidates[c].clone() })
            .collect::<Vec<_>>();
        let axis = survey.def.axis.map(|key| {
            let q = self.config.taxonomy.get(key);
            AxisInstructions { key, name: q.display_name.clone(), description: q.description.clone() }
        });
        let (page, rewrite_option, prefill) = match &s.pending {
            Some(p1) => (Page::Rewrite, Some(p1.rewrite_option), Some(options[p1.rewrite_option].text.clone())),
            None => (Page::Choose, None, None),
        };
        Ok(TaskPayload {
            session_id: session_id.into(),
            unit_id: plan.unit_id.clone(),
            position: s.cursor + 1,
            total: s.started.tasks.len(),
            kind: survey.def.kind,
            axis,
            code: unit.code.clone(),
            options,
            allow_no_preference: survey.def.allow_no_preference,
            page,
            rewrite_option,
            prefill,
        })
    }

    pub fn submit(
        &self,
        session_id: &str,
        token: Option<&str>,
        req: SubmissionRequest,
    ) -> Result<SubmitAck, ServiceError> {
        let mut state = self.lock();
        let s = self.session(&state, session_id, token)?;
        let plan = &s.started.tasks[s.cursor];
        if req.unit_id != plan.unit_id {
            return Err(ServiceError::OutOfOrder { expected: plan.unit_id.clone(), got: req.unit_id });
        }
        let def = &state.surveys[&s.started.survey_id].def;
        let now = self.config.clock.now();

        let page1 = match (&s.pending, req.page1) {
            (Some(_), Some(_)) => return Err(ServiceError::invalid("page1", "already recorded for this task")),
            (Some(p), None) => p.clone(),
            (None, None) => return Err(ServiceError::invalid("page1", "the choose page must be submitted first")),
            (None, Some(p)) => {
                let n = plan.shown.len();
                let rewrite_option = match (p.choice, p.no_preference) {
                    (Some(_), true) => {
                        return Err(ServiceError::invalid("choice", "cannot combine a choice with no preference"))
                    }
                    (None, false) => return Err(ServiceError::invalid("choice", "select an option")),
                    (Some(k), false) if k >= n => {
                        return Err(ServiceError::invalid("choice", format!("option {k} out of range 0..{n}")))
                    }
                    (Some(k), false) => k,
                    (None, true) if !def.allow_no_preference => {
                        return Err(ServiceError::invalid("no_preference", "not offered in this survey"))
                    }
                    (None, true) => rand::rng().random_range(0..n),
                };
                Page1Record {
                    choice: p.choice,
                    no_preference: p.no_preference,
                    rewrite_option,
                    elapsed_ms: p.elapsed_ms,
                    recorded_at: now,
                }
            }
        };
        if let Some(p2) = &req.page2 {
            if p2.rewrite.trim().is_empty() {
                return Err(ServiceError::invalid("rewrite", "must not be empty"));
            }
            if p2.rationale.trim().is_empty() {
                return Err(ServiceError::invalid("rationale", "must not be empty"));
            }
        }

        let t = &self.config.thresholds;
        let survey_id = s.started.survey_id.clone();
        let total = s.started.tasks.len();
        let task_index = s.cursor;
        let Some(page2) = req.page2 else {
            let event = Event::Page1Recorded {
                session_id: session_id.into(),
                unit_id: plan.unit_id.clone(),
                page1: page1.clone(),
            };
            let flags = if page1.elapsed_ms < t.min_page_ms { vec![Flag::MinTime] } else { Vec::new() };
            let unit_id = plan.unit_id.clone();
            self.commit(&mut state, &survey_id, event)?;
            return Ok(SubmitAck {
                unit_id,
                page: Page::Choose,
                completed: task_index,
                total,
                session_complete: false,
                flags,
            });
        };

        let mut flags = Vec::new();
        if page1.elapsed_ms < t.min_page_ms || page2.elapsed_ms < t.min_page_ms {
            flags.push(Flag::MinTime);
        }
        if page2.rationale.split_whitespace().count() < t.min_rationale_words {
            flags.push(Flag::ShortRationale);
        }
        let record = SubmissionRecord {
            session_id: session_id.into(),
            annotator_id: s.started.annotator_id.clone(),
            unit_id: plan.unit_id.clone(),
            task_index,
            shown: plan.shown.clone(),
            page1,
            page2,
            flags: flags.clone(),
            submitted_at: now,
        };
        let unit_id = record.unit_id.clone();
        self.commit(&mut state, &survey_id, Event::Submitted(record))?;
        Ok(SubmitAck {
            unit_id,
            page: Page::Rewrite,
            completed: task_index + 1,
            total,
            session_complete: task_index + 1 == total,
            flags,
        })
    }

    /// Latest record per (session, unit) with flags, including the
    /// duplicate-rationale flag that needs the whole survey to compute.
    fn effective(&self, survey: &SurveyState) -> Vec<(SubmissionRecord, Vec<Flag>)> {
        let mut latest: Vec<&SubmissionRecord> = Vec::new();
        let mut index: HashMap<(&str, &UnitId), usize> = HashMap::new();
        for r in &survey.submissions {
            match index.get(&(r.session_id.as_str(), &r.unit_id)) {
                Some(&i) if latest[i].submitted_at > r.submitted_at => {}
                Some(&i) => latest[i] = r,
                None => {
                    index.insert((&r.session_id, &r.unit_id), latest.len());
                    latest.push(r);
                }
            }
        }
        let mut counts: HashMap<(&str, String), usize> = HashMap::new();
        for r in &latest {
            *counts.entry((&r.annotator_id, normalize_rationale(&r.page2.rationale))).or_default() += 1;
        }
        latest
            .into_iter()
            .map(|r| {
                let mut flags = r.flags.clone();
                if counts[&(r.annotator_id.as_str(), normalize_rationale(&r.page2.rationale))]
                    >= self.config.thresholds.duplicate_rationale_tasks
                {
                    flags.push(Flag::DuplicateRationale);
                }
                flags.sort();
                flags.dedup();
                (r.clone(), flags)
            })
            .collect()
    }

    fn decision(survey: &SurveyState, session_id: &str, unit_id: &UnitId) -> Option<AuditDecision> {
        survey.audit.iter().rev().find(|a| a.session_id == session_id && &a.unit_id == unit_id).map(|a| a.decision)
    }

    pub fn flagged(&self, survey_id: &str) -> Result<Vec<FlaggedSubmission>, ServiceError> {
        let state = self.lock();
        let survey = state.surveys.get(survey_id).ok_or_else(|| ServiceError::UnknownSurvey(survey_id.into()))?;
        Ok(self
            .effective(survey)
            .into_iter()
            .filter(|(_, f)| !f.is_empty())
            .map(|(r, flags)| FlaggedSubmission {
                decision: Self::decision(survey, &r.session_id, &r.unit_id),
                session_id: r.session_id,
                annotator_id: r.annotator_id,
                unit_id: r.unit_id,
                flags,
                rationale: r.page2.rationale,
            })
            .collect())
    }

    /// Appends an operator include/exclude decision to the survey's audit file.
    pub fn record_audit(&self, survey_id: &str, req: AuditRequest) -> Result<AuditEntry, ServiceError> {
        let mut state = self.lock();
        let survey = state.surveys.get(survey_id).ok_or_else(|| ServiceError::UnknownSurvey(survey_id.into()))?;
        let flags = self
            .effective(survey)
            .into_iter()
            .find(|(r, _)| r.session_id == req.session_id && r.unit_id == req.unit_id)
            .map(|(_, f)| f)
            .ok_or_else(|| ServiceError::UnknownSubmission {
                session_id: req.session_id.clone(),
                unit_id: req.unit_id.clone(),
            })?;
        let entry = AuditEntry {
            session_id: req.session_id,
            unit_id: req.unit_id,
            decision: req.decision,
            note: req.note,
            flags,
            decided_at: self.config.clock.now(),
        };
        let survey = state.surveys.get_mut(survey_id).expect("checked above");
        JsonlAppender::open(&survey.files.audit)?.append(&entry)?;
        survey.audit.push(entry.clone());
        Ok(entry)
    }

    /// Human selections for an axis survey, or rationale records for a
    /// rationale survey. Flagged submissions are left out unless
    /// `include_flagged` is set or an operator retained them; submissions an
    /// operator excluded are always left out.
    pub fn export(&self, survey_id: &str, include_flagged: bool) -> Result<SurveyExport, ServiceError> {
        let state = self.lock();
        let survey = state.surveys.get(survey_id).ok_or_else(|| ServiceError::UnknownSurvey(survey_id.into()))?;
        let mut export = SurveyExport {
            survey_id: survey_id.into(),
            kind: survey.def.kind,
            axis: survey.def.axis,
            included: 0,
            excluded: 0,
            warnings: Vec::new(),
            selections: Vec::new(),
            rationales: Vec::new(),
        };
        let effective = self.effective(survey);
        let total = effective.len();
        for (r, flags) in effective {
            let keep = match Self::decision(survey, &r.session_id, &r.unit_id) {
                Some(AuditDecision::Exclude) => false,
                Some(AuditDecision::Retain) => true,
                None => flags.is_empty() || include_flagged,
            };
            if !keep {
                export.excluded += 1;
                continue;
            }
            export.included += 1;
            match survey.def.kind {
                SurveyKind::Axis => export.selections.push(AxisSelection {
                    selected_index: r.rewritten_index(),
                    unit_id: r.unit_id,
                    axis: survey.def.axis.expect("axis survey"),
                    source: SelectionSource::Human,
                    raw_response: None,
                    rewrite: Some(r.page2.rewrite),
                    rationale: Some(r.page2.rationale),
                    annotator_id: Some(r.annotator_id),
                    created_at: r.submitted_at,
                }),
                SurveyKind::Rationale => export.rationales.push(RationaleRecord {
                    preferred_index: r.preferred_index(),
                    rewritten_index: r.rewritten_index(),
                    unit_id: r.unit_id,
                    annotator_id: r.annotator_id,
                    session_id: r.session_id,
                    shown: r.shown,
                    no_preference: r.page1.no_preference,
                    rewrite: r.page2.rewrite,
                    rationale: r.page2.rationale,
                    flags,
                    created_at: r.submitted_at,
                }),
            }
        }
        if total > 0 && export.included == 0 {
            export.warnings.push(format!("all {total} submissions were excluded"));
        } else if total == 0 {
            export.warnings.push("no submissions yet".into());
        }
        Ok(export)
    }

    /// Session ids of a survey in enrollment order, with completed task counts.
    pub fn progress(&self, survey_id: &str) -> Result<Vec<(String, String, usize, usize)>, ServiceError> {
        let state = self.lock();
        let survey = state.surveys.get(survey_id).ok_or_else(|| ServiceError::UnknownSurvey(survey_id.into()))?;
        Ok(survey
            .sessions
            .iter()
            .map(|id| {
                let s = &state.sessions[id];
                (id.clone(), s.started.annotator_id.clone(), s.cursor, s.started.tasks.len())
            })
            .collect())
    }
}
