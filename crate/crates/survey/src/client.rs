//! Blocking client for the survey API, used by the CLI and headless tests.

use refocus_core::UnitId;
use reqwest::blocking::{Client, RequestBuilder};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::http::{SurveyStatus, SESSION_TOKEN_HEADER};
use crate::model::*;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed")]
    Transport(#[from] reqwest::Error),
    #[error("HTTP {status} {code}: {message}")]
    Api { status: u16, code: String, message: String, field: Option<String> },
}

impl ClientError {
    /// The service's error code, e.g. `already_enrolled`.
    pub fn code(&self) -> Option<&str> {
        match self {
            Self::Api { code, .. } => Some(code),
            Self::Transport(_) => None,
        }
    }
}

#[derive(Deserialize)]
struct ApiError {
    error: String,
    message: String,
    field: Option<String>,
}

pub struct SurveyClient {
    base: String,
    operator_token: Option<String>,
    http: Client,
}

impl SurveyClient {
    pub fn new(base_url: impl Into<String>, operator_token: Option<String>) -> Self {
        Self { base: base_url.into().trim_end_matches('/').to_string(), operator_token, http: Client::new() }
    }

    fn operator(&self, req: RequestBuilder) -> RequestBuilder {
        match &self.operator_token {
            Some(t) => req.bearer_auth(t),
            None => req,
        }
    }

    fn send<T: DeserializeOwned>(req: RequestBuilder) -> Result<T, ClientError> {
        let resp = req.send()?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json()?);
        }
        let body = resp.text()?;
        Err(match serde_json::from_str::<ApiError>(&body) {
            Ok(e) => ClientError::Api { status: status.as_u16(), code: e.error, message: e.message, field: e.field },
            Err(_) => ClientError::Api { status: status.as_u16(), code: "http".into(), message: body, field: None },
        })
    }

    pub fn create_survey(&self, req: &CreateSurveyRequest) -> Result<SurveyCreated, ClientError> {
        Self::send(self.operator(self.http.post(format!("{}/surveys", self.base))).json(req))
    }

    pub fn status(&self, survey_id: &str) -> Result<SurveyStatus, ClientError> {
        Self::send(self.operator(self.http.get(format!("{}/surveys/{survey_id}", self.base))))
    }

    pub fn create_session(&self, survey_id: &str, annotator_id: &str) -> Result<SessionCreated, ClientError> {
        let body = CreateSessionRequest { survey_id: survey_id.into(), annotator_id: annotator_id.into() };
        Self::send(self.http.post(format!("{}/sessions", self.base)).json(&body))
    }

    pub fn next_task(&self, session: &SessionCreated) -> Result<TaskPayload, ClientError> {
        Self::send(
            self.http
                .get(format!("{}/sessions/{}/task", self.base, session.session_id))
                .header(SESSION_TOKEN_HEADER, &session.session_token),
        )
    }

    pub fn submit(&self, session: &SessionCreated, req: &SubmissionRequest) -> Result<SubmitAck, ClientError> {
        Self::send(
            self.http
                .post(format!("{}/sessions/{}/submissions", self.base, session.session_id))
                .header(SESSION_TOKEN_HEADER, &session.session_token)
                .json(req),
        )
    }

    pub fn export(&self, survey_id: &str, include_flagged: bool) -> Result<SurveyExport, ClientError> {
        let url = format!("{}/surveys/{survey_id}/export?include_flagged={include_flagged}", self.base);
        Self::send(self.operator(self.http.get(url)))
    }

    pub fn flagged(&self, survey_id: &str) -> Result<Vec<FlaggedSubmission>, ClientError> {
        Self::send(self.operator(self.http.get(format!("{}/surveys/{survey_id}/flags", self.base))))
    }

    pub fn audit(&self, survey_id: &str, req: &AuditRequest) -> Result<AuditEntry, ClientError> {
        Self::send(self.operator(self.http.post(format!("{}/surveys/{survey_id}/audit", self.base))).json(req))
    }
}

/// Answers the current task in one request with the given displayed choice.
pub fn answer(unit_id: &UnitId, choice: usize, rewrite: &str, rationale: &str) -> SubmissionRequest {
    SubmissionRequest {
        unit_id: unit_id.clone(),
        page1: Some(Page1 { choice: Some(choice), no_preference: false, elapsed_ms: 30_000 }),
        page2: Some(Page2 { rewrite: rewrite.into(), rationale: rationale.into(), elapsed_ms: 60_000 }),
    }
}
