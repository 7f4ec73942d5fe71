//! Survey service for human judging.
//!
//! Two survey kinds are supported. Rationale surveys show two of three
//! comments per method, allow "no preference", and collect a rewrite and a
//! rationale. Axis surveys show all `n` candidates for one quality axis and
//! export the choices as human [`AxisSelection`](refocus_core::judge::AxisSelection)s.
//!
//! State lives in one append-only JSONL event log per survey and is rebuilt
//! by replay when the service starts.

pub mod client;
pub mod http;
pub mod model;
pub mod service;
mod store;

pub use client::{ClientError, SurveyClient};
pub use http::{router, serve, serve_until};
pub use model::*;
pub use service::{ServiceConfig, ServiceError, SurveyService};
