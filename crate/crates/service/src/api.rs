//! Request handlers and wire types.

use std::collections::BTreeMap;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use detox_core::classifier::token_contributions;
use detox_core::rewriter::RewriteOptions;
use detox_core::{detoxify, Language};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::feedback::{FeedbackError, FeedbackRecord, FeedbackSubmission};
use crate::AppState;

/// Longest accepted input, in characters.
pub const MAX_TEXT_CHARS: usize = 10_000;
const CONTRIBUTIONS: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetoxRequest {
    pub text: String,
    pub language: String,
    #[serde(default)]
    pub strict_lookup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replacement {
    pub original: String,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub term: String,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetoxResponse {
    /// `TOXIC` or `NON-TOXIC`.
    pub label: String,
    pub probability: f64,
    pub output_text: String,
    pub method: String,
    pub replaced_tokens: Vec<Replacement>,
    pub token_contributions: Vec<Contribution>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        let status = match rejection {
            JsonRejection::JsonDataError(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, "invalid_request", rejection.body_text())
    }
}

fn parse_language(code: &str) -> Result<Language, ApiError> {
    code.parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "unknown_language", format!("no language {code:?}")))
}

pub async fn detox(
    State(state): State<AppState>,
    payload: Result<Json<DetoxRequest>, JsonRejection>,
) -> Result<Json<DetoxResponse>, ApiError> {
    let Json(request) = payload?;
    let language = parse_language(&request.language)?;
    if request.text.chars().count() > MAX_TEXT_CHARS {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "text_too_long",
            format!("text exceeds {MAX_TEXT_CHARS} characters"),
        ));
    }
    let models = state.models.snapshot();
    let bundle = models.bundles.get(&language).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "model_not_loaded",
            format!("no model loaded for {language}"),
        )
    })?;
    let options = RewriteOptions {
        strict_lookup: request.strict_lookup,
    };
    let result = detoxify(&request.text, &bundle.model, &bundle.corpus, &bundle.lexicon, options)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let contributions = token_contributions(&bundle.model, &request.text, CONTRIBUTIONS);
    Ok(Json(DetoxResponse {
        label: if result.label == 1 { "TOXIC" } else { "NON-TOXIC" }.to_string(),
        probability: result.probability,
        output_text: result.output_text,
        method: result.method.as_str().to_string(),
        replaced_tokens: result
            .replaced_tokens
            .into_iter()
            .map(|(original, replacement)| Replacement { original, replacement })
            .collect(),
        token_contributions: contributions
            .into_iter()
            .map(|(term, contribution)| Contribution { term, contribution })
            .collect(),
    }))
}

pub async fn feedback(
    State(state): State<AppState>,
    payload: Result<Json<FeedbackSubmission>, JsonRejection>,
) -> Result<(StatusCode, Json<FeedbackRecord>), ApiError> {
    let Json(submission) = payload?;
    parse_language(&submission.language)?;
    let log = state.feedback.clone();
    let record = tokio::task::spawn_blocking(move || log.append(submission))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(|e| match e {
            FeedbackError::Validation(m) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_feedback", m),
            FeedbackError::Storage { .. } => {
                tracing::error!(error = %e, "feedback write failed");
                ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "storage", e.to_string())
            }
        })?;
    Ok((StatusCode::CREATED, Json(record)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelVersion {
    pub fingerprint: String,
    pub config_fingerprint: String,
    pub trained_at: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Health {
    /// `ok` when every supported language has a model, otherwise `degraded`.
    pub status: String,
    pub models_loaded: Vec<Language>,
    pub versions: BTreeMap<Language, ModelVersion>,
}

pub async fn health(State(state): State<AppState>) -> Json<Health> {
    let models = state.models.snapshot();
    let versions: BTreeMap<Language, ModelVersion> = models
        .bundles
        .iter()
        .map(|(&lang, b)| {
            (
                lang,
                ModelVersion {
                    fingerprint: b.fingerprint.clone(),
                    config_fingerprint: b.model.config_fingerprint.clone(),
                    trained_at: b.model.trained_at,
                },
            )
        })
        .collect();
    let complete = Language::ALL.iter().all(|l| versions.contains_key(l));
    Json(Health {
        status: if complete { "ok" } else { "degraded" }.to_string(),
        models_loaded: models.languages(),
        versions,
    })
}
