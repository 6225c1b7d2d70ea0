//! HTTP service backing the validation UI.
//!
//! * `POST /api/v1/detox`: classify and rewrite one sentence.
//! * `POST /api/v1/feedback`: append a native-speaker verdict to the feedback log.
//! * `GET /api/v1/health`: loaded languages and model fingerprints.
//!
//! Anything else is served from the optional static directory (the UI bundle).

pub mod api;
pub mod feedback;
pub mod registry;

use std::path::PathBuf;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use tower_http::services::ServeDir;

pub use api::{DetoxRequest, DetoxResponse, MAX_TEXT_CHARS};
pub use feedback::{FeedbackLog, FeedbackRecord, FeedbackSubmission, Verdict};
pub use registry::{LanguageBundle, ModelRegistry, ModelSet};

#[derive(Clone)]
pub struct AppState {
    pub models: Arc<ModelRegistry>,
    pub feedback: Arc<FeedbackLog>,
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/v1/detox", post(api::detox))
        .route("/api/v1/feedback", post(api::feedback))
        .route("/api/v1/health", get(api::health))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
