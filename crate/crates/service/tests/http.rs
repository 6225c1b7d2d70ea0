use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use detox_core::classifier::sigmoid;
use detox_core::vectorizer::{build_vocabulary, derive_stopwords};
use detox_core::{derive_labeled_set, load_parallel_corpus, save_model, train, Language, TrainConfig};
use detox_service::{router, AppState, FeedbackLog, FeedbackRecord, ModelRegistry, MAX_TEXT_CHARS};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(lang: Language) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(format!("seed_pairs_{}.tsv", lang.code()))
}

fn write_bundle(dir: &Path, lang: Language, trained_at: u64) {
    let pairs = load_parallel_corpus(fixture(lang), lang).unwrap();
    let examples = derive_labeled_set(&pairs);
    let mut cfg = TrainConfig::for_language(lang);
    cfg.trained_at = trained_at;
    let stop = derive_stopwords(&examples, &cfg.stopwords).unwrap();
    let vocab = build_vocabulary(&examples, &stop).unwrap();
    let model = train(&examples, &vocab, &cfg).unwrap();
    save_model(&model, dir.join(format!("{}.detoxmodel", lang.code()))).unwrap();
    std::fs::copy(fixture(lang), dir.join(format!("{}.corpus.tsv", lang.code()))).unwrap();
}

struct Harness {
    _dir: tempfile::TempDir,
    root: PathBuf,
    state: AppState,
    app: Router,
}

fn harness(languages: &[Language]) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let models = root.join("models");
    std::fs::create_dir(&models).unwrap();
    for &lang in languages {
        write_bundle(&models, lang, 1_700_000_000);
    }
    let state = AppState {
        models: Arc::new(ModelRegistry::open(&models).unwrap()),
        feedback: Arc::new(FeedbackLog::open(root.join("feedback.jsonl")).unwrap()),
    };
    let app = router(state.clone(), None);
    Harness {
        _dir: dir,
        root,
        state,
        app,
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(b) => builder
            .header("content-type", "application/json")
            .body(Body::from(b))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

async fn detox(app: &Router, text: &str, language: &str) -> (StatusCode, Value) {
    let body = json!({ "text": text, "language": language }).to_string();
    call(app, "POST", "/api/v1/detox", Some(body)).await
}

#[tokio::test]
async fn seed_pairs_sentence_is_rewritten_from_corpus() {
    let h = harness(&Language::ALL);
    let (status, body) = detox(&h.app, "Máa fọ́ ojú ẹ", "yo").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["label"], "TOXIC");
    assert_eq!(body["method"], "corpus_lookup");
    assert_eq!(body["output_text"], "Mo bínú gan-an sí ohun tí o ṣe");
    assert!(!body["token_contributions"].as_array().unwrap().is_empty());

    let (status, body) = detox(&h.app, "Ndiza kukwenzakalisa.", "xh").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["label"], "TOXIC");
    assert_eq!(body["output_text"], "Ndiziva ndonzakele ngamazwi / izenzo zakho.");
}

#[tokio::test]
async fn empty_text_is_decided_by_bias_alone() {
    let h = harness(&[Language::Yoruba]);
    let (status, body) = detox(&h.app, "", "yo").await;
    assert_eq!(status, StatusCode::OK);
    let set = h.state.models.snapshot();
    let model = &set.bundles[&Language::Yoruba].model;
    let p = sigmoid(model.bias);
    assert_eq!(body["probability"].as_f64().unwrap(), p);
    let expected = if p >= model.threshold { "TOXIC" } else { "NON-TOXIC" };
    assert_eq!(body["label"], expected);
    assert_eq!(body["output_text"], "");
}

#[tokio::test]
async fn request_errors() {
    let h = harness(&[Language::Yoruba]);
    let (status, body) = detox(&h.app, "hello", "zz").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "unknown_language");

    let (status, body) = detox(&h.app, "hello", "xh").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "model_not_loaded");

    let long = "a".repeat(MAX_TEXT_CHARS + 1);
    let (status, body) = detox(&h.app, &long, "yo").await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert!(body["error"]["message"].is_string());

    let (status, body) = call(&h.app, "POST", "/api/v1/detox", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"]["code"].is_string());

    let (status, _) = call(&h.app, "POST", "/api/v1/detox", Some(r#"{"text": 3, "language": "yo"}"#.into())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn repeated_requests_give_identical_responses() {
    let h = harness(&[Language::Yoruba]);
    let first = detox(&h.app, "O jẹ́ aláìmọ̀kan", "yo").await;
    for _ in 0..5 {
        assert_eq!(detox(&h.app, "O jẹ́ aláìmọ̀kan", "yo").await, first);
    }
}

fn feedback_body(verdict: &str, corrected: Option<&str>) -> String {
    json!({
        "language": "yo",
        "input_text": "Máa fọ́ ojú ẹ",
        "system_output": "Mo bínú gan-an sí ohun tí o ṣe",
        "verdict": verdict,
        "corrected_text": corrected,
    })
    .to_string()
}

#[tokio::test]
async fn feedback_is_appended() {
    let h = harness(&[Language::Yoruba]);
    let (status, body) = call(&h.app, "POST", "/api/v1/feedback", Some(feedback_body("accept", None))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["id"], 1);
    assert_eq!(body["verdict"], "accept");

    let (status, body) = call(&h.app, "POST", "/api/v1/feedback", Some(feedback_body("bad_rewrite", None))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "invalid_feedback");

    let log = std::fs::read_to_string(h.root.join("feedback.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);
    let before = log.clone();

    let (status, _) = call(
        &h.app,
        "POST",
        "/api/v1/feedback",
        Some(feedback_body("bad_rewrite", Some("Inú mi kò dùn sí ohun tí o ṣe"))),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let after = std::fs::read_to_string(h.root.join("feedback.jsonl")).unwrap();
    assert!(after.starts_with(&before));
    let last: FeedbackRecord = serde_json::from_str(after.lines().last().unwrap()).unwrap();
    assert_eq!(last.id, 2);
    assert_eq!(last.language, Language::Yoruba);
}

#[tokio::test]
async fn concurrent_feedback_gets_distinct_ids() {
    let h = harness(&[Language::Yoruba]);
    let tasks: Vec<_> = (0..16)
        .map(|_| {
            let app = h.app.clone();
            tokio::spawn(async move { call(&app, "POST", "/api/v1/feedback", Some(feedback_body("wrong_label", None))).await })
        })
        .collect();
    let mut ids = Vec::new();
    for t in tasks {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::CREATED);
        ids.push(body["id"].as_u64().unwrap());
    }
    ids.sort_unstable();
    assert_eq!(ids, (1..=16).collect::<Vec<_>>());
    let log = std::fs::read_to_string(h.root.join("feedback.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 16);
}

#[tokio::test]
async fn health_reports_models_and_reload() {
    let h = harness(&Language::ALL);
    let (status, body) = call(&h.app, "GET", "/api/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["models_loaded"], json!(["xh", "yo"]));
    let old = body["versions"]["yo"]["fingerprint"].clone();
    assert_eq!(body["versions"]["yo"]["trained_at"], 1_700_000_000);

    write_bundle(&h.root.join("models"), Language::Yoruba, 1_800_000_000);
    h.state.models.reload().unwrap();
    let (_, body) = call(&h.app, "GET", "/api/v1/health", None).await;
    assert_ne!(body["versions"]["yo"]["fingerprint"], old);
    assert_eq!(body["versions"]["yo"]["trained_at"], 1_800_000_000);
}

#[tokio::test]
async fn failed_reload_keeps_previous_models() {
    let h = harness(&[Language::Yoruba]);
    std::fs::write(h.root.join("models/yo.detoxmodel"), "{}").unwrap();
    assert!(h.state.models.reload().is_err());
    let (status, body) = detox(&h.app, "Máa fọ́ ojú ẹ", "yo").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["label"], "TOXIC");
}

#[tokio::test]
async fn missing_model_dir_is_degraded() {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState {
        models: Arc::new(ModelRegistry::open(dir.path().join("absent")).unwrap()),
        feedback: Arc::new(FeedbackLog::open(dir.path().join("f.jsonl")).unwrap()),
    };
    let app = router(state, None);
    let (status, body) = call(&app, "GET", "/api/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "degraded");
    assert_eq!(body["models_loaded"], json!([]));
    let (status, _) = detox(&app, "Máa fọ́ ojú ẹ", "yo").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn static_files_are_served_under_root() {
    let h = harness(&[]);
    let site = h.root.join("site");
    std::fs::create_dir(&site).unwrap();
    std::fs::write(site.join("index.html"), "<html>ui</html>").unwrap();
    let app = router(h.state.clone(), Some(site));
    let response = app
        .oneshot(Request::builder().uri("/index.html").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"<html>ui</html>");
}
