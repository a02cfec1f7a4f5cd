use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use bubblekg::service::router;
use bubblekg::{Engine, EngineConfig};
use bubblekg_core::corpus::{annotate_vad, ingest, parse_corpus};
use bubblekg_core::embedding::train;
use bubblekg_core::{EmbeddingSpace, Lexicon, Store, TrainConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tokio::sync::RwLock;
use tower::ServiceExt;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn ajax_engine() -> Engine {
    let mut g = Store::new();
    let corpus = std::fs::read_to_string(fixture("ajax.txt")).unwrap();
    ingest(&mut g, &parse_corpus(&corpus).unwrap()).unwrap();
    let lex = Lexicon::load(fixture("lexicon.tsv")).unwrap();
    annotate_vad(&mut g, &lex);
    let config = EngineConfig::default();
    let train_cfg = TrainConfig { seed: 1, ..config.train.clone() };
    let mut space = EmbeddingSpace::init(&g, config.dim, 1).unwrap();
    train(&g, &mut space, &train_cfg).unwrap();
    Engine::new(EngineConfig { train: train_cfg, ..config }, g, space, lex)
}

fn app() -> (Router, Arc<RwLock<Engine>>) {
    let engine = Arc::new(RwLock::new(ajax_engine()));
    (router(engine.clone()), engine)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn chat_returns_a_trace_and_records_it() {
    let (app, _) = app();
    let (status, body) = call(&app, Method::GET, "/api/trace/last", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "NoTrace");

    let (status, trace) = call(&app, Method::POST, "/api/chat", Some(json!({"text": "what do you think about dinosaurs?"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(trace["bubble"], "A");
    assert!(trace["final"].as_str().unwrap().contains("Loch Ness"));
    assert!(trace["preliminary"].is_string());

    let (status, last) = call(&app, Method::GET, "/api/trace/last", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(last, trace);
}

#[tokio::test]
async fn bad_bodies_use_the_error_shape() {
    let (app, _) = app();
    let (status, body) = call(&app, Method::POST, "/api/chat", Some(json!({"text": "   "}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "EmptyInput");

    let (status, body) = call(&app, Method::POST, "/api/recommend", Some(json!({"txt": "typo"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "BadRequest");
    assert!(body["message"].is_string());

    let (status, body) = call(&app, Method::POST, "/api/recommend", Some(json!({"text": "x", "alpha": 2.0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "InvalidConfig");
}

#[tokio::test]
async fn recommend_honours_k_and_alpha() {
    let (app, _) = app();
    let (status, rec) = call(&app, Method::POST, "/api/recommend", Some(json!({"text": "dinosaurs at the museum", "k": 2, "alpha": 1.0}))).await;
    assert_eq!(status, StatusCode::OK);
    let items = rec["items"].as_array().unwrap();
    assert_eq!(items.len(), 2);
    for item in items {
        assert_eq!(item["blended"], item["embedding_component"]);
    }
}

#[tokio::test]
async fn recommend_on_an_untrained_engine_conflicts() {
    let engine = Engine::new(EngineConfig::default(), Store::new(), EmbeddingSpace::empty(8, 0).unwrap(), Lexicon::new());
    let app = router(Arc::new(RwLock::new(engine)));
    let (status, body) = call(&app, Method::POST, "/api/recommend", Some(json!({"text": "hello"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "EmptySpace");
}

#[tokio::test]
async fn bubble_endpoints_are_read_only() {
    let (app, engine) = app();
    let before = engine.read().await.graph.to_text();

    let (status, list) = call(&app, Method::GET, "/api/bubbles", None).await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<&str> = list.as_array().unwrap().iter().map(|b| b["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["A", "B"]);
    assert_eq!(list[0]["member_count"], 4);

    let (status, detail) = call(&app, Method::GET, "/api/bubbles/A", None).await;
    assert_eq!(status, StatusCode::OK);
    let kinds: Vec<&str> = detail["members"].as_array().unwrap().iter().map(|m| m["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds.first(), Some(&"summary"));
    assert!(detail["members"].as_array().unwrap().iter().any(|m| m["text"]
        .as_str()
        .unwrap()
        .contains("Loch Ness")));

    let (status, body) = call(&app, Method::GET, "/api/bubbles/Z", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "UnknownBubble");

    call(&app, Method::GET, "/api/config", None).await;
    assert_eq!(engine.read().await.graph.to_text(), before);
}

#[tokio::test]
async fn config_updates_are_validated_and_live() {
    let (app, engine) = app();
    let (status, cfg) = call(&app, Method::GET, "/api/config", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(cfg, json!({"alpha": 0.7, "tau1": 0.7, "tau2": 0.7, "k": 5}));

    let (status, body) = call(&app, Method::PUT, "/api/config", Some(json!({"alpha": 1.5}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "AlphaOutOfRange");
    let (status, body) = call(&app, Method::PUT, "/api/config", Some(json!({"tau2": -3.0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "TauOutOfRange");

    let (status, cfg) = call(&app, Method::PUT, "/api/config", Some(json!({"alpha": 0.25, "tau1": 0.5}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(cfg["alpha"], 0.25);
    assert_eq!(cfg["tau1"], 0.5);
    assert_eq!(cfg["tau2"], 0.7);
    assert_eq!(engine.read().await.config.recommend.alpha, 0.25);
}
