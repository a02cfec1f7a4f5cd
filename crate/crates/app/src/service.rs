//! JSON HTTP service over a shared [`Engine`].
//!
//! Reads take a shared lock; chat, recommend and config updates take the
//! write lock, so mutating requests are applied one at a time.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bubblekg_core::{BubbleId, EntityId, EntityKind};
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;

use crate::engine::{Engine, EngineError};

pub type SharedEngine = Arc<RwLock<Engine>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

pub struct ErrorResponse(StatusCode, ApiError);

impl ErrorResponse {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ErrorResponse(
            status,
            ApiError {
                code: code.to_owned(),
                message: message.into(),
            },
        )
    }
}

impl From<EngineError> for ErrorResponse {
    fn from(e: EngineError) -> Self {
        let code = e.code();
        let status = match code {
            "EmptyInput" | "InvalidConfig" => StatusCode::BAD_REQUEST,
            "EmptySpace" => StatusCode::CONFLICT,
            "NoCandidates" | "NoBubbles" => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ErrorResponse::new(status, code, e.to_string())
    }
}

impl IntoResponse for ErrorResponse {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ErrorResponse>;

/// Unwraps a JSON body, turning axum's rejection into the shared error shape.
fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ErrorResponse> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ErrorResponse::new(StatusCode::BAD_REQUEST, "BadRequest", e.body_text()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextRequest {
    pub text: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleSummary {
    pub id: BubbleId,
    pub character: String,
    pub summary: String,
    pub member_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub id: EntityId,
    pub kind: EntityKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleDetail {
    pub id: BubbleId,
    pub character: String,
    /// Summary first, then facts, then utterances.
    pub members: Vec<Member>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub alpha: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub k: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub alpha: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
}

async fn chat(State(engine): State<SharedEngine>, payload: Result<Json<TextRequest>, JsonRejection>) -> ApiResult<crate::engine::TurnTrace> {
    let req = body(payload)?;
    let mut engine = engine.write().await;
    Ok(Json(engine.chat_turn(&req.text)?))
}

async fn recommend(
    State(engine): State<SharedEngine>,
    payload: Result<Json<TextRequest>, JsonRejection>,
) -> ApiResult<bubblekg_core::Recommendation> {
    let req = body(payload)?;
    let mut engine = engine.write().await;
    let mut cfg = engine.config.recommend.clone();
    if let Some(k) = req.k {
        cfg.k = k;
    }
    if let Some(alpha) = req.alpha {
        cfg.alpha = alpha;
    }
    cfg.validate().map_err(EngineError::from)?;
    Ok(Json(engine.recommend(&req.text, &cfg)?))
}

async fn list_bubbles(State(engine): State<SharedEngine>) -> ApiResult<Vec<BubbleSummary>> {
    let engine = engine.read().await;
    let g = &engine.graph;
    Ok(Json(
        g.bubbles()
            .map(|b| BubbleSummary {
                id: b.id.clone(),
                character: b.character.clone(),
                summary: g.entity(b.summary).map(|e| e.text.clone()).unwrap_or_default(),
                member_count: b.members.len(),
            })
            .collect(),
    ))
}

fn kind_order(kind: EntityKind) -> u8 {
    match kind {
        EntityKind::Summary => 0,
        EntityKind::Fact => 1,
        EntityKind::Utterance => 2,
        EntityKind::Concept => 3,
    }
}

async fn bubble(State(engine): State<SharedEngine>, Path(id): Path<String>) -> ApiResult<BubbleDetail> {
    let engine = engine.read().await;
    let g = &engine.graph;
    let b = g
        .bubble(&BubbleId::from(id.as_str()))
        .ok_or_else(|| ErrorResponse::new(StatusCode::NOT_FOUND, "UnknownBubble", format!("no bubble {id:?}")))?;
    let mut members: Vec<Member> = b
        .members
        .iter()
        .filter_map(|&m| g.entity(m))
        .map(|e| Member {
            id: e.id,
            kind: e.kind,
            text: e.text.clone(),
        })
        .collect();
    members.sort_by_key(|m| kind_order(m.kind));
    Ok(Json(BubbleDetail {
        id: b.id.clone(),
        character: b.character.clone(),
        members,
    }))
}

fn live(engine: &Engine) -> LiveConfig {
    let r = &engine.config.recommend;
    LiveConfig {
        alpha: r.alpha,
        tau1: r.tau_summary,
        tau2: r.tau_member,
        k: r.k,
    }
}

async fn get_config(State(engine): State<SharedEngine>) -> ApiResult<LiveConfig> {
    Ok(Json(live(&*engine.read().await)))
}

async fn put_config(State(engine): State<SharedEngine>, payload: Result<Json<ConfigPatch>, JsonRejection>) -> ApiResult<LiveConfig> {
    let patch = body(payload)?;
    if let Some(alpha) = patch.alpha.filter(|a| !(0.0..=1.0).contains(a)) {
        return Err(ErrorResponse::new(
            StatusCode::BAD_REQUEST,
            "AlphaOutOfRange",
            format!("alpha {alpha} outside [0, 1]"),
        ));
    }
    for (name, tau) in [("tau1", patch.tau1), ("tau2", patch.tau2)] {
        if let Some(t) = tau.filter(|t| !(-1.0..=1.0).contains(t)) {
            return Err(ErrorResponse::new(
                StatusCode::BAD_REQUEST,
                "TauOutOfRange",
                format!("{name} {t} outside [-1, 1]"),
            ));
        }
    }
    let mut engine = engine.write().await;
    let r = &mut engine.config.recommend;
    if let Some(a) = patch.alpha {
        r.alpha = a;
    }
    if let Some(t) = patch.tau1 {
        r.tau_summary = t;
    }
    if let Some(t) = patch.tau2 {
        r.tau_member = t;
    }
    Ok(Json(live(&engine)))
}

async fn last_trace(State(engine): State<SharedEngine>) -> ApiResult<crate::engine::TurnTrace> {
    let engine = engine.read().await;
    engine
        .last_trace()
        .cloned()
        .map(Json)
        .ok_or_else(|| ErrorResponse::new(StatusCode::NOT_FOUND, "NoTrace", "no chat turn yet"))
}

pub fn router(engine: SharedEngine) -> Router {
    Router::new()
        .route("/api/chat", post(chat))
        .route("/api/recommend", post(recommend))
        .route("/api/bubbles", get(list_bubbles))
        .route("/api/bubbles/{id}", get(bubble))
        .route("/api/config", get(get_config).put(put_config))
        .route("/api/trace/last", get(last_trace))
        .with_state(engine)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(engine: Engine, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(RwLock::new(engine)))).await
}
