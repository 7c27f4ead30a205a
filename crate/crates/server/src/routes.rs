use std::collections::BTreeMap;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use codm_core::{
    ChatMessage, DecodingProfile, Encounter, FeedbackRecord, FeedbackTally, GenerationRecord,
    InterfaceKind, Polarity, Setting, ThreadView, Transcript,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::openapi;
use crate::state::SharedState;

const DEFAULT_USER: &str = "dm";

/// JSON request body. An empty body reads as `{}`, so endpoints whose
/// fields are all optional can be called without one.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(e.status(), "invalid_body", e.body_text()))?;
        let raw: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) {
            b"{}"
        } else {
            &bytes
        };
        serde_json::from_slice(raw)
            .map(Body)
            .map_err(|e| ApiError::unprocessable(format!("invalid request body: {e}")))
    }
}

/// A generation as returned to clients. The prompt is included only when
/// asked for.
#[derive(Debug, Serialize, Deserialize)]
pub struct GenerationView {
    pub id: String,
    pub kind: InterfaceKind,
    pub output_text: String,
    pub provider: String,
    pub latency_ms: u64,
    pub attempts: u32,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thread_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encounter_id: Option<String>,
    pub profile: DecodingProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<Vec<ChatMessage>>,
}

impl GenerationView {
    fn new(r: GenerationRecord, debug: bool) -> Self {
        Self {
            id: r.id,
            kind: r.bundle.kind,
            output_text: r.output_text,
            provider: r.provider,
            latency_ms: r.latency_ms,
            attempts: r.attempts,
            created_at: r.created_at,
            thread_id: r.thread_id,
            encounter_id: r.encounter_id,
            profile: r.bundle.profile,
            prompt: debug.then_some(r.bundle.messages),
        }
    }
}

pub fn router(state: SharedState) -> Router {
    let api = Router::new()
        .route("/openapi.json", get(openapi_doc))
        .route("/settings", get(list_settings))
        .route("/tables", get(list_tables))
        .route("/encounters/roll", post(roll))
        .route("/encounters/{id}", get(get_encounter))
        .route("/encounters/{id}/understand", post(understand))
        .route("/encounters/{id}/brainstorm", post(brainstorm))
        .route("/chat", post(open_chat))
        .route("/threads/{id}", get(get_thread))
        .route("/threads/{id}/messages", post(post_message))
        .route("/threads/{id}/retry", post(retry))
        .route("/threads/{id}/pending", delete(discard_pending))
        .route("/threads/{id}/reopen", post(reopen))
        .route("/threads/{id}/export", get(export))
        .route("/generations/{id}", get(get_generation))
        .route("/generations/{id}/feedback", post(feedback))
        .route("/feedback/tallies", get(tallies))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/health", get(health))
        .merge(api)
        .fallback(not_found)
        .with_state(state)
}

async fn require_token(State(state): State<SharedState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.auth_token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or wrong bearer token",
            )
            .into_response();
        }
    }
    next.run(req).await
}

async fn not_found() -> ApiError {
    ApiError::not_found("no_route", "no such endpoint")
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    provider: String,
    monsters: usize,
    settings: usize,
}

async fn health(State(state): State<SharedState>) -> Json<Health> {
    let kb = state.session.knowledge_base();
    Json(Health {
        status: "ok",
        provider: state.session.provider_name().to_string(),
        monsters: kb.monster_count(),
        settings: kb.setting_count(),
    })
}

async fn openapi_doc() -> Json<serde_json::Value> {
    Json(openapi::document())
}

async fn list_settings(State(state): State<SharedState>) -> Json<Vec<Setting>> {
    Json(state.session.knowledge_base().settings().cloned().collect())
}

#[derive(Serialize)]
struct TableList {
    default: String,
    tables: Vec<String>,
}

async fn list_tables(State(state): State<SharedState>) -> Json<TableList> {
    Json(TableList {
        default: state.default_table.clone(),
        tables: state.tables.keys().cloned().collect(),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RollRequest {
    #[serde(default)]
    table: Option<String>,
    setting_id: String,
    #[serde(default)]
    seed: Option<u64>,
}

async fn roll(
    State(state): State<SharedState>,
    Body(req): Body<RollRequest>,
) -> Result<Json<Encounter>, ApiError> {
    let name = req.table.as_deref().unwrap_or(&state.default_table);
    let table = state
        .tables
        .get(name)
        .ok_or_else(|| ApiError::not_found("unknown_table", format!("unknown table `{name}`")))?;
    Ok(Json(state.session.roll_encounter(
        table,
        &req.setting_id,
        req.seed,
    )?))
}

async fn get_encounter(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Json<Encounter>, ApiError> {
    Ok(Json(state.session.encounter(&id)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UnderstandRequest {
    variant: String,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    debug: bool,
}

async fn understand(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Body(req): Body<UnderstandRequest>,
) -> Result<Json<GenerationView>, ApiError> {
    let variant: InterfaceKind = req.variant.parse().map_err(|_| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_variant",
            format!("unknown variant `{}`", req.variant),
        )
    })?;
    let record = state.session.understand(&id, variant, req.seed).await?;
    Ok(Json(GenerationView::new(record, req.debug)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BrainstormRequest {
    #[serde(default)]
    include_summary: bool,
    #[serde(default)]
    user: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
}

async fn brainstorm(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Body(req): Body<BrainstormRequest>,
) -> Result<(StatusCode, Json<ThreadView>), ApiError> {
    let user = req.user.as_deref().unwrap_or(DEFAULT_USER);
    let thread = state
        .session
        .open_brainstorm(&id, req.include_summary, user, req.seed)?;
    Ok((StatusCode::CREATED, Json(thread)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatRequest {
    #[serde(default)]
    user: Option<String>,
}

async fn open_chat(
    State(state): State<SharedState>,
    Body(req): Body<ChatRequest>,
) -> Result<(StatusCode, Json<ThreadView>), ApiError> {
    let user = req.user.as_deref().unwrap_or(DEFAULT_USER);
    Ok((StatusCode::CREATED, Json(state.session.open_chat(user)?)))
}

async fn get_thread(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Json<ThreadView>, ApiError> {
    Ok(Json(state.session.thread(&id)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageRequest {
    text: String,
    #[serde(default)]
    user: Option<String>,
}

async fn post_message(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Body(req): Body<MessageRequest>,
) -> Result<Json<GenerationView>, ApiError> {
    let user = req.user.as_deref().unwrap_or(DEFAULT_USER);
    let record = state
        .session
        .post_user_message(&id, user, &req.text)
        .await?;
    Ok(Json(GenerationView::new(record, false)))
}

async fn retry(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Json<GenerationView>, ApiError> {
    let record = state.session.retry_pending(&id).await?;
    Ok(Json(GenerationView::new(record, false)))
}

async fn discard_pending(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    state.session.discard_pending(&id).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn reopen(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Json<ThreadView>, ApiError> {
    Ok(Json(state.session.reopen_thread(&id)?))
}

async fn export(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Json<Transcript>, ApiError> {
    Ok(Json(state.session.export_transcript(&id)?))
}

#[derive(Deserialize)]
struct DebugQuery {
    #[serde(default)]
    debug: bool,
}

async fn get_generation(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Query(q): Query<DebugQuery>,
) -> Result<Json<GenerationView>, ApiError> {
    Ok(Json(GenerationView::new(
        state.session.generation(&id)?,
        q.debug,
    )))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackRequest {
    polarity: String,
    #[serde(default)]
    comment: Option<String>,
    #[serde(default)]
    user: Option<String>,
}

async fn feedback(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Body(req): Body<FeedbackRequest>,
) -> Result<(StatusCode, Json<FeedbackRecord>), ApiError> {
    let polarity = Polarity::parse(&req.polarity).ok_or_else(|| {
        ApiError::unprocessable(format!(
            "polarity must be `positive` or `negative`, got `{}`",
            req.polarity
        ))
    })?;
    let user = req.user.as_deref().unwrap_or(DEFAULT_USER);
    let record = state
        .session
        .record_feedback(&id, user, polarity, req.comment)?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn tallies(
    State(state): State<SharedState>,
) -> Result<Json<BTreeMap<InterfaceKind, FeedbackTally>>, ApiError> {
    let mut out = BTreeMap::new();
    for kind in InterfaceKind::ALL {
        out.insert(kind, state.session.tally_feedback(kind)?);
    }
    Ok(Json(out))
}
