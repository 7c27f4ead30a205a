//! The OpenAI-compatible provider against a local stub server.

mod common;

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use codm_core::gateway::{OpenAiCompatConfig, OpenAiCompatProvider};
use codm_core::{
    ChatMessage, ChatProvider, DecodingProfile, Gateway, GenerationContext, InterfaceKind,
    PromptBundle, ProviderError, Store,
};
use serde_json::{json, Value};

/// Authorization header and body of one received request.
type Seen = (Option<String>, Value);
/// Status, extra headers and body of one scripted reply.
type Reply = (u16, Vec<(&'static str, &'static str)>, Value);

#[derive(Clone, Default)]
struct Stub {
    seen: Arc<Mutex<Vec<Seen>>>,
    script: Arc<Mutex<VecDeque<Reply>>>,
}

async fn completions(
    State(stub): State<Stub>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> Response {
    let auth = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    stub.seen.lock().unwrap().push((auth, body.clone()));
    let next = stub.script.lock().unwrap().pop_front();
    match next {
        Some((status, extra, payload)) => {
            let mut resp = (StatusCode::from_u16(status).unwrap(), Json(payload)).into_response();
            for (k, v) in extra {
                resp.headers_mut().insert(k, v.parse().unwrap());
            }
            resp
        }
        None => {
            let last = body["messages"].as_array().unwrap().last().unwrap()["content"].clone();
            Json(json!({"choices": [{"message": {"role": "assistant", "content": format!("echo: {}", last.as_str().unwrap())}}]}))
                .into_response()
        }
    }
}

async fn serve(stub: Stub) -> String {
    let app = Router::new()
        .route("/v1/chat/completions", post(completions))
        .with_state(stub);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}/v1")
}

fn provider(base_url: String) -> OpenAiCompatProvider {
    OpenAiCompatProvider::new(OpenAiCompatConfig {
        base_url,
        api_key: Some("sk-test".into()),
        timeout: Duration::from_secs(5),
    })
    .unwrap()
}

fn bundle() -> PromptBundle {
    PromptBundle::new(
        InterfaceKind::Brainstorm,
        vec![
            ChatMessage::system("You are a creative D&D player and DM named Calypso.").unwrap(),
            ChatMessage::user("Describe this scene").unwrap(),
        ],
        DecodingProfile::published(InterfaceKind::Brainstorm).with_model("chat-model"),
    )
    .unwrap()
}

#[tokio::test]
async fn sends_messages_and_profile() {
    let stub = Stub::default();
    let p = provider(serve(stub.clone()).await);
    let out = p.complete(&bundle()).await.unwrap();
    assert_eq!(out, "echo: Describe this scene");
    let seen = stub.seen.lock().unwrap();
    let (auth, body) = &seen[0];
    assert_eq!(auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(body["model"], "chat-model");
    assert_eq!(body["temperature"], 1.0);
    assert_eq!(body["top_p"], 0.95);
    assert_eq!(body["frequency_penalty"], 0.3);
    assert_eq!(body["presence_penalty"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["role"], "user");
}

#[tokio::test]
async fn maps_error_statuses() {
    let stub = Stub::default();
    let p = provider(serve(stub.clone()).await);
    let err = json!({"error": "nope"});
    {
        let mut s = stub.script.lock().unwrap();
        s.push_back((401, vec![], err.clone()));
        s.push_back((429, vec![("retry-after", "3")], err.clone()));
        s.push_back((400, vec![], err.clone()));
        s.push_back((503, vec![], err.clone()));
        s.push_back((504, vec![], err.clone()));
        s.push_back((200, vec![], json!({"choices": []})));
    }
    let b = bundle();
    assert!(matches!(p.complete(&b).await, Err(ProviderError::Auth(_))));
    assert_eq!(
        p.complete(&b).await,
        Err(ProviderError::RateLimit {
            retry_after: Some(Duration::from_secs(3))
        })
    );
    assert!(matches!(
        p.complete(&b).await,
        Err(ProviderError::InvalidRequest(_))
    ));
    let e = p.complete(&b).await.unwrap_err();
    assert!(matches!(
        e,
        ProviderError::Upstream {
            status: Some(503),
            retryable: true,
            ..
        }
    ));
    assert_eq!(p.complete(&b).await, Err(ProviderError::Timeout));
    let e = p.complete(&b).await.unwrap_err();
    assert!(!e.is_transient());
}

#[tokio::test]
async fn unreachable_server_is_transient() {
    let p = provider("http://127.0.0.1:9/v1".into());
    let e = p.complete(&bundle()).await.unwrap_err();
    assert!(e.is_transient(), "{e:?}");
}

#[tokio::test]
async fn gateway_retries_server_errors_then_persists() {
    let stub = Stub::default();
    let base = serve(stub.clone()).await;
    stub.script
        .lock()
        .unwrap()
        .push_back((502, vec![], json!({})));
    let store = Arc::new(Store::open_in_memory().unwrap());
    let gw = Gateway::new(
        Arc::new(provider(base)),
        store.clone(),
        common::fast_gateway_config(),
    );
    let rec = gw
        .generate(bundle(), GenerationContext::default())
        .await
        .unwrap();
    assert_eq!(rec.attempts, 2);
    assert_eq!(rec.provider, "openai-compatible");
    assert_eq!(store.generation(&rec.id).unwrap().unwrap(), rec);
    assert_eq!(stub.seen.lock().unwrap().len(), 2);
}
