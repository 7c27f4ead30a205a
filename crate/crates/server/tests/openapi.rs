//! Keeps the served API description in step with the router and with the
//! bodies the handlers actually return.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request};
use codm_server::openapi::{document, ENDPOINTS};
use codm_server::{router, ApiConfig, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(dir: &tempfile::TempDir) -> axum::Router {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mut cfg = ApiConfig::load(&root.join("codm.toml")).unwrap();
    cfg.database = dir.path().join("db.sqlite3");
    cfg.auth_token_env = None;
    router(Arc::new(AppState::from_config(&cfg).unwrap()))
}

#[test]
fn every_routed_path_is_documented_and_vice_versa() {
    let src =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/routes.rs")).unwrap();
    let mut routed = BTreeSet::new();
    for chunk in src.split(".route(").skip(1) {
        let chunk = chunk.trim_start().strip_prefix('"').unwrap();
        let (path, rest) = chunk.split_once('"').unwrap();
        let rest = rest.trim_start_matches(',').trim_start();
        let method = rest
            .trim_start_matches("axum::routing::")
            .split('(')
            .next()
            .unwrap()
            .to_string();
        routed.insert((method, path.to_string()));
    }
    let documented: BTreeSet<(String, String)> = ENDPOINTS
        .iter()
        .map(|(m, p, ..)| (m.to_string(), p.to_string()))
        .collect();
    assert_eq!(routed, documented);

    let doc = document();
    for (method, path) in &documented {
        assert!(doc["paths"][path][method].is_object(), "{method} {path}");
    }
    // every referenced schema exists
    let text = doc.to_string();
    for r in text.split("\"#/components/schemas/").skip(1) {
        let name = r.split('"').next().unwrap();
        assert!(
            doc["components"]["schemas"][name].is_object(),
            "missing schema {name}"
        );
    }
}

struct Checker {
    app: axum::Router,
    doc: Value,
    covered: BTreeSet<(String, String)>,
}

impl Checker {
    /// Calls the endpoint and validates the body against its documented
    /// success or error schema.
    async fn call(
        &mut self,
        method: Method,
        template: &str,
        id: Option<&str>,
        body: Option<Value>,
    ) -> Value {
        let uri = match id {
            Some(id) => template.replace("{id}", id),
            None => template.to_string(),
        };
        let mut req = Request::builder().method(method.clone()).uri(&uri);
        if body.is_some() {
            req = req.header("content-type", "application/json");
        }
        let body = body.map_or_else(Body::empty, |v| Body::from(v.to_string()));
        let resp = self
            .app
            .clone()
            .oneshot(req.body(body).unwrap())
            .await
            .unwrap();
        let status = resp.status();
        let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX)
            .await
            .unwrap();
        let value: Value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap()
        };

        let path = template.split('?').next().unwrap();
        let m = method.as_str().to_ascii_lowercase();
        let op = &self.doc["paths"][path][&m];
        assert!(op.is_object(), "undocumented {m} {path}");
        let key = if status.is_success() {
            status.as_u16().to_string()
        } else {
            "default".into()
        };
        let resp_doc = &op["responses"][&key];
        assert!(
            resp_doc.is_object(),
            "{m} {path} returned undocumented status {status}: {value}"
        );
        if let Some(reference) = resp_doc["content"]["application/json"]["schema"]["$ref"].as_str()
        {
            let schema = json!({
                "$ref": reference,
                "components": self.doc["components"].clone(),
            });
            let validator = jsonschema::validator_for(&schema).unwrap();
            let errors: Vec<String> = validator
                .iter_errors(&value)
                .map(|e| e.to_string())
                .collect();
            assert!(errors.is_empty(), "{m} {path}: {errors:?}\n{value}");
        }
        if status.is_success() {
            self.covered.insert((m, path.to_string()));
        }
        value
    }
}

#[tokio::test]
async fn responses_match_documented_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = Checker {
        app: app(&dir),
        doc: document(),
        covered: BTreeSet::new(),
    };
    use Method as M;
    let served = c.call(M::GET, "/openapi.json", None, None).await;
    assert_eq!(served, c.doc);
    c.call(M::GET, "/health", None, None).await;
    c.call(M::GET, "/settings", None, None).await;
    c.call(M::GET, "/tables", None, None).await;

    let enc = c
        .call(
            M::POST,
            "/encounters/roll",
            None,
            Some(json!({"setting_id": "autumn-forest", "table": "blink-dogs"})),
        )
        .await;
    let eid = enc["id"].as_str().unwrap().to_string();
    c.call(M::GET, "/encounters/{id}", Some(&eid), None).await;
    let und = c
        .call(
            M::POST,
            "/encounters/{id}/understand",
            Some(&eid),
            Some(json!({"variant": "understand", "debug": true})),
        )
        .await;
    let thread = c
        .call(
            M::POST,
            "/encounters/{id}/brainstorm",
            Some(&eid),
            Some(json!({"include_summary": true})),
        )
        .await;
    let tid = thread["id"].as_str().unwrap().to_string();
    c.call(
        M::POST,
        "/threads/{id}/messages",
        Some(&tid),
        Some(json!({"text": "Describe this scene"})),
    )
    .await;
    c.call(M::GET, "/threads/{id}", Some(&tid), None).await;
    c.call(M::GET, "/threads/{id}/export", Some(&tid), None)
        .await;
    c.call(M::POST, "/threads/{id}/reopen", Some(&tid), None)
        .await;
    let gid = und["id"].as_str().unwrap().to_string();
    c.call(M::GET, "/generations/{id}", Some(&gid), None).await;
    c.call(
        M::POST,
        "/generations/{id}/feedback",
        Some(&gid),
        Some(json!({"polarity": "positive", "comment": "good"})),
    )
    .await;
    c.call(M::GET, "/feedback/tallies", None, None).await;
    let chat = c
        .call(M::POST, "/chat", None, Some(json!({"user": "alice"})))
        .await;
    let cid = chat["id"].as_str().unwrap().to_string();

    // error bodies follow the error schema too
    c.call(M::POST, "/threads/{id}/retry", Some(&cid), None)
        .await;
    c.call(M::DELETE, "/threads/{id}/pending", Some(&cid), None)
        .await;
    c.call(M::GET, "/threads/{id}", Some("missing"), None).await;
    c.call(
        M::POST,
        "/encounters/roll",
        None,
        Some(json!({"setting_id": 3})),
    )
    .await;

    // endpoints only reachable on the failure path
    let mut expected: BTreeSet<(String, String)> = ENDPOINTS
        .iter()
        .map(|(m, p, ..)| (m.to_string(), p.to_string()))
        .collect();
    expected.remove(&("post".into(), "/threads/{id}/retry".into()));
    expected.remove(&("delete".into(), "/threads/{id}/pending".into()));
    assert_eq!(c.covered, expected);
}

#[test]
fn schema_validation_rejects_wrong_bodies() {
    let doc = document();
    let schema =
        json!({"$ref": "#/components/schemas/Encounter", "components": doc["components"].clone()});
    let v = jsonschema::validator_for(&schema).unwrap();
    assert!(!v.is_valid(&json!({})));
    assert!(!v.is_valid(
        &json!({"id": 1, "setting_id": "a", "rolled": [], "rendered": "", "created_at": ""})
    ));
    assert!(v.is_valid(
        &json!({"id": "e", "setting_id": "a", "rolled": [], "rendered": "", "created_at": "t"})
    ));
}
