//! Machine-readable description of the HTTP API, served at `/openapi.json`.

use serde_json::{json, Value};

/// (method, path, summary, request schema, success status, response schema)
pub type Endpoint = (
    &'static str,
    &'static str,
    &'static str,
    Option<&'static str>,
    u16,
    Option<&'static str>,
);

pub const ENDPOINTS: &[Endpoint] = &[
    (
        "get",
        "/health",
        "Liveness and corpus size",
        None,
        200,
        Some("Health"),
    ),
    ("get", "/openapi.json", "This document", None, 200, None),
    (
        "get",
        "/settings",
        "Settings available for encounters",
        None,
        200,
        Some("SettingList"),
    ),
    (
        "get",
        "/tables",
        "Configured encounter tables",
        None,
        200,
        Some("TableList"),
    ),
    (
        "post",
        "/encounters/roll",
        "Roll a random encounter",
        Some("RollRequest"),
        200,
        Some("Encounter"),
    ),
    (
        "get",
        "/encounters/{id}",
        "Fetch a rolled encounter",
        None,
        200,
        Some("Encounter"),
    ),
    (
        "post",
        "/encounters/{id}/understand",
        "Generate a summary or an understanding of an encounter",
        Some("UnderstandRequest"),
        200,
        Some("Generation"),
    ),
    (
        "post",
        "/encounters/{id}/brainstorm",
        "Open a private brainstorming thread for an encounter",
        Some("BrainstormRequest"),
        201,
        Some("Thread"),
    ),
    (
        "post",
        "/chat",
        "Open a public chat thread",
        Some("ChatRequest"),
        201,
        Some("Thread"),
    ),
    (
        "get",
        "/threads/{id}",
        "Fetch a thread with its history",
        None,
        200,
        Some("Thread"),
    ),
    (
        "post",
        "/threads/{id}/messages",
        "Post a message and get the reply",
        Some("MessageRequest"),
        200,
        Some("Generation"),
    ),
    (
        "post",
        "/threads/{id}/retry",
        "Resend the thread's failed message",
        None,
        200,
        Some("Generation"),
    ),
    (
        "delete",
        "/threads/{id}/pending",
        "Drop the thread's failed message",
        None,
        204,
        None,
    ),
    (
        "post",
        "/threads/{id}/reopen",
        "Reopen a closed thread",
        None,
        200,
        Some("Thread"),
    ),
    (
        "get",
        "/threads/{id}/export",
        "Portable transcript of a thread",
        None,
        200,
        Some("Transcript"),
    ),
    (
        "get",
        "/generations/{id}",
        "Fetch a generation; `?debug=true` adds the prompt",
        None,
        200,
        Some("Generation"),
    ),
    (
        "post",
        "/generations/{id}/feedback",
        "Rate a generation",
        Some("FeedbackRequest"),
        201,
        Some("Feedback"),
    ),
    (
        "get",
        "/feedback/tallies",
        "Feedback counts per interface",
        None,
        200,
        Some("Tallies"),
    ),
];

fn schemas() -> Value {
    let s = |t: &str| json!({ "type": t });
    let str_opt = json!({ "type": ["string", "null"] });
    let message = json!({
        "type": "object",
        "required": ["role", "content"],
        "properties": { "role": { "enum": ["system", "user", "assistant"] }, "content": s("string") }
    });
    let kind = json!({ "enum": ["summarization", "understanding", "brainstorm", "open_chat"] });
    let tally = json!({
        "type": "object",
        "required": ["positive", "negative", "total_encounters"],
        "properties": { "positive": s("integer"), "negative": s("integer"), "total_encounters": s("integer") }
    });
    json!({
        "Error": {
            "type": "object",
            "required": ["error"],
            "properties": { "error": {
                "type": "object",
                "required": ["code", "message"],
                "properties": {
                    "code": s("string"),
                    "message": s("string"),
                    "retry": {
                        "type": "object",
                        "required": ["attempts", "retryable"],
                        "properties": { "attempts": s("integer"), "retryable": s("boolean"), "retry_after_secs": s("number") }
                    }
                }
            }}
        },
        "Health": {
            "type": "object",
            "required": ["status", "provider", "monsters", "settings"],
            "properties": { "status": s("string"), "provider": s("string"), "monsters": s("integer"), "settings": s("integer") }
        },
        "Setting": {
            "type": "object",
            "required": ["id", "name", "description", "tags"],
            "properties": { "id": s("string"), "name": s("string"), "description": s("string"), "tags": { "type": "array", "items": s("string") } }
        },
        "SettingList": { "type": "array", "items": { "$ref": "#/components/schemas/Setting" } },
        "TableList": {
            "type": "object",
            "required": ["default", "tables"],
            "properties": { "default": s("string"), "tables": { "type": "array", "items": s("string") } }
        },
        "RollRequest": {
            "type": "object",
            "required": ["setting_id"],
            "properties": { "setting_id": s("string"), "table": s("string"), "seed": s("integer") }
        },
        "Encounter": {
            "type": "object",
            "required": ["id", "setting_id", "rolled", "rendered", "created_at"],
            "properties": {
                "id": s("string"),
                "setting_id": s("string"),
                "rendered": s("string"),
                "flavor": s("string"),
                "created_at": s("string"),
                "rolled": { "type": "array", "items": {
                    "type": "object",
                    "required": ["monster_id", "name", "quantity"],
                    "properties": { "monster_id": s("string"), "name": s("string"), "quantity": s("integer") }
                }}
            }
        },
        "UnderstandRequest": {
            "type": "object",
            "required": ["variant"],
            "properties": {
                "variant": { "enum": ["summarize", "understand", "summarization", "understanding"] },
                "seed": s("integer"),
                "debug": s("boolean")
            }
        },
        "Profile": {
            "type": "object",
            "required": ["temperature", "top_p", "frequency_penalty", "presence_penalty", "max_tokens", "model_id"],
            "properties": {
                "temperature": s("number"), "top_p": s("number"), "frequency_penalty": s("number"),
                "presence_penalty": s("number"), "max_tokens": s("integer"), "model_id": s("string")
            }
        },
        "Generation": {
            "type": "object",
            "required": ["id", "kind", "output_text", "provider", "latency_ms", "attempts", "created_at", "profile"],
            "properties": {
                "id": s("string"), "kind": kind, "output_text": s("string"), "provider": s("string"),
                "latency_ms": s("integer"), "attempts": s("integer"), "created_at": s("string"),
                "thread_id": s("string"), "encounter_id": s("string"),
                "profile": { "$ref": "#/components/schemas/Profile" },
                "prompt": { "type": "array", "items": message }
            }
        },
        "BrainstormRequest": {
            "type": "object",
            "properties": { "include_summary": s("boolean"), "user": s("string"), "seed": s("integer") }
        },
        "ChatRequest": { "type": "object", "properties": { "user": s("string") } },
        "Thread": {
            "type": "object",
            "required": ["id", "kind", "visibility", "status", "seed_len", "history", "round_count", "participants", "created_at", "last_activity"],
            "properties": {
                "id": s("string"), "kind": { "enum": ["brainstorm", "open_chat"] }, "encounter_id": s("string"),
                "visibility": { "enum": ["private", "public"] }, "status": { "enum": ["open", "closed"] },
                "seed_len": s("integer"), "history": { "type": "array", "items": message },
                "round_count": s("integer"), "participants": { "type": "array", "items": s("string") },
                "pending_message": s("string"), "created_at": s("string"), "last_activity": s("string")
            }
        },
        "MessageRequest": {
            "type": "object",
            "required": ["text"],
            "properties": { "text": s("string"), "user": s("string") }
        },
        "Transcript": {
            "type": "object",
            "required": ["thread_id", "kind", "round_count", "messages"],
            "properties": {
                "thread_id": s("string"), "kind": { "enum": ["brainstorm", "open_chat"] },
                "encounter_id": s("string"), "encounter": s("string"), "round_count": s("integer"),
                "messages": { "type": "array", "items": {
                    "type": "object",
                    "required": ["seq", "role", "content", "seed", "created_at"],
                    "properties": {
                        "seq": s("integer"), "role": s("string"), "content": s("string"),
                        "user_id": s("string"), "generation_id": s("string"), "seed": s("boolean"), "created_at": s("string")
                    }
                }}
            }
        },
        "FeedbackRequest": {
            "type": "object",
            "required": ["polarity"],
            "properties": { "polarity": { "enum": ["positive", "negative"] }, "comment": s("string"), "user": s("string") }
        },
        "Feedback": {
            "type": "object",
            "required": ["id", "generation_id", "user_id", "polarity", "created_at"],
            "properties": {
                "id": s("string"), "generation_id": s("string"), "user_id": s("string"),
                "polarity": { "enum": ["positive", "negative"] }, "comment": str_opt, "created_at": s("string")
            }
        },
        "Tallies": {
            "type": "object",
            "required": ["summarization", "understanding", "brainstorm", "open_chat"],
            "properties": { "summarization": tally, "understanding": tally, "brainstorm": tally, "open_chat": tally }
        }
    })
}

pub fn document() -> Value {
    let mut paths = serde_json::Map::new();
    for (method, path, summary, request, status, response) in ENDPOINTS {
        let mut op = json!({
            "summary": summary,
            "responses": {
                "default": {
                    "description": "error",
                    "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } }
                }
            }
        });
        let ok = match response {
            Some(name) => json!({
                "description": "success",
                "content": { "application/json": { "schema": { "$ref": format!("#/components/schemas/{name}") } } }
            }),
            None => json!({ "description": "success" }),
        };
        op["responses"][status.to_string()] = ok;
        if let Some(name) = request {
            op["requestBody"] = json!({
                "required": false,
                "content": { "application/json": { "schema": { "$ref": format!("#/components/schemas/{name}") } } }
            });
        }
        if path.contains("{id}") {
            op["parameters"] = json!([{ "name": "id", "in": "path", "required": true, "schema": { "type": "string" } }]);
        }
        paths
            .entry(path.to_string())
            .or_insert_with(|| json!({}))
            .as_object_mut()
            .expect("path item is an object")
            .insert(method.to_string(), op);
    }
    json!({
        "openapi": "3.1.0",
        "info": { "title": "codm", "version": env!("CARGO_PKG_VERSION") },
        "components": {
            "schemas": schemas(),
            "securitySchemes": { "bearer": { "type": "http", "scheme": "bearer" } }
        },
        "paths": paths
    })
}
