use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use codm_core::{EncounterError, GatewayError, SessionError};
use serde::Serialize;
use serde_json::json;

/// Error body: `{"error": {"code", "message", "retry"?}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub retry: Option<RetryInfo>,
}

/// Sent with provider failures so clients can decide whether to resend.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RetryInfo {
    pub attempts: u32,
    pub retryable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retry_after_secs: Option<f64>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            retry: None,
        }
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", message)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        use SessionError as S;
        let message = e.to_string();
        let (status, code) = match &e {
            S::UnknownEncounter(_) => (StatusCode::NOT_FOUND, "unknown_encounter"),
            S::UnknownSetting(_) => (StatusCode::NOT_FOUND, "unknown_setting"),
            S::UnknownThread(_) => (StatusCode::NOT_FOUND, "unknown_thread"),
            S::UnknownGeneration(_) => (StatusCode::NOT_FOUND, "unknown_generation"),
            S::NoSummary(_) => (StatusCode::CONFLICT, "no_summary"),
            S::ThreadBusy(_) => (StatusCode::CONFLICT, "thread_busy"),
            S::ThreadClosed(_) => (StatusCode::CONFLICT, "thread_closed"),
            S::RetryPending(_) => (StatusCode::CONFLICT, "retry_pending"),
            S::NothingToRetry(_) => (StatusCode::CONFLICT, "nothing_to_retry"),
            S::DuplicateFeedback { .. } => (StatusCode::CONFLICT, "duplicate_feedback"),
            S::NotParticipant { .. } => (StatusCode::FORBIDDEN, "not_participant"),
            S::EmptyMessage => (StatusCode::UNPROCESSABLE_ENTITY, "empty_message"),
            S::ToolInvocation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "tool_invocation"),
            S::InvalidVariant(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_variant"),
            S::Encounter(EncounterError::EmptyTable) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "empty_table")
            }
            S::Encounter(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_table"),
            S::Prompt(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_prompt"),
            S::Gateway(GatewayError::Provider { attempts, source }) => {
                return ApiError {
                    status: StatusCode::BAD_GATEWAY,
                    code: "provider_error",
                    message,
                    retry: Some(RetryInfo {
                        attempts: *attempts,
                        retryable: source.is_transient(),
                        retry_after_secs: source.retry_after().map(|d| d.as_secs_f64()),
                    }),
                };
            }
            S::Gateway(_) | S::Store(_) => {
                tracing::error!(error = %e, "internal error");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        ApiError::new(status, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code, "message": self.message });
        if let Some(retry) = self.retry {
            error["retry"] = serde_json::to_value(retry).expect("retry info serializes");
        }
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}
