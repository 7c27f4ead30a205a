use std::time::Duration;

use async_trait::async_trait;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::{ChatMessage, PromptBundle};

/// Failures reported by a provider for a single attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited{}", .retry_after.map(|d| format!(" (retry after {}s)", d.as_secs_f64())).unwrap_or_default())]
    RateLimit { retry_after: Option<Duration> },
    #[error("request timed out")]
    Timeout,
    #[error("provider rejected the request: {0}")]
    InvalidRequest(String),
    #[error("provider error{}: {message}", .status.map(|s| format!(" {s}")).unwrap_or_default())]
    Upstream {
        status: Option<u16>,
        message: String,
        retryable: bool,
    },
}

impl ProviderError {
    /// Transient failures are retried; credential and content errors never are.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::RateLimit { .. } | ProviderError::Timeout => true,
            ProviderError::Upstream { retryable, .. } => *retryable,
            ProviderError::Auth(_) | ProviderError::InvalidRequest(_) => false,
        }
    }

    pub fn retry_after(&self) -> Option<Duration> {
        match self {
            ProviderError::RateLimit { retry_after } => *retry_after,
            _ => None,
        }
    }
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Sends the bundle's messages and sampling parameters; returns the
    /// completed text.
    async fn complete(&self, bundle: &PromptBundle) -> Result<String, ProviderError>;
}

#[derive(Serialize)]
struct HashView<'a> {
    kind: &'a str,
    messages: &'a [ChatMessage],
    model: &'a str,
    temperature: f64,
    top_p: f64,
    frequency_penalty: f64,
    presence_penalty: f64,
    max_tokens: u32,
}

/// Stable hex digest of what a bundle puts on the wire.
pub fn bundle_hash(bundle: &PromptBundle) -> String {
    let view = HashView {
        kind: bundle.kind.as_str(),
        messages: &bundle.messages,
        model: &bundle.profile.model_id,
        temperature: bundle.profile.temperature,
        top_p: bundle.profile.top_p,
        frequency_penalty: bundle.profile.frequency_penalty,
        presence_penalty: bundle.profile.presence_penalty,
        max_tokens: bundle.profile.max_tokens,
    };
    let json = serde_json::to_vec(&view).expect("bundle view serializes");
    hex::encode(Sha256::digest(json))
}
