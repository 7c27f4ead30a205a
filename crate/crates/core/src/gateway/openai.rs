//! Chat-completion provider speaking the common OpenAI-compatible HTTP
//! protocol (`POST {base_url}/chat/completions`).

use std::time::Duration;

use async_trait::async_trait;
use reqwest::header::{HeaderMap, RETRY_AFTER};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::provider::{ChatProvider, ProviderError};
use crate::prompt::PromptBundle;

#[derive(Debug, Clone)]
pub struct OpenAiCompatConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

pub struct OpenAiCompatProvider {
    client: reqwest::Client,
    config: OpenAiCompatConfig,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    top_p: f64,
    frequency_penalty: f64,
    presence_penalty: f64,
    max_tokens: u32,
    stream: bool,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireReply,
}

#[derive(Deserialize)]
struct WireReply {
    #[serde(default)]
    content: Option<String>,
}

/// Serializes a bundle as the JSON request body.
pub fn request_body(bundle: &PromptBundle) -> serde_json::Value {
    let p = &bundle.profile;
    let req = WireRequest {
        model: &p.model_id,
        messages: bundle
            .messages
            .iter()
            .map(|m| WireMessage {
                role: m.role.as_str(),
                content: &m.content,
            })
            .collect(),
        temperature: p.temperature,
        top_p: p.top_p,
        frequency_penalty: p.frequency_penalty,
        presence_penalty: p.presence_penalty,
        max_tokens: p.max_tokens,
        stream: false,
    };
    serde_json::to_value(req).expect("request serializes")
}

fn retry_after(headers: &HeaderMap) -> Option<Duration> {
    let value = headers.get(RETRY_AFTER)?.to_str().ok()?;
    value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|s| s.is_finite() && *s >= 0.0)
        .map(Duration::from_secs_f64)
}

impl OpenAiCompatProvider {
    pub fn new(config: OpenAiCompatConfig) -> Result<Self, ProviderError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::Upstream {
                status: None,
                message: format!("cannot build HTTP client: {e}"),
                retryable: false,
            })?;
        Ok(Self { client, config })
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }
}

#[async_trait]
impl ChatProvider for OpenAiCompatProvider {
    fn name(&self) -> &str {
        "openai-compatible"
    }

    async fn complete(&self, bundle: &PromptBundle) -> Result<String, ProviderError> {
        let mut req = self
            .client
            .post(self.endpoint())
            .json(&request_body(bundle));
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Upstream {
                    status: None,
                    message: e.to_string(),
                    retryable: e.is_connect() || e.is_request(),
                }
            }
        })?;

        let status = resp.status();
        if !status.is_success() {
            let after = retry_after(resp.headers());
            let body = resp.text().await.unwrap_or_default();
            return Err(match status {
                StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => ProviderError::Auth(body),
                StatusCode::TOO_MANY_REQUESTS => ProviderError::RateLimit { retry_after: after },
                StatusCode::REQUEST_TIMEOUT | StatusCode::GATEWAY_TIMEOUT => ProviderError::Timeout,
                s if s == StatusCode::BAD_REQUEST || s == StatusCode::UNPROCESSABLE_ENTITY => {
                    ProviderError::InvalidRequest(body)
                }
                s => ProviderError::Upstream {
                    status: Some(s.as_u16()),
                    message: body,
                    retryable: s.is_server_error(),
                },
            });
        }

        let parsed: WireResponse = resp.json().await.map_err(|e| ProviderError::Upstream {
            status: Some(status.as_u16()),
            message: format!("malformed response: {e}"),
            retryable: false,
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Upstream {
                status: Some(status.as_u16()),
                message: "response has no message content".into(),
                retryable: false,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{DecodingProfile, InterfaceKind};
    use crate::prompt::ChatMessage;

    #[test]
    fn body_carries_profile_unchanged() {
        let bundle = PromptBundle::new(
            InterfaceKind::Summarization,
            vec![ChatMessage::user("Summarize").unwrap()],
            DecodingProfile::published(InterfaceKind::Summarization).with_model("m1"),
        )
        .unwrap();
        let body = request_body(&bundle);
        assert_eq!(body["model"], "m1");
        assert_eq!(body["temperature"], 0.9);
        assert_eq!(body["top_p"], 0.95);
        assert_eq!(body["frequency_penalty"], 1.0);
        assert_eq!(body["presence_penalty"], 1.0);
        assert_eq!(body["max_tokens"], 1024);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["stream"], false);
    }

    #[test]
    fn parses_retry_after_seconds() {
        let mut h = HeaderMap::new();
        h.insert(RETRY_AFTER, "2".parse().unwrap());
        assert_eq!(retry_after(&h), Some(Duration::from_secs(2)));
        h.insert(
            RETRY_AFTER,
            "Wed, 21 Oct 2015 07:28:00 GMT".parse().unwrap(),
        );
        assert_eq!(retry_after(&h), None);
    }
}
