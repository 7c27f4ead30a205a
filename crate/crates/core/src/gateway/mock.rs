//! Deterministic offline provider.
//!
//! Replies are looked up, in order: by exact bundle hash, by the first rule
//! whose filters match, then the configured default. With none of those the
//! reply is synthesized from the bundle hash, so identical requests always
//! get identical text.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::Deserialize;

use super::provider::{bundle_hash, ChatProvider, ProviderError};
use crate::knowledge_base::KbError;
use crate::profile::InterfaceKind;
use crate::prompt::{PromptBundle, Role};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default)]
    pub kind: Option<InterfaceKind>,
    /// Substring of the last user message.
    #[serde(default)]
    pub contains: Option<String>,
    pub reply: String,
}

impl MockRule {
    fn matches(&self, bundle: &PromptBundle) -> bool {
        if self.kind.is_some_and(|k| k != bundle.kind) {
            return false;
        }
        match &self.contains {
            None => true,
            Some(needle) => bundle
                .messages
                .iter()
                .rev()
                .find(|m| m.role == Role::User)
                .is_some_and(|m| m.content.contains(needle.as_str())),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockResponses {
    #[serde(default)]
    pub default: Option<String>,
    #[serde(default)]
    pub responses: HashMap<String, String>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
}

#[derive(Debug, Default)]
pub struct MockProvider {
    canned: MockResponses,
    script: Mutex<VecDeque<Result<String, ProviderError>>>,
    requests: Mutex<Vec<PromptBundle>>,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_responses(canned: MockResponses) -> Self {
        Self {
            canned,
            ..Self::default()
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, KbError> {
        let text = std::fs::read_to_string(path).map_err(|source| KbError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let canned: MockResponses = crate::knowledge_base::parse_toml(path, &text)?;
        Ok(Self::from_responses(canned))
    }

    pub fn with_default(mut self, reply: impl Into<String>) -> Self {
        self.canned.default = Some(reply.into());
        self
    }

    pub fn with_response(mut self, bundle: &PromptBundle, reply: impl Into<String>) -> Self {
        self.canned
            .responses
            .insert(bundle_hash(bundle), reply.into());
        self
    }

    pub fn with_rule(mut self, rule: MockRule) -> Self {
        self.canned.rules.push(rule);
        self
    }

    /// Queues an outcome returned by the next call, ahead of canned replies.
    pub fn push_outcome(&self, outcome: Result<String, ProviderError>) {
        self.script.lock().unwrap().push_back(outcome);
    }

    /// Every bundle received, failed attempts included.
    pub fn requests(&self) -> Vec<PromptBundle> {
        self.requests.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn reply_for(&self, bundle: &PromptBundle) -> String {
        let hash = bundle_hash(bundle);
        if let Some(reply) = self.canned.responses.get(&hash) {
            return reply.clone();
        }
        if let Some(rule) = self.canned.rules.iter().find(|r| r.matches(bundle)) {
            return rule.reply.clone();
        }
        if let Some(default) = &self.canned.default {
            return default.clone();
        }
        format!("[mock {} reply {}]", bundle.kind, &hash[..12])
    }
}

#[async_trait]
impl ChatProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    async fn complete(&self, bundle: &PromptBundle) -> Result<String, ProviderError> {
        self.requests.lock().unwrap().push(bundle.clone());
        let scripted = self.script.lock().unwrap().pop_front();
        match scripted {
            Some(outcome) => outcome,
            None => Ok(self.reply_for(bundle)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::DecodingProfile;
    use crate::prompt::ChatMessage;

    fn bundle(kind: InterfaceKind, text: &str) -> PromptBundle {
        PromptBundle::new(
            kind,
            vec![ChatMessage::user(text).unwrap()],
            DecodingProfile::published(kind),
        )
        .unwrap()
    }

    #[tokio::test]
    async fn lookup_order() {
        let b = bundle(InterfaceKind::Understanding, "describe the blink dogs");
        let other = bundle(InterfaceKind::Brainstorm, "Describe this scene");
        let mock = MockProvider::new()
            .with_response(&b, "The blink dogs…")
            .with_rule(MockRule {
                kind: Some(InterfaceKind::Brainstorm),
                contains: Some("Describe".into()),
                reply: "A misty clearing.".into(),
            })
            .with_default("fallback");
        assert_eq!(mock.complete(&b).await.unwrap(), "The blink dogs…");
        assert_eq!(mock.complete(&other).await.unwrap(), "A misty clearing.");
        let third = bundle(InterfaceKind::OpenChat, "hello");
        assert_eq!(mock.complete(&third).await.unwrap(), "fallback");
        assert_eq!(mock.call_count(), 3);
    }

    #[tokio::test]
    async fn synthesized_replies_are_deterministic() {
        let b = bundle(InterfaceKind::Summarization, "x");
        let a = MockProvider::new().complete(&b).await.unwrap();
        let c = MockProvider::new().complete(&b).await.unwrap();
        assert_eq!(a, c);
        assert!(a.starts_with("[mock summarization reply "));
    }

    #[tokio::test]
    async fn scripted_outcomes_come_first() {
        let mock = MockProvider::new().with_default("ok");
        mock.push_outcome(Err(ProviderError::Timeout));
        let b = bundle(InterfaceKind::OpenChat, "hi");
        assert_eq!(mock.complete(&b).await, Err(ProviderError::Timeout));
        assert_eq!(mock.complete(&b).await.unwrap(), "ok");
    }

    #[test]
    fn parses_response_file() {
        let text = r#"
default = "Nothing stirs."
[responses]
"abc" = "canned"
[[rules]]
kind = "understanding"
reply = "The blink dogs are canine creatures."
"#;
        let r: MockResponses = toml::from_str(text).unwrap();
        assert_eq!(r.rules[0].kind, Some(InterfaceKind::Understanding));
        assert_eq!(r.responses["abc"], "canned");
    }
}
