//! Decoding profiles for each interface.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_TOKENS: u32 = 1024;
pub const DEFAULT_MODEL_ID: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceKind {
    Summarization,
    Understanding,
    Brainstorm,
    OpenChat,
}

impl InterfaceKind {
    pub const ALL: [InterfaceKind; 4] = [
        InterfaceKind::Summarization,
        InterfaceKind::Understanding,
        InterfaceKind::Brainstorm,
        InterfaceKind::OpenChat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InterfaceKind::Summarization => "summarization",
            InterfaceKind::Understanding => "understanding",
            InterfaceKind::Brainstorm => "brainstorm",
            InterfaceKind::OpenChat => "open_chat",
        }
    }

    /// Whether the prompt is a single completion-style document rather than
    /// a role-tagged conversation.
    pub fn is_completion_style(self) -> bool {
        matches!(
            self,
            InterfaceKind::Summarization | InterfaceKind::Understanding
        )
    }
}

impl fmt::Display for InterfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("unknown interface kind `{0}`")]
    UnknownKind(String),
    #[error("profile for {kind} does not match its registered sampling parameters")]
    Mismatch { kind: InterfaceKind },
    #[error("invalid profile: {0}")]
    Invalid(String),
}

impl FromStr for InterfaceKind {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "summarization" | "summarize" => Ok(InterfaceKind::Summarization),
            "understanding" | "understand" => Ok(InterfaceKind::Understanding),
            "brainstorm" | "brainstorming" => Ok(InterfaceKind::Brainstorm),
            "open_chat" | "open-chat" | "chat" => Ok(InterfaceKind::OpenChat),
            other => Err(ProfileError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingProfile {
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub max_tokens: u32,
    pub model_id: String,
}

impl DecodingProfile {
    /// The published sampling parameters for an interface, with default
    /// `max_tokens` and model.
    pub fn published(kind: InterfaceKind) -> Self {
        let (temperature, top_p, frequency_penalty, presence_penalty) = match kind {
            InterfaceKind::Summarization => (0.9, 0.95, 1.0, 1.0),
            InterfaceKind::Understanding => (0.8, 0.95, 0.5, 0.0),
            InterfaceKind::Brainstorm | InterfaceKind::OpenChat => (1.0, 0.95, 0.3, 0.0),
        };
        Self {
            temperature,
            top_p,
            frequency_penalty,
            presence_penalty,
            max_tokens: DEFAULT_MAX_TOKENS,
            model_id: DEFAULT_MODEL_ID.to_string(),
        }
    }

    pub fn with_model(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    /// (temperature, top_p, frequency_penalty, presence_penalty)
    pub fn sampling(&self) -> (f64, f64, f64, f64) {
        (
            self.temperature,
            self.top_p,
            self.frequency_penalty,
            self.presence_penalty,
        )
    }

    pub fn same_sampling(&self, other: &DecodingProfile) -> bool {
        self.sampling() == other.sampling()
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ProfileError::Invalid("temperature must be >= 0".into()));
        }
        if self.top_p.is_nan() || self.top_p <= 0.0 || self.top_p > 1.0 {
            return Err(ProfileError::Invalid("top_p must be in (0, 1]".into()));
        }
        if !self.frequency_penalty.is_finite() || !self.presence_penalty.is_finite() {
            return Err(ProfileError::Invalid("penalties must be finite".into()));
        }
        if self.max_tokens == 0 {
            return Err(ProfileError::Invalid("max_tokens must be positive".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(ProfileError::Invalid("model_id must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Registered {
    profile: DecodingProfile,
    overridden: bool,
}

/// Per-interface profiles. Starts out holding the published profiles;
/// `model_id` and `max_tokens` may be changed freely, sampling parameters
/// only through [`ProfileRegistry::register_override`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRegistry {
    profiles: BTreeMap<InterfaceKind, Registered>,
}

impl Default for ProfileRegistry {
    fn default() -> Self {
        Self {
            profiles: InterfaceKind::ALL
                .into_iter()
                .map(|k| {
                    (
                        k,
                        Registered {
                            profile: DecodingProfile::published(k),
                            overridden: false,
                        },
                    )
                })
                .collect(),
        }
    }
}

impl ProfileRegistry {
    pub fn empty() -> Self {
        Self {
            profiles: BTreeMap::new(),
        }
    }

    pub fn register(
        &mut self,
        kind: InterfaceKind,
        profile: DecodingProfile,
    ) -> Result<(), ProfileError> {
        profile.validate()?;
        if !profile.same_sampling(&DecodingProfile::published(kind)) {
            return Err(ProfileError::Mismatch { kind });
        }
        self.profiles.insert(
            kind,
            Registered {
                profile,
                overridden: false,
            },
        );
        Ok(())
    }

    /// Registers a profile whose sampling parameters deviate from the
    /// published ones. Bundles built from it are flagged as overridden.
    pub fn register_override(
        &mut self,
        kind: InterfaceKind,
        profile: DecodingProfile,
    ) -> Result<(), ProfileError> {
        profile.validate()?;
        let overridden = !profile.same_sampling(&DecodingProfile::published(kind));
        self.profiles.insert(
            kind,
            Registered {
                profile,
                overridden,
            },
        );
        Ok(())
    }

    pub fn get(&self, kind: InterfaceKind) -> Result<DecodingProfile, ProfileError> {
        self.profiles
            .get(&kind)
            .map(|r| r.profile.clone())
            .ok_or_else(|| ProfileError::UnknownKind(kind.to_string()))
    }

    pub fn get_by_name(&self, kind: &str) -> Result<DecodingProfile, ProfileError> {
        self.get(kind.parse()?)
    }

    pub fn is_overridden(&self, kind: InterfaceKind) -> bool {
        self.profiles.get(&kind).is_some_and(|r| r.overridden)
    }

    pub fn set_model(&mut self, kind: InterfaceKind, model_id: impl Into<String>) {
        if let Some(r) = self.profiles.get_mut(&kind) {
            r.profile.model_id = model_id.into();
        }
    }

    pub fn set_max_tokens(&mut self, max_tokens: u32) {
        for r in self.profiles.values_mut() {
            r.profile.max_tokens = max_tokens;
        }
    }
}
