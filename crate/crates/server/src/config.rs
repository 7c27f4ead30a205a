//! Service configuration, read from a TOML file.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Credentials never live in the file: the provider key and the
//! optional bearer token are read from the environment variables it names.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use codm_core::{GatewayConfig, InterfaceKind, RetryPolicy, SessionConfig};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    /// SQLite file; created if missing.
    pub database: PathBuf,
    pub knowledge_base: KbPaths,
    /// Named encounter tables.
    pub tables: BTreeMap<String, PathBuf>,
    /// Table used when a roll request names none.
    pub default_table: String,
    #[serde(default)]
    pub provider: ProviderConfig,
    /// Open-chat persona; the built-in one is used when absent.
    #[serde(default)]
    pub persona: Option<String>,
    #[serde(default)]
    pub persona_file: Option<PathBuf>,
    /// Environment variable holding a bearer token required on every
    /// request except `/health`. Unset variable means no auth.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default)]
    pub gateway: GatewaySection,
    #[serde(default)]
    pub session: SessionSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbPaths {
    pub monsters: PathBuf,
    pub settings: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    Openai,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default)]
    pub kind: ProviderKind,
    /// Canned replies for the mock provider.
    #[serde(default)]
    pub mock_file: Option<PathBuf>,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Model id per interface kind (`summarization`, `understanding`,
    /// `brainstorm`, `open_chat`).
    #[serde(default)]
    pub models: BTreeMap<String, String>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatewaySection {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub timeout_secs: u64,
    pub max_concurrent: usize,
}

impl Default for GatewaySection {
    fn default() -> Self {
        let g = GatewayConfig::default();
        Self {
            max_attempts: g.retry.max_attempts,
            base_delay_ms: g.retry.base_delay.as_millis() as u64,
            max_delay_ms: g.retry.max_delay.as_millis() as u64,
            timeout_secs: g.timeout.as_secs(),
            max_concurrent: g.max_concurrent,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionSection {
    pub token_budget: usize,
    /// 0 disables idle closing.
    pub idle_close_minutes: u64,
    pub queue_capacity: usize,
}

impl Default for SessionSection {
    fn default() -> Self {
        let s = SessionConfig::default();
        Self {
            token_budget: s.token_budget,
            idle_close_minutes: s.idle_close.map_or(0, |d| d.as_secs() / 60),
            queue_capacity: s.queue_capacity,
        }
    }
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

impl ApiConfig {
    /// Reads, resolves relative paths, and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ApiConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.database);
        fix(&mut self.knowledge_base.monsters);
        fix(&mut self.knowledge_base.settings);
        self.tables.values_mut().for_each(fix);
        if let Some(p) = &mut self.provider.mock_file {
            fix(p);
        }
        if let Some(p) = &mut self.persona_file {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.bind_addr().is_err() {
            return bad(format!("bind `{}` is not a socket address", self.bind));
        }
        if self.tables.is_empty() {
            return bad("at least one encounter table is required".into());
        }
        if !self.tables.contains_key(&self.default_table) {
            return bad(format!(
                "default_table `{}` is not listed in [tables]",
                self.default_table
            ));
        }
        if self.persona.is_some() && self.persona_file.is_some() {
            return bad("set either persona or persona_file, not both".into());
        }
        if let Some(p) = &self.persona {
            if p.trim().is_empty() {
                return bad("persona must not be empty".into());
            }
        }
        for kind in self.provider.models.keys() {
            if kind.parse::<InterfaceKind>().is_err() {
                return bad(format!("provider.models: unknown interface `{kind}`"));
            }
        }
        if self.provider.max_tokens == Some(0) {
            return bad("provider.max_tokens must be positive".into());
        }
        match self.provider.kind {
            ProviderKind::Openai if self.provider.base_url.is_none() => {
                return bad("provider.base_url is required for the openai provider".into())
            }
            ProviderKind::Mock if self.provider.base_url.is_some() => {
                return bad("provider.base_url is only used by the openai provider".into())
            }
            _ => {}
        }
        if self.gateway.max_attempts == 0 || self.gateway.max_concurrent == 0 {
            return bad("gateway.max_attempts and gateway.max_concurrent must be positive".into());
        }
        if self.gateway.timeout_secs == 0 {
            return bad("gateway.timeout_secs must be positive".into());
        }
        if self.session.token_budget == 0 {
            return bad("session.token_budget must be positive".into());
        }
        Ok(())
    }

    pub fn bind_addr(&self) -> Result<SocketAddr, std::net::AddrParseError> {
        self.bind.parse()
    }

    pub fn gateway_config(&self) -> GatewayConfig {
        GatewayConfig {
            retry: RetryPolicy {
                max_attempts: self.gateway.max_attempts,
                base_delay: Duration::from_millis(self.gateway.base_delay_ms),
                max_delay: Duration::from_millis(self.gateway.max_delay_ms),
            },
            timeout: Duration::from_secs(self.gateway.timeout_secs),
            max_concurrent: self.gateway.max_concurrent,
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            token_budget: self.session.token_budget,
            idle_close: (self.session.idle_close_minutes > 0)
                .then(|| Duration::from_secs(self.session.idle_close_minutes * 60)),
            queue_capacity: self.session.queue_capacity,
        }
    }
}
