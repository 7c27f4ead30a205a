use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use codm_core::gateway::{OpenAiCompatConfig, OpenAiCompatProvider};
use codm_core::{
    ChatProvider, EncounterError, EncounterTable, Gateway, InterfaceKind, KbError, KnowledgeBase,
    MockProvider, ProfileRegistry, PromptForge, ProviderError, SessionManager, Store, StoreError,
};
use thiserror::Error;

use crate::config::{ApiConfig, ConfigError, ProviderKind};

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("knowledge base: {0}")]
    KnowledgeBase(#[from] KbError),
    #[error("table `{name}`: {source}")]
    Table {
        name: String,
        #[source]
        source: EncounterError,
    },
    #[error("database: {0}")]
    Store(#[from] StoreError),
    #[error("provider: {0}")]
    Provider(#[from] ProviderError),
    #[error("environment variable `{0}` is not set")]
    MissingEnv(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("prompt setup: {0}")]
    Prompt(#[from] codm_core::prompt::PromptError),
}

/// Everything a request handler needs.
pub struct AppState {
    pub session: SessionManager,
    pub tables: BTreeMap<String, EncounterTable>,
    pub default_table: String,
    pub auth_token: Option<String>,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    /// Loads the knowledge base and tables, opens the database, and wires
    /// up the configured provider. Fails on any invalid input.
    pub fn from_config(cfg: &ApiConfig) -> Result<Self, StartupError> {
        cfg.validate()?;
        let kb = KnowledgeBase::load(&cfg.knowledge_base.monsters, &cfg.knowledge_base.settings)?;
        let mut tables = BTreeMap::new();
        for (name, path) in &cfg.tables {
            let table = EncounterTable::load(path, &kb).map_err(|source| StartupError::Table {
                name: name.clone(),
                source,
            })?;
            tables.insert(name.clone(), table);
        }

        let mut registry = ProfileRegistry::default();
        for (kind, model) in &cfg.provider.models {
            let kind: InterfaceKind =
                kind.parse()
                    .map_err(|e: codm_core::profile::ProfileError| {
                        ConfigError::Invalid(e.to_string())
                    })?;
            registry.set_model(kind, model.clone());
        }
        if let Some(max) = cfg.provider.max_tokens {
            registry.set_max_tokens(max);
        }
        let persona = match (&cfg.persona, &cfg.persona_file) {
            (Some(p), _) => p.clone(),
            (None, Some(path)) => std::fs::read_to_string(path)
                .map_err(|source| StartupError::Io {
                    path: path.clone(),
                    source,
                })?
                .trim()
                .to_string(),
            (None, None) => codm_core::prompt::DEFAULT_PERSONA.to_string(),
        };
        let forge = PromptForge::new(registry, persona)?;

        let provider: Arc<dyn ChatProvider> = match cfg.provider.kind {
            ProviderKind::Mock => match &cfg.provider.mock_file {
                Some(path) => Arc::new(MockProvider::from_file(path)?),
                None => Arc::new(MockProvider::new()),
            },
            ProviderKind::Openai => {
                let api_key = match &cfg.provider.api_key_env {
                    Some(var) => Some(
                        std::env::var(var).map_err(|_| StartupError::MissingEnv(var.clone()))?,
                    ),
                    None => None,
                };
                Arc::new(OpenAiCompatProvider::new(OpenAiCompatConfig {
                    base_url: cfg.provider.base_url.clone().unwrap_or_default(),
                    api_key,
                    timeout: cfg.gateway_config().timeout,
                })?)
            }
        };

        let auth_token = match &cfg.auth_token_env {
            Some(var) => std::env::var(var).ok().filter(|t| !t.is_empty()),
            None => None,
        };

        let store = Arc::new(Store::open(&cfg.database)?);
        let gateway = Arc::new(Gateway::new(provider, store, cfg.gateway_config()));
        let session = SessionManager::new(Arc::new(kb), forge, gateway, cfg.session_config());
        Ok(Self {
            session,
            tables,
            default_table: cfg.default_table.clone(),
            auth_token,
        })
    }
}
