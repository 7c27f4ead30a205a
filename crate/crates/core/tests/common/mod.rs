#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use codm_core::{
    EncounterTable, Gateway, GatewayConfig, KnowledgeBase, MockProvider, PromptForge, RetryPolicy,
    SessionConfig, SessionManager, Store,
};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn kb() -> KnowledgeBase {
    KnowledgeBase::load(&fixtures().join("monsters"), &fixtures().join("settings")).unwrap()
}

pub fn table(name: &str, kb: &KnowledgeBase) -> EncounterTable {
    EncounterTable::load(&fixtures().join("tables").join(name), kb).unwrap()
}

pub fn fast_gateway_config() -> GatewayConfig {
    GatewayConfig {
        retry: RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(4),
        },
        timeout: Duration::from_secs(5),
        max_concurrent: 8,
    }
}

pub struct Harness {
    pub session: SessionManager,
    pub mock: Arc<MockProvider>,
    pub store: Arc<Store>,
}

pub fn harness_with(mock: MockProvider, store: Store, config: SessionConfig) -> Harness {
    let mock = Arc::new(mock);
    let store = Arc::new(store);
    let gateway = Arc::new(Gateway::new(
        mock.clone(),
        store.clone(),
        fast_gateway_config(),
    ));
    let session = SessionManager::new(Arc::new(kb()), PromptForge::default(), gateway, config);
    Harness {
        session,
        mock,
        store,
    }
}

pub fn harness() -> Harness {
    harness_with(
        MockProvider::new(),
        Store::open_in_memory().unwrap(),
        SessionConfig::default(),
    )
}
