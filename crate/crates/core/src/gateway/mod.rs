//! Provider-agnostic generation with retries, timeouts, a global concurrency
//! cap, and persistence of every returned generation.

mod mock;
mod openai;
mod provider;

use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use uuid::Uuid;

use crate::prompt::PromptBundle;
use crate::store::{Store, StoreError};

pub use mock::{MockProvider, MockResponses, MockRule};
pub use openai::{request_body, OpenAiCompatConfig, OpenAiCompatProvider};
pub use provider::{bundle_hash, ChatProvider, ProviderError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: String,
    pub bundle: PromptBundle,
    pub output_text: String,
    pub provider: String,
    pub latency_ms: u64,
    pub attempts: u32,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thread_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encounter_id: Option<String>,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("{source} (after {attempts} attempt(s))")]
    Provider {
        attempts: u32,
        #[source]
        source: ProviderError,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl GatewayError {
    pub fn provider_error(&self) -> Option<&ProviderError> {
        match self {
            GatewayError::Provider { source, .. } => Some(source),
            GatewayError::Store(_) => None,
        }
    }

    pub fn attempts(&self) -> u32 {
        match self {
            GatewayError::Provider { attempts, .. } => *attempts,
            GatewayError::Store(_) => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, where `attempt` counts from 1.
    pub fn delay_after(&self, attempt: u32, error: &ProviderError) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(2u32.saturating_pow(attempt.saturating_sub(1).min(16)));
        let backoff = exp.min(self.max_delay);
        match error.retry_after() {
            Some(after) => backoff.max(after.min(self.max_delay)),
            None => backoff,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub retry: RetryPolicy,
    /// Per-attempt deadline.
    pub timeout: Duration,
    /// Generations in flight across the whole process.
    pub max_concurrent: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(120),
            max_concurrent: 8,
        }
    }
}

/// Links a generation to what it belongs to, and optionally fixes its id so
/// a repeated request does not generate twice.
#[derive(Debug, Clone, Default)]
pub struct GenerationContext {
    pub request_id: Option<String>,
    pub thread_id: Option<String>,
    pub encounter_id: Option<String>,
}

pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    store: Arc<Store>,
    config: GatewayConfig,
    permits: Semaphore,
}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>, store: Arc<Store>, config: GatewayConfig) -> Self {
        let permits = Semaphore::new(config.max_concurrent.max(1));
        Self {
            provider,
            store,
            config,
            permits,
        }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub async fn generate(
        &self,
        bundle: PromptBundle,
        ctx: GenerationContext,
    ) -> Result<GenerationRecord, GatewayError> {
        if let Some(id) = &ctx.request_id {
            if let Some(existing) = self.store.generation(id)? {
                return Ok(existing);
            }
        }

        let _permit = self
            .permits
            .acquire()
            .await
            .expect("semaphore never closed");
        let started = Instant::now();
        let policy = self.config.retry;
        let mut attempt = 0;
        let output = loop {
            attempt += 1;
            let result =
                match tokio::time::timeout(self.config.timeout, self.provider.complete(&bundle))
                    .await
                {
                    Ok(r) => r,
                    Err(_) => Err(ProviderError::Timeout),
                };
            match result {
                Ok(text) => break text,
                Err(err) if err.is_transient() && attempt < policy.max_attempts => {
                    let delay = policy.delay_after(attempt, &err);
                    tracing::warn!(attempt, ?delay, error = %err, "transient provider failure, retrying");
                    tokio::time::sleep(delay).await;
                }
                Err(err) => {
                    return Err(GatewayError::Provider {
                        attempts: attempt,
                        source: err,
                    })
                }
            }
        };

        let record = GenerationRecord {
            id: ctx.request_id.unwrap_or_else(|| Uuid::new_v4().to_string()),
            bundle,
            output_text: output,
            provider: self.provider.name().to_string(),
            latency_ms: started.elapsed().as_millis() as u64,
            attempts: attempt,
            created_at: Utc::now(),
            thread_id: ctx.thread_id,
            encounter_id: ctx.encounter_id,
        };
        Ok(self.store.put_generation(&record)?)
    }
}
