//! Thread lifecycles for focused brainstorming and open-domain chat, plus
//! encounter rolling, understanding generations and feedback.
//!
//! Messages within one thread are handled strictly in arrival order with at
//! most one generation in flight; different threads proceed concurrently.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::encounter::{self, Encounter, EncounterError, EncounterTable};
use crate::gateway::{Gateway, GatewayError, GenerationContext, GenerationRecord};
use crate::knowledge_base::KnowledgeBase;
use crate::profile::InterfaceKind;
use crate::prompt::{ChatMessage, PromptBundle, PromptError, PromptForge, Role};
use crate::store::{
    FeedbackRecord, FeedbackTally, MessageStatus, Polarity, Store, StoreError, StoredMessage,
    ThreadKind, ThreadRow, ThreadStatus, Visibility,
};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown encounter `{0}`")]
    UnknownEncounter(String),
    #[error("unknown setting `{0}`")]
    UnknownSetting(String),
    #[error("unknown thread `{0}`")]
    UnknownThread(String),
    #[error("unknown generation `{0}`")]
    UnknownGeneration(String),
    #[error("encounter `{0}` has no understanding generation to carry over")]
    NoSummary(String),
    #[error("thread `{0}` has too many queued messages")]
    ThreadBusy(String),
    #[error("thread `{0}` is closed")]
    ThreadClosed(String),
    #[error("thread `{0}` has a failed message awaiting retry")]
    RetryPending(String),
    #[error("thread `{0}` has no failed message to retry")]
    NothingToRetry(String),
    #[error("user `{user}` cannot post in private thread `{thread}`")]
    NotParticipant { thread: String, user: String },
    #[error("message must not be empty")]
    EmptyMessage,
    #[error("`{0}` looks like a command for another tool; this assistant cannot run other tools")]
    ToolInvocation(String),
    #[error("{0} is not an encounter understanding variant")]
    InvalidVariant(InterfaceKind),
    #[error("feedback from `{user}` on generation `{generation_id}` already exists")]
    DuplicateFeedback { generation_id: String, user: String },
    #[error(transparent)]
    Encounter(#[from] EncounterError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for SessionError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::DuplicateFeedback {
                generation_id,
                user,
            } => SessionError::DuplicateFeedback {
                generation_id,
                user,
            },
            StoreError::UnknownGeneration(id) => SessionError::UnknownGeneration(id),
            other => SessionError::Store(other),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    /// Approximate token budget for a conversation request. Oldest exchanges
    /// after the seed are dropped to fit; the seed is always kept.
    pub token_budget: usize,
    /// Threads idle this long are closed; they can be reopened.
    pub idle_close: Option<Duration>,
    /// Messages that may wait behind the in-flight one in a single thread.
    pub queue_capacity: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            token_budget: 8000,
            idle_close: Some(Duration::from_secs(6 * 60 * 60)),
            queue_capacity: 4,
        }
    }
}

/// A thread as seen by clients: the committed history plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadView {
    pub id: String,
    pub kind: ThreadKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encounter_id: Option<String>,
    pub visibility: Visibility,
    pub status: ThreadStatus,
    pub seed_len: u32,
    pub history: Vec<ChatMessage>,
    pub round_count: u32,
    pub participants: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending_message: Option<String>,
    pub created_at: DateTime<Utc>,
    pub last_activity: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u32,
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_id: Option<String>,
    pub seed: bool,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub thread_id: String,
    pub kind: ThreadKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encounter_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encounter: Option<String>,
    pub round_count: u32,
    pub messages: Vec<TranscriptEntry>,
}

/// Rough token estimate: four characters per token plus per-message overhead.
pub fn estimate_tokens(m: &ChatMessage) -> usize {
    m.content.chars().count().div_ceil(4) + 4
}

/// Drops the oldest post-seed exchanges until the request fits the budget.
/// The seed and the final message are never dropped.
pub fn fit_to_budget(messages: &[ChatMessage], seed_len: usize, budget: usize) -> Vec<ChatMessage> {
    let total = |ms: &[ChatMessage]| ms.iter().map(estimate_tokens).sum::<usize>();
    let seed_len = seed_len.min(messages.len());
    let (seed, rest) = messages.split_at(seed_len);
    let mut start = 0;
    // keep at least the last message
    while start + 1 < rest.len() {
        let candidate: Vec<ChatMessage> = seed.iter().chain(&rest[start..]).cloned().collect();
        if total(&candidate) <= budget {
            return candidate;
        }
        start += 2.min(rest.len() - 1 - start);
    }
    seed.iter().chain(&rest[start..]).cloned().collect()
}

fn is_tool_invocation(text: &str) -> bool {
    text.trim_start().starts_with('!')
}

#[derive(Default)]
struct Lane {
    turn: tokio::sync::Mutex<()>,
    waiting: AtomicUsize,
}

struct WaitGuard<'a>(&'a AtomicUsize);

impl Drop for WaitGuard<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

pub struct SessionManager {
    kb: Arc<KnowledgeBase>,
    forge: PromptForge,
    gateway: Arc<Gateway>,
    store: Arc<Store>,
    config: SessionConfig,
    lanes: Mutex<HashMap<String, Arc<Lane>>>,
}

fn rng_for(seed: Option<u64>) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.unwrap_or_else(rand::random))
}

impl SessionManager {
    pub fn new(
        kb: Arc<KnowledgeBase>,
        forge: PromptForge,
        gateway: Arc<Gateway>,
        config: SessionConfig,
    ) -> Self {
        let store = gateway.store().clone();
        Self {
            kb,
            forge,
            gateway,
            store,
            config,
            lanes: Mutex::new(HashMap::new()),
        }
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn forge(&self) -> &PromptForge {
        &self.forge
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn provider_name(&self) -> &str {
        self.gateway.provider_name()
    }

    pub fn encounter(&self, id: &str) -> Result<Encounter, SessionError> {
        self.store
            .encounter(id)?
            .ok_or_else(|| SessionError::UnknownEncounter(id.to_string()))
    }

    /// Rolls on `table` for a setting and persists the result. With a seed,
    /// the encounter id is derived from it and repeating the roll returns the
    /// stored encounter.
    pub fn roll_encounter(
        &self,
        table: &EncounterTable,
        setting_id: &str,
        seed: Option<u64>,
    ) -> Result<Encounter, SessionError> {
        let setting = self
            .kb
            .setting(setting_id)
            .ok_or_else(|| SessionError::UnknownSetting(setting_id.to_string()))?;
        let mut rng = rng_for(seed);
        let mut enc = encounter::roll_encounter(table, setting, &self.kb, &mut rng)?;
        if let Some(seed) = seed {
            enc.id = encounter::seeded_encounter_id(seed, setting_id, &enc.rendered);
        }
        Ok(self.store.put_encounter(&enc)?)
    }

    pub fn build_understanding(
        &self,
        encounter_id: &str,
        variant: InterfaceKind,
        seed: Option<u64>,
    ) -> Result<PromptBundle, SessionError> {
        let enc = self.encounter(encounter_id)?;
        let mut rng = rng_for(seed);
        Ok(match variant {
            InterfaceKind::Summarization => self.forge.summarization(&enc, &self.kb)?,
            InterfaceKind::Understanding => self.forge.understanding(&enc, &self.kb, &mut rng)?,
            other => return Err(SessionError::InvalidVariant(other)),
        })
    }

    /// Runs one of the two encounter-understanding variants.
    pub async fn understand(
        &self,
        encounter_id: &str,
        variant: InterfaceKind,
        seed: Option<u64>,
    ) -> Result<GenerationRecord, SessionError> {
        let bundle = self.build_understanding(encounter_id, variant, seed)?;
        let ctx = GenerationContext {
            encounter_id: Some(encounter_id.to_string()),
            ..Default::default()
        };
        Ok(self.gateway.generate(bundle, ctx).await?)
    }

    pub fn open_brainstorm(
        &self,
        encounter_id: &str,
        include_summary: bool,
        owner: &str,
        seed: Option<u64>,
    ) -> Result<ThreadView, SessionError> {
        let enc = self.encounter(encounter_id)?;
        let summary = if include_summary {
            let latest = self.store.latest_generation(
                encounter_id,
                &[InterfaceKind::Understanding, InterfaceKind::Summarization],
            )?;
            Some(
                latest
                    .ok_or_else(|| SessionError::NoSummary(encounter_id.to_string()))?
                    .output_text,
            )
        } else {
            None
        };
        let mut rng = rng_for(seed);
        let bundle = self
            .forge
            .brainstorm_seed(&enc, &self.kb, summary.as_deref(), &mut rng)?;
        let now = Utc::now();
        let row = ThreadRow {
            id: Uuid::new_v4().to_string(),
            kind: ThreadKind::Brainstorm,
            encounter_id: Some(encounter_id.to_string()),
            visibility: Visibility::Private,
            owner: Some(owner.to_string()),
            status: ThreadStatus::Open,
            seed_len: bundle.messages.len() as u32,
            created_at: now,
            last_activity: now,
        };
        self.store.create_thread(&row, &bundle.messages)?;
        self.thread(&row.id)
    }

    pub fn open_chat(&self, user: &str) -> Result<ThreadView, SessionError> {
        let bundle = self.forge.open_chat_seed()?;
        let now = Utc::now();
        let row = ThreadRow {
            id: Uuid::new_v4().to_string(),
            kind: ThreadKind::OpenChat,
            encounter_id: None,
            visibility: Visibility::Public,
            owner: Some(user.to_string()),
            status: ThreadStatus::Open,
            seed_len: bundle.messages.len() as u32,
            created_at: now,
            last_activity: now,
        };
        self.store.create_thread(&row, &bundle.messages)?;
        self.thread(&row.id)
    }

    fn thread_row(&self, id: &str) -> Result<ThreadRow, SessionError> {
        self.store
            .thread(id)?
            .ok_or_else(|| SessionError::UnknownThread(id.to_string()))
    }

    pub fn thread(&self, id: &str) -> Result<ThreadView, SessionError> {
        let row = self.thread_row(id)?;
        let messages = self.store.messages(id)?;
        let history: Vec<ChatMessage> = messages
            .iter()
            .filter(|m| m.status == MessageStatus::Committed)
            .map(StoredMessage::to_chat)
            .collect();
        let round_count = history
            .iter()
            .skip(row.seed_len as usize)
            .filter(|m| m.role == Role::Assistant)
            .count() as u32;
        let pending_message = messages
            .iter()
            .find(|m| m.status == MessageStatus::Pending)
            .map(|m| m.content.clone());
        Ok(ThreadView {
            participants: self.store.participants(id)?,
            id: row.id,
            kind: row.kind,
            encounter_id: row.encounter_id,
            visibility: row.visibility,
            status: row.status,
            seed_len: row.seed_len,
            history,
            round_count,
            pending_message,
            created_at: row.created_at,
            last_activity: row.last_activity,
        })
    }

    fn lane(&self, thread_id: &str) -> Arc<Lane> {
        self.lanes
            .lock()
            .unwrap()
            .entry(thread_id.to_string())
            .or_default()
            .clone()
    }

    fn check_postable(&self, row: &ThreadRow, user: &str) -> Result<(), SessionError> {
        if row.visibility == Visibility::Private && row.owner.as_deref() != Some(user) {
            return Err(SessionError::NotParticipant {
                thread: row.id.clone(),
                user: user.to_string(),
            });
        }
        if row.status == ThreadStatus::Closed {
            return Err(SessionError::ThreadClosed(row.id.clone()));
        }
        if let Some(idle) = self.config.idle_close {
            let idle = chrono::Duration::from_std(idle).unwrap_or(chrono::Duration::MAX);
            if Utc::now() - row.last_activity > idle {
                self.store
                    .set_thread_status(&row.id, ThreadStatus::Closed, row.last_activity)?;
                return Err(SessionError::ThreadClosed(row.id.clone()));
            }
        }
        Ok(())
    }

    /// Appends a user message, generates the reply from the full history,
    /// and appends it. On provider failure the user message stays pending
    /// and can be resent with [`SessionManager::retry_pending`].
    pub async fn post_user_message(
        &self,
        thread_id: &str,
        user: &str,
        text: &str,
    ) -> Result<GenerationRecord, SessionError> {
        if text.trim().is_empty() {
            return Err(SessionError::EmptyMessage);
        }
        if is_tool_invocation(text) {
            return Err(SessionError::ToolInvocation(
                text.split_whitespace()
                    .next()
                    .unwrap_or_default()
                    .to_string(),
            ));
        }
        let row = self.thread_row(thread_id)?;
        self.check_postable(&row, user)?;

        let lane = self.lane(thread_id);
        if lane.waiting.fetch_add(1, Ordering::SeqCst) > self.config.queue_capacity {
            lane.waiting.fetch_sub(1, Ordering::SeqCst);
            return Err(SessionError::ThreadBusy(thread_id.to_string()));
        }
        let _waiting = WaitGuard(&lane.waiting);
        let _turn = lane.turn.lock().await;

        let messages = self.store.messages(thread_id)?;
        if messages.iter().any(|m| m.status == MessageStatus::Pending) {
            return Err(SessionError::RetryPending(thread_id.to_string()));
        }
        let seq = self
            .store
            .push_pending_user_message(thread_id, text, Some(user), Utc::now())?;
        self.run_turn(&row, seq).await
    }

    /// Resends the failed user message of a thread.
    pub async fn retry_pending(&self, thread_id: &str) -> Result<GenerationRecord, SessionError> {
        let row = self.thread_row(thread_id)?;
        let lane = self.lane(thread_id);
        let _turn = lane.turn.lock().await;
        let pending = self
            .store
            .messages(thread_id)?
            .into_iter()
            .find(|m| m.status == MessageStatus::Pending)
            .ok_or_else(|| SessionError::NothingToRetry(thread_id.to_string()))?;
        self.run_turn(&row, pending.seq).await
    }

    /// Drops the failed user message of a thread without resending it.
    pub async fn discard_pending(&self, thread_id: &str) -> Result<(), SessionError> {
        self.thread_row(thread_id)?;
        let lane = self.lane(thread_id);
        let _turn = lane.turn.lock().await;
        let pending = self
            .store
            .messages(thread_id)?
            .into_iter()
            .find(|m| m.status == MessageStatus::Pending)
            .ok_or_else(|| SessionError::NothingToRetry(thread_id.to_string()))?;
        self.store.discard_pending(thread_id, pending.seq)?;
        Ok(())
    }

    /// Request for the turn whose user message sits at `seq`: every
    /// committed message before it plus the message itself, fitted to the
    /// token budget.
    fn request_for(&self, row: &ThreadRow, seq: u32) -> Result<PromptBundle, SessionError> {
        let messages = self.store.messages(&row.id)?;
        let upto: Vec<ChatMessage> = messages
            .iter()
            .filter(|m| m.seq < seq && m.status == MessageStatus::Committed || m.seq == seq)
            .map(StoredMessage::to_chat)
            .collect();
        let fitted = fit_to_budget(&upto, row.seed_len as usize, self.config.token_budget);
        Ok(self.forge.conversation(row.kind.interface(), fitted)?)
    }

    async fn run_turn(&self, row: &ThreadRow, seq: u32) -> Result<GenerationRecord, SessionError> {
        let bundle = self.request_for(row, seq)?;
        let ctx = GenerationContext {
            request_id: Some(format!("{}-m{}", row.id, seq)),
            thread_id: Some(row.id.clone()),
            encounter_id: row.encounter_id.clone(),
        };
        let record = self.gateway.generate(bundle, ctx).await?;
        self.store.commit_exchange(&row.id, seq, &record)?;
        Ok(record)
    }

    /// Rebuilds, from persisted history alone, the request sent for every
    /// assistant reply in the thread.
    pub fn replay_requests(&self, thread_id: &str) -> Result<Vec<PromptBundle>, SessionError> {
        let row = self.thread_row(thread_id)?;
        let messages = self.store.messages(thread_id)?;
        messages
            .iter()
            .filter(|m| m.role == Role::Assistant && m.seq >= row.seed_len)
            .map(|m| self.request_for(&row, m.seq - 1))
            .collect()
    }

    pub fn reopen_thread(&self, thread_id: &str) -> Result<ThreadView, SessionError> {
        self.thread_row(thread_id)?;
        self.store
            .set_thread_status(thread_id, ThreadStatus::Open, Utc::now())?;
        self.thread(thread_id)
    }

    /// Closes every thread idle longer than the configured limit.
    pub fn close_idle_threads(&self, now: DateTime<Utc>) -> Result<usize, SessionError> {
        let Some(idle) = self.config.idle_close else {
            return Ok(0);
        };
        let idle = chrono::Duration::from_std(idle).unwrap_or(chrono::Duration::MAX);
        Ok(self.store.close_idle_threads(now - idle)?)
    }

    pub fn record_feedback(
        &self,
        generation_id: &str,
        user: &str,
        polarity: Polarity,
        comment: Option<String>,
    ) -> Result<FeedbackRecord, SessionError> {
        let record = FeedbackRecord {
            id: Uuid::new_v4().to_string(),
            generation_id: generation_id.to_string(),
            user_id: user.to_string(),
            polarity,
            comment: comment.filter(|c| !c.trim().is_empty()),
            created_at: Utc::now(),
        };
        self.store.put_feedback(&record)?;
        Ok(record)
    }

    pub fn tally_feedback(&self, kind: InterfaceKind) -> Result<FeedbackTally, SessionError> {
        Ok(self.store.tally(kind)?)
    }

    pub fn generation(&self, id: &str) -> Result<GenerationRecord, SessionError> {
        self.store
            .generation(id)?
            .ok_or_else(|| SessionError::UnknownGeneration(id.to_string()))
    }

    pub fn export_transcript(&self, thread_id: &str) -> Result<Transcript, SessionError> {
        let row = self.thread_row(thread_id)?;
        let messages = self.store.messages(thread_id)?;
        let encounter = match &row.encounter_id {
            Some(id) => self.store.encounter(id)?.map(|e| e.rendered),
            None => None,
        };
        let entries: Vec<TranscriptEntry> = messages
            .into_iter()
            .filter(|m| m.status == MessageStatus::Committed)
            .map(|m| TranscriptEntry {
                seed: m.seq < row.seed_len,
                seq: m.seq,
                role: m.role,
                content: m.content,
                user_id: m.user_id,
                generation_id: m.generation_id,
                created_at: m.created_at,
            })
            .collect();
        let round_count = entries
            .iter()
            .filter(|e| !e.seed && e.role == Role::Assistant)
            .count() as u32;
        Ok(Transcript {
            thread_id: row.id,
            kind: row.kind,
            encounter_id: row.encounter_id,
            encounter,
            round_count,
            messages: entries,
        })
    }
}
