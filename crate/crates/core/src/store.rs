//! Single-file SQLite persistence for encounters, threads, messages,
//! generations and feedback.
//!
//! Every write is its own committed transaction (WAL, `synchronous=FULL`), so
//! a process killed at any point keeps every row written before the kill.

use std::path::Path;
use std::sync::{Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, OptionalExtension, Row};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encounter::{Encounter, RolledGroup};
use crate::gateway::GenerationRecord;
use crate::profile::InterfaceKind;
use crate::prompt::{ChatMessage, PromptBundle, Role};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("database error: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("corrupt row: {0}")]
    Corrupt(String),
    #[error("feedback from `{user}` on generation `{generation_id}` already exists")]
    DuplicateFeedback { generation_id: String, user: String },
    #[error("unknown generation `{0}`")]
    UnknownGeneration(String),
}

impl From<serde_json::Error> for StoreError {
    fn from(e: serde_json::Error) -> Self {
        StoreError::Corrupt(e.to_string())
    }
}

const SCHEMA: &str = r#"
CREATE TABLE IF NOT EXISTS encounters (
    id          TEXT PRIMARY KEY,
    setting_id  TEXT NOT NULL,
    rolled      TEXT NOT NULL,
    flavor      TEXT,
    rendered    TEXT NOT NULL,
    created_at  TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS threads (
    id            TEXT PRIMARY KEY,
    kind          TEXT NOT NULL,
    encounter_id  TEXT REFERENCES encounters(id),
    visibility    TEXT NOT NULL,
    owner         TEXT,
    status        TEXT NOT NULL,
    seed_len      INTEGER NOT NULL,
    created_at    TEXT NOT NULL,
    last_activity TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS thread_participants (
    thread_id TEXT NOT NULL REFERENCES threads(id),
    user_id   TEXT NOT NULL,
    PRIMARY KEY (thread_id, user_id)
);
CREATE TABLE IF NOT EXISTS messages (
    thread_id     TEXT NOT NULL REFERENCES threads(id),
    seq           INTEGER NOT NULL,
    role          TEXT NOT NULL,
    content       TEXT NOT NULL,
    user_id       TEXT,
    generation_id TEXT,
    status        TEXT NOT NULL,
    created_at    TEXT NOT NULL,
    PRIMARY KEY (thread_id, seq)
);
CREATE TABLE IF NOT EXISTS generations (
    id           TEXT PRIMARY KEY,
    kind         TEXT NOT NULL,
    bundle       TEXT NOT NULL,
    output_text  TEXT NOT NULL,
    provider     TEXT NOT NULL,
    latency_ms   INTEGER NOT NULL,
    attempts     INTEGER NOT NULL,
    created_at   TEXT NOT NULL,
    thread_id    TEXT,
    encounter_id TEXT
);
CREATE INDEX IF NOT EXISTS generations_by_encounter ON generations(encounter_id, kind);
CREATE TABLE IF NOT EXISTS feedback (
    id            TEXT PRIMARY KEY,
    generation_id TEXT NOT NULL REFERENCES generations(id),
    user_id       TEXT NOT NULL,
    polarity      TEXT NOT NULL,
    comment       TEXT,
    created_at    TEXT NOT NULL,
    UNIQUE (generation_id, user_id)
);
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "positive" | "up" | "+" => Some(Polarity::Positive),
            "negative" | "down" | "-" => Some(Polarity::Negative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub id: String,
    pub generation_id: String,
    pub user_id: String,
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackTally {
    pub positive: u64,
    pub negative: u64,
    pub total_encounters: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreadKind {
    Brainstorm,
    OpenChat,
}

impl ThreadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ThreadKind::Brainstorm => "brainstorm",
            ThreadKind::OpenChat => "open_chat",
        }
    }

    pub fn interface(self) -> InterfaceKind {
        match self {
            ThreadKind::Brainstorm => InterfaceKind::Brainstorm,
            ThreadKind::OpenChat => InterfaceKind::OpenChat,
        }
    }

    fn parse(s: &str) -> Result<Self, StoreError> {
        match s {
            "brainstorm" => Ok(ThreadKind::Brainstorm),
            "open_chat" => Ok(ThreadKind::OpenChat),
            other => Err(StoreError::Corrupt(format!("thread kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Private,
    Public,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThreadStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageStatus {
    /// Part of the conversation history.
    Committed,
    /// A user message whose reply failed; kept for retry, not yet history.
    Pending,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredMessage {
    pub seq: u32,
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_id: Option<String>,
    pub status: MessageStatus,
    pub created_at: DateTime<Utc>,
}

impl StoredMessage {
    pub fn to_chat(&self) -> ChatMessage {
        ChatMessage {
            role: self.role,
            content: self.content.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadRow {
    pub id: String,
    pub kind: ThreadKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encounter_id: Option<String>,
    pub visibility: Visibility,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<String>,
    pub status: ThreadStatus,
    /// Number of leading messages that form the seed prompt.
    pub seed_len: u32,
    pub created_at: DateTime<Utc>,
    pub last_activity: DateTime<Utc>,
}

pub struct Store {
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").finish_non_exhaustive()
    }
}

fn ts(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

fn parse_ts(s: &str) -> Result<DateTime<Utc>, StoreError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| StoreError::Corrupt(format!("timestamp `{s}`: {e}")))
}

impl Store {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        Self::init(conn)
    }

    pub fn open_in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.pragma_update(None, "synchronous", "FULL")?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        conn.execute_batch(SCHEMA)?;
        Ok(Self {
            conn: Mutex::new(conn),
        })
    }

    fn conn(&self) -> MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|e| e.into_inner())
    }

    // encounters

    /// Inserts the encounter unless one with the same id exists; returns the
    /// stored row either way.
    pub fn put_encounter(&self, enc: &Encounter) -> Result<Encounter, StoreError> {
        {
            let conn = self.conn();
            conn.execute(
                "INSERT OR IGNORE INTO encounters (id, setting_id, rolled, flavor, rendered, created_at)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![
                    enc.id,
                    enc.setting_id,
                    serde_json::to_string(&enc.rolled)?,
                    enc.flavor,
                    enc.rendered,
                    ts(&enc.created_at)
                ],
            )?;
        }
        self.encounter(&enc.id)?
            .ok_or_else(|| StoreError::Corrupt(format!("encounter {} vanished", enc.id)))
    }

    pub fn encounter(&self, id: &str) -> Result<Option<Encounter>, StoreError> {
        let conn = self.conn();
        let row = conn
            .query_row(
                "SELECT id, setting_id, rolled, flavor, rendered, created_at FROM encounters WHERE id = ?1",
                [id],
                |r| {
                    Ok((
                        r.get::<_, String>(0)?,
                        r.get::<_, String>(1)?,
                        r.get::<_, String>(2)?,
                        r.get::<_, Option<String>>(3)?,
                        r.get::<_, String>(4)?,
                        r.get::<_, String>(5)?,
                    ))
                },
            )
            .optional()?;
        row.map(|(id, setting_id, rolled, flavor, rendered, created_at)| {
            let rolled: Vec<RolledGroup> = serde_json::from_str(&rolled)?;
            Ok(Encounter {
                id,
                setting_id,
                rolled,
                flavor,
                created_at: parse_ts(&created_at)?,
                rendered,
            })
        })
        .transpose()
    }

    pub fn encounter_count(&self) -> Result<u64, StoreError> {
        Ok(self
            .conn()
            .query_row("SELECT COUNT(*) FROM encounters", [], |r| r.get(0))?)
    }

    // generations

    /// Idempotent on `record.id`: a second write with the same id keeps the
    /// first row and returns it.
    pub fn put_generation(
        &self,
        record: &GenerationRecord,
    ) -> Result<GenerationRecord, StoreError> {
        {
            let conn = self.conn();
            conn.execute(
                "INSERT OR IGNORE INTO generations
                 (id, kind, bundle, output_text, provider, latency_ms, attempts, created_at, thread_id, encounter_id)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)",
                params![
                    record.id,
                    record.bundle.kind.as_str(),
                    serde_json::to_string(&record.bundle)?,
                    record.output_text,
                    record.provider,
                    record.latency_ms as i64,
                    record.attempts,
                    ts(&record.created_at),
                    record.thread_id,
                    record.encounter_id,
                ],
            )?;
        }
        self.generation(&record.id)?
            .ok_or_else(|| StoreError::Corrupt(format!("generation {} vanished", record.id)))
    }

    pub fn generation(&self, id: &str) -> Result<Option<GenerationRecord>, StoreError> {
        let conn = self.conn();
        let mut stmt = conn.prepare_cached(
            "SELECT id, bundle, output_text, provider, latency_ms, attempts, created_at, thread_id, encounter_id
             FROM generations WHERE id = ?1",
        )?;
        let raw = stmt.query_row([id], RawGeneration::from_row).optional()?;
        raw.map(RawGeneration::into_record).transpose()
    }

    /// Most recent generation of any of `kinds` for an encounter.
    pub fn latest_generation(
        &self,
        encounter_id: &str,
        kinds: &[InterfaceKind],
    ) -> Result<Option<GenerationRecord>, StoreError> {
        let conn = self.conn();
        let mut stmt = conn.prepare_cached(
            "SELECT id, bundle, output_text, provider, latency_ms, attempts, created_at, thread_id, encounter_id, kind
             FROM generations WHERE encounter_id = ?1 ORDER BY created_at DESC, rowid DESC",
        )?;
        let mut rows = stmt.query([encounter_id])?;
        while let Some(row) = rows.next()? {
            let kind: String = row.get(9)?;
            if kinds.iter().any(|k| k.as_str() == kind) {
                return RawGeneration::from_row(row)?.into_record().map(Some);
            }
        }
        Ok(None)
    }

    pub fn generations_for_thread(
        &self,
        thread_id: &str,
    ) -> Result<Vec<GenerationRecord>, StoreError> {
        let conn = self.conn();
        let mut stmt = conn.prepare_cached(
            "SELECT id, bundle, output_text, provider, latency_ms, attempts, created_at, thread_id, encounter_id
             FROM generations WHERE thread_id = ?1 ORDER BY created_at, rowid",
        )?;
        let raws = stmt
            .query_map([thread_id], RawGeneration::from_row)?
            .collect::<Result<Vec<_>, _>>()?;
        raws.into_iter().map(RawGeneration::into_record).collect()
    }

    pub fn generation_count(&self) -> Result<u64, StoreError> {
        Ok(self
            .conn()
            .query_row("SELECT COUNT(*) FROM generations", [], |r| r.get(0))?)
    }

    // threads

    pub fn create_thread(
        &self,
        thread: &ThreadRow,
        seed: &[ChatMessage],
    ) -> Result<(), StoreError> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        tx.execute(
            "INSERT INTO threads (id, kind, encounter_id, visibility, owner, status, seed_len, created_at, last_activity)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
            params![
                thread.id,
                thread.kind.as_str(),
                thread.encounter_id,
                visibility_str(thread.visibility),
                thread.owner,
                status_str(thread.status),
                thread.seed_len,
                ts(&thread.created_at),
                ts(&thread.last_activity),
            ],
        )?;
        for (seq, m) in seed.iter().enumerate() {
            tx.execute(
                "INSERT INTO messages (thread_id, seq, role, content, user_id, generation_id, status, created_at)
                 VALUES (?1, ?2, ?3, ?4, NULL, NULL, 'committed', ?5)",
                params![thread.id, seq as i64, m.role.as_str(), m.content, ts(&thread.created_at)],
            )?;
        }
        if let Some(owner) = &thread.owner {
            tx.execute(
                "INSERT OR IGNORE INTO thread_participants (thread_id, user_id) VALUES (?1, ?2)",
                params![thread.id, owner],
            )?;
        }
        tx.commit()?;
        Ok(())
    }

    pub fn thread(&self, id: &str) -> Result<Option<ThreadRow>, StoreError> {
        let conn = self.conn();
        let raw = conn
            .query_row(
                "SELECT id, kind, encounter_id, visibility, owner, status, seed_len, created_at, last_activity
                 FROM threads WHERE id = ?1",
                [id],
                |r| {
                    Ok((
                        r.get::<_, String>(0)?,
                        r.get::<_, String>(1)?,
                        r.get::<_, Option<String>>(2)?,
                        r.get::<_, String>(3)?,
                        r.get::<_, Option<String>>(4)?,
                        r.get::<_, String>(5)?,
                        r.get::<_, u32>(6)?,
                        r.get::<_, String>(7)?,
                        r.get::<_, String>(8)?,
                    ))
                },
            )
            .optional()?;
        raw.map(
            |(id, kind, encounter_id, visibility, owner, status, seed_len, created, last)| {
                Ok(ThreadRow {
                    id,
                    kind: ThreadKind::parse(&kind)?,
                    encounter_id,
                    visibility: match visibility.as_str() {
                        "private" => Visibility::Private,
                        "public" => Visibility::Public,
                        v => return Err(StoreError::Corrupt(format!("visibility `{v}`"))),
                    },
                    owner,
                    status: match status.as_str() {
                        "open" => ThreadStatus::Open,
                        "closed" => ThreadStatus::Closed,
                        s => return Err(StoreError::Corrupt(format!("status `{s}`"))),
                    },
                    seed_len,
                    created_at: parse_ts(&created)?,
                    last_activity: parse_ts(&last)?,
                })
            },
        )
        .transpose()
    }

    pub fn thread_ids(&self) -> Result<Vec<String>, StoreError> {
        let conn = self.conn();
        let mut stmt = conn.prepare("SELECT id FROM threads ORDER BY created_at, rowid")?;
        let ids = stmt
            .query_map([], |r| r.get(0))?
            .collect::<Result<Vec<String>, _>>()?;
        Ok(ids)
    }

    pub fn set_thread_status(
        &self,
        id: &str,
        status: ThreadStatus,
        at: DateTime<Utc>,
    ) -> Result<(), StoreError> {
        self.conn().execute(
            "UPDATE threads SET status = ?2, last_activity = ?3 WHERE id = ?1",
            params![id, status_str(status), ts(&at)],
        )?;
        Ok(())
    }

    /// Closes open threads idle since before `cutoff`. Returns how many.
    pub fn close_idle_threads(&self, cutoff: DateTime<Utc>) -> Result<usize, StoreError> {
        Ok(self.conn().execute(
            "UPDATE threads SET status = 'closed' WHERE status = 'open' AND last_activity < ?1",
            [ts(&cutoff)],
        )?)
    }

    pub fn add_participant(&self, thread_id: &str, user_id: &str) -> Result<(), StoreError> {
        self.conn().execute(
            "INSERT OR IGNORE INTO thread_participants (thread_id, user_id) VALUES (?1, ?2)",
            params![thread_id, user_id],
        )?;
        Ok(())
    }

    pub fn participants(&self, thread_id: &str) -> Result<Vec<String>, StoreError> {
        let conn = self.conn();
        let mut stmt = conn.prepare_cached(
            "SELECT user_id FROM thread_participants WHERE thread_id = ?1 ORDER BY user_id",
        )?;
        let users = stmt
            .query_map([thread_id], |r| r.get(0))?
            .collect::<Result<Vec<String>, _>>()?;
        Ok(users)
    }

    /// All messages of a thread in order, pending ones included.
    pub fn messages(&self, thread_id: &str) -> Result<Vec<StoredMessage>, StoreError> {
        let conn = self.conn();
        let mut stmt = conn.prepare_cached(
            "SELECT seq, role, content, user_id, generation_id, status, created_at
             FROM messages WHERE thread_id = ?1 ORDER BY seq",
        )?;
        let raws = stmt
            .query_map([thread_id], |r| {
                Ok((
                    r.get::<_, u32>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, Option<String>>(3)?,
                    r.get::<_, Option<String>>(4)?,
                    r.get::<_, String>(5)?,
                    r.get::<_, String>(6)?,
                ))
            })?
            .collect::<Result<Vec<_>, _>>()?;
        raws.into_iter()
            .map(
                |(seq, role, content, user_id, generation_id, status, created)| {
                    Ok(StoredMessage {
                        seq,
                        role: Role::parse(&role)
                            .ok_or_else(|| StoreError::Corrupt(format!("role `{role}`")))?,
                        content,
                        user_id,
                        generation_id,
                        status: match status.as_str() {
                            "committed" => MessageStatus::Committed,
                            "pending" => MessageStatus::Pending,
                            s => return Err(StoreError::Corrupt(format!("message status `{s}`"))),
                        },
                        created_at: parse_ts(&created)?,
                    })
                },
            )
            .collect()
    }

    /// Stores a user message as pending. Returns its sequence number.
    pub fn push_pending_user_message(
        &self,
        thread_id: &str,
        content: &str,
        user_id: Option<&str>,
        at: DateTime<Utc>,
    ) -> Result<u32, StoreError> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        let seq: u32 = tx.query_row(
            "SELECT COALESCE(MAX(seq) + 1, 0) FROM messages WHERE thread_id = ?1",
            [thread_id],
            |r| r.get(0),
        )?;
        tx.execute(
            "INSERT INTO messages (thread_id, seq, role, content, user_id, generation_id, status, created_at)
             VALUES (?1, ?2, 'user', ?3, ?4, NULL, 'pending', ?5)",
            params![thread_id, seq, content, user_id, ts(&at)],
        )?;
        if let Some(user) = user_id {
            tx.execute(
                "INSERT OR IGNORE INTO thread_participants (thread_id, user_id) VALUES (?1, ?2)",
                params![thread_id, user],
            )?;
        }
        tx.execute(
            "UPDATE threads SET last_activity = ?2 WHERE id = ?1",
            params![thread_id, ts(&at)],
        )?;
        tx.commit()?;
        Ok(seq)
    }

    pub fn discard_pending(&self, thread_id: &str, seq: u32) -> Result<(), StoreError> {
        self.conn().execute(
            "DELETE FROM messages WHERE thread_id = ?1 AND seq = ?2 AND status = 'pending'",
            params![thread_id, seq],
        )?;
        Ok(())
    }

    /// Commits the pending user message at `seq` together with the assistant
    /// reply produced by `generation`, in one transaction.
    pub fn commit_exchange(
        &self,
        thread_id: &str,
        seq: u32,
        generation: &GenerationRecord,
    ) -> Result<(), StoreError> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        let updated = tx.execute(
            "UPDATE messages SET status = 'committed', generation_id = ?3
             WHERE thread_id = ?1 AND seq = ?2 AND status = 'pending'",
            params![thread_id, seq, generation.id],
        )?;
        if updated != 1 {
            return Err(StoreError::Corrupt(format!(
                "no pending message {seq} in thread {thread_id}"
            )));
        }
        tx.execute(
            "INSERT INTO messages (thread_id, seq, role, content, user_id, generation_id, status, created_at)
             VALUES (?1, ?2, 'assistant', ?3, NULL, ?4, 'committed', ?5)",
            params![
                thread_id,
                seq + 1,
                generation.output_text,
                generation.id,
                ts(&generation.created_at)
            ],
        )?;
        tx.execute(
            "UPDATE threads SET last_activity = ?2 WHERE id = ?1",
            params![thread_id, ts(&generation.created_at)],
        )?;
        tx.commit()?;
        Ok(())
    }

    // feedback

    pub fn put_feedback(&self, record: &FeedbackRecord) -> Result<(), StoreError> {
        let conn = self.conn();
        let exists: bool = conn.query_row(
            "SELECT EXISTS(SELECT 1 FROM generations WHERE id = ?1)",
            [&record.generation_id],
            |r| r.get(0),
        )?;
        if !exists {
            return Err(StoreError::UnknownGeneration(record.generation_id.clone()));
        }
        let result = conn.execute(
            "INSERT INTO feedback (id, generation_id, user_id, polarity, comment, created_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![
                record.id,
                record.generation_id,
                record.user_id,
                record.polarity.as_str(),
                record.comment,
                ts(&record.created_at)
            ],
        );
        match result {
            Ok(_) => Ok(()),
            Err(rusqlite::Error::SqliteFailure(e, _))
                if e.code == rusqlite::ErrorCode::ConstraintViolation =>
            {
                Err(StoreError::DuplicateFeedback {
                    generation_id: record.generation_id.clone(),
                    user: record.user_id.clone(),
                })
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn feedback(&self) -> Result<Vec<FeedbackRecord>, StoreError> {
        let conn = self.conn();
        let mut stmt = conn.prepare(
            "SELECT id, generation_id, user_id, polarity, comment, created_at FROM feedback ORDER BY created_at, rowid",
        )?;
        let raws = stmt
            .query_map([], |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, String>(3)?,
                    r.get::<_, Option<String>>(4)?,
                    r.get::<_, String>(5)?,
                ))
            })?
            .collect::<Result<Vec<_>, _>>()?;
        raws.into_iter()
            .map(|(id, generation_id, user_id, polarity, comment, created)| {
                Ok(FeedbackRecord {
                    id,
                    generation_id,
                    user_id,
                    polarity: Polarity::parse(&polarity)
                        .ok_or_else(|| StoreError::Corrupt(format!("polarity `{polarity}`")))?,
                    comment,
                    created_at: parse_ts(&created)?,
                })
            })
            .collect()
    }

    /// Feedback counts on generations of `kind`, and the number of distinct
    /// encounters that received a generation of that kind.
    pub fn tally(&self, kind: InterfaceKind) -> Result<FeedbackTally, StoreError> {
        let conn = self.conn();
        let (positive, negative): (u64, u64) = conn.query_row(
            "SELECT
                COALESCE(SUM(f.polarity = 'positive'), 0),
                COALESCE(SUM(f.polarity = 'negative'), 0)
             FROM feedback f JOIN generations g ON g.id = f.generation_id
             WHERE g.kind = ?1",
            [kind.as_str()],
            |r| Ok((r.get(0)?, r.get(1)?)),
        )?;
        let total_encounters: u64 = conn.query_row(
            "SELECT COUNT(DISTINCT encounter_id) FROM generations WHERE kind = ?1 AND encounter_id IS NOT NULL",
            [kind.as_str()],
            |r| r.get(0),
        )?;
        Ok(FeedbackTally {
            positive,
            negative,
            total_encounters,
        })
    }
}

fn visibility_str(v: Visibility) -> &'static str {
    match v {
        Visibility::Private => "private",
        Visibility::Public => "public",
    }
}

fn status_str(s: ThreadStatus) -> &'static str {
    match s {
        ThreadStatus::Open => "open",
        ThreadStatus::Closed => "closed",
    }
}

struct RawGeneration {
    id: String,
    bundle: String,
    output_text: String,
    provider: String,
    latency_ms: i64,
    attempts: u32,
    created_at: String,
    thread_id: Option<String>,
    encounter_id: Option<String>,
}

impl RawGeneration {
    fn from_row(r: &Row<'_>) -> rusqlite::Result<Self> {
        Ok(Self {
            id: r.get(0)?,
            bundle: r.get(1)?,
            output_text: r.get(2)?,
            provider: r.get(3)?,
            latency_ms: r.get(4)?,
            attempts: r.get(5)?,
            created_at: r.get(6)?,
            thread_id: r.get(7)?,
            encounter_id: r.get(8)?,
        })
    }

    fn into_record(self) -> Result<GenerationRecord, StoreError> {
        let bundle: PromptBundle = serde_json::from_str(&self.bundle)?;
        Ok(GenerationRecord {
            id: self.id,
            bundle,
            output_text: self.output_text,
            provider: self.provider,
            latency_ms: self.latency_ms.max(0) as u64,
            attempts: self.attempts,
            created_at: parse_ts(&self.created_at)?,
            thread_id: self.thread_id,
            encounter_id: self.encounter_id,
        })
    }
}
