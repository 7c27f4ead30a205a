//! Replays recorded activity against a session manager: feedback logs
//! (encounters, generations, ratings) and scripted brainstorm sessions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encounter::EncounterTable;
use crate::profile::InterfaceKind;
use crate::session::{SessionError, SessionManager};
use crate::store::Polarity;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("event {index}: unknown label `{label}`")]
    UnknownLabel { index: usize, label: String },
    #[error("event {index}: duplicate label `{label}`")]
    DuplicateLabel { index: usize, label: String },
    #[error("event {index}: {source}")]
    Session {
        index: usize,
        #[source]
        source: SessionError,
    },
}

/// One line of a feedback log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEvent {
    Encounter {
        label: String,
        setting: String,
        seed: u64,
    },
    Generation {
        label: String,
        encounter: String,
        kind: InterfaceKind,
        #[serde(default)]
        seed: Option<u64>,
    },
    Feedback {
        generation: String,
        user: String,
        polarity: Polarity,
        #[serde(default)]
        comment: Option<String>,
    },
}

/// Reads a JSON-lines feedback log. Blank lines and lines starting with `#`
/// are skipped.
pub fn read_feedback_log(path: &Path) -> Result<Vec<LogEvent>, ReplayError> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ReplayError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let event = serde_json::from_str(line).map_err(|e| ReplayError::Parse {
            path: shown.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FeedbackReplay {
    /// label -> stored encounter id
    pub encounters: BTreeMap<String, String>,
    /// label -> stored generation id
    pub generations: BTreeMap<String, String>,
    pub feedback_count: usize,
}

/// Applies every event in order. Encounters are rolled on `table` with the
/// logged seed; generations run through the session's gateway.
pub async fn replay_feedback_log(
    session: &SessionManager,
    table: &EncounterTable,
    events: &[LogEvent],
) -> Result<FeedbackReplay, ReplayError> {
    let mut out = FeedbackReplay::default();
    for (index, event) in events.iter().enumerate() {
        let wrap = |source| ReplayError::Session { index, source };
        match event {
            LogEvent::Encounter {
                label,
                setting,
                seed,
            } => {
                if out.encounters.contains_key(label) {
                    return Err(ReplayError::DuplicateLabel {
                        index,
                        label: label.clone(),
                    });
                }
                let enc = session
                    .roll_encounter(table, setting, Some(*seed))
                    .map_err(wrap)?;
                out.encounters.insert(label.clone(), enc.id);
            }
            LogEvent::Generation {
                label,
                encounter,
                kind,
                seed,
            } => {
                if out.generations.contains_key(label) {
                    return Err(ReplayError::DuplicateLabel {
                        index,
                        label: label.clone(),
                    });
                }
                let enc_id =
                    out.encounters
                        .get(encounter)
                        .ok_or_else(|| ReplayError::UnknownLabel {
                            index,
                            label: encounter.clone(),
                        })?;
                let record = session
                    .understand(enc_id, *kind, *seed)
                    .await
                    .map_err(wrap)?;
                out.generations.insert(label.clone(), record.id);
            }
            LogEvent::Feedback {
                generation,
                user,
                polarity,
                comment,
            } => {
                let gen_id =
                    out.generations
                        .get(generation)
                        .ok_or_else(|| ReplayError::UnknownLabel {
                            index,
                            label: generation.clone(),
                        })?;
                session
                    .record_feedback(gen_id, user, *polarity, comment.clone())
                    .map_err(wrap)?;
                out.feedback_count += 1;
            }
        }
    }
    Ok(out)
}

/// A scripted brainstorm session: roll an encounter, optionally generate an
/// understanding summary, open a thread, and send the messages in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedThread {
    pub setting: String,
    pub seed: u64,
    pub owner: String,
    #[serde(default)]
    pub include_summary: bool,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrainstormScript {
    pub threads: Vec<ScriptedThread>,
}

impl BrainstormScript {
    pub fn load(path: &Path) -> Result<Self, ReplayError> {
        let shown = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| ReplayError::Io {
            path: shown.clone(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ReplayError::Parse {
            path: shown,
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn round_count(&self) -> usize {
        self.threads.iter().map(|t| t.messages.len()).sum()
    }
}

/// Runs every scripted thread and returns the created thread ids in script
/// order.
pub async fn replay_brainstorm_script(
    session: &SessionManager,
    table: &EncounterTable,
    script: &BrainstormScript,
) -> Result<Vec<String>, ReplayError> {
    let mut ids = Vec::with_capacity(script.threads.len());
    for (index, t) in script.threads.iter().enumerate() {
        let wrap = |source| ReplayError::Session { index, source };
        let enc = session
            .roll_encounter(table, &t.setting, Some(t.seed))
            .map_err(wrap)?;
        if t.include_summary {
            session
                .understand(&enc.id, InterfaceKind::Understanding, Some(t.seed))
                .await
                .map_err(wrap)?;
        }
        let thread = session
            .open_brainstorm(&enc.id, t.include_summary, &t.owner, Some(t.seed))
            .map_err(wrap)?;
        for text in &t.messages {
            session
                .post_user_message(&thread.id, &t.owner, text)
                .await
                .map_err(wrap)?;
        }
        ids.push(thread.id);
    }
    Ok(ids)
}
