//! Weighted random encounter tables.

use std::path::Path;

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use uuid::Uuid;

use crate::dice::DiceExpr;
use crate::knowledge_base::{KbError, KnowledgeBase, Setting};

#[derive(Debug, Error)]
pub enum EncounterError {
    #[error("encounter table is empty")]
    EmptyTable,
    #[error("entry {entry}: unknown monster id `{id}`")]
    UnresolvedMonster { entry: usize, id: String },
    #[error("entry {entry}: {message}")]
    InvalidEntry { entry: usize, message: String },
    #[error(transparent)]
    Load(#[from] KbError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonsterQuantity {
    pub id: String,
    pub quantity: DiceExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncounterTableEntry {
    pub weight: u32,
    pub monsters: Vec<MonsterQuantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flavor: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncounterTable {
    #[serde(default)]
    pub entries: Vec<EncounterTableEntry>,
}

impl EncounterTable {
    pub fn new(entries: Vec<EncounterTableEntry>) -> Self {
        Self { entries }
    }

    /// Reads a table file (`[[entries]]` arrays of tables) and checks it
    /// against the knowledge base.
    pub fn load(path: &Path, kb: &KnowledgeBase) -> Result<Self, EncounterError> {
        let text = std::fs::read_to_string(path).map_err(|source| KbError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let table: EncounterTable = crate::knowledge_base::parse_toml(path, &text)?;
        table.validate(kb)?;
        Ok(table)
    }

    /// Checks weights, quantities and that every monster id resolves.
    /// An empty table is valid to hold but cannot be rolled.
    pub fn validate(&self, kb: &KnowledgeBase) -> Result<(), EncounterError> {
        for (i, entry) in self.entries.iter().enumerate() {
            if entry.weight == 0 {
                return Err(EncounterError::InvalidEntry {
                    entry: i,
                    message: "weight must be at least 1".into(),
                });
            }
            if entry.monsters.is_empty() {
                return Err(EncounterError::InvalidEntry {
                    entry: i,
                    message: "must list at least one monster".into(),
                });
            }
            for m in &entry.monsters {
                if kb.monster(&m.id).is_none() {
                    return Err(EncounterError::UnresolvedMonster {
                        entry: i,
                        id: m.id.clone(),
                    });
                }
                if m.quantity.min() < 1 {
                    return Err(EncounterError::InvalidEntry {
                        entry: i,
                        message: format!(
                            "quantity `{}` for `{}` can roll below 1",
                            m.quantity, m.id
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn total_weight(&self) -> u64 {
        self.entries.iter().map(|e| e.weight as u64).sum()
    }

    /// Picks an entry index with probability weight / total weight.
    pub fn choose_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize, EncounterError> {
        let total = self.total_weight();
        if total == 0 {
            return Err(EncounterError::EmptyTable);
        }
        let mut roll = rng.random_range(0..total);
        for (i, entry) in self.entries.iter().enumerate() {
            let w = entry.weight as u64;
            if roll < w {
                return Ok(i);
            }
            roll -= w;
        }
        unreachable!("roll below total weight always lands in an entry")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolledGroup {
    pub monster_id: String,
    pub name: String,
    pub quantity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encounter {
    pub id: String,
    pub setting_id: String,
    pub rolled: Vec<RolledGroup>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flavor: Option<String>,
    pub created_at: DateTime<Utc>,
    pub rendered: String,
}

impl Encounter {
    /// Builds an encounter from already-decided groups, e.g. for fixtures.
    pub fn from_groups(
        id: impl Into<String>,
        setting_id: impl Into<String>,
        rolled: Vec<RolledGroup>,
    ) -> Self {
        let rendered = render_groups(&rolled);
        Self {
            id: id.into(),
            setting_id: setting_id.into(),
            rolled,
            flavor: None,
            created_at: Utc::now(),
            rendered,
        }
    }
}

/// "12 x Blink Dog, 1 x Owlbear"
pub fn render_groups(groups: &[RolledGroup]) -> String {
    groups
        .iter()
        .map(|g| format!("{} x {}", g.quantity, g.name))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Deterministic id for an encounter rolled from an explicit seed, so that
/// repeating the same roll addresses the same stored encounter.
pub fn seeded_encounter_id(seed: u64, setting_id: &str, rendered: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(setting_id.as_bytes());
    hasher.update([0]);
    hasher.update(rendered.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 16];
    bytes.copy_from_slice(&digest[..16]);
    uuid::Builder::from_random_bytes(bytes)
        .into_uuid()
        .to_string()
}

pub fn roll_encounter<R: Rng + ?Sized>(
    table: &EncounterTable,
    setting: &Setting,
    kb: &KnowledgeBase,
    rng: &mut R,
) -> Result<Encounter, EncounterError> {
    let index = table.choose_index(rng)?;
    let entry = &table.entries[index];
    let mut rolled = Vec::with_capacity(entry.monsters.len());
    for m in &entry.monsters {
        let monster = kb
            .monster(&m.id)
            .ok_or_else(|| EncounterError::UnresolvedMonster {
                entry: index,
                id: m.id.clone(),
            })?;
        let quantity = m.quantity.roll(rng);
        if quantity < 1 {
            return Err(EncounterError::InvalidEntry {
                entry: index,
                message: format!("quantity `{}` rolled {quantity}", m.quantity),
            });
        }
        rolled.push(RolledGroup {
            monster_id: m.id.clone(),
            name: monster.name.clone(),
            quantity: u32::try_from(quantity).unwrap_or(u32::MAX),
        });
    }
    let mut id_bytes = [0u8; 16];
    rng.fill(&mut id_bytes);
    let mut encounter = Encounter::from_groups(
        uuid::Builder::from_random_bytes(id_bytes)
            .into_uuid()
            .to_string(),
        setting.id.clone(),
        rolled,
    );
    encounter.flavor = entry.flavor.clone();
    Ok(encounter)
}

pub fn new_encounter_id() -> String {
    Uuid::new_v4().to_string()
}
