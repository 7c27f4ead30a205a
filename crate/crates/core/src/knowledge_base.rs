//! Monster and setting reference material.
//!
//! Each monster and each setting lives in its own TOML file. The loader reads
//! every `*.toml` file in a directory (sorted by file name), validates it, and
//! builds an immutable, id-indexed [`KnowledgeBase`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The six ability score keys, in stat-block order.
pub const ABILITY_NAMES: [&str; 6] = ["str", "dex", "con", "int", "wis", "cha"];

#[derive(Debug, Error)]
pub enum KbError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: field `{field}`: {message}")]
    Schema {
        file: PathBuf,
        field: String,
        message: String,
    },
    #[error("duplicate {kind} id `{id}` in {file}")]
    DuplicateId {
        kind: &'static str,
        id: String,
        file: PathBuf,
    },
    #[error("knowledge base has no monsters")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Language {
    pub name: String,
    #[serde(default)]
    pub understands_only: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ability {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonsterStatBlock {
    pub id: String,
    pub name: String,
    pub armor_class: u32,
    pub hit_points: u32,
    #[serde(default)]
    pub speeds: BTreeMap<String, u32>,
    pub ability_scores: BTreeMap<String, u8>,
    #[serde(default)]
    pub skills: Vec<String>,
    #[serde(default)]
    pub languages: Vec<Language>,
    #[serde(default)]
    pub abilities: Vec<Ability>,
    #[serde(default)]
    pub lore: String,
    #[serde(default)]
    pub source: String,
}

impl MonsterStatBlock {
    /// Whitespace-delimited token count of the lore plus every ability's prose.
    pub fn description_word_count(&self) -> usize {
        std::iter::once(self.lore.as_str())
            .chain(self.abilities.iter().map(|a| a.text.as_str()))
            .map(|text| text.split_whitespace().count())
            .sum()
    }

    pub fn has_lore(&self) -> bool {
        !self.lore.trim().is_empty()
    }

    pub fn ability_score(&self, ability: &str) -> Option<u8> {
        self.ability_scores.get(ability).copied()
    }

    fn validate(&self) -> Result<(), (String, String)> {
        check_slug("id", &self.id)?;
        if self.name.trim().is_empty() {
            return Err(("name".into(), "must not be empty".into()));
        }
        if self.hit_points < 1 {
            return Err(("hit_points".into(), "must be at least 1".into()));
        }
        for key in self.ability_scores.keys() {
            if !ABILITY_NAMES.contains(&key.as_str()) {
                return Err((
                    format!("ability_scores.{key}"),
                    format!("unknown ability, expected one of {ABILITY_NAMES:?}"),
                ));
            }
        }
        for name in ABILITY_NAMES {
            match self.ability_scores.get(name) {
                None => return Err((format!("ability_scores.{name}"), "missing".into())),
                Some(score) if !(1..=30).contains(score) => {
                    return Err((
                        format!("ability_scores.{name}"),
                        format!("score {score} outside 1..=30"),
                    ))
                }
                Some(_) => {}
            }
        }
        for (i, lang) in self.languages.iter().enumerate() {
            if lang.name.trim().is_empty() {
                return Err((format!("languages[{i}].name"), "must not be empty".into()));
            }
        }
        for (i, ability) in self.abilities.iter().enumerate() {
            if ability.name.trim().is_empty() {
                return Err((format!("abilities[{i}].name"), "must not be empty".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setting {
    pub id: String,
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl Setting {
    fn validate(&self) -> Result<(), (String, String)> {
        check_slug("id", &self.id)?;
        if self.name.trim().is_empty() {
            return Err(("name".into(), "must not be empty".into()));
        }
        if self.description.trim().is_empty() {
            return Err(("description".into(), "must not be empty".into()));
        }
        Ok(())
    }
}

fn check_slug(field: &str, value: &str) -> Result<(), (String, String)> {
    if value.is_empty() {
        return Err((field.into(), "must not be empty".into()));
    }
    if !value
        .chars()
        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_')
    {
        return Err((
            field.into(),
            format!("`{value}` is not a slug (lowercase ascii, digits, '-', '_')"),
        ));
    }
    Ok(())
}

/// Mean, min and max description word counts over a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusStats {
    pub count: usize,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} monsters, {:.1} words on average (min: {}, max: {})",
            self.count, self.mean, self.min, self.max
        )
    }
}

/// Immutable, id-indexed reference material. Safe to share behind an `Arc`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeBase {
    monsters: BTreeMap<String, MonsterStatBlock>,
    settings: BTreeMap<String, Setting>,
}

impl KnowledgeBase {
    pub fn load(monster_dir: &Path, setting_dir: &Path) -> Result<Self, KbError> {
        let mut kb = KnowledgeBase::default();
        for (file, monster) in load_dir::<MonsterStatBlock>(monster_dir)? {
            monster
                .validate()
                .map_err(|(field, message)| KbError::Schema {
                    file: file.clone(),
                    field,
                    message,
                })?;
            if kb.monsters.contains_key(&monster.id) {
                return Err(KbError::DuplicateId {
                    kind: "monster",
                    id: monster.id,
                    file,
                });
            }
            kb.monsters.insert(monster.id.clone(), monster);
        }
        for (file, setting) in load_dir::<Setting>(setting_dir)? {
            setting
                .validate()
                .map_err(|(field, message)| KbError::Schema {
                    file: file.clone(),
                    field,
                    message,
                })?;
            if kb.settings.contains_key(&setting.id) {
                return Err(KbError::DuplicateId {
                    kind: "setting",
                    id: setting.id,
                    file,
                });
            }
            kb.settings.insert(setting.id.clone(), setting);
        }
        Ok(kb)
    }

    /// Builds a knowledge base from in-memory records, applying the same
    /// validation as [`KnowledgeBase::load`].
    pub fn from_parts(
        monsters: impl IntoIterator<Item = MonsterStatBlock>,
        settings: impl IntoIterator<Item = Setting>,
    ) -> Result<Self, KbError> {
        let mut kb = KnowledgeBase::default();
        let inline = PathBuf::from("<inline>");
        for m in monsters {
            m.validate().map_err(|(field, message)| KbError::Schema {
                file: inline.clone(),
                field,
                message,
            })?;
            if kb.monsters.contains_key(&m.id) {
                return Err(KbError::DuplicateId {
                    kind: "monster",
                    id: m.id,
                    file: inline.clone(),
                });
            }
            kb.monsters.insert(m.id.clone(), m);
        }
        for s in settings {
            s.validate().map_err(|(field, message)| KbError::Schema {
                file: inline.clone(),
                field,
                message,
            })?;
            if kb.settings.contains_key(&s.id) {
                return Err(KbError::DuplicateId {
                    kind: "setting",
                    id: s.id,
                    file: inline.clone(),
                });
            }
            kb.settings.insert(s.id.clone(), s);
        }
        Ok(kb)
    }

    pub fn monster(&self, id: &str) -> Option<&MonsterStatBlock> {
        self.monsters.get(id)
    }

    pub fn setting(&self, id: &str) -> Option<&Setting> {
        self.settings.get(id)
    }

    pub fn monsters(&self) -> impl Iterator<Item = &MonsterStatBlock> {
        self.monsters.values()
    }

    pub fn settings(&self) -> impl Iterator<Item = &Setting> {
        self.settings.values()
    }

    pub fn monster_count(&self) -> usize {
        self.monsters.len()
    }

    pub fn setting_count(&self) -> usize {
        self.settings.len()
    }

    pub fn corpus_stats(&self) -> Result<CorpusStats, KbError> {
        let counts: Vec<usize> = self
            .monsters
            .values()
            .map(MonsterStatBlock::description_word_count)
            .collect();
        let (Some(&min), Some(&max)) = (counts.iter().min(), counts.iter().max()) else {
            return Err(KbError::EmptyCorpus);
        };
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        Ok(CorpusStats {
            count: counts.len(),
            mean,
            min,
            max,
        })
    }
}

fn load_dir<T: serde::de::DeserializeOwned>(dir: &Path) -> Result<Vec<(PathBuf, T)>, KbError> {
    let io_err = |source| KbError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    files.retain(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "toml"));
    files.sort();

    files
        .into_iter()
        .map(|path| {
            let text = fs::read_to_string(&path).map_err(|source| KbError::Io {
                path: path.clone(),
                source,
            })?;
            let value = parse_toml(&path, &text)?;
            Ok((path, value))
        })
        .collect()
}

/// Parses a TOML document, reporting the offending field path on failure.
pub(crate) fn parse_toml<T: serde::de::DeserializeOwned>(
    path: &Path,
    text: &str,
) -> Result<T, KbError> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let mut field = err.path().to_string();
        let message = err.inner().message().to_string();
        // missing-field errors point at the parent; name the field itself
        if let Some(missing) = message
            .strip_prefix("missing field `")
            .and_then(|rest| rest.split('`').next())
        {
            field = if field == "." {
                missing.to_string()
            } else {
                format!("{field}.{missing}")
            };
        }
        KbError::Schema {
            file: path.to_path_buf(),
            field,
            message,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn monster(id: &str, lore: &str, abilities: &[&str]) -> MonsterStatBlock {
        MonsterStatBlock {
            id: id.into(),
            name: id.into(),
            armor_class: 10,
            hit_points: 5,
            speeds: BTreeMap::from([("walk".into(), 30)]),
            ability_scores: ABILITY_NAMES.iter().map(|a| (a.to_string(), 10)).collect(),
            skills: vec![],
            languages: vec![],
            abilities: abilities
                .iter()
                .enumerate()
                .map(|(i, t)| Ability {
                    name: format!("Ability {i}"),
                    text: t.to_string(),
                })
                .collect(),
            lore: lore.into(),
            source: String::new(),
        }
    }

    #[test]
    fn word_count_of_empty_monster_is_zero() {
        assert_eq!(monster("a", "", &[]).description_word_count(), 0);
    }

    #[test]
    fn word_count_counts_lore_tokens() {
        let m = monster("owlbear", "An owlbear's screech echoes", &[]);
        assert_eq!(m.description_word_count(), 4);
    }

    #[test]
    fn word_count_includes_ability_prose_and_unicode_whitespace() {
        let m = monster("a", "one\u{00a0}two\tthree", &["four  five\nsix", ""]);
        assert_eq!(m.description_word_count(), 6);
    }

    #[test]
    fn corpus_stats_singleton_and_pair() {
        let ten = "a b c d e f g h i j";
        let kb = KnowledgeBase::from_parts([monster("a", ten, &[])], []).unwrap();
        let s = kb.corpus_stats().unwrap();
        assert_eq!((s.mean, s.min, s.max), (10.0, 10, 10));

        let kb =
            KnowledgeBase::from_parts([monster("a", "", &[]), monster("b", ten, &[])], []).unwrap();
        let s = kb.corpus_stats().unwrap();
        assert_eq!((s.mean, s.min, s.max), (5.0, 0, 10));
    }

    #[test]
    fn corpus_stats_empty_is_an_error() {
        let kb = KnowledgeBase::default();
        assert!(matches!(kb.corpus_stats(), Err(KbError::EmptyCorpus)));
    }

    #[test]
    fn rejects_bad_ability_scores() {
        let mut m = monster("a", "", &[]);
        m.ability_scores.insert("str".into(), 31);
        let err = KnowledgeBase::from_parts([m], []).unwrap_err();
        assert!(matches!(err, KbError::Schema { ref field, .. } if field == "ability_scores.str"));

        let mut m = monster("a", "", &[]);
        m.ability_scores.remove("cha");
        let err = KnowledgeBase::from_parts([m], []).unwrap_err();
        assert!(matches!(err, KbError::Schema { ref field, .. } if field == "ability_scores.cha"));
    }

    #[test]
    fn rejects_zero_hit_points_and_bad_ids() {
        let mut m = monster("a", "", &[]);
        m.hit_points = 0;
        assert!(KnowledgeBase::from_parts([m], []).is_err());
        let m = monster("", "", &[]);
        assert!(KnowledgeBase::from_parts([m], []).is_err());
        let m = monster("Has Space", "", &[]);
        assert!(KnowledgeBase::from_parts([m], []).is_err());
    }

    #[test]
    fn rejects_duplicate_ids_in_memory() {
        let err =
            KnowledgeBase::from_parts([monster("goblin", "", &[]), monster("goblin", "", &[])], [])
                .unwrap_err();
        assert!(matches!(err, KbError::DuplicateId { ref id, .. } if id == "goblin"));
    }

    #[test]
    fn schema_errors_name_the_field() {
        let path = Path::new("m.toml");
        let err =
            parse_toml::<MonsterStatBlock>(path, "id = \"a\"\nname = \"A\"\narmor_class = 3\n")
                .unwrap_err();
        assert!(
            matches!(err, KbError::Schema { ref field, .. } if field == "hit_points"),
            "{err}"
        );

        let err = parse_toml::<MonsterStatBlock>(
            path,
            "id = \"a\"\nname = \"A\"\narmor_class = \"high\"\nhit_points = 3\n[ability_scores]\n",
        )
        .unwrap_err();
        assert!(
            matches!(err, KbError::Schema { ref field, .. } if field == "armor_class"),
            "{err}"
        );
    }
}
