//! Prompt assembly for the four interfaces.
//!
//! Sections are divided with Markdown-style setext headers (a title line
//! underlined with `=` or `-` of the same length). Stat blocks are rendered
//! in a fixed field order so that output is byte-stable for a given
//! encounter and seed.

mod phrases;

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encounter::Encounter;
use crate::knowledge_base::{KnowledgeBase, MonsterStatBlock, Setting, ABILITY_NAMES};
use crate::profile::{DecodingProfile, InterfaceKind, ProfileError, ProfileRegistry};

pub use phrases::{sample_phrases, PhraseSample, PHRASE_POOL};

pub const SUMMARIZATION_INSTRUCTION: &str = "Summarize the following D&D setting and monsters for a Dungeon Master's notes without mentioning game stats.";

pub const UNDERSTANDING_INSTRUCTIONS: &str = "Your name is Calypso, and your job is to help the Dungeon Master with an encounter. \n\
Your task is to help the DM understand the setting and creatures as a group, focusing mainly on appearance and how they act.\n\
Especially focus on what makes each creature stand out.\n\
Avoid mentioning game stats.\n\
You may use information from common sense, mythology, and culture.\n\
If there are multiple creatures, conclude by mentioning how they interact.";

pub const BRAINSTORM_SYSTEM: &str = "You are a creative D&D player and DM named Calypso.\n\
Avoid mentioning game stats. You may use information from common sense, mythology, and culture.";

pub const BRAINSTORM_OPENING: &str = "I'm running this D&D encounter: ";
pub const BRAINSTORM_TASK: &str = "Your job is to help brainstorm some ideas for the encounter.";
pub const SUMMARY_CARRY_OVER: &str = "Here's what I have so far:\n";

/// Shipped open-chat persona. The original persona text was never published;
/// this is a reconstruction and operators are expected to replace it.
pub const DEFAULT_PERSONA: &str = "You are Calypso, a friendly sphinx who has spent centuries \
studying Dungeons & Dragons: its rules, monsters, settings, and lore. Chat with the people in \
this thread, answer their questions about the game, and help them develop their creative ideas.";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("encounter references unknown monster `{0}`")]
    UnresolvedMonster(String),
    #[error("encounter references unknown setting `{0}`")]
    UnknownSetting(String),
    #[error("message content must not be empty")]
    EmptyMessage,
    #[error("no messages in prompt bundle")]
    NoMessages,
    #[error("persona text must not be empty")]
    EmptyPersona,
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "system" => Some(Role::System),
            "user" => Some(Role::User),
            "assistant" => Some(Role::Assistant),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Result<Self, PromptError> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(PromptError::EmptyMessage);
        }
        Ok(Self { role, content })
    }

    pub fn system(content: impl Into<String>) -> Result<Self, PromptError> {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Result<Self, PromptError> {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Result<Self, PromptError> {
        Self::new(Role::Assistant, content)
    }
}

/// The exact payload sent to a provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub kind: InterfaceKind,
    pub messages: Vec<ChatMessage>,
    pub profile: DecodingProfile,
    #[serde(default)]
    pub profile_overridden: bool,
}

impl PromptBundle {
    /// Fails if the profile's sampling parameters differ from the published
    /// ones for `kind`.
    pub fn new(
        kind: InterfaceKind,
        messages: Vec<ChatMessage>,
        profile: DecodingProfile,
    ) -> Result<Self, PromptError> {
        if !profile.same_sampling(&DecodingProfile::published(kind)) {
            return Err(ProfileError::Mismatch { kind }.into());
        }
        Self::build(kind, messages, profile, false)
    }

    pub fn with_override(
        kind: InterfaceKind,
        messages: Vec<ChatMessage>,
        profile: DecodingProfile,
    ) -> Result<Self, PromptError> {
        Self::build(kind, messages, profile, true)
    }

    fn build(
        kind: InterfaceKind,
        messages: Vec<ChatMessage>,
        profile: DecodingProfile,
        profile_overridden: bool,
    ) -> Result<Self, PromptError> {
        if messages.is_empty() {
            return Err(PromptError::NoMessages);
        }
        if messages.iter().any(|m| m.content.trim().is_empty()) {
            return Err(PromptError::EmptyMessage);
        }
        profile.validate()?;
        Ok(Self {
            kind,
            messages,
            profile,
            profile_overridden,
        })
    }

    /// The single prompt document of a completion-style bundle, or all
    /// messages joined for inspection.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// Builds bundles using a configured profile registry and persona.
#[derive(Debug, Clone)]
pub struct PromptForge {
    registry: ProfileRegistry,
    persona: String,
}

impl Default for PromptForge {
    fn default() -> Self {
        Self {
            registry: ProfileRegistry::default(),
            persona: DEFAULT_PERSONA.to_string(),
        }
    }
}

impl PromptForge {
    pub fn new(registry: ProfileRegistry, persona: impl Into<String>) -> Result<Self, PromptError> {
        let persona = persona.into();
        if persona.trim().is_empty() {
            return Err(PromptError::EmptyPersona);
        }
        Ok(Self { registry, persona })
    }

    pub fn registry(&self) -> &ProfileRegistry {
        &self.registry
    }

    pub fn persona(&self) -> &str {
        &self.persona
    }

    fn bundle(
        &self,
        kind: InterfaceKind,
        messages: Vec<ChatMessage>,
    ) -> Result<PromptBundle, PromptError> {
        let profile = self.registry.get(kind)?;
        if self.registry.is_overridden(kind) {
            PromptBundle::with_override(kind, messages, profile)
        } else {
            PromptBundle::new(kind, messages, profile)
        }
    }

    pub fn summarization(
        &self,
        enc: &Encounter,
        kb: &KnowledgeBase,
    ) -> Result<PromptBundle, PromptError> {
        let (setting, monsters) = resolve(enc, kb)?;
        let mut doc = String::new();
        doc.push_str(SUMMARIZATION_INSTRUCTION);
        doc.push_str("\n\n");
        push_context(&mut doc, setting, &monsters, |m| {
            m.has_lore().then(|| m.lore.trim().to_string())
        });
        doc.push_str("\n\n");
        push_header(&mut doc, "Summary", '=');
        self.bundle(InterfaceKind::Summarization, vec![ChatMessage::user(doc)?])
    }

    pub fn understanding<R: Rng + ?Sized>(
        &self,
        enc: &Encounter,
        kb: &KnowledgeBase,
        rng: &mut R,
    ) -> Result<PromptBundle, PromptError> {
        let (setting, monsters) = resolve(enc, kb)?;
        let mut doc = String::new();
        doc.push_str(UNDERSTANDING_INSTRUCTIONS);
        doc.push_str("\n\nEncounter: ");
        doc.push_str(&enc.rendered);
        doc.push_str("\n\n");
        push_context(&mut doc, setting, &monsters, |m| {
            Some(lore_or_fallback(m, rng))
        });
        doc.push_str("\n\n");
        push_header(&mut doc, "Summary", '=');
        self.bundle(InterfaceKind::Understanding, vec![ChatMessage::user(doc)?])
    }

    pub fn brainstorm_seed<R: Rng + ?Sized>(
        &self,
        enc: &Encounter,
        kb: &KnowledgeBase,
        prior_summary: Option<&str>,
        rng: &mut R,
    ) -> Result<PromptBundle, PromptError> {
        let (setting, monsters) = resolve(enc, kb)?;
        let mut user = String::new();
        user.push_str(BRAINSTORM_OPENING);
        user.push_str(&enc.rendered);
        user.push_str("\n\n");
        push_context(&mut user, setting, &monsters, |m| {
            Some(lore_or_fallback(m, rng))
        });
        user.push_str("\n\n");
        user.push_str(BRAINSTORM_TASK);

        let mut messages = vec![
            ChatMessage::system(BRAINSTORM_SYSTEM)?,
            ChatMessage::user(user)?,
        ];
        if let Some(summary) = prior_summary {
            messages.push(ChatMessage::user(format!("{SUMMARY_CARRY_OVER}{summary}"))?);
        }
        self.bundle(InterfaceKind::Brainstorm, messages)
    }

    pub fn open_chat_seed(&self) -> Result<PromptBundle, PromptError> {
        self.bundle(
            InterfaceKind::OpenChat,
            vec![ChatMessage::system(self.persona.clone())?],
        )
    }

    /// A bundle for a later turn of a conversation: the given history sent
    /// with the registered profile of `kind`.
    pub fn conversation(
        &self,
        kind: InterfaceKind,
        history: Vec<ChatMessage>,
    ) -> Result<PromptBundle, PromptError> {
        self.bundle(kind, history)
    }
}

pub fn build_summarization_prompt(
    enc: &Encounter,
    kb: &KnowledgeBase,
) -> Result<PromptBundle, PromptError> {
    PromptForge::default().summarization(enc, kb)
}

pub fn build_understanding_prompt<R: Rng + ?Sized>(
    enc: &Encounter,
    kb: &KnowledgeBase,
    rng: &mut R,
) -> Result<PromptBundle, PromptError> {
    PromptForge::default().understanding(enc, kb, rng)
}

pub fn build_brainstorm_seed<R: Rng + ?Sized>(
    enc: &Encounter,
    kb: &KnowledgeBase,
    prior_summary: Option<&str>,
    rng: &mut R,
) -> Result<PromptBundle, PromptError> {
    PromptForge::default().brainstorm_seed(enc, kb, prior_summary, rng)
}

pub fn build_open_chat_seed(persona: &str) -> Result<PromptBundle, PromptError> {
    PromptForge::new(ProfileRegistry::default(), persona)?.open_chat_seed()
}

/// The line inserted in place of missing lore.
pub fn fallback_line(monster_name: &str, sources: &PhraseSample) -> String {
    format!(
        "Calypso, please provide the DM with information about the {monster_name} using information from {sources}"
    )
}

fn lore_or_fallback<R: Rng + ?Sized>(m: &MonsterStatBlock, rng: &mut R) -> String {
    if m.has_lore() {
        m.lore.trim().to_string()
    } else {
        fallback_line(&m.name, &sample_phrases(rng))
    }
}

fn resolve<'a>(
    enc: &Encounter,
    kb: &'a KnowledgeBase,
) -> Result<(&'a Setting, Vec<&'a MonsterStatBlock>), PromptError> {
    let setting = kb
        .setting(&enc.setting_id)
        .ok_or_else(|| PromptError::UnknownSetting(enc.setting_id.clone()))?;
    let monsters = enc
        .rolled
        .iter()
        .map(|g| {
            kb.monster(&g.monster_id)
                .ok_or_else(|| PromptError::UnresolvedMonster(g.monster_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    Ok((setting, monsters))
}

fn push_header(out: &mut String, title: &str, underline: char) {
    out.push_str(title);
    out.push('\n');
    out.extend(std::iter::repeat_n(underline, title.chars().count()));
}

/// Setting and Creatures sections, one creature subsection per rolled group.
/// No trailing newline.
fn push_context<'m>(
    out: &mut String,
    setting: &Setting,
    monsters: &[&'m MonsterStatBlock],
    mut lore: impl FnMut(&'m MonsterStatBlock) -> Option<String>,
) {
    push_header(out, "Setting", '=');
    out.push('\n');
    out.push_str(setting.description.trim());
    out.push_str("\n\n");
    push_header(out, "Creatures", '=');
    for (i, m) in monsters.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { "\n\n" });
        push_header(out, &m.name, '-');
        out.push('\n');
        out.push_str(&render_statistics(m));
        if let Some(text) = lore(m) {
            out.push_str("\n\n");
            out.push_str(&text);
        }
    }
}

fn ability_modifier(score: u8) -> i32 {
    (score as i32 - 10).div_euclid(2)
}

/// Stat lines in fixed order: armor class, hit points, speeds, ability
/// scores, skills, languages, then one line per named ability.
pub fn render_statistics(m: &MonsterStatBlock) -> String {
    let mut lines = vec![
        format!("Armor Class {}", m.armor_class),
        format!("Hit Points {}", m.hit_points),
    ];

    if !m.speeds.is_empty() {
        let walk = m.speeds.get("walk").map(|ft| format!("{ft} ft."));
        let others = m
            .speeds
            .iter()
            .filter(|(mode, _)| mode.as_str() != "walk")
            .map(|(mode, ft)| format!("{mode} {ft} ft."));
        let speeds: Vec<String> = walk.into_iter().chain(others).collect();
        lines.push(format!("Speed {}", speeds.join(", ")));
    }

    let scores: Vec<String> = ABILITY_NAMES
        .iter()
        .filter_map(|a| {
            m.ability_score(a).map(|s| {
                let modifier = ability_modifier(s);
                format!("{} {s} ({modifier:+})", a.to_ascii_uppercase())
            })
        })
        .collect();
    if !scores.is_empty() {
        lines.push(scores.join(", "));
    }

    if !m.skills.is_empty() {
        lines.push(format!("Skills {}", m.skills.join(", ")));
    }

    if !m.languages.is_empty() {
        let langs: Vec<String> = m
            .languages
            .iter()
            .map(|l| {
                if l.understands_only {
                    format!("understands {} but can't speak it", l.name)
                } else {
                    l.name.clone()
                }
            })
            .collect();
        lines.push(format!("Languages {}", langs.join(", ")));
    }

    let mut out = lines.join("\n");
    for a in &m.abilities {
        let _ = write!(out, "\n{}. {}", a.name.trim_end_matches('.'), a.text.trim());
    }
    out
}
