//! Co-DM orchestration: reference material, random encounters, prompt
//! assembly, LLM generation, and conversation threads for a game master's
//! assistant.

pub mod dice;
pub mod encounter;
pub mod gateway;
pub mod knowledge_base;
pub mod profile;
pub mod prompt;
pub mod replay;
pub mod session;
pub mod store;

pub use dice::{parse_dice, roll_dice, DiceExpr, ParseError};
pub use encounter::{
    roll_encounter, Encounter, EncounterError, EncounterTable, EncounterTableEntry, RolledGroup,
};
pub use gateway::{
    ChatProvider, Gateway, GatewayConfig, GatewayError, GenerationContext, GenerationRecord,
    MockProvider, ProviderError, RetryPolicy,
};
pub use knowledge_base::{CorpusStats, KbError, KnowledgeBase, MonsterStatBlock, Setting};
pub use profile::{DecodingProfile, InterfaceKind, ProfileRegistry};
pub use prompt::{
    build_brainstorm_seed, build_open_chat_seed, build_summarization_prompt,
    build_understanding_prompt, sample_phrases, ChatMessage, PhraseSample, PromptBundle,
    PromptForge, Role,
};
pub use replay::{BrainstormScript, LogEvent, ReplayError};
pub use session::{SessionConfig, SessionError, SessionManager, ThreadView, Transcript};
pub use store::{FeedbackRecord, FeedbackTally, Polarity, Store, StoreError};
