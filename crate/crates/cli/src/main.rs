use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use codm_core::replay::{read_feedback_log, replay_feedback_log};
use codm_core::{EncounterTable, InterfaceKind, KnowledgeBase};
use codm_server::{ApiConfig, AppState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "codm",
    version,
    about = "Encounter assistant for tabletop game masters"
)]
struct Cli {
    /// Service config file.
    #[arg(long, global = true, default_value = "codm.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve,
    /// Roll a random encounter and store it.
    Roll {
        /// Table file, or the name of a table in the config. The
        /// config's default table when omitted.
        #[arg(long)]
        table: Option<String>,
        #[arg(long)]
        setting: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Print the whole encounter as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Print the prompt that would be sent for a stored encounter.
    Prompt {
        #[arg(long)]
        encounter: String,
        /// summarize, understand, brainstorm or chat
        #[arg(long)]
        kind: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Brainstorm only: carry over this summary text.
        #[arg(long)]
        summary: Option<String>,
    },
    /// Generate a summary or understanding for a stored encounter.
    Understand {
        #[arg(long)]
        encounter: String,
        #[arg(long, default_value = "understand")]
        variant: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a monster and setting corpus (and optionally tables) without
    /// starting anything. Exits non-zero on the first error.
    ValidateKb {
        #[arg(long)]
        monsters: PathBuf,
        #[arg(long)]
        settings: PathBuf,
        #[arg(long = "table")]
        tables: Vec<PathBuf>,
    },
    /// Print a thread transcript as JSON.
    Export {
        #[arg(long)]
        thread: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print feedback tallies per interface.
    Tally,
    /// Replay a JSON-lines feedback log into the configured database.
    ReplayFeedback {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        table: Option<String>,
    },
}

fn load_state(config: &Path) -> Result<AppState> {
    let cfg = ApiConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    Ok(AppState::from_config(&cfg)?)
}

fn table<'a>(state: &'a AppState, name: Option<&str>) -> Result<&'a EncounterTable> {
    let name = name.unwrap_or(&state.default_table);
    state
        .tables
        .get(name)
        .ok_or_else(|| anyhow!("unknown table `{name}`"))
}

/// A configured table name, or else a path to a table file.
fn table_or_file(state: &AppState, arg: Option<&str>) -> Result<EncounterTable> {
    match arg {
        Some(a) if !state.tables.contains_key(a) => {
            let path = Path::new(a);
            if !path.is_file() {
                bail!("`{a}` is neither a configured table nor a table file");
            }
            EncounterTable::load(path, state.session.knowledge_base())
                .with_context(|| format!("table {}", path.display()))
        }
        _ => table(state, arg).cloned(),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

async fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve => {
            let cfg = ApiConfig::load(&cli.config)
                .with_context(|| format!("loading {}", cli.config.display()))?;
            codm_server::serve(cfg).await?;
        }
        Command::Roll {
            table: name,
            setting,
            seed,
            json,
        } => {
            let state = load_state(&cli.config)?;
            let table = table_or_file(&state, name.as_deref())?;
            let enc = state.session.roll_encounter(&table, &setting, seed)?;
            if json {
                print_json(&enc)?;
            } else {
                println!("{}", enc.rendered);
                println!("id: {}", enc.id);
            }
        }
        Command::Prompt {
            encounter,
            kind,
            seed,
            summary,
        } => {
            let state = load_state(&cli.config)?;
            let s = &state.session;
            let kind: InterfaceKind = kind.parse()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or_else(rand::random));
            let bundle = match kind {
                InterfaceKind::Summarization | InterfaceKind::Understanding => {
                    s.build_understanding(&encounter, kind, seed)?
                }
                InterfaceKind::Brainstorm => {
                    let enc = s.encounter(&encounter)?;
                    s.forge().brainstorm_seed(
                        &enc,
                        s.knowledge_base(),
                        summary.as_deref(),
                        &mut rng,
                    )?
                }
                InterfaceKind::OpenChat => s.forge().open_chat_seed()?,
            };
            let p = &bundle.profile;
            println!("kind: {}", bundle.kind);
            println!(
                "profile: model={} temperature={} top_p={} frequency_penalty={} presence_penalty={} max_tokens={}",
                p.model_id, p.temperature, p.top_p, p.frequency_penalty, p.presence_penalty, p.max_tokens
            );
            for m in &bundle.messages {
                println!();
                println!("[{}]", m.role.as_str());
                println!("{}", m.content);
            }
        }
        Command::Understand {
            encounter,
            variant,
            seed,
        } => {
            let state = load_state(&cli.config)?;
            let record = state
                .session
                .understand(&encounter, variant.parse()?, seed)
                .await?;
            println!("{}", record.output_text);
            eprintln!("generation {}", record.id);
        }
        Command::ValidateKb {
            monsters,
            settings,
            tables,
        } => {
            let kb = KnowledgeBase::load(&monsters, &settings)?;
            for path in &tables {
                EncounterTable::load(path, &kb)
                    .with_context(|| format!("table {}", path.display()))?;
            }
            print!(
                "ok: {} monsters, {} settings",
                kb.monster_count(),
                kb.setting_count()
            );
            if !tables.is_empty() {
                print!(", {} tables", tables.len());
            }
            match kb.corpus_stats() {
                Ok(s) => println!(
                    "; description words mean {:.1} (min {}, max {})",
                    s.mean, s.min, s.max
                ),
                Err(_) => println!(),
            }
        }
        Command::Export { thread, output } => {
            let state = load_state(&cli.config)?;
            let transcript = state.session.export_transcript(&thread)?;
            let text = serde_json::to_string_pretty(&transcript)?;
            match output {
                Some(path) => std::fs::write(&path, text + "\n")
                    .with_context(|| format!("writing {}", path.display()))?,
                None => println!("{text}"),
            }
        }
        Command::Tally => {
            let state = load_state(&cli.config)?;
            let mut out = serde_json::Map::new();
            for kind in InterfaceKind::ALL {
                out.insert(
                    kind.to_string(),
                    serde_json::to_value(state.session.tally_feedback(kind)?)?,
                );
            }
            print_json(&out)?;
        }
        Command::ReplayFeedback { log, table: name } => {
            let state = load_state(&cli.config)?;
            let events = read_feedback_log(&log)?;
            if events.is_empty() {
                bail!("{} holds no events", log.display());
            }
            let report =
                replay_feedback_log(&state.session, table(&state, name.as_deref())?, &events)
                    .await?;
            eprintln!(
                "replayed {} encounters, {} generations, {} ratings",
                report.encounters.len(),
                report.generations.len(),
                report.feedback_count
            );
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
