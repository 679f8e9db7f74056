//! A text-based social deduction game environment in the spirit of Among Us,
//! together with a language-model agent harness and an evaluation suite.
//!
//! The crate is organized around a deterministic, seedable game engine:
//!
//! - [`world`]: static game definitions (map, task catalog) and initial state
//!   construction.
//! - [`engine`]: the phase state machine — legal actions, action execution,
//!   meetings and votes, termination.
//! - [`observation`]: per-player visibility filtering and the prompt renderer.
//! - [`agents`]: decision policies (random, human, LLM) plus the persona
//!   catalog, memory, and reply parsing.
//! - [`llm`]: chat-completion transport with retries and offline backends.
//! - [`sim`]: the game loop driver that ties agents to the engine and
//!   produces replayable records.
//! - [`record`]: the JSONL game record format and replay verification.
//! - [`evaluation`]: batch experiments, outcome tables, speech annotation,
//!   interviews, persona analytics, and trajectory ranking.
//! - [`config`]: the TOML run-configuration file.
//!
//! Everything runs fully offline with the scripted or uniform-option
//! backends; a remote chat-completions endpoint is optional.

pub mod agents;
pub mod config;
pub mod engine;
pub mod evaluation;
pub mod llm;
pub mod observation;
pub mod record;
pub mod sim;
pub mod world;

/// Version stamped into game records; replay refuses records from a
/// different engine version.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Version of the on-disk record layout.
pub const RECORD_FORMAT_VERSION: u32 = 1;
