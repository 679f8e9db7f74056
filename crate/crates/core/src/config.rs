//! The TOML run-configuration file: game parameters, agent assignments,
//! client transport, and experiment settings. Unknown keys are rejected;
//! parse errors carry the offending key path and line.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::evaluation::{PlannerMode, SetupLabel};
use crate::llm::{LlmParams, RemoteConfig};
use crate::world::{AgentAssignment, GameConfig, PlayerSpec, TaskCounts};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub game: GameSection,
    #[serde(default)]
    pub agents: Option<AgentsSection>,
    #[serde(default)]
    pub client: ClientSection,
    #[serde(default)]
    pub experiment: Option<ExperimentSection>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub n_crewmates: Option<u8>,
    pub n_impostors: Option<u8>,
    pub tasks_per_crewmate: Option<TaskCounts>,
    pub time_limit_steps: Option<u32>,
    pub discussion_rounds: Option<u8>,
    pub recent_k: Option<usize>,
    pub kill_cooldown_steps: Option<u32>,
    pub seed: Option<u64>,
    pub map_path: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsSection {
    /// Role-level defaults.
    pub crewmate: Option<PlayerSpec>,
    pub impostor: Option<PlayerSpec>,
    /// Full per-player list; overrides the role-level defaults.
    pub players: Option<Vec<PlayerSpec>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClientSection {
    /// "uniform", "scripted", or "remote".
    pub backend: String,
    pub model: String,
    pub endpoint: String,
    pub credential_env: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_in_flight: Option<u32>,
    /// Reply table for the scripted backend, keyed by call tag.
    pub scripted_replies: Option<BTreeMap<String, String>>,
}

impl Default for ClientSection {
    fn default() -> Self {
        Self {
            backend: "uniform".into(),
            model: "gpt-3.5-turbo".into(),
            endpoint: "https://api.openai.com/v1".into(),
            credential_env: "OPENAI_API_KEY".into(),
            timeout_secs: 30,
            retries: 3,
            backoff_ms: 250,
            temperature: 0.7,
            max_tokens: 512,
            max_in_flight: None,
            scripted_replies: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub setup: SetupLabel,
    /// Ignored for the all-random setup.
    pub planner: Option<bool>,
    #[serde(default = "default_games")]
    pub games: u32,
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub interviews: bool,
}

fn default_games() -> u32 {
    20
}

fn default_workers() -> usize {
    4
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        if config.version != 1 {
            return Err(ConfigError::Invalid(format!(
                "unsupported config version {} (expected 1)",
                config.version
            )));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !["uniform", "scripted", "remote"].contains(&self.client.backend.as_str()) {
            return Err(ConfigError::Invalid(format!(
                "client.backend must be uniform, scripted, or remote, got `{}`",
                self.client.backend
            )));
        }
        if let Some(experiment) = &self.experiment {
            if let Some(seeds) = &experiment.seeds {
                if (seeds.len() as u32) < experiment.games {
                    return Err(ConfigError::Invalid(format!(
                        "experiment.seeds lists {} seeds for {} games; list at least one per game or omit it to derive seeds from game.seed",
                        seeds.len(),
                        experiment.games
                    )));
                }
            }
        }
        self.game_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Assemble the engine-level game config from the file sections.
    pub fn game_config(&self) -> GameConfig {
        let defaults = GameConfig::default();
        let agents = match &self.agents {
            Some(section) => {
                if let Some(players) = &section.players {
                    AgentAssignment::PerPlayer(players.clone())
                } else {
                    AgentAssignment::ByRole {
                        crewmate: section.crewmate.clone().unwrap_or_default(),
                        impostor: section.impostor.clone().unwrap_or_default(),
                    }
                }
            }
            None => AgentAssignment::default(),
        };
        GameConfig {
            n_crewmates: self.game.n_crewmates.unwrap_or(defaults.n_crewmates),
            n_impostors: self.game.n_impostors.unwrap_or(defaults.n_impostors),
            tasks_per_crewmate: self
                .game
                .tasks_per_crewmate
                .unwrap_or(defaults.tasks_per_crewmate),
            time_limit_steps: self
                .game
                .time_limit_steps
                .unwrap_or(defaults.time_limit_steps),
            discussion_rounds: self
                .game
                .discussion_rounds
                .unwrap_or(defaults.discussion_rounds),
            recent_k: self.game.recent_k.unwrap_or(defaults.recent_k),
            kill_cooldown_steps: self
                .game
                .kill_cooldown_steps
                .unwrap_or(defaults.kill_cooldown_steps),
            seed: self.game.seed.unwrap_or(defaults.seed),
            map_path: self.game.map_path.clone(),
            agents,
        }
    }

    pub fn llm_params(&self) -> LlmParams {
        LlmParams {
            model: self.client.model.clone(),
            temperature: self.client.temperature,
            max_tokens: self.client.max_tokens,
        }
    }

    /// Build the remote transport settings; the credential comes from the
    /// configured environment variable and missing credentials fail fast.
    pub fn remote_config(&self) -> Result<RemoteConfig, ConfigError> {
        let api_key = std::env::var(&self.client.credential_env).map_err(|_| {
            ConfigError::Invalid(format!(
                "remote backend needs the `{}` environment variable",
                self.client.credential_env
            ))
        })?;
        Ok(RemoteConfig {
            endpoint: self.client.endpoint.clone(),
            api_key,
            timeout: Duration::from_secs(self.client.timeout_secs),
            retries: self.client.retries,
            backoff: Duration::from_millis(self.client.backoff_ms),
            max_in_flight: self.client.max_in_flight,
        })
    }

    pub fn planner_mode(&self) -> PlannerMode {
        match &self.experiment {
            Some(e) if e.setup == SetupLabel::AllRandom => PlannerMode::NotApplicable,
            Some(e) => match e.planner {
                Some(false) => PlannerMode::Disabled,
                _ => PlannerMode::Enabled,
            },
            None => PlannerMode::Enabled,
        }
    }
}
