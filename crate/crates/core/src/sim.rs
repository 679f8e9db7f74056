//! Game loop driver: wires agents to the engine, runs a game to completion,
//! and produces a replayable record plus the completion transcript.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agents::{AgentMind, HumanIo, LlmAgent, PersonaCatalog, PlayerAgent};
use crate::engine::{check_termination, finish_game, run_meeting, step_task_phase, EngineError};
use crate::evaluation::interview::{
    post_game_interviews, InterviewHooks, InterviewRecord, InterviewSession,
};
use crate::llm::{LlmClient, LlmParams, TranscriptEntry};
use crate::observation::observe;
use crate::record::GameRecord;
use crate::world::{
    new_game, AgentKind, GameConfig, GameState, MapData, Phase, PlayerId, WorldError,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("config requires an LLM client but none was provided")]
    MissingClient,
    #[error("config assigns a human seat but no terminal was provided")]
    MissingHuman,
}

/// Derive a child seed from the game seed and a stream id. Used to give each
/// agent (and the uniform backend) its own deterministic randomness.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 over the xored stream id
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for the uniform backend of a game.
pub const BACKEND_STREAM: u64 = 0xBAC0;

/// Everything configurable about one driven game besides the `GameConfig`.
pub struct RunOptions {
    pub game_id: String,
    pub label: Option<String>,
    /// Completion client for LLM-kind agents (and interviews).
    pub client: Option<Arc<LlmClient>>,
    pub llm: LlmParams,
    /// Terminal for the human seat, if any.
    pub human: Option<(PlayerId, HumanIo)>,
    /// When set, interviews run at the configured hooks.
    pub interviews: Option<InterviewHooks>,
}

impl RunOptions {
    pub fn offline(game_id: impl Into<String>) -> Self {
        Self {
            game_id: game_id.into(),
            label: None,
            client: None,
            llm: LlmParams::default(),
            human: None,
            interviews: None,
        }
    }
}

pub struct CompletedGame {
    pub record: GameRecord,
    pub transcript: Vec<TranscriptEntry>,
    pub interviews: Vec<InterviewRecord>,
    pub final_state: GameState,
}

fn build_agents(
    state: &GameState,
    opts: &mut RunOptions,
) -> Result<BTreeMap<PlayerId, PlayerAgent>, SimError> {
    let catalog = PersonaCatalog::builtin();
    let mut agents = BTreeMap::new();
    let mut human = opts.human.take();
    for (id, spec) in state.resolved_agents().clone() {
        let ps = state.player(id).expect("player exists");
        let agent = match spec.kind {
            AgentKind::Random => PlayerAgent::Random {
                rng: Box::new(ChaCha8Rng::seed_from_u64(derive_seed(
                    state.config().seed,
                    id.0 as u64,
                ))),
            },
            AgentKind::Llm => {
                let client = opts.client.clone().ok_or(SimError::MissingClient)?;
                let persona = ps.persona.as_deref().and_then(|name| catalog.get(name));
                let mind = AgentMind::new(
                    id,
                    ps.color,
                    ps.role,
                    persona,
                    ps.random_plan.as_deref(),
                    spec.planner,
                )
                .map_err(|e| {
                    SimError::Engine(EngineError::AgentFailure {
                        player: id,
                        source: e,
                    })
                })?;
                PlayerAgent::Llm(Box::new(LlmAgent::new(
                    mind,
                    client,
                    opts.llm.clone(),
                    derive_seed(state.config().seed, 0xFA11 ^ (id.0 as u64) << 8),
                )))
            }
            AgentKind::Human => match human.take() {
                Some((seat, io)) if seat == id => PlayerAgent::Human { io },
                _ => return Err(SimError::MissingHuman),
            },
        };
        agents.insert(id, agent);
    }
    Ok(agents)
}

/// Run one game from config to outcome.
///
/// The drive loop alternates task-phase passes and meetings until a
/// termination condition holds; fully deterministic given the config and an
/// offline backend.
pub fn run_game(
    config: &GameConfig,
    map: Arc<MapData>,
    mut opts: RunOptions,
) -> Result<CompletedGame, SimError> {
    let mut state = new_game(config, map, opts.game_id.clone())?;
    let mut agents = build_agents(&state, &mut opts)?;
    let game_id = opts.game_id.clone();
    let mut interviews = Vec::new();
    let mut aborted = false;

    loop {
        if state.outcome().is_some() {
            break;
        }
        if let Some(condition) = check_termination(&state) {
            finish_game(&mut state, condition);
            break;
        }
        let was_meeting = matches!(state.phase(), Phase::Meeting(_));
        {
            let mut decide =
                |_: &GameState, player: PlayerId, obs: &crate::observation::Observation| {
                    agents
                        .get_mut(&player)
                        .expect("agent for every player")
                        .decide(obs, &game_id)
                };
            let result = match state.phase() {
                Phase::Task => step_task_phase(&mut state, &mut decide),
                Phase::Meeting(_) => run_meeting(&mut state, &mut decide).map(|_| ()),
            };
            match result {
                Ok(()) => {}
                // A closed interactive session aborts the game but still
                // persists what happened as an incomplete record.
                Err(EngineError::AgentFailure {
                    source: crate::agents::AgentError::SessionClosed,
                    ..
                }) => {
                    aborted = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        if was_meeting {
            if let (Some(hooks), Some(client)) = (&opts.interviews, &opts.client) {
                if hooks.after_meetings && state.outcome().is_none() {
                    let mut session = InterviewSession::new(client.clone(), hooks.clone());
                    interviews.extend(session.in_game(&state, &agents));
                }
            }
        }
    }

    if !aborted {
        if let (Some(hooks), Some(client)) = (&opts.interviews, &opts.client) {
            if hooks.post_game {
                let mut session = InterviewSession::new(client.clone(), hooks.clone());
                interviews.extend(post_game_interviews(&mut session, &state, &agents));
            }
        }
    }

    let record = GameRecord::from_state(&state, opts.label.clone(), !aborted);
    let transcript = opts
        .client
        .as_ref()
        .map(|c| c.transcript().entries())
        .unwrap_or_default();
    Ok(CompletedGame {
        record,
        transcript,
        interviews,
        final_state: state,
    })
}

/// Observation helper for interviews and interactive play: the latest view
/// each living player has.
pub fn snapshot_observation(
    state: &GameState,
    player: PlayerId,
) -> Result<crate::observation::Observation, EngineError> {
    observe(state, player)
}
