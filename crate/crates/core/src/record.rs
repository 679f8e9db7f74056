//! The JSONL game record format and replay.
//!
//! A record is one header line, one line per event, and one footer line.
//! Replaying re-simulates the game through the real engine, feeding each
//! player's recorded actions back as decisions; a complete record must
//! reproduce its own event sequence and outcome exactly.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::Decision;
use crate::engine::{
    check_termination, finish_game, run_meeting, step_task_phase, task_progress, ActionBody,
    EngineError, Event, EventKind, Outcome,
};
use crate::world::{
    new_game, AgentKind, Color, GameConfig, GameState, MapData, Phase, PlayerId, Role, WorldError,
};
use crate::{ENGINE_VERSION, RECORD_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("corrupt record at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("record written by engine {found}, this engine is {expected}")]
    VersionMismatch { found: String, expected: String },
    #[error("replay diverged at event {index}: {message}")]
    ReplayDiverged { index: usize, message: String },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// First line of a record: everything needed to re-create the game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub format_version: u32,
    pub engine_version: String,
    pub game_id: String,
    /// Experiment label when the game ran inside a batch.
    pub label: Option<String>,
    pub seed: u64,
    pub config: GameConfig,
    pub config_hash: String,
    pub roles: BTreeMap<PlayerId, Role>,
    pub colors: BTreeMap<PlayerId, Color>,
    pub personas: BTreeMap<PlayerId, String>,
    pub agent_kinds: BTreeMap<PlayerId, AgentKind>,
    pub planner: BTreeMap<PlayerId, bool>,
}

/// Last line of a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFooter {
    pub outcome: Option<Outcome>,
    pub task_progress: f64,
    pub duration_timesteps: u32,
    pub event_count: u32,
    /// False for aborted interactive sessions persisted mid-game.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameRecord {
    pub header: RecordHeader,
    pub events: Vec<Event>,
    pub footer: RecordFooter,
}

/// Canonical hash of a config, stamped into record headers.
pub fn config_hash(config: &GameConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl GameRecord {
    pub fn from_state(state: &GameState, label: Option<String>, complete: bool) -> Self {
        let mut personas = BTreeMap::new();
        let mut roles = BTreeMap::new();
        let mut colors = BTreeMap::new();
        for (id, ps) in state.players() {
            roles.insert(id, ps.role);
            colors.insert(id, ps.color);
            if let Some(p) = &ps.persona {
                personas.insert(id, p.clone());
            }
        }
        let agent_kinds = state
            .resolved_agents()
            .iter()
            .map(|(id, spec)| (*id, spec.kind))
            .collect();
        let planner = state
            .resolved_agents()
            .iter()
            .map(|(id, spec)| (*id, spec.planner))
            .collect();
        let header = RecordHeader {
            format_version: RECORD_FORMAT_VERSION,
            engine_version: ENGINE_VERSION.to_owned(),
            game_id: state.game_id().to_owned(),
            label,
            seed: state.config().seed,
            config: state.config().clone(),
            config_hash: config_hash(state.config()),
            roles,
            colors,
            personas,
            agent_kinds,
            planner,
        };
        let footer = RecordFooter {
            outcome: state.outcome().copied(),
            task_progress: task_progress(state),
            duration_timesteps: state.timestep(),
            event_count: state.event_log().len() as u32,
            complete,
        };
        Self {
            header,
            events: state.event_log().to_vec(),
            footer,
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<(), RecordError> {
        serde_json::to_writer(&mut writer, &self.header).map_err(|e| RecordError::Corrupt {
            line: 1,
            message: e.to_string(),
        })?;
        writeln!(writer)?;
        for (i, event) in self.events.iter().enumerate() {
            serde_json::to_writer(&mut writer, event).map_err(|e| RecordError::Corrupt {
                line: i + 2,
                message: e.to_string(),
            })?;
            writeln!(writer)?;
        }
        serde_json::to_writer(&mut writer, &self.footer).map_err(|e| RecordError::Corrupt {
            line: self.events.len() + 2,
            message: e.to_string(),
        })?;
        writeln!(writer)?;
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("record serializes");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<(), RecordError> {
        let file = std::fs::File::create(path)?;
        self.write_jsonl(std::io::BufWriter::new(file))
    }

    pub fn parse_jsonl<R: BufRead>(reader: R) -> Result<Self, RecordError> {
        let mut header: Option<RecordHeader> = None;
        let mut events: Vec<Event> = Vec::new();
        let mut footer: Option<RecordFooter> = None;
        let mut line_no = 0usize;
        for line in reader.lines() {
            let line = line?;
            line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            if footer.is_some() {
                return Err(RecordError::Corrupt {
                    line: line_no,
                    message: "content after footer".into(),
                });
            }
            if header.is_none() {
                header = Some(
                    serde_json::from_str(&line).map_err(|e| RecordError::Corrupt {
                        line: line_no,
                        message: format!("bad header: {e}"),
                    })?,
                );
                continue;
            }
            // Middle lines are events until the footer shows up; the footer
            // is the only line without an event `type`.
            if let Ok(event) = serde_json::from_str::<Event>(&line) {
                events.push(event);
            } else {
                footer = Some(
                    serde_json::from_str(&line).map_err(|e| RecordError::Corrupt {
                        line: line_no,
                        message: format!("neither event nor footer: {e}"),
                    })?,
                );
            }
        }
        let header = header.ok_or(RecordError::Corrupt {
            line: 1,
            message: "empty file".into(),
        })?;
        let footer = footer.ok_or(RecordError::Corrupt {
            line: line_no,
            message: "missing footer (truncated record)".into(),
        })?;
        if footer.event_count as usize != events.len() {
            return Err(RecordError::Corrupt {
                line: line_no,
                message: format!(
                    "footer counts {} events, found {}",
                    footer.event_count,
                    events.len()
                ),
            });
        }
        Ok(Self {
            header,
            events,
            footer,
        })
    }

    pub fn load(path: &Path) -> Result<Self, RecordError> {
        let file = std::fs::File::open(path)?;
        Self::parse_jsonl(std::io::BufReader::new(file))
    }

    pub fn verify_version(&self) -> Result<(), RecordError> {
        if self.header.format_version != RECORD_FORMAT_VERSION
            || self.header.engine_version != ENGINE_VERSION
        {
            return Err(RecordError::VersionMismatch {
                found: format!(
                    "{} (format {})",
                    self.header.engine_version, self.header.format_version
                ),
                expected: format!("{ENGINE_VERSION} (format {RECORD_FORMAT_VERSION})"),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

fn action_from_event(kind: &EventKind) -> Option<ActionBody> {
    match kind {
        EventKind::Move { to, .. } => Some(ActionBody::Move { to: to.clone() }),
        EventKind::Vent { to, .. } => Some(ActionBody::Vent { to: to.clone() }),
        EventKind::Kill { victim } => Some(ActionBody::Kill { victim: *victim }),
        EventKind::CompleteTask { task, .. } => Some(ActionBody::CompleteTask { task: *task }),
        EventKind::FakeTask { name, room } => Some(ActionBody::FakeTask {
            name: name.clone(),
            room: room.clone(),
        }),
        EventKind::CallMeeting => Some(ActionBody::CallMeeting),
        EventKind::ReportBody { victim } => Some(ActionBody::ReportBody { victim: *victim }),
        EventKind::CheckCamera => Some(ActionBody::CheckCamera),
        EventKind::Speak { text } => Some(ActionBody::Speak { text: text.clone() }),
        EventKind::Vote { target } => Some(ActionBody::Vote { target: *target }),
        _ => None,
    }
}

/// Re-simulate a record through the engine, feeding each player's recorded
/// actions back as decisions. Calls `observer` after each engine step with
/// the newly emitted events. Returns the reconstructed final state.
///
/// Complete records must reproduce their event sequence and outcome exactly;
/// any divergence is reported. Incomplete records replay as far as the
/// journal goes.
pub fn replay_record(
    record: &GameRecord,
    map: Arc<MapData>,
    mut observer: impl FnMut(&Event, &GameState),
) -> Result<GameState, RecordError> {
    record.verify_version()?;
    let expected_hash = config_hash(&record.header.config);
    if expected_hash != record.header.config_hash {
        return Err(RecordError::Corrupt {
            line: 1,
            message: "config hash does not match header config".into(),
        });
    }
    let mut state = new_game(&record.header.config, map, record.header.game_id.clone())?;
    for (id, role) in &record.header.roles {
        let dealt = state
            .player(*id)
            .ok_or_else(|| RecordError::Corrupt {
                line: 1,
                message: format!("header names unknown player {id}"),
            })?
            .role;
        if dealt != *role {
            return Err(RecordError::Corrupt {
                line: 1,
                message: format!("seeded deal gives {id} role {dealt}, header says {role}"),
            });
        }
    }

    let mut queues: BTreeMap<PlayerId, VecDeque<ActionBody>> = BTreeMap::new();
    for event in &record.events {
        if let (Some(actor), Some(action)) = (event.actor, action_from_event(&event.kind)) {
            queues.entry(actor).or_default().push_back(action);
        }
    }

    let mut flushed = 0usize;
    loop {
        if state.outcome().is_some() {
            break;
        }
        if let Some(condition) = check_termination(&state) {
            finish_game(&mut state, condition);
            break;
        }
        let exhausted = {
            let mut exhausted = false;
            let mut decide = |_: &GameState,
                              player: PlayerId,
                              _: &crate::observation::Observation| {
                match queues.get_mut(&player).and_then(|q| q.pop_front()) {
                    Some(action) => Ok(Decision::bare(action)),
                    None => {
                        exhausted = true;
                        Err(crate::agents::AgentError::SessionClosed)
                    }
                }
            };
            let result = match state.phase() {
                Phase::Task => step_task_phase(&mut state, &mut decide).map(|_| ()),
                Phase::Meeting(_) => run_meeting(&mut state, &mut decide).map(|_| ()),
            };
            match result {
                Ok(()) => false,
                Err(EngineError::AgentFailure { .. }) if exhausted => true,
                Err(e) => return Err(e.into()),
            }
        };
        while flushed < state.event_log().len() {
            let event = state.event_log()[flushed].clone();
            observer(&event, &state);
            flushed += 1;
        }
        if exhausted {
            if record.footer.complete {
                return Err(RecordError::ReplayDiverged {
                    index: flushed,
                    message: "journal ended before the game did".into(),
                });
            }
            break;
        }
    }
    while flushed < state.event_log().len() {
        let event = state.event_log()[flushed].clone();
        observer(&event, &state);
        flushed += 1;
    }

    if record.footer.complete {
        for (i, (got, want)) in state
            .event_log()
            .iter()
            .zip(record.events.iter())
            .enumerate()
        {
            if got != want {
                return Err(RecordError::ReplayDiverged {
                    index: i,
                    message: format!("replayed {got:?}, recorded {want:?}"),
                });
            }
        }
        if state.event_log().len() != record.events.len() {
            return Err(RecordError::ReplayDiverged {
                index: state.event_log().len().min(record.events.len()),
                message: format!(
                    "replay produced {} events, record has {}",
                    state.event_log().len(),
                    record.events.len()
                ),
            });
        }
        if state.outcome().copied() != record.footer.outcome {
            return Err(RecordError::ReplayDiverged {
                index: record.events.len(),
                message: "outcome mismatch".into(),
            });
        }
    }
    Ok(state)
}
