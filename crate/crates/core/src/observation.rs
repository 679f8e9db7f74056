//! Per-player visibility filtering and prompt rendering.
//!
//! `observe` assembles everything a player is allowed to know right now;
//! `render_observation` lays it out as the exact text block sent to
//! language-model agents (and shown to human players). The rendered layout
//! is a stable text contract covered by golden-file tests; changing it is a
//! breaking change.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{legal_actions, ActionOption, EngineError, Event, EventKind};
use crate::world::{Color, GameState, MeetingStage, Phase, PlayerId, RoomId, TaskKind};

/// Phase information disclosed to players, including how much time is left.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseInfo {
    pub kind: PhaseKind,
    pub timesteps_remaining: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseKind {
    Task,
    MeetingDiscussion { round: u8 },
    MeetingVoting,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignedTask {
    pub kind: TaskKind,
    pub name: String,
    pub room: RoomId,
    pub done: bool,
}

/// The visibility-filtered view one player has of the game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub player: PlayerId,
    pub timestep: u32,
    pub phase_info: PhaseInfo,
    pub location: RoomId,
    /// Living players in the room, observer included, ascending id.
    pub occupants: Vec<(PlayerId, Color)>,
    /// Full adjacency listing, one entry per room.
    pub map_connections: Vec<(RoomId, Vec<RoomId>)>,
    /// Most recent `recent_k` events this player witnessed (other players'
    /// actions and global announcements), oldest first.
    pub recent_events: Vec<Event>,
    /// Most recent `recent_k` of the player's own actions, oldest first.
    pub recent_actions: Vec<Event>,
    pub assigned_tasks: Vec<AssignedTask>,
    /// Occupants of camera-covered rooms; present only right after a
    /// CHECK_CAMERA action.
    pub camera_snapshot: Option<BTreeMap<RoomId, Vec<(PlayerId, Color)>>>,
    /// Legal actions, in the exact order they are numbered in the prompt.
    pub options: Vec<ActionOption>,
    /// Colors of all players, for rendering event lines.
    colors: BTreeMap<PlayerId, Color>,
}

/// True if an event is visible from the given room: globally visible events
/// always are, room-scoped events only from inside the visibility set.
pub fn event_visible_to(event: &Event, player_location_at_emission: &RoomId) -> bool {
    event.visibility.covers(player_location_at_emission)
}

/// Assemble the view for one living player.
pub fn observe(state: &GameState, player: PlayerId) -> Result<Observation, EngineError> {
    let ps = state
        .player(player)
        .ok_or(EngineError::DeadPlayer(player))?;
    if !ps.alive {
        return Err(EngineError::DeadPlayer(player));
    }
    let colors = state.colors();
    let occupants: Vec<(PlayerId, Color)> = state
        .players()
        .filter(|(_, other)| other.alive && other.location == ps.location)
        .map(|(id, other)| (id, other.color))
        .collect();
    let k = state.config().recent_k;
    let take_last = |seqs: &[u32]| -> Vec<Event> {
        let start = seqs.len().saturating_sub(k);
        seqs[start..]
            .iter()
            .map(|&seq| state.event_log()[seq as usize].clone())
            .collect()
    };
    let recent_events = take_last(ps.seen_events());
    let recent_actions = take_last(ps.action_events());

    let assigned_tasks: Vec<AssignedTask> = if ps.task_ids().is_empty() {
        // Impostors carry no real instances; they see the known common tasks.
        ps.known_common()
            .iter()
            .map(|spec_id| {
                let spec = state.map().catalog.get(*spec_id);
                AssignedTask {
                    kind: spec.kind,
                    name: spec.name.clone(),
                    room: spec.room.clone(),
                    done: false,
                }
            })
            .collect()
    } else {
        ps.task_ids()
            .iter()
            .map(|task_id| {
                let instance = &state.tasks()[task_id];
                let spec = state.map().catalog.get(instance.spec);
                AssignedTask {
                    kind: spec.kind,
                    name: spec.name.clone(),
                    room: spec.room.clone(),
                    done: instance.is_complete(),
                }
            })
            .collect()
    };

    let checked_camera = ps
        .action_events()
        .last()
        .map(|&seq| matches!(state.event_log()[seq as usize].kind, EventKind::CheckCamera))
        .unwrap_or(false);
    let camera_snapshot = checked_camera.then(|| {
        state
            .map()
            .graph
            .camera_coverage()
            .iter()
            .map(|room| {
                let occupants = state
                    .players()
                    .filter(|(_, other)| other.alive && &other.location == room)
                    .map(|(id, other)| (id, other.color))
                    .collect();
                (room.clone(), occupants)
            })
            .collect()
    });

    let map_connections = state
        .map()
        .graph
        .rooms()
        .iter()
        .map(|room| {
            (
                room.clone(),
                state.map().graph.neighbors(room).iter().cloned().collect(),
            )
        })
        .collect();

    let phase_info = PhaseInfo {
        kind: match state.phase() {
            Phase::Task => PhaseKind::Task,
            Phase::Meeting(m) => match m.stage {
                MeetingStage::Discussion => PhaseKind::MeetingDiscussion { round: m.round },
                MeetingStage::Voting => PhaseKind::MeetingVoting,
            },
        },
        timesteps_remaining: state
            .config()
            .time_limit_steps
            .saturating_sub(state.timestep()),
    };

    Ok(Observation {
        player,
        timestep: state.timestep(),
        phase_info,
        location: ps.location.clone(),
        occupants,
        map_connections,
        recent_events,
        recent_actions,
        assigned_tasks,
        camera_snapshot,
        options: legal_actions(state, player)?,
        colors,
    })
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Snapshot of an agent's mind for rendering: what it remembers, what it
/// planned, and whether the planner is enabled at all.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MindSnapshot {
    pub condensed_memory: String,
    pub previous_thought: Option<String>,
    pub planner_enabled: bool,
}

impl MindSnapshot {
    pub fn empty(planner_enabled: bool) -> Self {
        Self {
            condensed_memory: String::new(),
            previous_thought: None,
            planner_enabled,
        }
    }
}

fn label(colors: &BTreeMap<PlayerId, Color>, id: PlayerId) -> String {
    match colors.get(&id) {
        Some(color) => format!("Player {id}: {color}"),
        None => format!("Player {id}"),
    }
}

/// Event text as seen by an observer ("Player 1: blue KILL Player 2: cyan").
/// Fake task work renders identically to real task work.
pub fn render_event_line(event: &Event, colors: &BTreeMap<PlayerId, Color>) -> String {
    let actor = event.actor.map(|a| label(colors, a));
    let body = render_kind(&event.kind, colors);
    match actor {
        Some(actor) if event.kind.is_player_action() => format!("{actor} {body}"),
        _ => body,
    }
}

/// Event text from the actor's own perspective (no actor prefix).
pub fn render_own_action_line(event: &Event, colors: &BTreeMap<PlayerId, Color>) -> String {
    render_kind(&event.kind, colors)
}

fn render_kind(kind: &EventKind, colors: &BTreeMap<PlayerId, Color>) -> String {
    match kind {
        EventKind::Move { from, to } => format!("MOVE from {from} to {to}"),
        EventKind::Vent { from, to } => format!("VENT from {from} to {to}"),
        EventKind::Kill { victim } => format!("KILL {}", label(colors, *victim)),
        EventKind::CompleteTask { name, room, .. } | EventKind::FakeTask { name, room } => {
            format!("COMPLETE TASK {name} at {room}")
        }
        EventKind::CallMeeting => "CALL MEETING using the emergency button".to_owned(),
        EventKind::ReportBody { victim } => {
            format!("REPORT DEAD BODY of {}", label(colors, *victim))
        }
        EventKind::CheckCamera => "CHECK SECURITY CAMERA".to_owned(),
        EventKind::Speak { text } => format!("SPEAK: \"{text}\""),
        EventKind::Vote { target } => match target {
            Some(p) => format!("VOTE for {}", label(colors, *p)),
            None => "VOTE to Skip".to_owned(),
        },
        EventKind::MeetingStart => "MEETING STARTED".to_owned(),
        EventKind::Ejection { player } => format!("{} was EJECTED", label(colors, *player)),
        EventKind::GameEnd { outcome } => {
            format!("GAME OVER: {} win ({})", outcome.winner, outcome.condition)
        }
    }
}

/// Render the observation into the fixed prompt layout.
///
/// Sections appear in a fixed order with fixed wording; empty sections use
/// fixed placeholder sentences. A pure function of its two arguments. When
/// the planner is disabled the "Previous thought process:" section is
/// omitted entirely.
pub fn render_observation(obs: &Observation, mind: &MindSnapshot) -> String {
    let mut sections: Vec<String> = Vec::new();

    sections.push(format!("Location: {}", obs.location));

    let occupant_list = obs
        .occupants
        .iter()
        .map(|(id, color)| format!("Player {id}: {color}"))
        .collect::<Vec<_>>()
        .join(", ");
    sections.push(format!("Players in {}: {}", obs.location, occupant_list));

    if let Some(snapshot) = &obs.camera_snapshot {
        let mut lines = vec!["Security camera snapshot:".to_owned()];
        for (room, occupants) in snapshot {
            let names = if occupants.is_empty() {
                "no one".to_owned()
            } else {
                occupants
                    .iter()
                    .map(|(id, color)| format!("Player {id}: {color}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            lines.push(format!("{room}: {names}"));
        }
        sections.push(lines.join("\n"));
    }

    let mut lines = vec!["Observation history:".to_owned()];
    if obs.recent_events.is_empty() {
        lines.push("No events have been observed yet.".to_owned());
    } else {
        for (i, event) in obs.recent_events.iter().enumerate() {
            lines.push(format!(
                "{}. Timestep {}: [{}] {}",
                i + 1,
                event.timestep,
                event.phase.short(),
                render_event_line(event, &obs.colors)
            ));
        }
    }
    sections.push(lines.join("\n"));

    let mut lines = vec!["Action history:".to_owned()];
    if obs.recent_actions.is_empty() {
        lines.push("No actions have been taken yet.".to_owned());
    } else {
        for event in &obs.recent_actions {
            lines.push(format!(
                "Timestep {}: [{} phase] {}",
                event.timestep,
                event.phase.short(),
                render_own_action_line(event, &obs.colors)
            ));
        }
    }
    sections.push(lines.join("\n"));

    let mut lines = vec!["Your Assigned Tasks:".to_owned()];
    if obs.assigned_tasks.is_empty() {
        lines.push("No tasks assigned.".to_owned());
    } else {
        for (i, task) in obs.assigned_tasks.iter().enumerate() {
            let done = if task.done { " [done]" } else { "" };
            lines.push(format!(
                "{}. {}: {} ({}){done}",
                i + 1,
                task.kind,
                task.name,
                task.room
            ));
        }
    }
    sections.push(lines.join("\n"));

    let mut lines = vec!["Available actions:".to_owned()];
    for (i, option) in obs.options.iter().enumerate() {
        lines.push(format!("{}. {}", i + 1, option.display));
    }
    sections.push(lines.join("\n"));

    let memory = if mind.condensed_memory.is_empty() {
        "no memory has been processed."
    } else {
        mind.condensed_memory.as_str()
    };
    sections.push(format!("Previous condensed memory:\n{memory}"));

    if mind.planner_enabled {
        let thought = match &mind.previous_thought {
            Some(t) if !t.is_empty() => t.as_str(),
            _ => "no thought process has been made",
        };
        sections.push(format!("Previous thought process:\n{thought}"));
    }

    sections.join("\n\n")
}
