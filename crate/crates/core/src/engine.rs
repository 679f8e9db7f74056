//! Phase state machine: legal-action enumeration, action execution, meeting
//! and vote mechanics, termination detection, deterministic stepping.
//!
//! A single game's state is mutated by exactly one logical thread of
//! control; distinct games may run concurrently with no shared mutable
//! state.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, Decision};
use crate::observation::{observe, Observation};
use crate::world::{GameState, MeetingStage, MeetingState, Phase, PlayerId, Role, RoomId, TaskId};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("player {0} is dead")]
    DeadPlayer(PlayerId),
    #[error("illegal action by player {player}: {attempted}")]
    IllegalAction { player: PlayerId, attempted: String },
    #[error("agent for player {player} failed: {source}")]
    AgentFailure {
        player: PlayerId,
        #[source]
        source: AgentError,
    },
    #[error("engine driven in wrong phase: {0}")]
    PhaseMismatch(String),
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseTag {
    Task,
    Meeting,
}

impl PhaseTag {
    /// Tag as it appears in observation-history lines.
    pub fn short(self) -> &'static str {
        match self {
            PhaseTag::Task => "task",
            PhaseTag::Meeting => "meeting",
        }
    }
}

/// Which rooms an event can be seen from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Visibility {
    All,
    Rooms(BTreeSet<RoomId>),
}

impl Visibility {
    pub fn rooms<const N: usize>(rooms: [&RoomId; N]) -> Self {
        Visibility::Rooms(rooms.into_iter().cloned().collect())
    }

    pub fn covers(&self, room: &RoomId) -> bool {
        match self {
            Visibility::All => true,
            Visibility::Rooms(set) => set.contains(room),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Move {
        from: RoomId,
        to: RoomId,
    },
    Vent {
        from: RoomId,
        to: RoomId,
    },
    Kill {
        victim: PlayerId,
    },
    /// Real task work. Name and room are denormalized for rendering.
    CompleteTask {
        task: TaskId,
        name: String,
        #[serde(rename = "task_room")]
        room: RoomId,
    },
    /// Pretend task work; renders identically to `CompleteTask` to observers.
    FakeTask {
        name: String,
        #[serde(rename = "task_room")]
        room: RoomId,
    },
    CallMeeting,
    ReportBody {
        victim: PlayerId,
    },
    CheckCamera,
    Speak {
        text: String,
    },
    Vote {
        target: Option<PlayerId>,
    },
    MeetingStart,
    Ejection {
        player: PlayerId,
    },
    GameEnd {
        outcome: Outcome,
    },
}

impl EventKind {
    /// True for kinds a player can choose (as opposed to system events).
    pub fn is_player_action(&self) -> bool {
        !matches!(
            self,
            EventKind::MeetingStart | EventKind::Ejection { .. } | EventKind::GameEnd { .. }
        )
    }

    /// Stable kind label used in analytics and histograms.
    pub fn action_label(&self) -> Option<&'static str> {
        match self {
            EventKind::Move { .. } => Some("MOVE"),
            EventKind::CompleteTask { .. } => Some("COMPLETE_TASK"),
            EventKind::FakeTask { .. } => Some("FAKE_TASK"),
            EventKind::CallMeeting => Some("CALL_MEETING"),
            EventKind::ReportBody { .. } => Some("REPORT_BODY"),
            EventKind::CheckCamera => Some("CHECK_CAMERA"),
            EventKind::Speak { .. } => Some("SPEAK"),
            EventKind::Vent { .. } => Some("VENT"),
            EventKind::Kill { .. } => Some("KILL"),
            EventKind::Vote { .. } => Some("VOTE"),
            _ => None,
        }
    }
}

/// One journal entry. Events are append-only and the journal order is the
/// canonical replay format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u32,
    pub timestep: u32,
    pub phase: PhaseTag,
    pub actor: Option<PlayerId>,
    #[serde(flatten)]
    pub kind: EventKind,
    pub room: Option<RoomId>,
    pub visibility: Visibility,
}

// ---------------------------------------------------------------------------
// Outcomes and votes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Winner {
    Crewmates,
    Impostors,
}

impl std::fmt::Display for Winner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Winner::Crewmates => f.write_str("Crewmates"),
            Winner::Impostors => f.write_str("Impostors"),
        }
    }
}

/// The four ways a game can end, in the order outcome tables report them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeCondition {
    CrewmatesEliminated,
    TimeLimitReached,
    ImpostorsEliminated,
    AllTasksCompleted,
}

pub const OUTCOME_CONDITIONS: [OutcomeCondition; 4] = [
    OutcomeCondition::CrewmatesEliminated,
    OutcomeCondition::TimeLimitReached,
    OutcomeCondition::ImpostorsEliminated,
    OutcomeCondition::AllTasksCompleted,
];

impl OutcomeCondition {
    pub fn winner(self) -> Winner {
        match self {
            OutcomeCondition::CrewmatesEliminated | OutcomeCondition::TimeLimitReached => {
                Winner::Impostors
            }
            OutcomeCondition::ImpostorsEliminated | OutcomeCondition::AllTasksCompleted => {
                Winner::Crewmates
            }
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OutcomeCondition::CrewmatesEliminated => "Crewmates eliminated",
            OutcomeCondition::TimeLimitReached => "Time limit reached",
            OutcomeCondition::ImpostorsEliminated => "Impostors eliminated",
            OutcomeCondition::AllTasksCompleted => "All tasks completed",
        }
    }
}

impl std::fmt::Display for OutcomeCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub winner: Winner,
    pub condition: OutcomeCondition,
}

impl Outcome {
    pub fn from_condition(condition: OutcomeCondition) -> Self {
        Self {
            winner: condition.winner(),
            condition,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoteResult {
    Ejected(PlayerId),
    NoEjection,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteTally {
    pub votes: BTreeMap<PlayerId, Option<PlayerId>>,
    pub result: VoteResult,
}

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

/// The executable payload of an action. In an option list, `Speak` carries
/// the placeholder text; the executed form carries what was actually said.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionBody {
    Move { to: RoomId },
    CompleteTask { task: TaskId },
    FakeTask { name: String, room: RoomId },
    CallMeeting,
    ReportBody { victim: PlayerId },
    CheckCamera,
    Speak { text: String },
    Vent { to: RoomId },
    Kill { victim: PlayerId },
    Vote { target: Option<PlayerId> },
}

impl ActionBody {
    /// Fixed ordering of option kinds in rendered lists.
    fn kind_rank(&self) -> u8 {
        match self {
            ActionBody::Move { .. } => 0,
            ActionBody::CompleteTask { .. } => 1,
            ActionBody::FakeTask { .. } => 2,
            ActionBody::CallMeeting => 3,
            ActionBody::ReportBody { .. } => 4,
            ActionBody::CheckCamera => 5,
            ActionBody::Speak { .. } => 6,
            ActionBody::Vent { .. } => 7,
            ActionBody::Kill { .. } => 8,
            ActionBody::Vote { .. } => 9,
        }
    }

    /// Deterministic payload ordering within a kind.
    fn payload_key(&self) -> String {
        match self {
            ActionBody::Move { to } | ActionBody::Vent { to } => to.to_string(),
            ActionBody::CompleteTask { task } => format!("{:010}", task.0),
            ActionBody::FakeTask { name, room } => format!("{name}/{room}"),
            ActionBody::ReportBody { victim } | ActionBody::Kill { victim } => {
                format!("{:03}", victim.0)
            }
            ActionBody::Vote { target } => match target {
                Some(p) => format!("{:03}", p.0),
                None => "zzz-skip".into(),
            },
            _ => String::new(),
        }
    }

    pub fn kind_label(&self) -> &'static str {
        match self {
            ActionBody::Move { .. } => "MOVE",
            ActionBody::CompleteTask { .. } => "COMPLETE_TASK",
            ActionBody::FakeTask { .. } => "FAKE_TASK",
            ActionBody::CallMeeting => "CALL_MEETING",
            ActionBody::ReportBody { .. } => "REPORT_BODY",
            ActionBody::CheckCamera => "CHECK_CAMERA",
            ActionBody::Speak { .. } => "SPEAK",
            ActionBody::Vent { .. } => "VENT",
            ActionBody::Kill { .. } => "KILL",
            ActionBody::Vote { .. } => "VOTE",
        }
    }
}

/// One entry of a legal-option list: the executable body plus the exact
/// string shown in prompts. Display strings within one list are unique and
/// numbered in list order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOption {
    pub body: ActionBody,
    pub display: String,
}

/// Placeholder shown for the speak option before the agent fills in text.
pub const SPEAK_PLACEHOLDER: &str = "SPEAK: '...'";

fn option_display(state: &GameState, player: PlayerId, body: &ActionBody) -> String {
    let here = &state.player(player).expect("player exists").location;
    match body {
        ActionBody::Move { to } => format!("MOVE from {here} to {to}"),
        ActionBody::CompleteTask { task } => {
            let instance = &state.tasks()[task];
            let spec = state.map().catalog.get(instance.spec);
            format!("COMPLETE TASK {} at {}", spec.name, spec.room)
        }
        ActionBody::FakeTask { name, room } => format!("FAKE TASK {name} at {room}"),
        ActionBody::CallMeeting => {
            format!("CALL MEETING using the emergency button at {here}")
        }
        ActionBody::ReportBody { victim } => {
            format!("REPORT DEAD BODY of {}", state.player_label(*victim))
        }
        ActionBody::CheckCamera => "CHECK SECURITY CAMERA".to_owned(),
        ActionBody::Speak { .. } => SPEAK_PLACEHOLDER.to_owned(),
        ActionBody::Vent { to } => format!("VENT from {here} to {to}"),
        ActionBody::Kill { victim } => format!("KILL {}", state.player_label(*victim)),
        ActionBody::Vote { target } => match target {
            Some(p) => format!("VOTE for {}", state.player_label(*p)),
            None => "VOTE to Skip".to_owned(),
        },
    }
}

// ---------------------------------------------------------------------------
// Legal actions
// ---------------------------------------------------------------------------

/// Enumerate the actions `player` may take right now, in deterministic
/// order: fixed kind order, then payload ordering within a kind.
pub fn legal_actions(
    state: &GameState,
    player: PlayerId,
) -> Result<Vec<ActionOption>, EngineError> {
    let ps = state
        .player(player)
        .ok_or(EngineError::DeadPlayer(player))?;
    if !ps.alive {
        return Err(EngineError::DeadPlayer(player));
    }
    let mut bodies: Vec<ActionBody> = Vec::new();
    match state.phase() {
        Phase::Task => {
            let here = ps.location.clone();
            for to in state.map().graph.neighbors(&here) {
                bodies.push(ActionBody::Move { to: to.clone() });
            }
            match ps.role {
                Role::Crewmate => {
                    for task_id in ps.task_ids() {
                        let instance = &state.tasks()[task_id];
                        let spec = state.map().catalog.get(instance.spec);
                        if !instance.is_complete() && spec.room == here {
                            bodies.push(ActionBody::CompleteTask { task: *task_id });
                        }
                    }
                }
                Role::Impostor => {
                    for spec_id in ps.known_common() {
                        let spec = state.map().catalog.get(*spec_id);
                        if spec.room == here {
                            bodies.push(ActionBody::FakeTask {
                                name: spec.name.clone(),
                                room: spec.room.clone(),
                            });
                        }
                    }
                }
            }
            if &here == state.map().graph.meeting_room() {
                bodies.push(ActionBody::CallMeeting);
            }
            for (victim, room) in state.bodies() {
                if room == &here {
                    bodies.push(ActionBody::ReportBody { victim: *victim });
                }
            }
            if &here == state.map().graph.camera_room() {
                bodies.push(ActionBody::CheckCamera);
            }
            bodies.push(ActionBody::Speak {
                text: String::new(),
            });
            if ps.role == Role::Impostor {
                for to in state.map().graph.vent_reachable(&here) {
                    bodies.push(ActionBody::Vent { to });
                }
                let cooled_down = match (state.config().kill_cooldown_steps, ps.last_kill_timestep)
                {
                    (0, _) | (_, None) => true,
                    (cooldown, Some(last)) => state.timestep().saturating_sub(last) >= cooldown,
                };
                if cooled_down {
                    for (other, os) in state.players() {
                        if other != player
                            && os.alive
                            && os.role == Role::Crewmate
                            && os.location == here
                        {
                            bodies.push(ActionBody::Kill { victim: other });
                        }
                    }
                }
            }
        }
        Phase::Meeting(meeting) => match meeting.stage {
            MeetingStage::Discussion => {
                bodies.push(ActionBody::Speak {
                    text: String::new(),
                });
            }
            MeetingStage::Voting => {
                for (other, os) in state.players() {
                    if other != player && os.alive {
                        bodies.push(ActionBody::Vote {
                            target: Some(other),
                        });
                    }
                }
                bodies.push(ActionBody::Vote { target: None });
            }
        },
    }
    bodies.sort_by(|a, b| {
        a.kind_rank()
            .cmp(&b.kind_rank())
            .then_with(|| a.payload_key().cmp(&b.payload_key()))
    });
    let options: Vec<ActionOption> = bodies
        .into_iter()
        .map(|body| {
            let display = option_display(state, player, &body);
            ActionOption { body, display }
        })
        .collect();
    debug_assert!(
        options
            .iter()
            .map(|o| &o.display)
            .collect::<BTreeSet<_>>()
            .len()
            == options.len(),
        "option displays must be unique"
    );
    Ok(options)
}

/// True when `attempt` is covered by the offered option `legal`. Speak
/// matches regardless of text: the spoken content is taken from the attempt.
fn action_matches(legal: &ActionBody, attempt: &ActionBody) -> bool {
    match (legal, attempt) {
        (ActionBody::Speak { .. }, ActionBody::Speak { .. }) => true,
        (a, b) => a == b,
    }
}

// ---------------------------------------------------------------------------
// Action execution
// ---------------------------------------------------------------------------

/// Execute one action, emitting its events. The action must be a member of
/// the current legal set; callers holding a stale option list must
/// re-enumerate after an `IllegalAction` error.
pub fn apply_action(
    state: &mut GameState,
    player: PlayerId,
    action: &ActionBody,
) -> Result<Vec<Event>, EngineError> {
    let legal = legal_actions(state, player)?;
    if !legal.iter().any(|o| action_matches(&o.body, action)) {
        return Err(EngineError::IllegalAction {
            player,
            attempted: format!("{action:?}"),
        });
    }
    let log_start = state.event_log().len();
    let here = state
        .player(player)
        .expect("player exists")
        .location
        .clone();
    match action {
        ActionBody::Move { to } => {
            state.player_mut(player).location = to.clone();
            state.emit(
                Some(player),
                EventKind::Move {
                    from: here.clone(),
                    to: to.clone(),
                },
                Some(here.clone()),
                Visibility::rooms([&here, to]),
            );
        }
        ActionBody::Vent { to } => {
            state.player_mut(player).location = to.clone();
            state.emit(
                Some(player),
                EventKind::Vent {
                    from: here.clone(),
                    to: to.clone(),
                },
                Some(here.clone()),
                Visibility::rooms([&here, to]),
            );
        }
        ActionBody::Kill { victim } => {
            state.player_mut(*victim).alive = false;
            state.bodies_mut().push((*victim, here.clone()));
            let t = state.timestep();
            state.player_mut(player).last_kill_timestep = Some(t);
            state.emit(
                Some(player),
                EventKind::Kill { victim: *victim },
                Some(here.clone()),
                Visibility::rooms([&here]),
            );
        }
        ActionBody::CompleteTask { task } => {
            let instance = state.tasks_mut().get_mut(task).expect("legal task");
            instance.remaining_steps -= 1;
            let spec = state.map().catalog.get(state.tasks()[task].spec).clone();
            state.emit(
                Some(player),
                EventKind::CompleteTask {
                    task: *task,
                    name: spec.name,
                    room: spec.room,
                },
                Some(here.clone()),
                Visibility::rooms([&here]),
            );
        }
        ActionBody::FakeTask { name, room } => {
            state.emit(
                Some(player),
                EventKind::FakeTask {
                    name: name.clone(),
                    room: room.clone(),
                },
                Some(here.clone()),
                Visibility::rooms([&here]),
            );
        }
        ActionBody::CallMeeting => {
            state.emit(
                Some(player),
                EventKind::CallMeeting,
                Some(here.clone()),
                Visibility::All,
            );
            start_meeting(state);
        }
        ActionBody::ReportBody { victim } => {
            state.emit(
                Some(player),
                EventKind::ReportBody { victim: *victim },
                Some(here.clone()),
                Visibility::All,
            );
            start_meeting(state);
        }
        ActionBody::CheckCamera => {
            // Visible only to players sharing the camera room; the snapshot
            // itself is delivered privately via the actor's next observation.
            state.emit(
                Some(player),
                EventKind::CheckCamera,
                Some(here.clone()),
                Visibility::rooms([&here]),
            );
        }
        ActionBody::Speak { text } => {
            let visibility = match state.phase() {
                Phase::Task => Visibility::rooms([&here]),
                Phase::Meeting(_) => Visibility::All,
            };
            state.emit(
                Some(player),
                EventKind::Speak { text: text.clone() },
                Some(here.clone()),
                visibility,
            );
        }
        ActionBody::Vote { target } => {
            if let Phase::Meeting(meeting) = state.phase_mut() {
                meeting.votes.insert(player, *target);
            }
            state.emit(
                Some(player),
                EventKind::Vote { target: *target },
                Some(here.clone()),
                Visibility::All,
            );
        }
    }
    Ok(state.event_log()[log_start..].to_vec())
}

/// Switch to the meeting phase: teleport every living player to the meeting
/// room, clear unreported bodies, and announce the meeting to all.
fn start_meeting(state: &mut GameState) {
    state.set_phase(Phase::Meeting(MeetingState {
        round: 1,
        stage: MeetingStage::Discussion,
        votes: BTreeMap::new(),
    }));
    let meeting_room = state.map().graph.meeting_room().clone();
    for ps in state.players_mut().values_mut() {
        if ps.alive {
            ps.location = meeting_room.clone();
        }
    }
    state.bodies_mut().clear();
    state.emit(
        None,
        EventKind::MeetingStart,
        Some(meeting_room),
        Visibility::All,
    );
}

// CHECK_CAMERA visibility note: the event is globally visible as an action
// of record, but the snapshot itself is delivered privately through the
// actor's next observation.

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

/// A decision callback: given the live state and a fresh observation for the
/// player, produce the action to take.
pub type DecideFn<'a> =
    dyn FnMut(&GameState, PlayerId, &Observation) -> Result<Decision, AgentError> + 'a;

/// Run one task-phase timestep: query living players in ascending id order,
/// each against an observation reflecting earlier same-timestep events. If
/// an action switches the phase to Meeting (or ends the game), the remaining
/// players are skipped. The timestep advances once per pass.
pub fn step_task_phase(state: &mut GameState, decide: &mut DecideFn) -> Result<(), EngineError> {
    if !matches!(state.phase(), Phase::Task) || state.outcome().is_some() {
        return Err(EngineError::PhaseMismatch(
            "step_task_phase requires Task phase".into(),
        ));
    }
    let order = state.living_players();
    for player in order {
        if state.outcome().is_some() || !matches!(state.phase(), Phase::Task) {
            break;
        }
        let ps = state.player(player).expect("player exists");
        if !ps.alive {
            continue; // killed earlier in this pass
        }
        let obs = observe(state, player)?;
        let decision = decide(state, player, &obs)
            .map_err(|source| EngineError::AgentFailure { player, source })?;
        apply_action(state, player, &decision.chosen)?;
        if let Some(condition) = check_termination(state) {
            finish_game(state, condition);
        }
    }
    if state.outcome().is_none() {
        state.advance_timestep();
    }
    Ok(())
}

/// Run a full meeting: `discussion_rounds` rounds in which every living
/// player speaks once (ascending id order), then one vote each, then the
/// tally. Returns the tally. If an impostor remains and the game has not
/// ended, the phase returns to Task.
pub fn run_meeting(state: &mut GameState, decide: &mut DecideFn) -> Result<VoteTally, EngineError> {
    match state.phase() {
        Phase::Meeting(m) if m.round == 1 && m.stage == MeetingStage::Discussion => {}
        other => {
            return Err(EngineError::PhaseMismatch(format!(
                "run_meeting requires a fresh meeting, got {other:?}"
            )))
        }
    }
    let rounds = state.config().discussion_rounds;
    for round in 1..=rounds {
        if let Phase::Meeting(m) = state.phase_mut() {
            m.round = round;
        }
        for player in state.living_players() {
            let obs = observe(state, player)?;
            let decision = decide(state, player, &obs)
                .map_err(|source| EngineError::AgentFailure { player, source })?;
            apply_action(state, player, &decision.chosen)?;
        }
    }
    if let Phase::Meeting(m) = state.phase_mut() {
        m.stage = MeetingStage::Voting;
    }
    for player in state.living_players() {
        let obs = observe(state, player)?;
        let decision = decide(state, player, &obs)
            .map_err(|source| EngineError::AgentFailure { player, source })?;
        apply_action(state, player, &decision.chosen)?;
    }
    let votes = match state.phase() {
        Phase::Meeting(m) => m.votes.clone(),
        _ => unreachable!("meeting phase persists through voting"),
    };
    let result = tally_votes(&votes);
    if let VoteResult::Ejected(player) = result {
        state.player_mut(player).alive = false;
        state.emit(None, EventKind::Ejection { player }, None, Visibility::All);
    }
    if let Some(condition) = check_termination(state) {
        finish_game(state, condition);
    } else {
        state.set_phase(Phase::Task);
    }
    Ok(VoteTally { votes, result })
}

/// Strict plurality over non-skip targets: a target is ejected only if its
/// count strictly exceeds every other target's count and the skip count.
/// Any tie for the maximum, or a skip plurality, yields no ejection.
pub fn tally_votes(votes: &BTreeMap<PlayerId, Option<PlayerId>>) -> VoteResult {
    let mut counts: BTreeMap<PlayerId, u32> = BTreeMap::new();
    let mut skips = 0u32;
    for target in votes.values() {
        match target {
            Some(p) => *counts.entry(*p).or_insert(0) += 1,
            None => skips += 1,
        }
    }
    let Some(&max) = counts.values().max() else {
        return VoteResult::NoEjection;
    };
    let leaders: Vec<PlayerId> = counts
        .iter()
        .filter(|(_, &c)| c == max)
        .map(|(p, _)| *p)
        .collect();
    if leaders.len() == 1 && max > skips {
        VoteResult::Ejected(leaders[0])
    } else {
        VoteResult::NoEjection
    }
}

// ---------------------------------------------------------------------------
// Termination and progress
// ---------------------------------------------------------------------------

/// Check the four end conditions in priority order.
pub fn check_termination(state: &GameState) -> Option<OutcomeCondition> {
    let living_impostors = state.living_with_role(Role::Impostor).len();
    let living_crewmates = state.living_with_role(Role::Crewmate).len();
    if living_impostors == 0 {
        return Some(OutcomeCondition::ImpostorsEliminated);
    }
    if living_impostors >= living_crewmates {
        return Some(OutcomeCondition::CrewmatesEliminated);
    }
    let all_done = state
        .tasks()
        .values()
        .filter(|t| state.player(t.owner).map(|p| p.alive).unwrap_or(false))
        .all(|t| t.is_complete());
    if all_done {
        return Some(OutcomeCondition::AllTasksCompleted);
    }
    if state.timestep() >= state.config().time_limit_steps {
        return Some(OutcomeCondition::TimeLimitReached);
    }
    None
}

/// Record the outcome and journal the end of the game.
pub fn finish_game(state: &mut GameState, condition: OutcomeCondition) {
    let outcome = Outcome::from_condition(condition);
    state.set_outcome(outcome);
    state.emit(None, EventKind::GameEnd { outcome }, None, Visibility::All);
}

/// Fraction of task steps completed, over instances owned by living
/// crewmates. 1.0 when no such instances exist.
pub fn task_progress(state: &GameState) -> f64 {
    let mut done = 0u32;
    let mut total = 0u32;
    for task in state.tasks().values() {
        if !state.player(task.owner).map(|p| p.alive).unwrap_or(false) {
            continue;
        }
        let duration = state.map().catalog.get(task.spec).kind.duration_steps() as u32;
        total += duration;
        done += duration - task.remaining_steps as u32;
    }
    if total == 0 {
        1.0
    } else {
        done as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{GameConfig, MapData, Role, ScenarioBuilder};

    fn decision(body: ActionBody) -> Decision {
        Decision {
            chosen: body,
            new_memory: None,
            new_thought: None,
            raw_response: None,
            fallback_used: false,
        }
    }

    fn two_player_state() -> GameState {
        ScenarioBuilder::new(GameConfig::default(), MapData::builtin(), "engine-test")
            .player(1, Role::Impostor)
            .player(2, Role::Crewmate)
            .player(3, Role::Crewmate)
            .player(4, Role::Crewmate)
            .player(5, Role::Crewmate)
            .task(3, "Clean O2 Filter", "O2")
            .build()
            .unwrap()
    }

    #[test]
    fn crewmate_in_cafeteria_without_body_gets_exactly_five_options() {
        let state = ScenarioBuilder::new(GameConfig::default(), MapData::builtin(), "t")
            .player(1, Role::Impostor)
            .player(2, Role::Crewmate)
            .player(3, Role::Crewmate)
            .player(4, Role::Crewmate)
            .player(5, Role::Crewmate)
            .dead(2)
            .task(3, "Fix Wiring", "Electrical")
            .task(3, "Upload Data", "Admin")
            .build()
            .unwrap();
        let options = legal_actions(&state, PlayerId(3)).unwrap();
        let displays: Vec<&str> = options.iter().map(|o| o.display.as_str()).collect();
        assert_eq!(
            displays,
            vec![
                "MOVE from Cafeteria to Medbay",
                "MOVE from Cafeteria to Upper Engine",
                "MOVE from Cafeteria to Weapons",
                "CALL MEETING using the emergency button at Cafeteria",
                "SPEAK: '...'",
            ]
        );
    }

    #[test]
    fn impostor_options_include_vent_and_kill() {
        let state = ScenarioBuilder::new(GameConfig::default(), MapData::builtin(), "t")
            .player(1, Role::Impostor)
            .player(5, Role::Crewmate)
            .place(1, "Admin")
            .place(5, "Admin")
            .knows_common(1, "Fix Wiring", "Electrical")
            .build()
            .unwrap();
        let options = legal_actions(&state, PlayerId(1)).unwrap();
        let displays: Vec<&str> = options.iter().map(|o| o.display.as_str()).collect();
        assert_eq!(
            displays,
            vec![
                "MOVE from Admin to Electrical",
                "MOVE from Admin to O2",
                "MOVE from Admin to Storage",
                "SPEAK: '...'",
                "VENT from Admin to Cafeteria",
                "KILL Player 5: cyan",
            ]
        );
    }

    #[test]
    fn dead_player_cannot_act() {
        let mut state = two_player_state();
        state.player_mut(PlayerId(2)).alive = false;
        assert!(matches!(
            legal_actions(&state, PlayerId(2)),
            Err(EngineError::DeadPlayer(PlayerId(2)))
        ));
    }

    #[test]
    fn kill_leaves_a_body_and_is_visible_in_the_room() {
        let mut state = two_player_state();
        let events = apply_action(
            &mut state,
            PlayerId(1),
            &ActionBody::Kill {
                victim: PlayerId(2),
            },
        )
        .unwrap();
        assert_eq!(events.len(), 1);
        assert!(matches!(
            events[0].kind,
            EventKind::Kill {
                victim: PlayerId(2)
            }
        ));
        assert!(!state.player(PlayerId(2)).unwrap().alive);
        assert_eq!(state.bodies().len(), 1);
        // Players 3..5 shared the room and witnessed it; the actor keeps it
        // in action history instead.
        for id in [3u8, 4, 5] {
            assert_eq!(state.player(PlayerId(id)).unwrap().seen_events(), &[0]);
        }
        assert_eq!(state.player(PlayerId(1)).unwrap().action_events(), &[0]);
        assert!(state.player(PlayerId(1)).unwrap().seen_events().is_empty());
    }

    #[test]
    fn illegal_action_is_rejected() {
        let mut state = two_player_state();
        // Not adjacent: Cafeteria -> Admin is a vent, not a corridor.
        let err = apply_action(
            &mut state,
            PlayerId(2),
            &ActionBody::Move { to: "Admin".into() },
        );
        assert!(matches!(err, Err(EngineError::IllegalAction { .. })));
        // Crewmates cannot kill.
        let err = apply_action(
            &mut state,
            PlayerId(2),
            &ActionBody::Kill {
                victim: PlayerId(3),
            },
        );
        assert!(matches!(err, Err(EngineError::IllegalAction { .. })));
    }

    #[test]
    fn long_task_completes_after_two_applications() {
        let mut state = ScenarioBuilder::new(GameConfig::default(), MapData::builtin(), "t")
            .player(1, Role::Impostor)
            .player(2, Role::Crewmate)
            .player(3, Role::Crewmate)
            .place(2, "Weapons")
            .task(2, "Clear Asteroids", "Weapons")
            .build()
            .unwrap();
        let task = state.player(PlayerId(2)).unwrap().task_ids()[0];
        assert_eq!(task_progress(&state), 0.0);
        apply_action(&mut state, PlayerId(2), &ActionBody::CompleteTask { task }).unwrap();
        assert!(!state.tasks()[&task].is_complete());
        assert_eq!(task_progress(&state), 0.5);
        apply_action(&mut state, PlayerId(2), &ActionBody::CompleteTask { task }).unwrap();
        assert!(state.tasks()[&task].is_complete());
        assert_eq!(task_progress(&state), 1.0);
        // A third application is no longer legal.
        let err = apply_action(&mut state, PlayerId(2), &ActionBody::CompleteTask { task });
        assert!(matches!(err, Err(EngineError::IllegalAction { .. })));
    }

    #[test]
    fn fake_task_changes_no_task_state() {
        let mut state = ScenarioBuilder::new(GameConfig::default(), MapData::builtin(), "t")
            .player(1, Role::Impostor)
            .player(2, Role::Crewmate)
            .player(3, Role::Crewmate)
            .place(1, "Electrical")
            .task(2, "Fix Wiring", "Electrical")
            .knows_common(1, "Fix Wiring", "Electrical")
            .build()
            .unwrap();
        let before = task_progress(&state);
        apply_action(
            &mut state,
            PlayerId(1),
            &ActionBody::FakeTask {
                name: "Fix Wiring".into(),
                room: "Electrical".into(),
            },
        )
        .unwrap();
        assert_eq!(task_progress(&state), before);
    }

    #[test]
    fn call_meeting_teleports_and_clears_bodies() {
        let mut state = ScenarioBuilder::new(GameConfig::default(), MapData::builtin(), "t")
            .player(1, Role::Impostor)
            .player(2, Role::Crewmate)
            .player(3, Role::Crewmate)
            .place(2, "Storage")
            .body(9, "Storage")
            .build()
            .unwrap();
        apply_action(&mut state, PlayerId(3), &ActionBody::CallMeeting).unwrap();
        assert!(matches!(state.phase(), Phase::Meeting(_)));
        for (_, ps) in state.players() {
            if ps.alive {
                assert_eq!(&ps.location, state.map().graph.meeting_room());
            }
        }
        assert!(state.bodies().is_empty());
        let kinds: Vec<_> = state.event_log().iter().map(|e| e.kind.clone()).collect();
        assert!(matches!(kinds[0], EventKind::CallMeeting));
        assert!(matches!(kinds[1], EventKind::MeetingStart));
    }

    #[test]
    fn meeting_discussion_offers_only_speak_and_voting_excludes_self() {
        let mut state = two_player_state();
        apply_action(&mut state, PlayerId(1), &ActionBody::CallMeeting).unwrap();
        let options = legal_actions(&state, PlayerId(2)).unwrap();
        assert_eq!(options.len(), 1);
        assert!(matches!(options[0].body, ActionBody::Speak { .. }));
        if let Phase::Meeting(m) = state.phase_mut() {
            m.stage = MeetingStage::Voting;
        }
        let options = legal_actions(&state, PlayerId(2)).unwrap();
        let displays: Vec<&str> = options.iter().map(|o| o.display.as_str()).collect();
        assert_eq!(
            displays,
            vec![
                "VOTE for Player 1: blue",
                "VOTE for Player 3: black",
                "VOTE for Player 4: orange",
                "VOTE for Player 5: white",
                "VOTE to Skip",
            ]
        );
    }

    #[test]
    fn full_meeting_emits_speaks_then_votes_and_applies_tally() {
        let mut state = two_player_state();
        state.player_mut(PlayerId(5)).alive = false; // 4 living players
        apply_action(&mut state, PlayerId(1), &ActionBody::CallMeeting).unwrap();
        let mut decide = |state: &GameState, player: PlayerId, obs: &Observation| {
            let chosen = match state.phase() {
                Phase::Meeting(m) if m.stage == MeetingStage::Voting => {
                    // Players 2, 3 vote for 4; 4 votes for 2; 1 votes for 4.
                    let target = match player.0 {
                        4 => PlayerId(2),
                        _ => PlayerId(4),
                    };
                    obs.options
                        .iter()
                        .find(|o| {
                            o.body
                                == ActionBody::Vote {
                                    target: Some(target),
                                }
                        })
                        .unwrap()
                        .body
                        .clone()
                }
                _ => ActionBody::Speak {
                    text: format!("round talk from {player}"),
                },
            };
            Ok(decision(chosen))
        };
        let tally = run_meeting(&mut state, &mut decide).unwrap();
        assert_eq!(tally.result, VoteResult::Ejected(PlayerId(4)));
        let speaks = state
            .event_log()
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Speak { .. }))
            .count();
        let votes = state
            .event_log()
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Vote { .. }))
            .count();
        assert_eq!(speaks, 12); // 3 rounds x 4 living players
        assert_eq!(votes, 4);
        // All speak events precede all vote events.
        let first_vote = state
            .event_log()
            .iter()
            .position(|e| matches!(e.kind, EventKind::Vote { .. }))
            .unwrap();
        assert!(state.event_log()[..first_vote]
            .iter()
            .filter(|e| e.phase == PhaseTag::Meeting)
            .all(|e| !matches!(e.kind, EventKind::Vote { .. })));
        assert!(!state.player(PlayerId(4)).unwrap().alive);
        assert!(matches!(state.phase(), Phase::Task));
    }

    #[test]
    fn tally_votes_matches_specified_cases() {
        let votes = BTreeMap::new();
        assert_eq!(tally_votes(&votes), VoteResult::NoEjection);

        let votes: BTreeMap<PlayerId, Option<PlayerId>> = [
            (PlayerId(1), Some(PlayerId(9))),
            (PlayerId(2), Some(PlayerId(9))),
            (PlayerId(3), Some(PlayerId(8))),
        ]
        .into();
        assert_eq!(tally_votes(&votes), VoteResult::Ejected(PlayerId(9)));

        let votes: BTreeMap<PlayerId, Option<PlayerId>> = [
            (PlayerId(1), Some(PlayerId(9))),
            (PlayerId(2), Some(PlayerId(8))),
        ]
        .into();
        assert_eq!(tally_votes(&votes), VoteResult::NoEjection);

        let votes: BTreeMap<PlayerId, Option<PlayerId>> = [
            (PlayerId(2), Some(PlayerId(4))),
            (PlayerId(3), Some(PlayerId(4))),
            (PlayerId(4), Some(PlayerId(2))),
            (PlayerId(5), Some(PlayerId(4))),
        ]
        .into();
        assert_eq!(tally_votes(&votes), VoteResult::Ejected(PlayerId(4)));

        // Skip plurality blocks ejection.
        let votes: BTreeMap<PlayerId, Option<PlayerId>> = [
            (PlayerId(1), None),
            (PlayerId(2), None),
            (PlayerId(3), Some(PlayerId(4))),
        ]
        .into();
        assert_eq!(tally_votes(&votes), VoteResult::NoEjection);
    }

    #[test]
    fn termination_priority_and_parity() {
        // Single impostor ejected -> crewmates win.
        let mut state = two_player_state();
        state.player_mut(PlayerId(1)).alive = false;
        assert_eq!(
            check_termination(&state),
            Some(OutcomeCondition::ImpostorsEliminated)
        );

        // 1 impostor vs 1 crewmate -> impostors win by parity.
        let mut state = two_player_state();
        for id in [3u8, 4, 5] {
            state.player_mut(PlayerId(id)).alive = false;
        }
        assert_eq!(
            check_termination(&state),
            Some(OutcomeCondition::CrewmatesEliminated)
        );

        // Time limit reached with tasks open -> impostors win.
        let mut state = ScenarioBuilder::new(GameConfig::default(), MapData::builtin(), "t")
            .player(1, Role::Impostor)
            .player(2, Role::Crewmate)
            .player(3, Role::Crewmate)
            .player(4, Role::Crewmate)
            .task(2, "Fix Wiring", "Electrical")
            .at_timestep(50)
            .build()
            .unwrap();
        assert_eq!(
            check_termination(&state),
            Some(OutcomeCondition::TimeLimitReached)
        );
        state.player_mut(PlayerId(2)).alive = false;
        // Dead crewmate's unfinished task drops out: all tasks vacuously done,
        // and task completion outranks the time limit.
        assert_eq!(
            check_termination(&state),
            Some(OutcomeCondition::AllTasksCompleted)
        );
    }

    #[test]
    fn kill_cooldown_gates_the_kill_option() {
        let config = GameConfig {
            kill_cooldown_steps: 2,
            ..GameConfig::default()
        };
        let mut state = ScenarioBuilder::new(config, MapData::builtin(), "t")
            .player(1, Role::Impostor)
            .player(2, Role::Crewmate)
            .player(3, Role::Crewmate)
            .player(4, Role::Crewmate)
            .player(5, Role::Crewmate)
            .build()
            .unwrap();
        let has_kill = |state: &GameState| {
            legal_actions(state, PlayerId(1))
                .unwrap()
                .iter()
                .any(|o| matches!(o.body, ActionBody::Kill { .. }))
        };
        assert!(has_kill(&state));
        apply_action(
            &mut state,
            PlayerId(1),
            &ActionBody::Kill {
                victim: PlayerId(2),
            },
        )
        .unwrap();
        // Same timestep and the next: still cooling down.
        assert!(!has_kill(&state));
        state.advance_timestep();
        assert!(!has_kill(&state));
        state.advance_timestep();
        assert!(has_kill(&state));
    }

    #[test]
    fn the_killer_may_report_their_own_victim() {
        let mut state = two_player_state();
        apply_action(
            &mut state,
            PlayerId(1),
            &ActionBody::Kill {
                victim: PlayerId(2),
            },
        )
        .unwrap();
        let options = legal_actions(&state, PlayerId(1)).unwrap();
        assert!(options.iter().any(|o| o.body
            == ActionBody::ReportBody {
                victim: PlayerId(2)
            }));
        apply_action(
            &mut state,
            PlayerId(1),
            &ActionBody::ReportBody {
                victim: PlayerId(2),
            },
        )
        .unwrap();
        assert!(matches!(state.phase(), Phase::Meeting(_)));
    }

    #[test]
    fn task_progress_excludes_dead_crewmates() {
        let mut state = ScenarioBuilder::new(GameConfig::default(), MapData::builtin(), "t")
            .player(1, Role::Impostor)
            .player(2, Role::Crewmate)
            .player(3, Role::Crewmate)
            .player(4, Role::Crewmate)
            .place(2, "Admin")
            .task(2, "Upload Data", "Admin")
            .task(3, "Swipe Card", "Admin")
            .task(4, "Clean O2 Filter", "O2")
            .build()
            .unwrap();
        let task = state.player(PlayerId(2)).unwrap().task_ids()[0];
        apply_action(&mut state, PlayerId(2), &ActionBody::CompleteTask { task }).unwrap();
        assert!((task_progress(&state) - 1.0 / 3.0).abs() < 1e-12);
        state.player_mut(PlayerId(3)).alive = false;
        // Direct-summation oracle over the two remaining instances.
        assert!((task_progress(&state) - 0.5).abs() < 1e-12);
    }
}
