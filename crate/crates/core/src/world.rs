//! Static game definitions (map, task catalog) and construction of the
//! initial game state.
//!
//! The ship layout and task catalog are data, not code: they load from a
//! TOML file (see `assets/map.toml`) so experiments can swap maps without
//! recompiling. All world values are immutable after construction and safe
//! to share across concurrent game runs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Event, EventKind, Outcome, PhaseTag, Visibility};

/// Built-in map and task catalog shipped with the binary.
const BUILTIN_MAP_TOML: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/map.toml"));

/// Display colors, assigned to players in id order. The palette bounds the
/// maximum number of players in one game.
pub const PALETTE: [Color; 12] = [
    Color::Blue,
    Color::Cyan,
    Color::Black,
    Color::Orange,
    Color::White,
    Color::Purple,
    Color::Red,
    Color::Green,
    Color::Pink,
    Color::Yellow,
    Color::Brown,
    Color::Lime,
];

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("task catalog cannot satisfy requested counts: {0}")]
    InsufficientCatalog(String),
    #[error("invalid map: {0}")]
    MapInvalid(String),
    #[error("unknown room `{0}`")]
    UnknownRoom(String),
    #[error("failed to parse map file: {0}")]
    MapParse(#[from] toml::de::Error),
}

// ---------------------------------------------------------------------------
// Identifiers and small domain types
// ---------------------------------------------------------------------------

/// Name of a room on the ship.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoomId(String);

impl RoomId {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RoomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RoomId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Player identifier; ids start at 1 and stay stable for a whole game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub u8);

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Blue,
    Cyan,
    Black,
    Orange,
    White,
    Purple,
    Red,
    Green,
    Pink,
    Yellow,
    Brown,
    Lime,
}

impl Color {
    pub fn as_str(self) -> &'static str {
        match self {
            Color::Blue => "blue",
            Color::Cyan => "cyan",
            Color::Black => "black",
            Color::Orange => "orange",
            Color::White => "white",
            Color::Purple => "purple",
            Color::Red => "red",
            Color::Green => "green",
            Color::Pink => "pink",
            Color::Yellow => "yellow",
            Color::Brown => "brown",
            Color::Lime => "lime",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Crewmate,
    Impostor,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Crewmate => f.write_str("Crewmate"),
            Role::Impostor => f.write_str("Impostor"),
        }
    }
}

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Common,
    Short,
    Long,
}

impl TaskKind {
    /// Long tasks take two timesteps to complete; everything else takes one.
    pub fn duration_steps(self) -> u8 {
        match self {
            TaskKind::Long => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::Common => f.write_str("common"),
            TaskKind::Short => f.write_str("short"),
            TaskKind::Long => f.write_str("long"),
        }
    }
}

/// Index of a task spec in the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpecId(pub u16);

/// A task definition from the catalog: what it is called, where it is done,
/// and how long it takes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: SpecId,
    pub name: String,
    pub room: RoomId,
    pub kind: TaskKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskCatalog {
    specs: Vec<TaskSpec>,
}

impl TaskCatalog {
    pub fn specs(&self) -> &[TaskSpec] {
        &self.specs
    }

    pub fn get(&self, id: SpecId) -> &TaskSpec {
        &self.specs[id.0 as usize]
    }

    pub fn by_kind(&self, kind: TaskKind) -> Vec<&TaskSpec> {
        self.specs.iter().filter(|s| s.kind == kind).collect()
    }

    /// Look up a spec by (name, room); used by scenario construction.
    pub fn find(&self, name: &str, room: &RoomId) -> Option<&TaskSpec> {
        self.specs
            .iter()
            .find(|s| s.name == name && &s.room == room)
    }
}

/// Instance id of an assigned task; unique within a game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

/// One player's copy of a task, with its remaining work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: TaskId,
    pub spec: SpecId,
    pub owner: PlayerId,
    pub remaining_steps: u8,
}

impl TaskInstance {
    pub fn is_complete(&self) -> bool {
        self.remaining_steps == 0
    }
}

// ---------------------------------------------------------------------------
// Map
// ---------------------------------------------------------------------------

/// The ship: rooms, corridors, vent groups, and the camera arrangement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoomGraph {
    rooms: Vec<RoomId>,
    adjacency: BTreeMap<RoomId, BTreeSet<RoomId>>,
    vent_groups: Vec<BTreeSet<RoomId>>,
    meeting_room: RoomId,
    camera_room: RoomId,
    camera_coverage: BTreeSet<RoomId>,
}

impl RoomGraph {
    /// Rooms in map-file declaration order.
    pub fn rooms(&self) -> &[RoomId] {
        &self.rooms
    }

    pub fn contains(&self, room: &RoomId) -> bool {
        self.adjacency.contains_key(room)
    }

    pub fn neighbors(&self, room: &RoomId) -> &BTreeSet<RoomId> {
        &self.adjacency[room]
    }

    pub fn adjacency(&self) -> &BTreeMap<RoomId, BTreeSet<RoomId>> {
        &self.adjacency
    }

    /// Rooms reachable from `room` through its vent group(s), excluding the
    /// room itself. Empty for rooms without a vent.
    pub fn vent_reachable(&self, room: &RoomId) -> BTreeSet<RoomId> {
        let mut out = BTreeSet::new();
        for group in &self.vent_groups {
            if group.contains(room) {
                out.extend(group.iter().filter(|r| *r != room).cloned());
            }
        }
        out
    }

    pub fn vent_groups(&self) -> &[BTreeSet<RoomId>] {
        &self.vent_groups
    }

    pub fn meeting_room(&self) -> &RoomId {
        &self.meeting_room
    }

    pub fn camera_room(&self) -> &RoomId {
        &self.camera_room
    }

    pub fn camera_coverage(&self) -> &BTreeSet<RoomId> {
        &self.camera_coverage
    }

    fn validate(&self) -> Result<(), WorldError> {
        if self.rooms.len() < 2 {
            return Err(WorldError::MapInvalid("fewer than two rooms".into()));
        }
        for room in &self.rooms {
            let neighbors = self
                .adjacency
                .get(room)
                .ok_or_else(|| WorldError::MapInvalid(format!("room `{room}` has no adjacency")))?;
            if neighbors.contains(room) {
                return Err(WorldError::MapInvalid(format!(
                    "room `{room}` adjacent to itself"
                )));
            }
            for n in neighbors {
                if !self.adjacency.contains_key(n) {
                    return Err(WorldError::UnknownRoom(n.to_string()));
                }
                if !self.adjacency[n].contains(room) {
                    return Err(WorldError::MapInvalid(format!(
                        "adjacency not symmetric: {room} -> {n} but not {n} -> {room}"
                    )));
                }
            }
        }
        // Connectivity over corridors alone.
        let start = &self.rooms[0];
        let mut seen = BTreeSet::from([start.clone()]);
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(room) = queue.pop_front() {
            for n in &self.adjacency[&room] {
                if seen.insert(n.clone()) {
                    queue.push_back(n.clone());
                }
            }
        }
        if seen.len() != self.rooms.len() {
            return Err(WorldError::MapInvalid("room graph is not connected".into()));
        }
        for group in &self.vent_groups {
            if group.len() < 2 {
                return Err(WorldError::MapInvalid(
                    "vent group with fewer than two rooms".into(),
                ));
            }
            for r in group {
                if !self.contains(r) {
                    return Err(WorldError::UnknownRoom(r.to_string()));
                }
            }
        }
        if self.meeting_room == self.camera_room {
            return Err(WorldError::MapInvalid(
                "meeting room and camera room must differ".into(),
            ));
        }
        for special in [&self.meeting_room, &self.camera_room] {
            if !self.contains(special) {
                return Err(WorldError::UnknownRoom(special.to_string()));
            }
        }
        for r in &self.camera_coverage {
            if !self.contains(r) {
                return Err(WorldError::UnknownRoom(r.to_string()));
            }
        }
        Ok(())
    }
}

/// Map plus task catalog, as loaded from one map file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapData {
    pub graph: RoomGraph,
    pub catalog: TaskCatalog,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    #[allow(dead_code)]
    version: u32,
    meeting_room: String,
    camera_room: String,
    camera_coverage: CameraCoverage,
    rooms: Vec<MapRoom>,
    vents: Vec<MapVent>,
    tasks: Vec<MapTask>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CameraCoverage {
    All(String),
    Rooms(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapRoom {
    name: String,
    adjacent: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapVent {
    rooms: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapTask {
    name: String,
    room: String,
    kind: TaskKind,
}

impl MapData {
    pub fn from_toml_str(text: &str) -> Result<Self, WorldError> {
        let file: MapFile = toml::from_str(text)?;
        let rooms: Vec<RoomId> = file.rooms.iter().map(|r| RoomId::new(&r.name)).collect();
        let mut adjacency = BTreeMap::new();
        for room in &file.rooms {
            let set: BTreeSet<RoomId> = room.adjacent.iter().map(RoomId::new).collect();
            if adjacency.insert(RoomId::new(&room.name), set).is_some() {
                return Err(WorldError::MapInvalid(format!(
                    "room `{}` declared twice",
                    room.name
                )));
            }
        }
        let camera_room = RoomId::new(&file.camera_room);
        let camera_coverage = match &file.camera_coverage {
            CameraCoverage::All(token) if token == "*" => rooms
                .iter()
                .filter(|r| **r != camera_room)
                .cloned()
                .collect(),
            CameraCoverage::All(other) => {
                return Err(WorldError::MapInvalid(format!(
                    "camera_coverage must be \"*\" or a list of rooms, got `{other}`"
                )))
            }
            CameraCoverage::Rooms(list) => list.iter().map(RoomId::new).collect(),
        };
        let graph = RoomGraph {
            rooms,
            adjacency,
            vent_groups: file
                .vents
                .iter()
                .map(|v| v.rooms.iter().map(RoomId::new).collect())
                .collect(),
            meeting_room: RoomId::new(&file.meeting_room),
            camera_room,
            camera_coverage,
        };
        graph.validate()?;
        let mut specs = Vec::new();
        for (i, t) in file.tasks.iter().enumerate() {
            let room = RoomId::new(&t.room);
            if !graph.contains(&room) {
                return Err(WorldError::UnknownRoom(t.room.clone()));
            }
            specs.push(TaskSpec {
                id: SpecId(i as u16),
                name: t.name.clone(),
                room,
                kind: t.kind,
            });
        }
        let catalog = TaskCatalog { specs };
        for room in graph.rooms() {
            let hosted = catalog.specs().iter().filter(|s| &s.room == room).count();
            if !(2..=3).contains(&hosted) {
                return Err(WorldError::MapInvalid(format!(
                    "room `{room}` hosts {hosted} tasks, expected 2-3"
                )));
            }
        }
        Ok(Self { graph, catalog })
    }

    /// The map shipped with the binary.
    pub fn builtin() -> Arc<MapData> {
        static BUILTIN: OnceLock<Arc<MapData>> = OnceLock::new();
        BUILTIN
            .get_or_init(|| {
                Arc::new(MapData::from_toml_str(BUILTIN_MAP_TOML).expect("builtin map is valid"))
            })
            .clone()
    }
}

/// The fixed room graph of the built-in map.
pub fn default_map() -> Arc<MapData> {
    MapData::builtin()
}

/// Minimum-hop path between two rooms, inclusive of both endpoints.
///
/// Breadth-first search expanding neighbors in lexicographic room order, so
/// equal-length paths resolve deterministically toward earlier room names.
pub fn shortest_path(graph: &RoomGraph, from: &RoomId, to: &RoomId) -> Vec<RoomId> {
    if from == to {
        return vec![from.clone()];
    }
    let mut parent: BTreeMap<RoomId, RoomId> = BTreeMap::new();
    let mut queue = VecDeque::from([from.clone()]);
    'search: while let Some(room) = queue.pop_front() {
        for n in graph.neighbors(&room) {
            if n != from && !parent.contains_key(n) {
                parent.insert(n.clone(), room.clone());
                if n == to {
                    break 'search;
                }
                queue.push_back(n.clone());
            }
        }
    }
    let mut path = vec![to.clone()];
    let mut cursor = to;
    while let Some(prev) = parent.get(cursor) {
        path.push(prev.clone());
        cursor = prev;
    }
    path.reverse();
    debug_assert_eq!(path.first(), Some(from), "graph is connected");
    path
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// How many tasks of each kind every crewmate receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskCounts {
    pub common: u8,
    pub short: u8,
    pub long: u8,
}

impl Default for TaskCounts {
    fn default() -> Self {
        Self {
            common: 1,
            short: 1,
            long: 1,
        }
    }
}

impl TaskCounts {
    pub fn total_steps(&self) -> u32 {
        self.common as u32 * TaskKind::Common.duration_steps() as u32
            + self.short as u32 * TaskKind::Short.duration_steps() as u32
            + self.long as u32 * TaskKind::Long.duration_steps() as u32
    }
}

/// Which decision policy drives a player.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Random,
    Llm,
    Human,
}

/// Per-player agent settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerSpec {
    pub kind: AgentKind,
    #[serde(default)]
    pub persona: Option<String>,
    #[serde(default = "default_true")]
    pub planner: bool,
}

fn default_true() -> bool {
    true
}

impl Default for PlayerSpec {
    fn default() -> Self {
        Self {
            kind: AgentKind::Random,
            persona: None,
            planner: true,
        }
    }
}

impl PlayerSpec {
    pub fn random() -> Self {
        Self::default()
    }

    pub fn llm(planner: bool) -> Self {
        Self {
            kind: AgentKind::Llm,
            persona: None,
            planner,
        }
    }
}

/// Agent settings for the whole table, either by role or per player id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentAssignment {
    ByRole {
        crewmate: PlayerSpec,
        impostor: PlayerSpec,
    },
    PerPlayer(Vec<PlayerSpec>),
}

impl Default for AgentAssignment {
    fn default() -> Self {
        AgentAssignment::ByRole {
            crewmate: PlayerSpec::default(),
            impostor: PlayerSpec::default(),
        }
    }
}

/// Everything needed to instantiate one game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    #[serde(default = "default_n_crewmates")]
    pub n_crewmates: u8,
    #[serde(default = "default_n_impostors")]
    pub n_impostors: u8,
    #[serde(default)]
    pub tasks_per_crewmate: TaskCounts,
    #[serde(default = "default_time_limit")]
    pub time_limit_steps: u32,
    #[serde(default = "default_discussion_rounds")]
    pub discussion_rounds: u8,
    #[serde(default = "default_recent_k")]
    pub recent_k: usize,
    /// Timesteps an impostor must wait between kills; 0 disables the cooldown.
    #[serde(default)]
    pub kill_cooldown_steps: u32,
    #[serde(default)]
    pub seed: u64,
    /// Path to an alternative map file; `None` uses the built-in map.
    #[serde(default)]
    pub map_path: Option<String>,
    #[serde(default)]
    pub agents: AgentAssignment,
}

fn default_n_crewmates() -> u8 {
    4
}
fn default_n_impostors() -> u8 {
    1
}
fn default_time_limit() -> u32 {
    50
}
fn default_discussion_rounds() -> u8 {
    3
}
fn default_recent_k() -> usize {
    10
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            n_crewmates: default_n_crewmates(),
            n_impostors: default_n_impostors(),
            tasks_per_crewmate: TaskCounts::default(),
            time_limit_steps: default_time_limit(),
            discussion_rounds: default_discussion_rounds(),
            recent_k: default_recent_k(),
            kill_cooldown_steps: 0,
            seed: 0,
            map_path: None,
            agents: AgentAssignment::default(),
        }
    }
}

impl GameConfig {
    pub fn n_players(&self) -> u8 {
        self.n_crewmates + self.n_impostors
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.n_impostors < 1 {
            return Err(WorldError::ConfigInvalid(
                "n_impostors must be at least 1".into(),
            ));
        }
        if self.n_crewmates <= self.n_impostors {
            return Err(WorldError::ConfigInvalid(
                "impostors must be a strict minority (n_crewmates > n_impostors)".into(),
            ));
        }
        if self.time_limit_steps < 1 {
            return Err(WorldError::ConfigInvalid(
                "time_limit_steps must be at least 1".into(),
            ));
        }
        if self.discussion_rounds < 1 {
            return Err(WorldError::ConfigInvalid(
                "discussion_rounds must be at least 1".into(),
            ));
        }
        if self.n_players() as usize > PALETTE.len() {
            return Err(WorldError::ConfigInvalid(format!(
                "at most {} players supported, got {}",
                PALETTE.len(),
                self.n_players()
            )));
        }
        if let AgentAssignment::PerPlayer(specs) = &self.agents {
            if specs.len() != self.n_players() as usize {
                return Err(WorldError::ConfigInvalid(format!(
                    "per-player agent list has {} entries for {} players",
                    specs.len(),
                    self.n_players()
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Game state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeetingStage {
    Discussion,
    Voting,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeetingState {
    pub round: u8,
    pub stage: MeetingStage,
    /// Collected ballots; `None` is a skip vote.
    pub votes: BTreeMap<PlayerId, Option<PlayerId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Task,
    Meeting(MeetingState),
}

impl Phase {
    pub fn tag(&self) -> PhaseTag {
        match self {
            Phase::Task => PhaseTag::Task,
            Phase::Meeting(_) => PhaseTag::Meeting,
        }
    }
}

/// One player's live state.
#[derive(Debug, Clone)]
pub struct PlayerState {
    pub role: Role,
    pub color: Color,
    pub location: RoomId,
    pub alive: bool,
    pub persona: Option<String>,
    /// Plan drawn at game start for "The Random" persona.
    pub random_plan: Option<String>,
    task_ids: Vec<TaskId>,
    known_common: Vec<SpecId>,
    pub last_kill_timestep: Option<u32>,
    seen_events: Vec<u32>,
    action_events: Vec<u32>,
}

impl PlayerState {
    pub fn task_ids(&self) -> &[TaskId] {
        &self.task_ids
    }

    /// Common task specs this player knows about (impostors get these in
    /// place of real assignments).
    pub fn known_common(&self) -> &[SpecId] {
        &self.known_common
    }

    /// Log indices of events this player witnessed, oldest first.
    pub fn seen_events(&self) -> &[u32] {
        &self.seen_events
    }

    /// Log indices of this player's own actions, oldest first.
    pub fn action_events(&self) -> &[u32] {
        &self.action_events
    }
}

/// Complete snapshot of one running game.
#[derive(Debug, Clone)]
pub struct GameState {
    config: GameConfig,
    map: Arc<MapData>,
    game_id: String,
    timestep: u32,
    phase: Phase,
    players: BTreeMap<PlayerId, PlayerState>,
    bodies: Vec<(PlayerId, RoomId)>,
    tasks: BTreeMap<TaskId, TaskInstance>,
    event_log: Vec<Event>,
    outcome: Option<Outcome>,
    resolved_agents: BTreeMap<PlayerId, PlayerSpec>,
}

impl GameState {
    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn map(&self) -> &MapData {
        &self.map
    }

    pub fn map_arc(&self) -> Arc<MapData> {
        self.map.clone()
    }

    pub fn game_id(&self) -> &str {
        &self.game_id
    }

    pub fn timestep(&self) -> u32 {
        self.timestep
    }

    pub fn phase(&self) -> &Phase {
        &self.phase
    }

    pub fn players(&self) -> impl Iterator<Item = (PlayerId, &PlayerState)> {
        self.players.iter().map(|(id, ps)| (*id, ps))
    }

    pub fn player(&self, id: PlayerId) -> Option<&PlayerState> {
        self.players.get(&id)
    }

    pub fn player_ids(&self) -> Vec<PlayerId> {
        self.players.keys().copied().collect()
    }

    /// Living players in ascending id order.
    pub fn living_players(&self) -> Vec<PlayerId> {
        self.players
            .iter()
            .filter(|(_, ps)| ps.alive)
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn living_with_role(&self, role: Role) -> Vec<PlayerId> {
        self.players
            .iter()
            .filter(|(_, ps)| ps.alive && ps.role == role)
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn bodies(&self) -> &[(PlayerId, RoomId)] {
        &self.bodies
    }

    pub fn tasks(&self) -> &BTreeMap<TaskId, TaskInstance> {
        &self.tasks
    }

    pub fn event_log(&self) -> &[Event] {
        &self.event_log
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    pub fn colors(&self) -> BTreeMap<PlayerId, Color> {
        self.players
            .iter()
            .map(|(id, ps)| (*id, ps.color))
            .collect()
    }

    pub fn resolved_agents(&self) -> &BTreeMap<PlayerId, PlayerSpec> {
        &self.resolved_agents
    }

    /// "Player 3: black" style label used throughout rendered text.
    pub fn player_label(&self, id: PlayerId) -> String {
        match self.players.get(&id) {
            Some(ps) => format!("Player {}: {}", id, ps.color),
            None => format!("Player {id}"),
        }
    }

    // Crate-internal mutable access for the engine and scenario builder.

    pub(crate) fn player_mut(&mut self, id: PlayerId) -> &mut PlayerState {
        self.players.get_mut(&id).expect("player exists")
    }

    pub(crate) fn players_mut(&mut self) -> &mut BTreeMap<PlayerId, PlayerState> {
        &mut self.players
    }

    pub(crate) fn tasks_mut(&mut self) -> &mut BTreeMap<TaskId, TaskInstance> {
        &mut self.tasks
    }

    pub(crate) fn bodies_mut(&mut self) -> &mut Vec<(PlayerId, RoomId)> {
        &mut self.bodies
    }

    pub(crate) fn phase_mut(&mut self) -> &mut Phase {
        &mut self.phase
    }

    pub(crate) fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub(crate) fn set_outcome(&mut self, outcome: Outcome) {
        self.outcome = Some(outcome);
    }

    pub(crate) fn advance_timestep(&mut self) {
        self.timestep += 1;
    }

    /// Append an event to the journal, stamping sequence number, timestep,
    /// and phase tag, and fan it out to per-player histories: the actor's
    /// own-action history, and the seen-history of every other living player
    /// whose room falls inside the visibility set.
    pub(crate) fn emit(
        &mut self,
        actor: Option<PlayerId>,
        kind: EventKind,
        room: Option<RoomId>,
        visibility: Visibility,
    ) -> Event {
        let event = Event {
            seq: self.event_log.len() as u32,
            timestep: self.timestep,
            phase: self.phase.tag(),
            actor,
            kind,
            room,
            visibility,
        };
        for (id, ps) in self.players.iter_mut() {
            if !ps.alive {
                continue;
            }
            if Some(*id) == actor {
                ps.action_events.push(event.seq);
            } else if event.visibility.covers(&ps.location) {
                ps.seen_events.push(event.seq);
            }
        }
        self.event_log.push(event.clone());
        event
    }
}

// ---------------------------------------------------------------------------
// Game construction
// ---------------------------------------------------------------------------

/// Deal task assignments for the crewmates.
///
/// One set of common specs is chosen once and given identically to every
/// crewmate; short and long specs are sampled without replacement per
/// crewmate. Returns the per-crewmate spec lists (in common, short, long
/// order) plus the chosen common specs.
pub type TaskAssignment = (BTreeMap<PlayerId, Vec<SpecId>>, Vec<SpecId>);

pub fn assign_tasks(
    counts: &TaskCounts,
    catalog: &TaskCatalog,
    crewmates: &[PlayerId],
    rng: &mut ChaCha8Rng,
) -> Result<TaskAssignment, WorldError> {
    let pools: BTreeMap<TaskKind, Vec<SpecId>> =
        [TaskKind::Common, TaskKind::Short, TaskKind::Long]
            .into_iter()
            .map(|kind| (kind, catalog.by_kind(kind).iter().map(|s| s.id).collect()))
            .collect();
    for (kind, want) in [
        (TaskKind::Common, counts.common),
        (TaskKind::Short, counts.short),
        (TaskKind::Long, counts.long),
    ] {
        if (want as usize) > pools[&kind].len() {
            return Err(WorldError::InsufficientCatalog(format!(
                "{want} {kind} tasks requested but catalog has {}",
                pools[&kind].len()
            )));
        }
    }
    let sample = |pool: &[SpecId], k: usize, rng: &mut ChaCha8Rng| -> Vec<SpecId> {
        let mut picked = pool.to_vec();
        picked.shuffle(rng);
        picked.truncate(k);
        picked
    };
    let common = sample(&pools[&TaskKind::Common], counts.common as usize, rng);
    let mut out = BTreeMap::new();
    for &player in crewmates {
        let mut list = common.clone();
        list.extend(sample(&pools[&TaskKind::Short], counts.short as usize, rng));
        list.extend(sample(&pools[&TaskKind::Long], counts.long as usize, rng));
        out.insert(player, list);
    }
    Ok((out, common))
}

/// Plans one of which "The Random" persona commits to at game start.
pub const RANDOM_PLANS: [&str; 5] = [
    "Stay close to one other player and mirror their movements.",
    "Keep moving to a different room every timestep.",
    "Stay in or near the Cafeteria and watch who passes through.",
    "Speak as often as possible and react to everything you see.",
    "Say as little as possible and avoid drawing attention.",
];

/// Name of the persona usable by both roles.
pub const RANDOM_PERSONA: &str = "The Random";

/// Build a fresh game from a config.
///
/// Deterministic: the same config (including seed) always produces the same
/// deal. RNG consumption order is fixed: role deal, task assignment, persona
/// sampling, random-persona plan draws.
pub fn new_game(
    config: &GameConfig,
    map: Arc<MapData>,
    game_id: impl Into<String>,
) -> Result<GameState, WorldError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_players();
    let ids: Vec<PlayerId> = (1..=n).map(PlayerId).collect();

    let mut deal = ids.clone();
    deal.shuffle(&mut rng);
    let impostors: BTreeSet<PlayerId> = deal
        .iter()
        .take(config.n_impostors as usize)
        .copied()
        .collect();

    let meeting_room = map.graph.meeting_room().clone();
    let mut players = BTreeMap::new();
    for (i, &id) in ids.iter().enumerate() {
        let role = if impostors.contains(&id) {
            Role::Impostor
        } else {
            Role::Crewmate
        };
        players.insert(
            id,
            PlayerState {
                role,
                color: PALETTE[i],
                location: meeting_room.clone(),
                alive: true,
                persona: None,
                random_plan: None,
                task_ids: Vec::new(),
                known_common: Vec::new(),
                last_kill_timestep: None,
                seen_events: Vec::new(),
                action_events: Vec::new(),
            },
        );
    }

    let crewmates: Vec<PlayerId> = ids
        .iter()
        .copied()
        .filter(|id| !impostors.contains(id))
        .collect();
    let (assignments, common) = assign_tasks(
        &config.tasks_per_crewmate,
        &map.catalog,
        &crewmates,
        &mut rng,
    )?;
    let mut tasks = BTreeMap::new();
    let mut next_task_id = 1u32;
    for (&player, specs) in &assignments {
        for &spec_id in specs {
            let spec = map.catalog.get(spec_id);
            let id = TaskId(next_task_id);
            next_task_id += 1;
            tasks.insert(
                id,
                TaskInstance {
                    id,
                    spec: spec_id,
                    owner: player,
                    remaining_steps: spec.kind.duration_steps(),
                },
            );
            players.get_mut(&player).unwrap().task_ids.push(id);
        }
    }
    for id in &impostors {
        players.get_mut(id).unwrap().known_common = common.clone();
    }

    // Resolve per-player agent specs from the assignment.
    let mut resolved = BTreeMap::new();
    for &id in &ids {
        let spec = match &config.agents {
            AgentAssignment::ByRole { crewmate, impostor } => {
                if impostors.contains(&id) {
                    impostor.clone()
                } else {
                    crewmate.clone()
                }
            }
            AgentAssignment::PerPlayer(specs) => specs[(id.0 - 1) as usize].clone(),
        };
        resolved.insert(id, spec);
    }

    // Personas: explicit names are validated, the rest are sampled uniformly
    // from the role-appropriate part of the catalog.
    let catalog = crate::agents::PersonaCatalog::builtin();
    for &id in &ids {
        let role = players[&id].role;
        let persona = match &resolved[&id].persona {
            Some(name) => {
                let profile = catalog.get(name).ok_or_else(|| {
                    WorldError::ConfigInvalid(format!("unknown persona `{name}`"))
                })?;
                if !profile.role.applicable_to(role) {
                    return Err(WorldError::ConfigInvalid(format!(
                        "persona `{name}` is not applicable to a {role}"
                    )));
                }
                name.clone()
            }
            None => {
                let candidates = catalog.for_role(role);
                let pick = rng.gen_range(0..candidates.len());
                candidates[pick].name.clone()
            }
        };
        players.get_mut(&id).unwrap().persona = Some(persona);
    }
    for &id in &ids {
        if players[&id].persona.as_deref() == Some(RANDOM_PERSONA) {
            let pick = rng.gen_range(0..RANDOM_PLANS.len());
            players.get_mut(&id).unwrap().random_plan = Some(RANDOM_PLANS[pick].to_owned());
        }
    }

    Ok(GameState {
        config: config.clone(),
        map,
        game_id: game_id.into(),
        timestep: 0,
        phase: Phase::Task,
        players,
        bodies: Vec::new(),
        tasks,
        event_log: Vec::new(),
        outcome: None,
        resolved_agents: resolved,
    })
}

// ---------------------------------------------------------------------------
// Scenario builder
// ---------------------------------------------------------------------------

/// Hand-constructs a game state for controlled scenarios and tests: explicit
/// roles, placements, task lists, and injected history.
pub struct ScenarioBuilder {
    config: GameConfig,
    map: Arc<MapData>,
    game_id: String,
    timestep: u32,
    roles: Vec<(PlayerId, Role)>,
    locations: BTreeMap<PlayerId, RoomId>,
    dead: BTreeSet<PlayerId>,
    tasks: Vec<(PlayerId, String, RoomId)>,
    known_common: Vec<(PlayerId, String, RoomId)>,
    personas: BTreeMap<PlayerId, String>,
    bodies: Vec<(PlayerId, RoomId)>,
    injected: Vec<InjectedEvent>,
}

struct InjectedEvent {
    timestep: u32,
    phase: PhaseTag,
    actor: Option<PlayerId>,
    kind: EventKind,
    room: Option<RoomId>,
    visibility: Visibility,
    seen_by: Vec<PlayerId>,
    own_action: bool,
}

impl ScenarioBuilder {
    pub fn new(config: GameConfig, map: Arc<MapData>, game_id: impl Into<String>) -> Self {
        Self {
            config,
            map,
            game_id: game_id.into(),
            timestep: 0,
            roles: Vec::new(),
            locations: BTreeMap::new(),
            dead: BTreeSet::new(),
            tasks: Vec::new(),
            known_common: Vec::new(),
            personas: BTreeMap::new(),
            bodies: Vec::new(),
            injected: Vec::new(),
        }
    }

    pub fn at_timestep(mut self, t: u32) -> Self {
        self.timestep = t;
        self
    }

    /// Declare a player. Colors follow the palette in declaration order.
    pub fn player(mut self, id: u8, role: Role) -> Self {
        self.roles.push((PlayerId(id), role));
        self
    }

    pub fn place(mut self, id: u8, room: &str) -> Self {
        self.locations.insert(PlayerId(id), RoomId::new(room));
        self
    }

    pub fn dead(mut self, id: u8) -> Self {
        self.dead.insert(PlayerId(id));
        self
    }

    pub fn body(mut self, victim: u8, room: &str) -> Self {
        self.bodies.push((PlayerId(victim), RoomId::new(room)));
        self
    }

    /// Assign a task instance by catalog (name, room).
    pub fn task(mut self, id: u8, name: &str, room: &str) -> Self {
        self.tasks
            .push((PlayerId(id), name.to_owned(), RoomId::new(room)));
        self
    }

    /// Teach a player which common task exists without assigning an instance.
    pub fn knows_common(mut self, id: u8, name: &str, room: &str) -> Self {
        self.known_common
            .push((PlayerId(id), name.to_owned(), RoomId::new(room)));
        self
    }

    pub fn persona(mut self, id: u8, name: &str) -> Self {
        self.personas.insert(PlayerId(id), name.to_owned());
        self
    }

    /// Inject a past event into the journal, seen by the given players.
    pub fn witnessed_event(
        mut self,
        timestep: u32,
        actor: Option<u8>,
        kind: EventKind,
        room: Option<&str>,
        visibility: Visibility,
        seen_by: &[u8],
    ) -> Self {
        self.injected.push(InjectedEvent {
            timestep,
            phase: PhaseTag::Task,
            actor: actor.map(PlayerId),
            kind,
            room: room.map(RoomId::new),
            visibility,
            seen_by: seen_by.iter().copied().map(PlayerId).collect(),
            own_action: false,
        });
        self
    }

    /// Inject a past action into the actor's own history (and the journal).
    pub fn past_action(
        mut self,
        timestep: u32,
        actor: u8,
        kind: EventKind,
        room: Option<&str>,
        visibility: Visibility,
    ) -> Self {
        self.injected.push(InjectedEvent {
            timestep,
            phase: PhaseTag::Task,
            actor: Some(PlayerId(actor)),
            kind,
            room: room.map(RoomId::new),
            visibility,
            seen_by: Vec::new(),
            own_action: true,
        });
        self
    }

    pub fn build(self) -> Result<GameState, WorldError> {
        let meeting_room = self.map.graph.meeting_room().clone();
        let mut players = BTreeMap::new();
        for (i, (id, role)) in self.roles.iter().enumerate() {
            if i >= PALETTE.len() {
                return Err(WorldError::ConfigInvalid(
                    "too many players for palette".into(),
                ));
            }
            let location = self
                .locations
                .get(id)
                .cloned()
                .unwrap_or_else(|| meeting_room.clone());
            if !self.map.graph.contains(&location) {
                return Err(WorldError::UnknownRoom(location.to_string()));
            }
            players.insert(
                *id,
                PlayerState {
                    role: *role,
                    color: PALETTE[i],
                    location,
                    alive: !self.dead.contains(id),
                    persona: self.personas.get(id).cloned(),
                    random_plan: None,
                    task_ids: Vec::new(),
                    known_common: Vec::new(),
                    last_kill_timestep: None,
                    seen_events: Vec::new(),
                    action_events: Vec::new(),
                },
            );
        }
        let mut tasks = BTreeMap::new();
        for (next_task_id, (player, name, room)) in (1u32..).zip(self.tasks.iter()) {
            let spec = self
                .map
                .catalog
                .find(name, room)
                .ok_or_else(|| {
                    WorldError::ConfigInvalid(format!("no catalog task `{name}` in `{room}`"))
                })?
                .clone();
            let id = TaskId(next_task_id);
            tasks.insert(
                id,
                TaskInstance {
                    id,
                    spec: spec.id,
                    owner: *player,
                    remaining_steps: spec.kind.duration_steps(),
                },
            );
            players
                .get_mut(player)
                .ok_or_else(|| WorldError::ConfigInvalid(format!("unknown player {player}")))?
                .task_ids
                .push(id);
        }
        for (player, name, room) in &self.known_common {
            let spec = self.map.catalog.find(name, room).ok_or_else(|| {
                WorldError::ConfigInvalid(format!("no catalog task `{name}` in `{room}`"))
            })?;
            players
                .get_mut(player)
                .ok_or_else(|| WorldError::ConfigInvalid(format!("unknown player {player}")))?
                .known_common
                .push(spec.id);
        }
        let mut event_log = Vec::new();
        for inj in &self.injected {
            let seq = event_log.len() as u32;
            event_log.push(Event {
                seq,
                timestep: inj.timestep,
                phase: inj.phase,
                actor: inj.actor,
                kind: inj.kind.clone(),
                room: inj.room.clone(),
                visibility: inj.visibility.clone(),
            });
            if inj.own_action {
                let actor = inj.actor.expect("own action has an actor");
                players
                    .get_mut(&actor)
                    .ok_or_else(|| WorldError::ConfigInvalid(format!("unknown player {actor}")))?
                    .action_events
                    .push(seq);
            }
            for viewer in &inj.seen_by {
                players
                    .get_mut(viewer)
                    .ok_or_else(|| WorldError::ConfigInvalid(format!("unknown player {viewer}")))?
                    .seen_events
                    .push(seq);
            }
        }
        let resolved = players
            .keys()
            .map(|id| (*id, PlayerSpec::default()))
            .collect();
        Ok(GameState {
            config: self.config,
            map: self.map,
            game_id: self.game_id,
            timestep: self.timestep,
            phase: Phase::Task,
            players,
            bodies: self.bodies,
            tasks,
            event_log,
            outcome: None,
            resolved_agents: resolved,
        })
    }
}
