//! Decision policies: the uniform-random baseline, a human at the terminal,
//! and the language-model agent with condensed memory, an optional planner,
//! and persona injection.

use std::io::{BufRead, Write};
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ActionBody, ActionOption};
use crate::llm::{CallTag, ChatMessage, ChatRequest, LlmClient, LlmError, LlmParams};
use crate::observation::{render_observation, MindSnapshot, Observation};
use crate::world::{Color, PlayerId, Role};

const PERSONAS_TOML: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/personas.toml"));
const CREWMATE_BASE: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/assets/prompts/crewmate_base.txt"
));
const IMPOSTOR_BASE: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/assets/prompts/impostor_base.txt"
));

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("persona `{persona}` is not applicable to a {role}")]
    RoleMismatch { persona: String, role: Role },
    #[error("unknown persona `{0}`")]
    UnknownPersona(String),
    #[error("could not parse the reply into an action: {0}")]
    ParseFailure(String),
    #[error(transparent)]
    Client(#[from] LlmError),
    #[error("interactive session closed")]
    SessionClosed,
}

// ---------------------------------------------------------------------------
// Personas
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PersonaRole {
    Impostor,
    Crewmate,
    Both,
}

impl PersonaRole {
    pub fn applicable_to(self, role: Role) -> bool {
        match self {
            PersonaRole::Both => true,
            PersonaRole::Impostor => role == Role::Impostor,
            PersonaRole::Crewmate => role == Role::Crewmate,
        }
    }
}

/// A personality: a name, which side may use it, and the description text
/// appended to the agent's base prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaProfile {
    pub name: String,
    pub role: PersonaRole,
    /// Short code used by combination analytics (crew-side personas only).
    #[serde(default)]
    pub letter: Option<char>,
    pub description: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonaFile {
    #[allow(dead_code)]
    version: u32,
    personas: Vec<PersonaProfile>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaCatalog {
    personas: Vec<PersonaProfile>,
}

impl PersonaCatalog {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        let file: PersonaFile = toml::from_str(text)?;
        Ok(Self {
            personas: file.personas,
        })
    }

    /// The catalog shipped with the binary.
    pub fn builtin() -> &'static PersonaCatalog {
        static BUILTIN: OnceLock<PersonaCatalog> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            PersonaCatalog::from_toml_str(PERSONAS_TOML).expect("builtin persona catalog is valid")
        })
    }

    pub fn personas(&self) -> &[PersonaProfile] {
        &self.personas
    }

    pub fn get(&self, name: &str) -> Option<&PersonaProfile> {
        self.personas.iter().find(|p| p.name == name)
    }

    /// Personas usable by the given role, in catalog order.
    pub fn for_role(&self, role: Role) -> Vec<&PersonaProfile> {
        self.personas
            .iter()
            .filter(|p| p.role.applicable_to(role))
            .collect()
    }

    pub fn letter_of(&self, name: &str) -> Option<char> {
        self.get(name).and_then(|p| p.letter)
    }
}

// ---------------------------------------------------------------------------
// Prompts and minds
// ---------------------------------------------------------------------------

/// Role-specific base system text for a player.
pub fn base_prompt(player: PlayerId, color: Color, role: Role) -> String {
    let (article_role, body) = match role {
        Role::Crewmate => ("a Crewmate", CREWMATE_BASE),
        Role::Impostor => ("an Impostor", IMPOSTOR_BASE),
    };
    format!(
        "You are Player {player}: {color}, playing as {article_role} on a spaceship crew.\n\n{}",
        body.trim_end()
    )
}

/// Concatenate the base prompt with a persona description, separated by one
/// blank line. With no persona the base text passes through unchanged.
pub fn compose_prompt(
    base: &str,
    role: Role,
    persona: Option<&PersonaProfile>,
) -> Result<String, AgentError> {
    match persona {
        None => Ok(base.to_owned()),
        Some(p) => {
            if !p.role.applicable_to(role) {
                return Err(AgentError::RoleMismatch {
                    persona: p.name.clone(),
                    role,
                });
            }
            Ok(format!("{}\n\n{}", base.trim_end(), p.description))
        }
    }
}

/// The language agent's retained state: condensed memory, the previous
/// thought (planner only), persona, and the composed system prompt.
#[derive(Debug, Clone)]
pub struct AgentMind {
    pub player: PlayerId,
    pub color: Color,
    pub role: Role,
    pub condensed_memory: String,
    pub previous_thought: Option<String>,
    pub personality: Option<PersonaProfile>,
    pub planner_enabled: bool,
    pub base_prompt: String,
    pub system_prompt: String,
}

impl AgentMind {
    pub fn new(
        player: PlayerId,
        color: Color,
        role: Role,
        persona: Option<&PersonaProfile>,
        random_plan: Option<&str>,
        planner_enabled: bool,
    ) -> Result<Self, AgentError> {
        let base = base_prompt(player, color, role);
        let mut system = compose_prompt(&base, role, persona)?;
        if let Some(plan) = random_plan {
            system.push_str(&format!("\n\nYour randomly chosen plan: {plan}"));
        }
        Ok(Self {
            player,
            color,
            role,
            condensed_memory: String::new(),
            previous_thought: None,
            personality: persona.cloned(),
            planner_enabled,
            base_prompt: base,
            system_prompt: system,
        })
    }

    pub fn snapshot(&self) -> MindSnapshot {
        MindSnapshot {
            condensed_memory: self.condensed_memory.clone(),
            previous_thought: if self.planner_enabled {
                self.previous_thought.clone()
            } else {
                None
            },
            planner_enabled: self.planner_enabled,
        }
    }

    /// Fold a parsed reply back into the mind. Without the planner, thoughts
    /// are never stored.
    pub fn absorb(&mut self, memory: Option<&str>, thought: Option<&str>) {
        if let Some(m) = memory {
            self.condensed_memory = m.to_owned();
        }
        if self.planner_enabled {
            if let Some(t) = thought {
                self.previous_thought = Some(t.to_owned());
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Decisions and reply parsing
// ---------------------------------------------------------------------------

/// What an agent decided, including the bookkeeping the harness journals.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub chosen: ActionBody,
    pub new_memory: Option<String>,
    pub new_thought: Option<String>,
    pub raw_response: Option<String>,
    pub fallback_used: bool,
}

impl Decision {
    pub fn bare(chosen: ActionBody) -> Self {
        Self {
            chosen,
            new_memory: None,
            new_thought: None,
            raw_response: None,
            fallback_used: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedReply {
    pub memory: Option<String>,
    pub thought: Option<String>,
    /// Index into the offered option list.
    pub index: usize,
    /// For speak actions: the text taken verbatim from the reply.
    pub speak_text: Option<String>,
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn strip_quotes(text: &str) -> &str {
    let t = text.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('\u{201c}', '\u{201d}')] {
        if t.len() >= 2 && t.starts_with(open) && t.ends_with(close) {
            return &t[open.len_utf8()..t.len() - close.len_utf8()];
        }
    }
    t
}

/// Locations of the three section headers, case-insensitive.
fn find_sections(text: &str) -> Vec<(&'static str, usize, usize)> {
    let lower = text.to_lowercase();
    let mut found = Vec::new();
    for header in ["[condensed memory]", "[thinking process]", "[action]"] {
        if let Some(start) = lower.find(header) {
            found.push((header, start, start + header.len()));
        }
    }
    found.sort_by_key(|(_, start, _)| *start);
    found
}

/// Parse a model reply into its sections and match the action line against
/// the offered options.
///
/// Matching is case-insensitive after whitespace normalization and proceeds
/// in three stages: exact display match, then a unique option whose display
/// is a prefix of or contained in the action line, then a unique match on
/// the kind keyword plus a payload token. Speak content is taken verbatim
/// from the reply rather than the option placeholder.
pub fn parse_response(text: &str, options: &[ActionOption]) -> Result<ParsedReply, AgentError> {
    let sections = find_sections(text);
    if sections.is_empty() {
        return Err(AgentError::ParseFailure("no section headers found".into()));
    }
    let mut memory = None;
    let mut thought = None;
    let mut action_line = None;
    for (i, (header, start, content_start)) in sections.iter().enumerate() {
        let end = sections
            .get(i + 1)
            .map(|(_, s, _)| *s)
            .unwrap_or(text.len());
        let content = text[*content_start..end].trim();
        let _ = start;
        match *header {
            "[condensed memory]" => memory = Some(content.to_owned()),
            "[thinking process]" => thought = Some(content.to_owned()),
            "[action]" => action_line = Some(content.to_owned()),
            _ => unreachable!(),
        }
    }
    let action_line =
        action_line.ok_or_else(|| AgentError::ParseFailure("no [Action] section".into()))?;
    if action_line.is_empty() {
        return Err(AgentError::ParseFailure("[Action] section is empty".into()));
    }
    let (index, speak_text) = match_action(&action_line, options)?;
    Ok(ParsedReply {
        memory,
        thought,
        index,
        speak_text,
    })
}

fn match_action(
    line: &str,
    options: &[ActionOption],
) -> Result<(usize, Option<String>), AgentError> {
    let norm_line = normalize(line);

    // Stage (a): exact match on a display string.
    for (i, option) in options.iter().enumerate() {
        if normalize(&option.display) == norm_line {
            let speak = speak_payload(&option.body, line);
            return Ok((i, speak));
        }
    }

    // Speak is special: the reply carries free text where the option shows a
    // placeholder, so match on the keyword and take the text verbatim.
    if norm_line.starts_with("speak") {
        if let Some((i, option)) = options
            .iter()
            .enumerate()
            .find(|(_, o)| matches!(o.body, ActionBody::Speak { .. }))
        {
            let text = line
                .trim()
                .split_once(':')
                .map(|(_, rest)| rest)
                .unwrap_or("")
                .trim();
            let _ = option;
            return Ok((i, Some(strip_quotes(text).to_owned())));
        }
    }

    // Stage (b): unique option whose display is a prefix of, or contained
    // in, the action line.
    let contained: Vec<usize> = options
        .iter()
        .enumerate()
        .filter(|(_, o)| {
            let d = normalize(&o.display);
            norm_line.starts_with(&d) || norm_line.contains(&d)
        })
        .map(|(i, _)| i)
        .collect();
    match contained.len() {
        1 => {
            let i = contained[0];
            return Ok((i, speak_payload(&options[i].body, line)));
        }
        n if n > 1 => {
            return Err(AgentError::ParseFailure(format!(
                "action line matches {n} options: {line}"
            )))
        }
        _ => {}
    }

    // Stage (c): kind keyword plus payload token.
    let keyword_hits: Vec<usize> = options
        .iter()
        .enumerate()
        .filter(|(_, o)| {
            let keyword = match &o.body {
                ActionBody::Move { .. } => "move",
                ActionBody::CompleteTask { .. } => "complete",
                ActionBody::FakeTask { .. } => "fake",
                ActionBody::CallMeeting => "call meeting",
                ActionBody::ReportBody { .. } => "report",
                ActionBody::CheckCamera => "camera",
                ActionBody::Speak { .. } => "speak",
                ActionBody::Vent { .. } => "vent",
                ActionBody::Kill { .. } => "kill",
                ActionBody::Vote { .. } => "vote",
            };
            norm_line.contains(keyword)
        })
        .filter(|(_, o)| payload_mentioned(&o.body, &norm_line))
        .map(|(i, _)| i)
        .collect();
    match keyword_hits.len() {
        1 => {
            let i = keyword_hits[0];
            Ok((i, speak_payload(&options[i].body, line)))
        }
        0 => Err(AgentError::ParseFailure(format!(
            "no option matches: {line}"
        ))),
        n => Err(AgentError::ParseFailure(format!(
            "action line matches {n} options by keyword: {line}"
        ))),
    }
}

fn payload_mentioned(body: &ActionBody, norm_line: &str) -> bool {
    match body {
        ActionBody::Move { to } | ActionBody::Vent { to } => {
            norm_line.contains(&normalize(to.as_str()))
        }
        ActionBody::CompleteTask { .. } => true,
        ActionBody::FakeTask { name, .. } => norm_line.contains(&normalize(name)),
        ActionBody::ReportBody { victim } | ActionBody::Kill { victim } => {
            norm_line.contains(&format!("player {victim}"))
        }
        ActionBody::Vote { target } => match target {
            Some(p) => norm_line.contains(&format!("player {p}")),
            None => norm_line.contains("skip"),
        },
        ActionBody::CallMeeting | ActionBody::CheckCamera | ActionBody::Speak { .. } => true,
    }
}

fn speak_payload(body: &ActionBody, line: &str) -> Option<String> {
    matches!(body, ActionBody::Speak { .. }).then(|| {
        let text = line
            .trim()
            .split_once(':')
            .map(|(_, rest)| rest)
            .unwrap_or("")
            .trim();
        strip_quotes(text).to_owned()
    })
}

/// Realize an option as an executable action, substituting speak text.
pub fn realize_option(option: &ActionOption, speak_text: Option<&str>) -> ActionBody {
    match &option.body {
        ActionBody::Speak { .. } => ActionBody::Speak {
            text: speak_text.unwrap_or("...").to_owned(),
        },
        other => other.clone(),
    }
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

/// Fixed utterance used when a non-verbal policy is forced to speak.
pub const RANDOM_SPEAK_PLACEHOLDER: &str = "...";

/// Uniform choice over the offered options. Speak uses a fixed placeholder
/// utterance; memory and thought stay untouched.
pub fn decide_random(rng: &mut ChaCha8Rng, options: &[ActionOption]) -> Decision {
    assert!(!options.is_empty(), "decide_random requires options");
    let pick = rng.gen_range(0..options.len());
    Decision::bare(realize_option(
        &options[pick],
        Some(RANDOM_SPEAK_PLACEHOLDER),
    ))
}

/// Terminal input/output for a human-driven player.
pub struct HumanIo {
    pub input: Box<dyn BufRead + Send>,
    pub output: Box<dyn Write + Send>,
}

impl HumanIo {
    pub fn new(input: Box<dyn BufRead + Send>, output: Box<dyn Write + Send>) -> Self {
        Self { input, output }
    }

    fn read_line(&mut self) -> Result<String, AgentError> {
        let mut line = String::new();
        let n = self
            .input
            .read_line(&mut line)
            .map_err(|_| AgentError::SessionClosed)?;
        if n == 0 {
            return Err(AgentError::SessionClosed);
        }
        Ok(line.trim().to_owned())
    }
}

/// Print the rendered observation and numbered options, then read a choice.
/// Re-prompts on invalid input; speak actions prompt a second time for the
/// text.
pub fn decide_human(
    io: &mut HumanIo,
    rendered: &str,
    options: &[ActionOption],
) -> Result<Decision, AgentError> {
    writeln!(io.output, "\n{rendered}\n").map_err(|_| AgentError::SessionClosed)?;
    loop {
        write!(io.output, "Choose an action (1-{}): ", options.len())
            .and_then(|_| io.output.flush())
            .map_err(|_| AgentError::SessionClosed)?;
        let line = io.read_line()?;
        let Ok(number) = line.parse::<usize>() else {
            writeln!(io.output, "Enter a number between 1 and {}.", options.len())
                .map_err(|_| AgentError::SessionClosed)?;
            continue;
        };
        if number == 0 || number > options.len() {
            writeln!(io.output, "Enter a number between 1 and {}.", options.len())
                .map_err(|_| AgentError::SessionClosed)?;
            continue;
        }
        let option = &options[number - 1];
        let speak_text = if matches!(option.body, ActionBody::Speak { .. }) {
            write!(io.output, "Say: ")
                .and_then(|_| io.output.flush())
                .map_err(|_| AgentError::SessionClosed)?;
            Some(io.read_line()?)
        } else {
            None
        };
        return Ok(Decision::bare(realize_option(
            option,
            speak_text.as_deref(),
        )));
    }
}

/// A language-model-driven player: renders the observation, asks the client,
/// parses the reply, and falls back to a uniform-random legal action when
/// the reply cannot be parsed. Client failures (after the transport's own
/// retries) propagate.
pub struct LlmAgent {
    pub mind: AgentMind,
    client: Arc<LlmClient>,
    params: LlmParams,
    fallback_rng: ChaCha8Rng,
    call_index: u32,
}

impl LlmAgent {
    pub fn new(
        mind: AgentMind,
        client: Arc<LlmClient>,
        params: LlmParams,
        fallback_seed: u64,
    ) -> Self {
        Self {
            mind,
            client,
            params,
            fallback_rng: ChaCha8Rng::seed_from_u64(fallback_seed),
            call_index: 0,
        }
    }

    pub fn decide(&mut self, obs: &Observation, game_id: &str) -> Result<Decision, AgentError> {
        let rendered = render_observation(obs, &self.mind.snapshot());
        let tag = CallTag {
            game: game_id.to_owned(),
            player: self.mind.player.0,
            timestep: obs.timestep,
            call_index: self.call_index,
        };
        self.call_index += 1;
        let request = ChatRequest {
            model: self.params.model.clone(),
            messages: vec![
                ChatMessage::system(self.mind.system_prompt.clone()),
                ChatMessage::user(rendered),
            ],
            temperature: self.params.temperature,
            max_tokens: self.params.max_tokens,
            tag: tag.clone(),
        };
        let reply = self.client.complete(&request)?;
        match parse_response(&reply, &obs.options) {
            Ok(parsed) => {
                self.mind
                    .absorb(parsed.memory.as_deref(), parsed.thought.as_deref());
                let chosen =
                    realize_option(&obs.options[parsed.index], parsed.speak_text.as_deref());
                Ok(Decision {
                    chosen,
                    new_memory: parsed.memory,
                    new_thought: parsed.thought,
                    raw_response: Some(reply),
                    fallback_used: false,
                })
            }
            Err(_) => {
                self.client.transcript().mark_fallback(&tag);
                let mut decision = decide_random(&mut self.fallback_rng, &obs.options);
                decision.raw_response = Some(reply);
                decision.fallback_used = true;
                Ok(decision)
            }
        }
    }
}

/// Route hints toward the player's unfinished tasks, appended to the
/// interactive display (never to model prompts).
pub fn path_hints(obs: &Observation) -> String {
    use std::collections::{BTreeMap, VecDeque};
    let adjacency: BTreeMap<&crate::world::RoomId, &Vec<crate::world::RoomId>> = obs
        .map_connections
        .iter()
        .map(|(room, ns)| (room, ns))
        .collect();
    let mut lines = Vec::new();
    for task in &obs.assigned_tasks {
        if task.done || task.room == obs.location {
            continue;
        }
        let mut parent: BTreeMap<&crate::world::RoomId, &crate::world::RoomId> = BTreeMap::new();
        let mut queue = VecDeque::from([&obs.location]);
        'bfs: while let Some(room) = queue.pop_front() {
            for next in adjacency
                .get(room)
                .map(|ns| ns.iter())
                .into_iter()
                .flatten()
            {
                if next != &obs.location && !parent.contains_key(next) {
                    parent.insert(next, room);
                    if next == &task.room {
                        break 'bfs;
                    }
                    queue.push_back(next);
                }
            }
        }
        let mut path = vec![&task.room];
        while let Some(prev) = parent.get(path.last().unwrap()) {
            path.push(prev);
        }
        path.reverse();
        let route = path
            .iter()
            .map(|r| r.as_str())
            .collect::<Vec<_>>()
            .join(" -> ");
        lines.push(format!(
            "shortest path to {} ({}): {route}",
            task.name, task.room
        ));
    }
    lines.join("\n")
}

/// One player's decision policy, dispatched by the game driver.
pub enum PlayerAgent {
    Random { rng: Box<ChaCha8Rng> },
    Llm(Box<LlmAgent>),
    Human { io: HumanIo },
}

impl PlayerAgent {
    pub fn decide(&mut self, obs: &Observation, game_id: &str) -> Result<Decision, AgentError> {
        match self {
            PlayerAgent::Random { rng } => Ok(decide_random(rng, &obs.options)),
            PlayerAgent::Llm(agent) => agent.decide(obs, game_id),
            PlayerAgent::Human { io } => {
                let mut rendered = render_observation(obs, &MindSnapshot::empty(false));
                let hints = path_hints(obs);
                if !hints.is_empty() {
                    rendered.push_str("\n\n");
                    rendered.push_str(&hints);
                }
                decide_human(io, &rendered, &obs.options)
            }
        }
    }

    pub fn mind(&self) -> Option<&AgentMind> {
        match self {
            PlayerAgent::Llm(agent) => Some(&agent.mind),
            _ => None,
        }
    }
}
