//! Controlled-evaluation interviews: pose a fixed question bank to agents
//! during and after games, score the answers with a judge, and aggregate
//! per category and role.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentMind, PlayerAgent};
use crate::llm::{CallTag, ChatMessage, ChatRequest, LlmClient, LlmParams};
use crate::world::{GameState, PlayerId, Role};

const QUESTIONS_TOML: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/assets/prompts/interview_questions.toml"
));
const RUBRICS_TOML: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/assets/prompts/judge_rubrics.toml"
));

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterviewCategory {
    SelfAwareness,
    Memory,
    Planning,
    Reasoning,
    Reflection,
}

impl InterviewCategory {
    pub fn label(self) -> &'static str {
        match self {
            InterviewCategory::SelfAwareness => "Self-Awareness",
            InterviewCategory::Memory => "Memory",
            InterviewCategory::Planning => "Planning",
            InterviewCategory::Reasoning => "Reasoning",
            InterviewCategory::Reflection => "Reflection",
        }
    }

    fn key(self) -> &'static str {
        match self {
            InterviewCategory::SelfAwareness => "self_awareness",
            InterviewCategory::Memory => "memory",
            InterviewCategory::Planning => "planning",
            InterviewCategory::Reasoning => "reasoning",
            InterviewCategory::Reflection => "reflection",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterviewStage {
    InGame,
    PostGame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleFilter {
    Both,
    Crewmate,
    Impostor,
}

impl RoleFilter {
    pub fn includes(self, role: Role) -> bool {
        match self {
            RoleFilter::Both => true,
            RoleFilter::Crewmate => role == Role::Crewmate,
            RoleFilter::Impostor => role == Role::Impostor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub category: InterviewCategory,
    pub stage: InterviewStage,
    pub role: RoleFilter,
    pub text: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionFile {
    #[allow(dead_code)]
    version: u32,
    questions: Vec<Question>,
}

#[derive(Debug, Clone)]
pub struct QuestionBank {
    questions: Vec<Question>,
}

impl QuestionBank {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        let file: QuestionFile = toml::from_str(text)?;
        Ok(Self {
            questions: file.questions,
        })
    }

    pub fn builtin() -> &'static QuestionBank {
        static BUILTIN: OnceLock<QuestionBank> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            QuestionBank::from_toml_str(QUESTIONS_TOML).expect("builtin question bank is valid")
        })
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    /// Questions applicable at a stage for a role. Reflection questions only
    /// exist post-game.
    pub fn select(&self, stage: InterviewStage, role: Role) -> Vec<&Question> {
        self.questions
            .iter()
            .filter(|q| q.stage == stage && q.role.includes(role))
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RubricFile {
    #[allow(dead_code)]
    version: u32,
    scale: String,
    rubrics: BTreeMap<String, String>,
}

fn rubrics() -> &'static RubricFile {
    static RUBRICS: OnceLock<RubricFile> = OnceLock::new();
    RUBRICS.get_or_init(|| toml::from_str(RUBRICS_TOML).expect("builtin rubrics are valid"))
}

/// How interview answers are scored.
#[derive(Clone)]
pub enum Judge {
    /// Fixed score for every answer; offline baseline.
    MockConstant(u8),
    /// Score via a completion call with the per-category rubric.
    Client { params: LlmParams },
}

/// Parse the first standalone digit 1..=5 out of a judge reply.
pub fn parse_judge_score(reply: &str) -> Option<u8> {
    reply
        .chars()
        .find(|c| ('1'..='5').contains(c))
        .and_then(|c| c.to_digit(10))
        .map(|d| d as u8)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterviewRecord {
    pub game_id: String,
    pub player: PlayerId,
    pub role: Role,
    pub stage: InterviewStage,
    pub category: InterviewCategory,
    pub question: String,
    pub answer: String,
    /// 1..=5; absent when the judge failed (the record is then flagged).
    pub score: Option<u8>,
    pub flagged: bool,
}

/// Interview settings carried through a run.
#[derive(Clone)]
pub struct InterviewHooks {
    pub after_meetings: bool,
    pub post_game: bool,
    pub judge: Judge,
    pub params: LlmParams,
}

impl InterviewHooks {
    pub fn offline_mock() -> Self {
        Self {
            after_meetings: true,
            post_game: true,
            judge: Judge::MockConstant(3),
            params: LlmParams::default(),
        }
    }
}

/// Poses questions through a client, tagging calls distinctly from gameplay
/// decisions so scripted backends can address them.
pub struct InterviewSession {
    client: Arc<LlmClient>,
    hooks: InterviewHooks,
    counter: u32,
}

impl InterviewSession {
    pub fn new(client: Arc<LlmClient>, hooks: InterviewHooks) -> Self {
        Self {
            client,
            hooks,
            counter: 0,
        }
    }

    /// Interview one agent mind at a stage. Answer failures and judge
    /// failures are flagged, never fatal.
    pub fn interview(
        &mut self,
        game_id: &str,
        timestep: u32,
        mind: &AgentMind,
        stage: InterviewStage,
    ) -> Vec<InterviewRecord> {
        let bank = QuestionBank::builtin();
        let mut records = Vec::new();
        for question in bank.select(stage, mind.role) {
            let context = format!(
                "Current condensed memory:\n{}\n\nCurrent plan:\n{}\n\nInterview question: {}\n\nAnswer in character, in a few sentences.",
                if mind.condensed_memory.is_empty() { "none" } else { &mind.condensed_memory },
                mind.previous_thought.as_deref().unwrap_or("none"),
                question.text
            );
            let request = ChatRequest {
                model: self.hooks.params.model.clone(),
                messages: vec![
                    ChatMessage::system(mind.system_prompt.clone()),
                    ChatMessage::user(context),
                ],
                temperature: self.hooks.params.temperature,
                max_tokens: self.hooks.params.max_tokens,
                tag: CallTag {
                    game: format!("{game_id}#interview"),
                    player: mind.player.0,
                    timestep,
                    call_index: self.counter,
                },
            };
            self.counter += 1;
            let (answer, mut flagged) = match self.client.complete(&request) {
                Ok(answer) => (answer, false),
                Err(e) => (format!("<no answer: {e}>"), true),
            };
            let score = if flagged {
                None
            } else {
                match self.judge(game_id, mind.player, question, &answer) {
                    Some(score) => Some(score),
                    None => {
                        flagged = true;
                        None
                    }
                }
            };
            records.push(InterviewRecord {
                game_id: game_id.to_owned(),
                player: mind.player,
                role: mind.role,
                stage,
                category: question.category,
                question: question.text.clone(),
                answer,
                score,
                flagged,
            });
        }
        records
    }

    fn judge(
        &mut self,
        game_id: &str,
        player: PlayerId,
        question: &Question,
        answer: &str,
    ) -> Option<u8> {
        match &self.hooks.judge {
            Judge::MockConstant(score) => Some(*score),
            Judge::Client { params } => {
                let rubric_file = rubrics();
                let rubric = &rubric_file.rubrics[question.category.key()];
                let system = format!(
                    "You grade interview answers from players of a social deduction game.\n{rubric}\n{}",
                    rubric_file.scale
                );
                let request = ChatRequest {
                    model: params.model.clone(),
                    messages: vec![
                        ChatMessage::system(system),
                        ChatMessage::user(format!(
                            "Question: {}\n\nAnswer: {answer}\n\nScore:",
                            question.text
                        )),
                    ],
                    temperature: 0.0,
                    max_tokens: 8,
                    tag: CallTag {
                        game: format!("{game_id}#judge"),
                        player: player.0,
                        timestep: 0,
                        call_index: self.counter,
                    },
                };
                self.counter += 1;
                self.client
                    .complete(&request)
                    .ok()
                    .and_then(|reply| parse_judge_score(&reply))
            }
        }
    }

    /// In-game hook: interview every living language agent.
    pub fn in_game(
        &mut self,
        state: &GameState,
        agents: &BTreeMap<PlayerId, PlayerAgent>,
    ) -> Vec<InterviewRecord> {
        let mut records = Vec::new();
        for player in state.living_players() {
            if let Some(mind) = agents.get(&player).and_then(|a| a.mind()) {
                records.extend(self.interview(
                    state.game_id(),
                    state.timestep(),
                    mind,
                    InterviewStage::InGame,
                ));
            }
        }
        records
    }
}

/// Post-game hook: interview every language agent, dead or alive.
pub fn post_game_interviews(
    session: &mut InterviewSession,
    state: &GameState,
    agents: &BTreeMap<PlayerId, PlayerAgent>,
) -> Vec<InterviewRecord> {
    let mut records = Vec::new();
    for agent in agents.values() {
        if let Some(mind) = agent.mind() {
            records.extend(session.interview(
                state.game_id(),
                state.timestep(),
                mind,
                InterviewStage::PostGame,
            ));
        }
    }
    records
}

/// Average scores per (category, role); unflagged records only.
pub fn aggregate_scores(records: &[InterviewRecord]) -> BTreeMap<(InterviewCategory, Role), f64> {
    let mut sums: BTreeMap<(InterviewCategory, Role), (u32, u32)> = BTreeMap::new();
    for record in records {
        if let Some(score) = record.score {
            let entry = sums.entry((record.category, record.role)).or_insert((0, 0));
            entry.0 += score as u32;
            entry.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(key, (sum, count))| (key, sum as f64 / count as f64))
        .collect()
}

pub fn scores_to_csv(averages: &BTreeMap<(InterviewCategory, Role), f64>) -> String {
    let mut out = String::from("category,role,average_score\n");
    for ((category, role), avg) in averages {
        out.push_str(&format!("{},{role},{avg:.3}\n", category.label()));
    }
    out
}
