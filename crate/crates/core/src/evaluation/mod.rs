//! Batch experiment runner and analyses over persisted game records:
//! outcome tables, speech annotation, interviews, persona analytics, and
//! posterior trajectory ranking.

pub mod analytics;
pub mod interview;
pub mod ranking;
pub mod speech;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{OutcomeCondition, OUTCOME_CONDITIONS};
use crate::llm::{Backend, LlmClient, LlmParams, RemoteBackend, RemoteConfig, TranscriptEntry};
use crate::record::GameRecord;
use crate::sim::{derive_seed, run_game, RunOptions, BACKEND_STREAM};
use crate::world::{AgentAssignment, GameConfig, MapData, PlayerSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no winning trajectories in the corpus")]
    DegenerateCorpus,
    #[error("no records found")]
    EmptyCorpus,
    #[error("record error: {0}")]
    Record(String),
}

// ---------------------------------------------------------------------------
// Experiment setups
// ---------------------------------------------------------------------------

/// The four end-to-end agent configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetupLabel {
    AllRandom,
    AllLlms,
    LlmCrewmatesRandomImpostor,
    RandomCrewmatesLlmImpostor,
}

impl SetupLabel {
    pub fn display(self) -> &'static str {
        match self {
            SetupLabel::AllRandom => "All Random",
            SetupLabel::AllLlms => "All LLMs",
            SetupLabel::LlmCrewmatesRandomImpostor => "LLM Crewmates + Random Impostor",
            SetupLabel::RandomCrewmatesLlmImpostor => "Random Crewmates + LLM Impostor",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            SetupLabel::AllRandom => "all_random",
            SetupLabel::AllLlms => "all_llms",
            SetupLabel::LlmCrewmatesRandomImpostor => "llm_crewmates_random_impostor",
            SetupLabel::RandomCrewmatesLlmImpostor => "random_crewmates_llm_impostor",
        }
    }

    /// Map the label to per-role agent specs.
    pub fn assignment(self, planner: PlannerMode) -> AgentAssignment {
        let planner_on = matches!(planner, PlannerMode::Enabled | PlannerMode::NotApplicable);
        let llm = PlayerSpec::llm(planner_on);
        let random = PlayerSpec::random();
        let (crewmate, impostor) = match self {
            SetupLabel::AllRandom => (random.clone(), random),
            SetupLabel::AllLlms => (llm.clone(), llm),
            SetupLabel::LlmCrewmatesRandomImpostor => (llm, random),
            SetupLabel::RandomCrewmatesLlmImpostor => (random, llm),
        };
        AgentAssignment::ByRole { crewmate, impostor }
    }

    pub fn uses_llm(self) -> bool {
        !matches!(self, SetupLabel::AllRandom)
    }
}

impl fmt::Display for SetupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerMode {
    Enabled,
    Disabled,
    NotApplicable,
}

impl PlannerMode {
    pub fn display(self) -> &'static str {
        match self {
            PlannerMode::Enabled => "w/ planner",
            PlannerMode::Disabled => "w/o planner",
            PlannerMode::NotApplicable => "n/a",
        }
    }
}

/// One batch: a setup label, planner mode, and the seeds to play.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub label: SetupLabel,
    pub planner: PlannerMode,
    pub games: u32,
    pub base_config: GameConfig,
    pub seeds: Vec<u64>,
    pub workers: usize,
}

impl ExperimentSetup {
    /// Seeds for each game: the explicit list when given, otherwise derived
    /// deterministically from the base config seed.
    pub fn game_seeds(&self) -> Vec<u64> {
        if !self.seeds.is_empty() {
            self.seeds
                .iter()
                .copied()
                .take(self.games as usize)
                .collect()
        } else {
            (0..self.games as u64)
                .map(|i| derive_seed(self.base_config.seed, i))
                .collect()
        }
    }
}

/// How the completion backend for a run is built.
#[derive(Clone)]
pub enum BackendSpec {
    /// Per-game uniform-option backend seeded from the game seed.
    Uniform,
    /// Shared canned-reply table.
    Scripted(Arc<BTreeMap<String, String>>),
    /// Shared remote endpoint.
    Remote(RemoteConfig),
}

impl BackendSpec {
    pub fn client_for_game(&self, game_seed: u64) -> Result<Arc<LlmClient>, crate::llm::LlmError> {
        let backend = match self {
            BackendSpec::Uniform => Backend::uniform(derive_seed(game_seed, BACKEND_STREAM)),
            BackendSpec::Scripted(replies) => Backend::scripted((**replies).clone()),
            BackendSpec::Remote(config) => Backend::Remote(RemoteBackend::new(config.clone())?),
        };
        Ok(Arc::new(LlmClient::new(backend)))
    }
}

#[derive(Debug)]
pub struct GameFailure {
    pub game_id: String,
    pub error: String,
}

/// One row of the outcome table: counts per end condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub label: SetupLabel,
    pub planner: PlannerMode,
    pub games: u32,
    /// Counts in fixed condition order: crewmates eliminated, time limit
    /// reached, impostors eliminated, all tasks completed.
    pub counts: [u32; 4],
}

impl OutcomeRow {
    pub fn count(&self, condition: OutcomeCondition) -> u32 {
        let idx = OUTCOME_CONDITIONS
            .iter()
            .position(|c| *c == condition)
            .unwrap();
        self.counts[idx]
    }

    pub fn percentages(&self) -> [f64; 4] {
        if self.games == 0 {
            return [0.0; 4];
        }
        self.counts.map(|c| c as f64 * 100.0 / self.games as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub rows: Vec<OutcomeRow>,
}

impl OutcomeTable {
    /// Aligned text table, one row per setup, four outcome columns grouped
    /// by winner.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<45} {:>22} {:>22} {:>22} {:>22}\n",
            "Agent Setup",
            "Crewmates eliminated",
            "Time limit reached",
            "Impostors eliminated",
            "All tasks completed"
        ));
        out.push_str(&format!(
            "{:<45} {:>22} {:>22} {:>22} {:>22}\n",
            "", "(Impostors win)", "(Impostors win)", "(Crewmates win)", "(Crewmates win)"
        ));
        for row in &self.rows {
            let name = match row.planner {
                PlannerMode::NotApplicable => row.label.display().to_owned(),
                mode => format!("{} {}", row.label.display(), mode.display()),
            };
            let pct = row.percentages();
            let cell = |i: usize| format!("{} ({:.0}%)", row.counts[i], pct[i]);
            out.push_str(&format!(
                "{:<45} {:>22} {:>22} {:>22} {:>22}\n",
                name,
                cell(0),
                cell(1),
                cell(2),
                cell(3)
            ));
        }
        out
    }

    /// CSV with both counts and percentages.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "setup,planner,games,crewmates_eliminated,time_limit_reached,impostors_eliminated,all_tasks_completed,crewmates_eliminated_pct,time_limit_reached_pct,impostors_eliminated_pct,all_tasks_completed_pct\n",
        );
        for row in &self.rows {
            let pct = row.percentages();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:.1},{:.1},{:.1},{:.1}\n",
                row.label.slug(),
                row.planner.display().replace(' ', "_"),
                row.games,
                row.counts[0],
                row.counts[1],
                row.counts[2],
                row.counts[3],
                pct[0],
                pct[1],
                pct[2],
                pct[3]
            ));
        }
        out
    }
}

/// Count the four end conditions over completed records.
pub fn tally_outcomes(records: &[GameRecord]) -> [u32; 4] {
    let mut counts = [0u32; 4];
    for record in records {
        if let Some(outcome) = &record.footer.outcome {
            let idx = OUTCOME_CONDITIONS
                .iter()
                .position(|c| *c == outcome.condition)
                .unwrap();
            counts[idx] += 1;
        }
    }
    counts
}

pub struct ExperimentResult {
    pub records: Vec<GameRecord>,
    pub transcripts: Vec<(String, Vec<TranscriptEntry>)>,
    pub interviews: Vec<interview::InterviewRecord>,
    pub failures: Vec<GameFailure>,
    pub row: OutcomeRow,
}

/// Play `setup.games` independent games with distinct seeds, possibly
/// concurrently, and aggregate their outcomes. Per-game failures are
/// recorded and excluded from the tally, never silently dropped.
pub fn run_experiment(
    setup: &ExperimentSetup,
    map: Arc<MapData>,
    backend: &BackendSpec,
    llm: &LlmParams,
    interviews: Option<interview::InterviewHooks>,
) -> ExperimentResult {
    let seeds = setup.game_seeds();
    let n = seeds.len();
    let results: Mutex<Vec<Option<Result<crate::sim::CompletedGame, String>>>> =
        Mutex::new((0..n).map(|_| None).collect());
    let next: Mutex<usize> = Mutex::new(0);
    let workers = setup.workers.clamp(1, n.max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = {
                    let mut guard = next.lock().expect("index lock");
                    if *guard >= n {
                        break;
                    }
                    let i = *guard;
                    *guard += 1;
                    i
                };
                let seed = seeds[index];
                let game_id = format!("{}-{index:04}", setup.label.slug());
                let mut config = setup.base_config.clone();
                config.seed = seed;
                config.agents = setup.label.assignment(setup.planner);
                let outcome = (|| {
                    let mut opts = RunOptions::offline(game_id.clone());
                    opts.label = Some(setup.label.slug().to_owned());
                    opts.llm = llm.clone();
                    opts.interviews = interviews.clone();
                    let needs_client = setup.label.uses_llm() || interviews.is_some();
                    if needs_client {
                        opts.client =
                            Some(backend.client_for_game(seed).map_err(|e| e.to_string())?);
                    }
                    run_game(&config, map.clone(), opts).map_err(|e| e.to_string())
                })();
                results.lock().expect("results lock")[index] = Some(outcome);
            });
        }
    });

    let mut records = Vec::new();
    let mut transcripts = Vec::new();
    let mut all_interviews = Vec::new();
    let mut failures = Vec::new();
    for (index, slot) in results
        .into_inner()
        .expect("results")
        .into_iter()
        .enumerate()
    {
        let game_id = format!("{}-{index:04}", setup.label.slug());
        match slot.expect("every game attempted") {
            Ok(done) => {
                transcripts.push((game_id, done.transcript));
                all_interviews.extend(done.interviews);
                records.push(done.record);
            }
            Err(error) => failures.push(GameFailure { game_id, error }),
        }
    }
    let row = OutcomeRow {
        label: setup.label,
        planner: setup.planner,
        games: records.len() as u32,
        counts: tally_outcomes(&records),
    };
    ExperimentResult {
        records,
        transcripts,
        interviews: all_interviews,
        failures,
        row,
    }
}
