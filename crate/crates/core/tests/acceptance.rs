//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! The criteria pin the engine's legality, determinism, prompt contract,
//! vote mechanics, observation privacy, meeting structure, task semantics,
//! baseline outcome statistics, planner-ablation observability, the
//! posterior-ranking math, and the speech pipeline.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use amongagents_core::agents::{decide_random, AgentMind, LlmAgent, PersonaCatalog};
use amongagents_core::engine::{
    apply_action, check_termination, finish_game, run_meeting, step_task_phase, task_progress,
    ActionBody, Event, EventKind, PhaseTag, Visibility, VoteResult,
};
use amongagents_core::evaluation::ranking::posterior_by_bin;
use amongagents_core::evaluation::speech::{
    annotate_speech, mock_annotate, report_from_annotations, Annotator,
};
use amongagents_core::evaluation::{
    run_experiment, BackendSpec, ExperimentSetup, OutcomeTable, PlannerMode, SetupLabel,
};
use amongagents_core::llm::{LlmClient, LlmParams};
use amongagents_core::observation::{observe, render_observation, MindSnapshot};
use amongagents_core::record::GameRecord;
use amongagents_core::sim::{derive_seed, run_game, RunOptions};
use amongagents_core::world::{
    new_game, GameConfig, GameState, MapData, Phase, PlayerId, Role, RoomId,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn criterion(number: u8, name: &str, body: impl FnOnce()) {
    let result = catch_unwind(AssertUnwindSafe(body));
    let status = if result.is_ok() { "PASS" } else { "FAIL" };
    println!("[acceptance] criterion {number:>2} ({name}): {status}");
    if let Err(panic) = result {
        resume_unwind(panic);
    }
}

fn experiment(
    label: SetupLabel,
    planner: PlannerMode,
    games: u32,
    seed: u64,
    workers: usize,
) -> ExperimentSetup {
    ExperimentSetup {
        label,
        planner,
        games,
        base_config: GameConfig {
            seed,
            ..GameConfig::default()
        },
        seeds: Vec::new(),
        workers,
    }
}

fn scan_state_invariants(record: &GameRecord) {
    // Journal timesteps never decrease.
    for pair in record.events.windows(2) {
        assert!(
            pair[1].timestep >= pair[0].timestep,
            "timestep regression in {}",
            record.header.game_id
        );
    }
    // Phase exclusivity: task-only kinds never carry the meeting tag and
    // votes never carry the task tag.
    for event in &record.events {
        match &event.kind {
            EventKind::Kill { .. }
            | EventKind::Move { .. }
            | EventKind::Vent { .. }
            | EventKind::CompleteTask { .. }
            | EventKind::FakeTask { .. } => {
                assert_eq!(event.phase, PhaseTag::Task, "{:?}", event.kind)
            }
            EventKind::Vote { .. } => assert_eq!(event.phase, PhaseTag::Meeting),
            _ => {}
        }
    }
    // Colors unique.
    let colors: BTreeSet<_> = record.header.colors.values().collect();
    assert_eq!(colors.len(), record.header.colors.len());
}

// -------------------------------------------------------------------------
// 1. Legality + termination fuzz
// -------------------------------------------------------------------------

#[test]
fn c01_legality_and_termination_fuzz() {
    criterion(1, "legality + termination fuzz, 1000 games", || {
        let start = Instant::now();
        let setup = experiment(SetupLabel::AllLlms, PlannerMode::Enabled, 1000, 0xFACE, 8);
        let result = run_experiment(
            &setup,
            MapData::builtin(),
            &BackendSpec::Uniform,
            &LlmParams::default(),
            None,
        );
        // Zero illegal actions and zero agent failures: any would abort a
        // game and land in `failures`.
        assert!(
            result.failures.is_empty(),
            "games failed: {:?}",
            result.failures.iter().map(|f| &f.error).collect::<Vec<_>>()
        );
        assert_eq!(result.records.len(), 1000);
        for record in &result.records {
            let outcome = record.footer.outcome.expect("every game terminates");
            assert!(
                record.footer.duration_timesteps <= record.header.config.time_limit_steps,
                "game ran past the time limit"
            );
            let _ = outcome;
            scan_state_invariants(record);
        }
        // Uniform-option replies always parse; no fallback should ever fire.
        for (game_id, transcript) in &result.transcripts {
            for entry in transcript {
                assert!(
                    !entry.fallback_used,
                    "fallback in {game_id} at {}",
                    entry.tag
                );
                assert!(entry.error.is_none());
            }
        }
        let elapsed = start.elapsed();
        assert!(
            elapsed.as_secs_f64() < 120.0,
            "fuzz took {elapsed:?}, budget is two minutes"
        );
        println!("    1000 games in {elapsed:.2?}");
    });
}

// -------------------------------------------------------------------------
// 2. Determinism
// -------------------------------------------------------------------------

#[test]
fn c02_byte_identical_reruns() {
    criterion(2, "byte-identical records and tables on rerun", || {
        // Uniform backend, LLM agents.
        let run = || {
            let setup = experiment(SetupLabel::AllLlms, PlannerMode::Enabled, 6, 0xD00D, 3);
            let result = run_experiment(
                &setup,
                MapData::builtin(),
                &BackendSpec::Uniform,
                &LlmParams::default(),
                None,
            );
            assert!(result.failures.is_empty());
            let records: Vec<String> = result.records.iter().map(|r| r.to_jsonl_string()).collect();
            let table = OutcomeTable {
                rows: vec![result.row.clone()],
            };
            (
                records,
                table.to_csv(),
                table.render_text(),
                result.transcripts,
            )
        };
        let (records_a, csv_a, text_a, transcripts) = run();
        let (records_b, csv_b, text_b, _) = run();
        assert_eq!(records_a, records_b, "records must be byte-identical");
        assert_eq!(csv_a, csv_b);
        assert_eq!(text_a, text_b);

        // A differently shaped config reruns identically too.
        let wide = GameConfig {
            seed: 0x51DE,
            n_crewmates: 5,
            n_impostors: 2,
            tasks_per_crewmate: amongagents_core::world::TaskCounts {
                common: 1,
                short: 2,
                long: 1,
            },
            recent_k: 5,
            agents: SetupLabel::AllLlms.assignment(PlannerMode::Enabled),
            ..GameConfig::default()
        };
        let run_wide = || {
            let mut opts = RunOptions::offline("wide");
            opts.client = Some(BackendSpec::Uniform.client_for_game(wide.seed).unwrap());
            run_game(&wide, MapData::builtin(), opts)
                .unwrap()
                .record
                .to_jsonl_string()
        };
        assert_eq!(run_wide(), run_wide());

        // Scripted backend: replay the first game's transcript as a canned
        // reply table and reproduce that game byte for byte.
        let (game_id, transcript) = &transcripts[0];
        let replies: BTreeMap<String, String> = transcript
            .iter()
            .map(|e| {
                (
                    e.tag.to_string(),
                    e.reply.clone().expect("uniform never errors"),
                )
            })
            .collect();
        let reference = &records_a[0];
        let scripted = BackendSpec::Scripted(Arc::new(replies));
        let seed = derive_seed(0xD00D, 0);
        let mut config = GameConfig {
            seed,
            ..GameConfig::default()
        };
        config.agents = SetupLabel::AllLlms.assignment(PlannerMode::Enabled);
        let run_scripted = || {
            let mut opts = RunOptions::offline(game_id.clone());
            opts.label = Some(SetupLabel::AllLlms.slug().to_owned());
            opts.client = Some(scripted.client_for_game(seed).unwrap());
            run_game(&config, MapData::builtin(), opts)
                .unwrap()
                .record
                .to_jsonl_string()
        };
        let first = run_scripted();
        let second = run_scripted();
        assert_eq!(first, second);
        assert_eq!(
            &first, reference,
            "scripted rerun reproduces the uniform game"
        );
    });
}

// -------------------------------------------------------------------------
// 3. Reference prompt golden test
// -------------------------------------------------------------------------

#[test]
fn c03_reference_prompts_and_scripted_decisions() {
    criterion(
        3,
        "reference prompts render and scripted replies execute",
        || {
            // Crewmate: the rendered prompt matches the golden file and the
            // scripted reply leads the engine into a meeting.
            let mut state = common::crewmate_scenario();
            let obs = observe(&state, PlayerId(3)).unwrap();
            let rendered = render_observation(&obs, &MindSnapshot::empty(true));
            common::check_golden("crewmate_prompt.txt", &rendered);
            let client = Arc::new(LlmClient::new(
                amongagents_core::llm::ScriptBuilder::new()
                    .reply(
                        &amongagents_core::llm::CallTag {
                            game: "golden-crew".into(),
                            player: 3,
                            timestep: 0,
                            call_index: 0,
                        },
                        common::CREWMATE_REPLY,
                    )
                    .build(),
            ));
            let mind = AgentMind::new(
                PlayerId(3),
                state.player(PlayerId(3)).unwrap().color,
                Role::Crewmate,
                PersonaCatalog::builtin().get("The Observer"),
                None,
                true,
            )
            .unwrap();
            let mut agent = LlmAgent::new(mind, client, LlmParams::default(), 0);
            let decision = agent.decide(&obs, "golden-crew").unwrap();
            assert_eq!(decision.chosen, ActionBody::CallMeeting);
            apply_action(&mut state, PlayerId(3), &decision.chosen).unwrap();
            assert!(matches!(state.phase(), Phase::Meeting(_)));
            for (_, ps) in state.players() {
                if ps.alive {
                    assert_eq!(ps.location, RoomId::from("Cafeteria"));
                }
            }

            // Impostor: golden render plus the move and speak reply variants.
            let state = common::impostor_scenario();
            let obs = observe(&state, PlayerId(1)).unwrap();
            let mind = MindSnapshot {
            condensed_memory: "I killed Player 2. The rest of the crew moves to Weapons.".into(),
            previous_thought: Some(
                "I just killed a player. I need to quickly move to a different location to avoid suspicion."
                    .into(),
            ),
            planner_enabled: true,
        };
            common::check_golden("impostor_prompt.txt", &render_observation(&obs, &mind));
            for (reply, expected) in [
                (
                    common::IMPOSTOR_MOVE_REPLY,
                    ActionBody::Move { to: "O2".into() },
                ),
                (
                    common::IMPOSTOR_SPEAK_REPLY,
                    ActionBody::Speak {
                        text: "Hey Player 5, where are you headed next?".into(),
                    },
                ),
            ] {
                let mut state = common::impostor_scenario();
                let obs = observe(&state, PlayerId(1)).unwrap();
                let client = Arc::new(LlmClient::new(
                    amongagents_core::llm::ScriptBuilder::new()
                        .reply(
                            &amongagents_core::llm::CallTag {
                                game: "golden-imp".into(),
                                player: 1,
                                timestep: 2,
                                call_index: 0,
                            },
                            reply,
                        )
                        .build(),
                ));
                let mind = AgentMind::new(
                    PlayerId(1),
                    state.player(PlayerId(1)).unwrap().color,
                    Role::Impostor,
                    PersonaCatalog::builtin().get("The Lone Wolf"),
                    None,
                    true,
                )
                .unwrap();
                let mut agent = LlmAgent::new(mind, client, LlmParams::default(), 0);
                let decision = agent.decide(&obs, "golden-imp").unwrap();
                assert!(!decision.fallback_used);
                assert_eq!(decision.chosen, expected);
                apply_action(&mut state, PlayerId(1), &decision.chosen).unwrap();
            }
        },
    );
}

// -------------------------------------------------------------------------
// 4. Vote oracle
// -------------------------------------------------------------------------

/// Independent plurality count: scan per candidate, track the best and
/// whether it is strict over both rivals and skips.
fn brute_force_tally(votes: &BTreeMap<PlayerId, Option<PlayerId>>) -> VoteResult {
    let candidates: BTreeSet<PlayerId> = votes.values().flatten().copied().collect();
    let skips = votes.values().filter(|v| v.is_none()).count();
    let mut winner = None;
    for candidate in &candidates {
        let own = votes.values().filter(|v| **v == Some(*candidate)).count();
        let beats_others = candidates
            .iter()
            .filter(|other| *other != candidate)
            .all(|other| votes.values().filter(|v| **v == Some(*other)).count() < own);
        if beats_others && own > skips {
            winner = Some(*candidate);
        }
    }
    match winner {
        Some(p) => VoteResult::Ejected(p),
        None => VoteResult::NoEjection,
    }
}

#[test]
fn c04_vote_tally_matches_exhaustive_oracle() {
    criterion(
        4,
        "vote tally equals brute-force plurality, exhaustively",
        || {
            let start = Instant::now();
            let mut cases = 0u64;
            for voters in 0..=5usize {
                // Each voter picks one of 5 targets or skip: 6^voters ballots.
                let mut assignment = vec![0usize; voters];
                loop {
                    let votes: BTreeMap<PlayerId, Option<PlayerId>> = assignment
                        .iter()
                        .enumerate()
                        .map(|(voter, choice)| {
                            let target = if *choice == 5 {
                                None
                            } else {
                                Some(PlayerId(*choice as u8 + 1))
                            };
                            (PlayerId(voter as u8 + 1), target)
                        })
                        .collect();
                    assert_eq!(
                        amongagents_core::engine::tally_votes(&votes),
                        brute_force_tally(&votes),
                        "diverged on {votes:?}"
                    );
                    cases += 1;
                    // Increment the mixed-radix assignment.
                    let mut i = 0;
                    loop {
                        if i == voters {
                            break;
                        }
                        assignment[i] += 1;
                        if assignment[i] < 6 {
                            break;
                        }
                        assignment[i] = 0;
                        i += 1;
                    }
                    if i == voters {
                        break;
                    }
                }
            }
            assert_eq!(cases, 1 + 6 + 36 + 216 + 1296 + 7776);
            assert!(start.elapsed().as_secs() < 10);
        },
    );
}

// -------------------------------------------------------------------------
// 5. Observation privacy
// -------------------------------------------------------------------------

/// Location-at-emission tracker rebuilt independently from the journal.
struct LocationOracle {
    processed: usize,
    alive: BTreeMap<PlayerId, bool>,
    locations: BTreeMap<PlayerId, RoomId>,
    at_emission: Vec<BTreeMap<PlayerId, RoomId>>,
}

impl LocationOracle {
    fn new(state: &GameState) -> Self {
        Self {
            processed: 0,
            alive: state.players().map(|(id, _)| (id, true)).collect(),
            locations: state
                .players()
                .map(|(id, ps)| (id, ps.location.clone()))
                .collect(),
            at_emission: Vec::new(),
        }
    }

    fn ingest(&mut self, log: &[Event], meeting_room: &RoomId) {
        while self.processed < log.len() {
            let event = &log[self.processed];
            self.at_emission.push(self.locations.clone());
            match &event.kind {
                EventKind::Move { to, .. } | EventKind::Vent { to, .. } => {
                    self.locations.insert(event.actor.unwrap(), to.clone());
                }
                EventKind::Kill { victim } => {
                    self.alive.insert(*victim, false);
                }
                EventKind::Ejection { player } => {
                    self.alive.insert(*player, false);
                }
                EventKind::MeetingStart => {
                    for (id, alive) in &self.alive {
                        if *alive {
                            self.locations.insert(*id, meeting_room.clone());
                        }
                    }
                }
                _ => {}
            }
            self.processed += 1;
        }
    }

    fn check(&self, player: PlayerId, events: &[Event]) {
        for event in events {
            if let Visibility::Rooms(rooms) = &event.visibility {
                let location = &self.at_emission[event.seq as usize][&player];
                assert!(
                    rooms.contains(location),
                    "player {player} observed event {} from {location}, visible only in {rooms:?}",
                    event.seq
                );
                assert_ne!(
                    event.actor,
                    Some(player),
                    "own actions never appear as observations"
                );
            }
        }
    }
}

#[test]
fn c05_observation_privacy_fuzz() {
    criterion(
        5,
        "no observation leaks events from unoccupied rooms, 500 games",
        || {
            for game in 0..500u64 {
                let seed = derive_seed(0x5EED, game);
                let config = GameConfig {
                    seed,
                    ..GameConfig::default()
                };
                let mut state =
                    new_game(&config, MapData::builtin(), format!("privacy-{game}")).unwrap();
                let meeting_room = state.map().graph.meeting_room().clone();
                let mut oracle = LocationOracle::new(&state);
                let mut rngs: BTreeMap<PlayerId, ChaCha8Rng> = state
                    .player_ids()
                    .into_iter()
                    .map(|id| {
                        (
                            id,
                            ChaCha8Rng::seed_from_u64(derive_seed(seed, id.0 as u64)),
                        )
                    })
                    .collect();
                loop {
                    if state.outcome().is_some() {
                        break;
                    }
                    if let Some(condition) = check_termination(&state) {
                        finish_game(&mut state, condition);
                        break;
                    }
                    let mut decide =
                        |state: &GameState,
                         player: PlayerId,
                         obs: &amongagents_core::observation::Observation| {
                            oracle.ingest(state.event_log(), &meeting_room);
                            oracle.check(player, &obs.recent_events);
                            // Dead players never appear among occupants.
                            for (id, _) in &obs.occupants {
                                assert!(state.player(*id).unwrap().alive);
                            }
                            // Meetings gather every living player in the meeting room.
                            if matches!(state.phase(), Phase::Meeting(_)) {
                                for living in state.living_players() {
                                    assert_eq!(
                                        state.player(living).unwrap().location,
                                        meeting_room
                                    );
                                }
                            }
                            Ok(decide_random(rngs.get_mut(&player).unwrap(), &obs.options))
                        };
                    match state.phase() {
                        Phase::Task => step_task_phase(&mut state, &mut decide).unwrap(),
                        Phase::Meeting(_) => {
                            run_meeting(&mut state, &mut decide).unwrap();
                        }
                    }
                }
            }
        },
    );
}

// -------------------------------------------------------------------------
// 6. Meeting structure
// -------------------------------------------------------------------------

#[test]
fn c06_meetings_speak_three_rounds_then_vote() {
    criterion(6, "meetings emit 3 x living speaks before any vote", || {
        let setup = experiment(
            SetupLabel::AllRandom,
            PlannerMode::NotApplicable,
            300,
            0xBEEF,
            8,
        );
        let result = run_experiment(
            &setup,
            MapData::builtin(),
            &BackendSpec::Uniform,
            &LlmParams::default(),
            None,
        );
        assert!(result.failures.is_empty());
        let mut meetings = 0u32;
        for record in &result.records {
            let mut i = 0;
            while i < record.events.len() {
                if !matches!(record.events[i].kind, EventKind::MeetingStart) {
                    i += 1;
                    continue;
                }
                meetings += 1;
                let segment: Vec<&Event> = record.events[i + 1..]
                    .iter()
                    .take_while(|e| e.phase == PhaseTag::Meeting)
                    .collect();
                let speaks: Vec<usize> = segment
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| matches!(e.kind, EventKind::Speak { .. }))
                    .map(|(j, _)| j)
                    .collect();
                let votes: Vec<usize> = segment
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| matches!(e.kind, EventKind::Vote { .. }))
                    .map(|(j, _)| j)
                    .collect();
                assert_eq!(
                    speaks.len(),
                    3 * votes.len(),
                    "meeting in {} has {} speaks for {} voters",
                    record.header.game_id,
                    speaks.len(),
                    votes.len()
                );
                let first_vote = votes.first().copied().unwrap_or(usize::MAX);
                assert!(
                    speaks.iter().all(|s| *s < first_vote),
                    "speak after voting began in {}",
                    record.header.game_id
                );
                i += 1 + segment.len();
            }
        }
        assert!(meetings > 100, "fuzz produced only {meetings} meetings");
        println!("    checked {meetings} meetings");
    });
}

// -------------------------------------------------------------------------
// 7. Long-task semantics
// -------------------------------------------------------------------------

#[test]
fn c07_long_tasks_take_two_steps() {
    criterion(7, "long tasks need exactly two completions", || {
        let mut state = amongagents_core::world::ScenarioBuilder::new(
            GameConfig::default(),
            MapData::builtin(),
            "long-task",
        )
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
        assert_eq!(
            task_progress(&state),
            0.5,
            "half done after the first application"
        );
        assert!(!state.tasks()[&task].is_complete());
        apply_action(&mut state, PlayerId(2), &ActionBody::CompleteTask { task }).unwrap();
        assert!(state.tasks()[&task].is_complete());
        assert_eq!(task_progress(&state), 1.0);
        // A third completion is illegal.
        assert!(apply_action(&mut state, PlayerId(2), &ActionBody::CompleteTask { task }).is_err());
    });
}

// -------------------------------------------------------------------------
// 8. All-random outcome statistics
// -------------------------------------------------------------------------

#[test]
fn c08_all_random_outcome_distribution() {
    criterion(8, "all-random outcome distribution over 200 games", || {
        let start = Instant::now();
        let setup = experiment(
            SetupLabel::AllRandom,
            PlannerMode::NotApplicable,
            200,
            0xA11,
            8,
        );
        let result = run_experiment(
            &setup,
            MapData::builtin(),
            &BackendSpec::Uniform,
            &LlmParams::default(),
            None,
        );
        assert!(result.failures.is_empty());
        let [crew_elim, time_limit, imp_elim, all_tasks] = result.row.counts;
        println!(
            "    crewmates eliminated {crew_elim}, time limit {time_limit}, impostors eliminated {imp_elim}, all tasks {all_tasks}"
        );
        assert!(
            all_tasks as f64 <= 0.05 * 200.0,
            "random agents completed all tasks in {all_tasks} games"
        );
        assert!(
            crew_elim as f64 >= 0.15 * 200.0,
            "crewmates eliminated in only {crew_elim} games"
        );
        assert!(
            imp_elim as f64 >= 0.15 * 200.0,
            "impostors eliminated in only {imp_elim} games"
        );
        let elapsed = start.elapsed();
        assert!(
            elapsed.as_secs_f64() < 60.0,
            "took {elapsed:?}, budget is one minute"
        );
    });
}

// -------------------------------------------------------------------------
// 9. Planner ablation observability
// -------------------------------------------------------------------------

#[test]
fn c09_planner_ablation_is_visible_in_transcripts() {
    criterion(9, "planner ablation visible in transcripts", || {
        const SECTION: &str = "Previous thought process:";
        let run = |planner: PlannerMode| {
            let setup = experiment(SetupLabel::AllLlms, planner, 4, 0x9A7, 2);
            run_experiment(
                &setup,
                MapData::builtin(),
                &BackendSpec::Uniform,
                &LlmParams::default(),
                None,
            )
        };
        let disabled = run(PlannerMode::Disabled);
        assert!(disabled.failures.is_empty());
        let mut checked = 0;
        for (_, transcript) in &disabled.transcripts {
            for entry in transcript {
                assert!(
                    !entry.user.contains(SECTION),
                    "planner-disabled prompt contains the thought section"
                );
                checked += 1;
            }
        }
        assert!(checked > 0);
        let enabled = run(PlannerMode::Enabled);
        assert!(enabled.failures.is_empty());
        let mut later = 0;
        for (_, transcript) in &enabled.transcripts {
            for entry in transcript {
                if entry.tag.timestep >= 1 {
                    assert!(
                        entry.user.contains(SECTION),
                        "planner-enabled prompt at t={} lacks the thought section",
                        entry.tag.timestep
                    );
                    later += 1;
                }
            }
        }
        assert!(later > 0);
    });
}

// -------------------------------------------------------------------------
// 10. Posterior-ranking oracle
// -------------------------------------------------------------------------

#[test]
fn c10_posterior_matches_exact_fraction_oracle() {
    criterion(10, "posterior ranking matches exact-fraction Bayes", || {
        use num_rational::Ratio;
        type R = Ratio<i128>;
        // Two-bin corpus: bin A with 3 wins 1 loss, bin B with 1 win 5 losses.
        let mut corpus: Vec<(String, bool)> = Vec::new();
        corpus.extend(std::iter::repeat_with(|| ("A".to_owned(), true)).take(3));
        corpus.push(("A".to_owned(), false));
        corpus.push(("B".to_owned(), true));
        corpus.extend(std::iter::repeat_with(|| ("B".to_owned(), false)).take(5));

        // Exact-fraction oracle, alpha = 1, B = 2 bins, W = 4, L = 6.
        let alpha = R::from_integer(1);
        let bins = R::from_integer(2);
        let wins = R::from_integer(4);
        let losses = R::from_integer(6);
        let n = wins + losses;
        let p_win = wins / n;
        let p_lose = losses / n;
        let expected = |c_win: i128, c_lose: i128| -> R {
            let p_f_win = (R::from_integer(c_win) + alpha) / (wins + alpha * bins);
            let p_f_lose = (R::from_integer(c_lose) + alpha) / (losses + alpha * bins);
            p_f_win * p_win / (p_f_win * p_win + p_f_lose * p_lose)
        };
        let to_f64 = |r: R| *r.numer() as f64 / *r.denom() as f64;

        let posteriors = posterior_by_bin(&corpus, 1.0).unwrap();
        assert!((posteriors["A"] - to_f64(expected(3, 1))).abs() < 1e-12);
        assert!((posteriors["B"] - to_f64(expected(1, 5))).abs() < 1e-12);
        for p in posteriors.values() {
            assert!((0.0..=1.0).contains(p));
        }

        // Smoothing limit: alpha -> infinity pushes every posterior to the
        // global win rate.
        let global = 0.4;
        let flooded = posterior_by_bin(&corpus, 1e12).unwrap();
        for p in flooded.values() {
            assert!(
                (p - global).abs() < 1e-6,
                "posterior {p} vs global {global}"
            );
        }

        // No division by zero for any alpha > 0 even on single-bin corpora.
        let tiny = posterior_by_bin(&[("only".to_owned(), true)], 0.5).unwrap();
        assert!(tiny["only"].is_finite());
    });
}

// -------------------------------------------------------------------------
// 11. Speech pipeline conservation
// -------------------------------------------------------------------------

#[test]
fn c11_speech_annotation_conservation() {
    criterion(
        11,
        "speech annotation conserves counts and proportions",
        || {
            let setup = experiment(
                SetupLabel::AllRandom,
                PlannerMode::NotApplicable,
                100,
                0xCAFE,
                8,
            );
            let result = run_experiment(
                &setup,
                MapData::builtin(),
                &BackendSpec::Uniform,
                &LlmParams::default(),
                None,
            );
            assert!(result.failures.is_empty());
            let mut total_speaks = 0usize;
            let mut annotations = Vec::new();
            for record in &result.records {
                let speaks = record
                    .events
                    .iter()
                    .filter(|e| matches!(e.kind, EventKind::Speak { .. }))
                    .count();
                let report = annotate_speech(record, &Annotator::Mock);
                assert_eq!(report.annotations.len(), speaks, "conservation per record");
                total_speaks += speaks;
                annotations.extend(report.annotations);
            }
            assert!(total_speaks > 0);
            assert_eq!(annotations.len(), total_speaks);

            // Proportions reproduce an independent counting oracle exactly.
            let report = report_from_annotations(annotations.clone());
            for role in [Role::Crewmate, Role::Impostor] {
                let of_role: Vec<_> = annotations.iter().filter(|a| a.role == role).collect();
                if of_role.is_empty() {
                    continue;
                }
                for category in amongagents_core::evaluation::speech::SPEECH_CATEGORIES {
                    let count = of_role
                        .iter()
                        .filter(|a| a.labels.contains(&category))
                        .count();
                    let expected = count as f64 / of_role.len() as f64;
                    let got = report.proportions[&role]
                        .get(&category)
                        .copied()
                        .unwrap_or(0.0);
                    assert_eq!(got, expected, "{role} {category}");
                }
            }

            // Multi-label speeches make proportions sum past one.
            let crafted = [
                "I saw Player 2 vent, that is suspicious, let's vote",
                "trust me, I completed my tasks",
                "we should split up",
            ];
            let crafted_annotations: Vec<_> = crafted
                .iter()
                .enumerate()
                .map(
                    |(i, text)| amongagents_core::evaluation::speech::SpeechAnnotation {
                        game_id: "crafted".into(),
                        event_seq: i as u32,
                        player: PlayerId(2),
                        role: Role::Crewmate,
                        text: (*text).to_owned(),
                        labels: mock_annotate(text),
                        annotator: "mock".into(),
                        flagged: false,
                    },
                )
                .collect();
            let crafted_report = report_from_annotations(crafted_annotations);
            let sum: f64 = crafted_report.proportions[&Role::Crewmate].values().sum();
            assert!(sum > 1.0, "crafted multi-label proportions sum to {sum}");
        },
    );
}
