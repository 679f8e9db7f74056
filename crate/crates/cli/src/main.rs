mod render;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use amongagents_core::agents::HumanIo;
use amongagents_core::config::RunConfig;
use amongagents_core::evaluation::interview::{
    aggregate_scores, scores_to_csv, InterviewHooks, InterviewRecord, Judge,
};
use amongagents_core::evaluation::ranking::{
    rank_winning_trajectories, ranking_csv, summarization_bundle,
};
use amongagents_core::evaluation::speech::{annotate_speech, report_from_annotations, Annotator};
use amongagents_core::evaluation::{
    analytics::persona_analytics, run_experiment, tally_outcomes, BackendSpec, ExperimentSetup,
    OutcomeRow, OutcomeTable, PlannerMode, SetupLabel,
};
use amongagents_core::llm::{Backend, LlmClient, RemoteBackend};
use amongagents_core::record::GameRecord;
use amongagents_core::sim::{derive_seed, run_game, RunOptions, BACKEND_STREAM};
use amongagents_core::world::{AgentKind, MapData, PlayerId};

#[derive(Parser)]
#[command(
    name = "amongagents",
    about = "Deterministic social-deduction game simulator with an LLM agent harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of games per the config's experiment section.
    Simulate(SimulateArgs),
    /// Play one game interactively in a chosen seat.
    Play(PlayArgs),
    /// Render a recorded game as a terminal activity log.
    Replay(ReplayArgs),
    /// Analyze a directory of game records.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of games.
    #[arg(long)]
    games: Option<u32>,
    /// Override the backend: uniform, scripted, or remote.
    #[arg(long)]
    backend: Option<String>,
    /// Override the worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory root (a timestamped run directory is created inside).
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct PlayArgs {
    #[arg(long)]
    config: PathBuf,
    /// Seat to drive from the terminal (1-based player id).
    #[arg(long = "as-player")]
    as_player: u8,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    record: PathBuf,
    /// Playback speed multiplier; 0 renders instantly.
    #[arg(long, default_value_t = 10.0)]
    speed: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(subcommand)]
    what: EvaluateWhat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AnnotatorKind {
    Mock,
}

#[derive(Subcommand)]
enum EvaluateWhat {
    /// Outcome table over the records.
    Outcomes {
        records_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Annotate speeches and report per-role category proportions.
    Speech {
        records_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = AnnotatorKind::Mock)]
        annotator: AnnotatorKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate interview scores written during simulation.
    Interview {
        records_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Persona action/outcome matrices and crew combinations.
    Personas {
        records_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior ranking of winning trajectories.
    Rank {
        records_dir: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 5)]
        top: usize,
        #[arg(long, value_enum, default_value_t = AnnotatorKind::Mock)]
        annotator: AnnotatorKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    // Die quietly when a pager or `head` closes the pipe, like other
    // line-oriented tools.
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Play(args) => cmd_play(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_map(config: &amongagents_core::world::GameConfig) -> Result<Arc<MapData>> {
    match &config.map_path {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).with_context(|| format!("reading map {path}"))?;
            Ok(Arc::new(MapData::from_toml_str(&text)?))
        }
        None => Ok(MapData::builtin()),
    }
}

fn backend_spec(config: &RunConfig, backend_override: Option<&str>) -> Result<BackendSpec> {
    let kind = backend_override.unwrap_or(config.client.backend.as_str());
    match kind {
        "uniform" => Ok(BackendSpec::Uniform),
        "scripted" => {
            let replies = config.client.scripted_replies.clone().unwrap_or_default();
            Ok(BackendSpec::Scripted(Arc::new(replies)))
        }
        "remote" => Ok(BackendSpec::Remote(config.remote_config()?)),
        other => bail!("unknown backend `{other}`"),
    }
}

fn run_dir(root: &Path, label: &str) -> Result<PathBuf> {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .expect("clock after epoch")
        .as_secs();
    let dir = root.join(format!("{label}-{stamp}"));
    std::fs::create_dir_all(dir.join("records"))?;
    std::fs::create_dir_all(dir.join("transcripts"))?;
    Ok(dir)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.game.seed = Some(seed);
    }
    let experiment = config
        .experiment
        .clone()
        .context("config has no [experiment] section; add one or use `play`")?;
    let game_config = config.game_config();
    let map = load_map(&game_config)?;
    let backend = backend_spec(&config, args.backend.as_deref())?;
    let setup = ExperimentSetup {
        label: experiment.setup,
        planner: config.planner_mode(),
        games: args.games.unwrap_or(experiment.games),
        base_config: game_config,
        seeds: experiment.seeds.clone().unwrap_or_default(),
        workers: args.workers.unwrap_or(experiment.workers),
    };
    let interviews = experiment.interviews.then(|| InterviewHooks {
        after_meetings: true,
        post_game: true,
        judge: match backend {
            BackendSpec::Remote(_) => Judge::Client {
                params: config.llm_params(),
            },
            _ => Judge::MockConstant(3),
        },
        params: config.llm_params(),
    });

    let dir = run_dir(&args.out, setup.label.slug())?;
    println!(
        "running {} games of `{}` ({}) with the {} backend",
        setup.games,
        setup.label,
        setup.planner.display(),
        config.client.backend
    );
    let result = run_experiment(&setup, map, &backend, &config.llm_params(), interviews);

    for record in &result.records {
        record.save(
            &dir.join("records")
                .join(format!("{}.jsonl", record.header.game_id)),
        )?;
    }
    for (game_id, transcript) in &result.transcripts {
        if transcript.is_empty() {
            continue;
        }
        let mut file =
            std::fs::File::create(dir.join("transcripts").join(format!("{game_id}.jsonl")))?;
        for entry in transcript {
            serde_json::to_writer(&mut file, entry)?;
            writeln!(file)?;
        }
    }
    if !result.interviews.is_empty() {
        let mut file = std::fs::File::create(dir.join("interviews.jsonl"))?;
        for record in &result.interviews {
            serde_json::to_writer(&mut file, record)?;
            writeln!(file)?;
        }
    }
    let table = OutcomeTable {
        rows: vec![result.row.clone()],
    };
    std::fs::write(dir.join("outcomes.csv"), table.to_csv())?;
    std::fs::write(dir.join("outcomes.txt"), table.render_text())?;
    println!("{}", table.render_text());
    for failure in &result.failures {
        eprintln!(
            "warning: game {} failed: {}",
            failure.game_id, failure.error
        );
    }
    println!("run directory: {}", dir.display());
    if result.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn cmd_play(args: PlayArgs) -> Result<ExitCode> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.game.seed = Some(seed);
    }
    let mut game_config = config.game_config();
    let seat = PlayerId(args.as_player);
    if args.as_player == 0 || args.as_player > game_config.n_players() {
        bail!(
            "--as-player must be between 1 and {} for this config",
            game_config.n_players()
        );
    }
    // Force the chosen seat to a human agent, leaving the rest as configured.
    use amongagents_core::world::{AgentAssignment, PlayerSpec};
    let mut specs: Vec<PlayerSpec> = match &game_config.agents {
        AgentAssignment::PerPlayer(specs) => specs.clone(),
        AgentAssignment::ByRole { .. } => {
            // Role-based specs resolve per deal; play uses the crewmate spec
            // as the table default and pins the human seat explicitly.
            vec![PlayerSpec::default(); game_config.n_players() as usize]
        }
    };
    specs[(seat.0 - 1) as usize] = PlayerSpec {
        kind: AgentKind::Human,
        persona: None,
        planner: true,
    };
    game_config.agents = AgentAssignment::PerPlayer(specs);

    let map = load_map(&game_config)?;
    let seed = game_config.seed;
    let game_id = format!("play-{seed}");
    let mut opts = RunOptions::offline(game_id.clone());
    opts.llm = config.llm_params();
    let needs_llm = match &game_config.agents {
        AgentAssignment::PerPlayer(specs) => specs.iter().any(|s| s.kind == AgentKind::Llm),
        AgentAssignment::ByRole { crewmate, impostor } => {
            crewmate.kind == AgentKind::Llm || impostor.kind == AgentKind::Llm
        }
    };
    if needs_llm {
        opts.client = Some(match backend_spec(&config, None)? {
            BackendSpec::Uniform => Arc::new(LlmClient::new(Backend::uniform(derive_seed(
                seed,
                BACKEND_STREAM,
            )))),
            BackendSpec::Scripted(replies) => {
                Arc::new(LlmClient::new(Backend::scripted((*replies).clone())))
            }
            BackendSpec::Remote(remote) => {
                Arc::new(LlmClient::new(Backend::Remote(RemoteBackend::new(remote)?)))
            }
        });
    }
    opts.human = Some((
        seat,
        HumanIo::new(
            Box::new(std::io::BufReader::new(std::io::stdin())),
            Box::new(std::io::stdout()),
        ),
    ));

    std::fs::create_dir_all(&args.out)?;
    let record_path = args.out.join(format!("{game_id}.jsonl"));
    let done = run_game(&game_config, map, opts)?;
    done.record.save(&record_path)?;
    match done.record.footer.outcome {
        Some(outcome) => {
            println!(
                "\nGAME OVER: {} win ({}). Record: {}",
                outcome.winner,
                outcome.condition,
                record_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        None => {
            println!(
                "\nsession closed; partial record saved to {}",
                record_path.display()
            );
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_replay(args: ReplayArgs) -> Result<ExitCode> {
    let record = GameRecord::load(&args.record)?;
    let map = load_map(&record.header.config)?;
    render::replay_to_terminal(&record, map, args.speed)?;
    Ok(ExitCode::SUCCESS)
}

fn load_records(dir: &Path) -> Result<Vec<GameRecord>> {
    let mut records = Vec::new();
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            // Accept run directories directly: look inside records/.
            let nested = path.join("records");
            if nested.is_dir() {
                for entry in std::fs::read_dir(nested)? {
                    let path = entry?.path();
                    if path.extension().is_some_and(|e| e == "jsonl") {
                        paths.push(path);
                    }
                }
            }
        } else if path.extension().is_some_and(|e| e == "jsonl") {
            paths.push(path);
        }
    }
    let nested = dir.join("records");
    if nested.is_dir() {
        for entry in std::fs::read_dir(nested)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                paths.push(path);
            }
        }
    }
    paths.sort();
    paths.dedup();
    for path in paths {
        // Transcript files live elsewhere; anything that parses as a record counts.
        match GameRecord::load(&path) {
            Ok(record) => records.push(record),
            Err(e) => eprintln!("skipping {}: {e}", path.display()),
        }
    }
    Ok(records)
}

fn write_or_print(out: Option<&Path>, name: &str, content: &str) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), content)?;
            println!("wrote {}", dir.join(name).display());
        }
        None => println!("{content}"),
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    match args.what {
        EvaluateWhat::Outcomes { records_dir, out } => {
            let records = load_records(&records_dir)?;
            if records.is_empty() {
                eprintln!("no records in {}", records_dir.display());
                return Ok(ExitCode::from(1));
            }
            // Group rows by the experiment label stamped into headers.
            let mut groups: BTreeMap<String, Vec<GameRecord>> = BTreeMap::new();
            for record in records {
                let label = record
                    .header
                    .label
                    .clone()
                    .unwrap_or_else(|| "custom".into());
                groups.entry(label).or_default().push(record);
            }
            let mut rows = Vec::new();
            for (label, group) in &groups {
                let setup_label = match label.as_str() {
                    "all_random" => SetupLabel::AllRandom,
                    "all_llms" => SetupLabel::AllLlms,
                    "llm_crewmates_random_impostor" => SetupLabel::LlmCrewmatesRandomImpostor,
                    "random_crewmates_llm_impostor" => SetupLabel::RandomCrewmatesLlmImpostor,
                    _ => SetupLabel::AllRandom,
                };
                let planner = group
                    .first()
                    .map(|r| {
                        let any_llm = r.header.agent_kinds.values().any(|k| *k == AgentKind::Llm);
                        let planner_on = r.header.planner.values().any(|p| *p);
                        match (any_llm, planner_on) {
                            (false, _) => PlannerMode::NotApplicable,
                            (true, true) => PlannerMode::Enabled,
                            (true, false) => PlannerMode::Disabled,
                        }
                    })
                    .unwrap_or(PlannerMode::NotApplicable);
                rows.push(OutcomeRow {
                    label: setup_label,
                    planner,
                    games: group.len() as u32,
                    counts: tally_outcomes(group),
                });
            }
            let table = OutcomeTable { rows };
            println!("{}", table.render_text());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("outcomes.csv"), table.to_csv())?;
                std::fs::write(dir.join("outcomes.txt"), table.render_text())?;
                println!("wrote {}", dir.join("outcomes.csv").display());
            }
            Ok(ExitCode::SUCCESS)
        }
        EvaluateWhat::Speech {
            records_dir,
            annotator,
            out,
        } => {
            let records = load_records(&records_dir)?;
            if records.is_empty() {
                eprintln!("no records in {}", records_dir.display());
                return Ok(ExitCode::from(1));
            }
            let annotator = match annotator {
                AnnotatorKind::Mock => Annotator::Mock,
            };
            let mut annotations = Vec::new();
            for record in &records {
                annotations.extend(annotate_speech(record, &annotator).annotations);
            }
            let report = report_from_annotations(annotations);
            println!("{}", report.to_csv());
            if let Some(dir) = out.as_deref() {
                std::fs::create_dir_all(dir)?;
                let mut file = std::fs::File::create(dir.join("annotations.jsonl"))?;
                for annotation in &report.annotations {
                    serde_json::to_writer(&mut file, annotation)?;
                    writeln!(file)?;
                }
                std::fs::write(dir.join("speech_proportions.csv"), report.to_csv())?;
                println!("wrote {}", dir.join("speech_proportions.csv").display());
            }
            Ok(ExitCode::SUCCESS)
        }
        EvaluateWhat::Interview { records_dir, out } => {
            // Interviews are produced during simulation; aggregate the files.
            let mut files = Vec::new();
            for candidate in [records_dir.join("interviews.jsonl"), records_dir.clone()] {
                if candidate.is_file() {
                    files.push(candidate.clone());
                }
            }
            if let Ok(entries) = std::fs::read_dir(&records_dir) {
                for entry in entries.flatten() {
                    let path = entry.path();
                    if path.file_name().is_some_and(|n| n == "interviews.jsonl") {
                        files.push(path);
                    } else if path.is_dir() {
                        let nested = path.join("interviews.jsonl");
                        if nested.is_file() {
                            files.push(nested);
                        }
                    }
                }
            }
            files.sort();
            files.dedup();
            if files.is_empty() {
                eprintln!(
                    "no interviews.jsonl under {}; run simulate with `interviews = true`",
                    records_dir.display()
                );
                return Ok(ExitCode::from(1));
            }
            let mut records: Vec<InterviewRecord> = Vec::new();
            for file in files {
                for line in std::fs::read_to_string(&file)?.lines() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    records.push(serde_json::from_str(line)?);
                }
            }
            let averages = aggregate_scores(&records);
            let csv = scores_to_csv(&averages);
            write_or_print(out.as_deref(), "interview_scores.csv", &csv)?;
            Ok(ExitCode::SUCCESS)
        }
        EvaluateWhat::Personas { records_dir, out } => {
            let records = load_records(&records_dir)?;
            if records.is_empty() {
                eprintln!("no records in {}", records_dir.display());
                return Ok(ExitCode::from(1));
            }
            let analytics = persona_analytics(&records);
            println!("{}", analytics.persona_outcomes_csv());
            if let Some(dir) = out.as_deref() {
                std::fs::create_dir_all(dir)?;
                std::fs::write(
                    dir.join("persona_actions.csv"),
                    analytics.persona_actions_csv(),
                )?;
                std::fs::write(
                    dir.join("persona_outcomes.csv"),
                    analytics.persona_outcomes_csv(),
                )?;
                std::fs::write(
                    dir.join("crew_combinations.csv"),
                    analytics.combinations_csv(),
                )?;
                println!("wrote persona CSVs to {}", dir.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        EvaluateWhat::Rank {
            records_dir,
            alpha,
            top,
            annotator,
            out,
        } => {
            let records = load_records(&records_dir)?;
            if records.is_empty() {
                eprintln!("no records in {}", records_dir.display());
                return Ok(ExitCode::from(1));
            }
            let annotator = match annotator {
                AnnotatorKind::Mock => Annotator::Mock,
            };
            let ranked = rank_winning_trajectories(&records, alpha, &annotator)?;
            let csv = ranking_csv(&ranked);
            println!("{csv}");
            let bundle = summarization_bundle(&records, &ranked, top);
            if let Some(dir) = out.as_deref() {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("ranking.csv"), &csv)?;
                std::fs::write(dir.join("summarization_prompt.txt"), &bundle)?;
                println!("wrote {}", dir.join("summarization_prompt.txt").display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
