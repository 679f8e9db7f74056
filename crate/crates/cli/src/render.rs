//! Terminal replay renderer: a scrolling omniscient activity log, one
//! colored line per event, with a task-progress bar that updates as the
//! record plays back.

use std::sync::Arc;
use std::time::Duration;

use anyhow::Result;

use amongagents_core::engine::task_progress;
use amongagents_core::observation::render_event_line;
use amongagents_core::record::{replay_record, GameRecord};
use amongagents_core::world::{Color, MapData};

fn ansi_code(color: Color) -> &'static str {
    match color {
        Color::Blue => "\x1b[34m",
        Color::Cyan => "\x1b[36m",
        Color::Black => "\x1b[90m",
        Color::Orange => "\x1b[33m",
        Color::White => "\x1b[97m",
        Color::Purple => "\x1b[35m",
        Color::Red => "\x1b[31m",
        Color::Green => "\x1b[32m",
        Color::Pink => "\x1b[95m",
        Color::Yellow => "\x1b[93m",
        Color::Brown => "\x1b[38;5;130m",
        Color::Lime => "\x1b[92m",
    }
}

const RESET: &str = "\x1b[0m";

fn progress_bar(fraction: f64, width: usize) -> String {
    let filled = (fraction * width as f64).round() as usize;
    let filled = filled.min(width);
    format!(
        "[{}{}] {:>3.0}%",
        "#".repeat(filled),
        "-".repeat(width - filled),
        fraction * 100.0
    )
}

/// Replay a record, printing one line per event and a progress bar whenever
/// task progress changes. `speed` scales playback; 0 renders instantly.
pub fn replay_to_terminal(record: &GameRecord, map: Arc<MapData>, speed: f64) -> Result<()> {
    let colors = record.header.colors.clone();
    println!(
        "replaying {} (seed {}, {} events)",
        record.header.game_id,
        record.header.seed,
        record.events.len()
    );
    let delay = if speed > 0.0 {
        Some(Duration::from_millis((100.0 / speed) as u64))
    } else {
        None
    };
    let mut last_progress = -1.0f64;
    let final_state = replay_record(record, map, |event, state| {
        let tint = event
            .actor
            .and_then(|a| colors.get(&a))
            .map(|c| ansi_code(*c))
            .unwrap_or("\x1b[1m");
        println!(
            "  {tint}t{:>3} [{}] {}{RESET}",
            event.timestep,
            event.phase.short(),
            render_event_line(event, &colors)
        );
        let progress = task_progress(state);
        if (progress - last_progress).abs() > f64::EPSILON {
            println!("      task progress {}", progress_bar(progress, 30));
            last_progress = progress;
        }
        if let Some(delay) = delay {
            std::thread::sleep(delay);
        }
    })?;
    match record.footer.outcome {
        Some(outcome) => println!("\n{} win: {}", outcome.winner, outcome.condition),
        None => println!("\n(incomplete record)"),
    }
    println!(
        "final task progress {}",
        progress_bar(task_progress(&final_state), 30)
    );
    Ok(())
}
