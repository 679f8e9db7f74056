//! Posterior trajectory ranking: estimate p(win | actions, dialogue) over a
//! corpus of per-side trajectories and rank the winning ones.
//!
//! Each game contributes two examples, one per side: the side's action
//! histogram over the ten action kinds and its dialogue histogram over the
//! five speech categories, each component quantized to deciles. Laplace
//! smoothing (alpha) applies to the class-conditional estimates only, so as
//! alpha grows every posterior converges to the global win rate. The
//! top-ranked trajectories export as text bundles ready for external
//! summarization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::EventKind;
use crate::evaluation::speech::{Annotator, SPEECH_CATEGORIES};
use crate::evaluation::EvalError;
use crate::record::GameRecord;
use crate::world::Role;

use super::analytics::ACTION_KINDS;

/// One side of one game, featurized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFeature {
    pub game_id: String,
    pub side: Role,
    pub won: bool,
    /// Normalized histogram over the ten action kinds.
    pub action_hist: [f64; 10],
    /// Normalized histogram over the five speech categories.
    pub dialogue_hist: [f64; 5],
    /// Decile-quantized joint feature, the event for probability estimation.
    pub feature_key: String,
    pub posterior: f64,
}

fn quantize(fraction: f64) -> u8 {
    ((fraction * 10.0).floor() as i64).clamp(0, 9) as u8
}

fn feature_key(action_hist: &[f64; 10], dialogue_hist: &[f64; 5]) -> String {
    let mut key = String::with_capacity(15);
    for value in action_hist.iter().chain(dialogue_hist.iter()) {
        key.push(char::from(b'0' + quantize(*value)));
    }
    key
}

/// A featurized example: its quantized feature and whether that side won.
pub type Example = (String, bool);

/// Posterior estimates per feature bin.
///
/// With W wins and L losses over N = W + L examples and B distinct bins:
///   p(win)        = W / N                       (unsmoothed)
///   p(f | win)    = (c_f_win + alpha) / (W + alpha * B)
///   p(f | lose)   = (c_f_lose + alpha) / (L + alpha * B)
///   p(win | f)    = p(f|win) p(win) / (p(f|win) p(win) + p(f|lose) p(lose))
pub fn posterior_by_bin(
    examples: &[Example],
    alpha: f64,
) -> Result<BTreeMap<String, f64>, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let n = examples.len() as f64;
    let wins = examples.iter().filter(|(_, won)| *won).count() as f64;
    if wins == 0.0 {
        return Err(EvalError::DegenerateCorpus);
    }
    let losses = n - wins;
    let mut win_counts: BTreeMap<&str, f64> = BTreeMap::new();
    let mut lose_counts: BTreeMap<&str, f64> = BTreeMap::new();
    for (key, won) in examples {
        let counts = if *won {
            &mut win_counts
        } else {
            &mut lose_counts
        };
        *counts.entry(key.as_str()).or_insert(0.0) += 1.0;
    }
    let bins: Vec<&str> = examples
        .iter()
        .map(|(key, _)| key.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let b = bins.len() as f64;
    let p_win = wins / n;
    let p_lose = losses / n;
    let mut posteriors = BTreeMap::new();
    for bin in bins {
        let p_f_win = (win_counts.get(bin).copied().unwrap_or(0.0) + alpha) / (wins + alpha * b);
        let p_f_lose =
            (lose_counts.get(bin).copied().unwrap_or(0.0) + alpha) / (losses + alpha * b);
        let p_f = p_f_win * p_win + p_f_lose * p_lose;
        posteriors.insert(bin.to_owned(), p_f_win * p_win / p_f);
    }
    Ok(posteriors)
}

/// Featurize both sides of every completed record.
pub fn featurize(records: &[GameRecord], annotator: &Annotator) -> Vec<TrajectoryFeature> {
    let mut features = Vec::new();
    for record in records {
        let Some(outcome) = &record.footer.outcome else {
            continue;
        };
        let report = crate::evaluation::speech::annotate_speech(record, annotator);
        for side in [Role::Crewmate, Role::Impostor] {
            let mut action_counts = [0f64; 10];
            for event in &record.events {
                let (Some(actor), Some(label)) = (event.actor, event.kind.action_label()) else {
                    continue;
                };
                if record.header.roles[&actor] != side {
                    continue;
                }
                let idx = ACTION_KINDS.iter().position(|k| *k == label).unwrap();
                action_counts[idx] += 1.0;
            }
            let action_total: f64 = action_counts.iter().sum();
            let action_hist = if action_total > 0.0 {
                action_counts.map(|c| c / action_total)
            } else {
                [0.0; 10]
            };
            let mut dialogue_counts = [0f64; 5];
            for annotation in &report.annotations {
                if annotation.role != side {
                    continue;
                }
                for label in &annotation.labels {
                    let idx = SPEECH_CATEGORIES.iter().position(|c| c == label).unwrap();
                    dialogue_counts[idx] += 1.0;
                }
            }
            let dialogue_total: f64 = dialogue_counts.iter().sum();
            let dialogue_hist = if dialogue_total > 0.0 {
                dialogue_counts.map(|c| c / dialogue_total)
            } else {
                [0.0; 5]
            };
            features.push(TrajectoryFeature {
                game_id: record.header.game_id.clone(),
                side,
                won: outcome.winner
                    == match side {
                        Role::Crewmate => crate::engine::Winner::Crewmates,
                        Role::Impostor => crate::engine::Winner::Impostors,
                    },
                feature_key: feature_key(&action_hist, &dialogue_hist),
                action_hist,
                dialogue_hist,
                posterior: 0.0,
            });
        }
    }
    features
}

/// Rank the winning trajectories of a corpus by posterior, descending. Ties
/// break toward earlier game ids for determinism.
pub fn rank_winning_trajectories(
    records: &[GameRecord],
    alpha: f64,
    annotator: &Annotator,
) -> Result<Vec<TrajectoryFeature>, EvalError> {
    let mut features = featurize(records, annotator);
    if features.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let examples: Vec<Example> = features
        .iter()
        .map(|f| (f.feature_key.clone(), f.won))
        .collect();
    let posteriors = posterior_by_bin(&examples, alpha)?;
    for feature in &mut features {
        feature.posterior = posteriors[&feature.feature_key];
    }
    let mut winners: Vec<TrajectoryFeature> = features.into_iter().filter(|f| f.won).collect();
    winners.sort_by(|a, b| {
        b.posterior
            .partial_cmp(&a.posterior)
            .unwrap()
            .then_with(|| a.game_id.cmp(&b.game_id))
            .then_with(|| a.side.cmp(&b.side))
    });
    Ok(winners)
}

/// Export the top trajectories as a text bundle: the speeches and action
/// profile of each, prefixed with a summarization prompt for an external
/// model pass that distills them into persona descriptions.
pub fn summarization_bundle(
    records: &[GameRecord],
    ranked: &[TrajectoryFeature],
    top: usize,
) -> String {
    let mut out = String::new();
    out.push_str(
        "Summarize the playstyle of each winning trajectory below into a short, named personality \
         description (strategy, communication style, risk appetite). Interpret their human-like \
         behaviors.\n\n",
    );
    for feature in ranked.iter().take(top) {
        let Some(record) = records.iter().find(|r| r.header.game_id == feature.game_id) else {
            continue;
        };
        out.push_str(&format!(
            "=== {} | side: {} | p(win|a,d) = {:.4} ===\n",
            feature.game_id, feature.side, feature.posterior
        ));
        out.push_str("Action histogram:\n");
        for (kind, value) in ACTION_KINDS.iter().zip(feature.action_hist.iter()) {
            if *value > 0.0 {
                out.push_str(&format!("  {kind}: {value:.3}\n"));
            }
        }
        out.push_str("Speeches:\n");
        for event in &record.events {
            if let (Some(actor), EventKind::Speak { text }) = (event.actor, &event.kind) {
                if record.header.roles[&actor] == feature.side {
                    out.push_str(&format!("  Player {actor}: \"{text}\"\n"));
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn ranking_csv(ranked: &[TrajectoryFeature]) -> String {
    let mut out = String::from("game_id,side,posterior,feature_key\n");
    for feature in ranked {
        out.push_str(&format!(
            "{},{},{:.6},{}\n",
            feature.game_id, feature.side, feature.posterior, feature.feature_key
        ));
    }
    out
}
