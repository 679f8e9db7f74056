//! Persona analytics over persisted records: persona-by-action counts,
//! persona-by-outcome counts, and crew persona-combination outcomes keyed by
//! sorted letter multisets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::PersonaCatalog;
use crate::engine::{OutcomeCondition, OUTCOME_CONDITIONS};
use crate::record::GameRecord;
use crate::world::Role;

/// Action kind labels in histogram order.
pub const ACTION_KINDS: [&str; 10] = [
    "MOVE",
    "COMPLETE_TASK",
    "FAKE_TASK",
    "CALL_MEETING",
    "REPORT_BODY",
    "CHECK_CAMERA",
    "SPEAK",
    "VENT",
    "KILL",
    "VOTE",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersonaAnalytics {
    /// (role, persona) -> action kind -> count.
    pub persona_actions: BTreeMap<(Role, String), BTreeMap<String, u64>>,
    /// (role, persona) -> outcome condition -> count of games.
    pub persona_outcomes: BTreeMap<(Role, String), BTreeMap<OutcomeCondition, u64>>,
    /// Sorted crew persona letter multiset (e.g. "ABBF") -> outcome -> count.
    pub crew_combination_outcomes: BTreeMap<String, BTreeMap<OutcomeCondition, u64>>,
    /// Games skipped because a crew persona had no letter mapping.
    pub skipped_combinations: u32,
}

/// Count persona/action/outcome matrices over a corpus of records.
pub fn persona_analytics(records: &[GameRecord]) -> PersonaAnalytics {
    let catalog = PersonaCatalog::builtin();
    let mut analytics = PersonaAnalytics::default();
    for record in records {
        for event in &record.events {
            let (Some(actor), Some(label)) = (event.actor, event.kind.action_label()) else {
                continue;
            };
            let Some(persona) = record.header.personas.get(&actor) else {
                continue;
            };
            let role = record.header.roles[&actor];
            *analytics
                .persona_actions
                .entry((role, persona.clone()))
                .or_default()
                .entry(label.to_owned())
                .or_insert(0) += 1;
        }
        let Some(outcome) = &record.footer.outcome else {
            continue;
        };
        for (player, persona) in &record.header.personas {
            let role = record.header.roles[player];
            *analytics
                .persona_outcomes
                .entry((role, persona.clone()))
                .or_default()
                .entry(outcome.condition)
                .or_insert(0) += 1;
        }
        // Crew combination key: sorted letters of all crewmate personas.
        let mut letters: Vec<char> = Vec::new();
        let mut complete = true;
        for (player, role) in &record.header.roles {
            if *role != Role::Crewmate {
                continue;
            }
            match record
                .header
                .personas
                .get(player)
                .and_then(|name| catalog.letter_of(name))
            {
                Some(letter) => letters.push(letter),
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete && !letters.is_empty() {
            letters.sort_unstable();
            let key: String = letters.into_iter().collect();
            *analytics
                .crew_combination_outcomes
                .entry(key)
                .or_default()
                .entry(outcome.condition)
                .or_insert(0) += 1;
        } else {
            analytics.skipped_combinations += 1;
        }
    }
    analytics
}

impl PersonaAnalytics {
    pub fn persona_actions_csv(&self) -> String {
        let mut out = String::from("role,persona");
        for kind in ACTION_KINDS {
            out.push(',');
            out.push_str(kind);
        }
        out.push('\n');
        for ((role, persona), counts) in &self.persona_actions {
            out.push_str(&format!("{role},{persona}"));
            for kind in ACTION_KINDS {
                out.push_str(&format!(",{}", counts.get(kind).copied().unwrap_or(0)));
            }
            out.push('\n');
        }
        out
    }

    pub fn persona_outcomes_csv(&self) -> String {
        let mut out = String::from("role,persona");
        for condition in OUTCOME_CONDITIONS {
            out.push_str(&format!(",{}", condition.label().replace(' ', "_")));
        }
        out.push('\n');
        for ((role, persona), counts) in &self.persona_outcomes {
            out.push_str(&format!("{role},{persona}"));
            for condition in OUTCOME_CONDITIONS {
                out.push_str(&format!(
                    ",{}",
                    counts.get(&condition).copied().unwrap_or(0)
                ));
            }
            out.push('\n');
        }
        out
    }

    pub fn combinations_csv(&self) -> String {
        let mut out = String::from("combination");
        for condition in OUTCOME_CONDITIONS {
            out.push_str(&format!(",{}", condition.label().replace(' ', "_")));
        }
        out.push('\n');
        for (key, counts) in &self.crew_combination_outcomes {
            out.push_str(key);
            for condition in OUTCOME_CONDITIONS {
                out.push_str(&format!(
                    ",{}",
                    counts.get(&condition).copied().unwrap_or(0)
                ));
            }
            out.push('\n');
        }
        out
    }
}
