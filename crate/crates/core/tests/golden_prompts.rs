//! Golden-file tests for the rendered prompt layout and the end-to-end
//! scripted decision path on two reference scenarios: a crewmate who just
//! witnessed a kill in the Cafeteria, and an impostor who vented to Admin.
//!
//! Run with UPDATE_GOLDEN=1 to regenerate the golden files after an
//! intentional layout change.

mod common;

use std::sync::Arc;

use amongagents_core::agents::{AgentMind, LlmAgent, PersonaCatalog};
use amongagents_core::engine::{apply_action, ActionBody, EventKind};
use amongagents_core::llm::{CallTag, LlmClient, LlmParams, ScriptBuilder};
use amongagents_core::observation::{observe, render_observation, MindSnapshot};
use amongagents_core::world::{Phase, PlayerId, Role, RoomId};

use common::{
    check_golden, crewmate_scenario, impostor_scenario, CREWMATE_REPLY, IMPOSTOR_MOVE_REPLY,
    IMPOSTOR_SPEAK_REPLY,
};

fn impostor_mind() -> MindSnapshot {
    MindSnapshot {
        condensed_memory: "I killed Player 2. The rest of the crew moves to Weapons.".into(),
        previous_thought: Some(
            "I just killed a player. I need to quickly move to a different location to avoid suspicion."
                .into(),
        ),
        planner_enabled: true,
    }
}

#[test]
fn crewmate_prompt_matches_golden() {
    let state = crewmate_scenario();
    let obs = observe(&state, PlayerId(3)).unwrap();
    let rendered = render_observation(&obs, &MindSnapshot::empty(true));
    check_golden("crewmate_prompt.txt", &rendered);
}

#[test]
fn impostor_prompt_matches_golden() {
    let state = impostor_scenario();
    let obs = observe(&state, PlayerId(1)).unwrap();
    let rendered = render_observation(&obs, &impostor_mind());
    check_golden("impostor_prompt.txt", &rendered);
}

#[test]
fn crewmate_scripted_reply_calls_the_meeting() {
    let mut state = crewmate_scenario();
    let obs = observe(&state, PlayerId(3)).unwrap();
    // The meeting option is numbered 4 in the rendered list.
    assert_eq!(
        obs.options[3].display,
        "CALL MEETING using the emergency button at Cafeteria"
    );
    let tag = CallTag {
        game: "golden-crew".into(),
        player: 3,
        timestep: 0,
        call_index: 0,
    };
    let client = Arc::new(LlmClient::new(
        ScriptBuilder::new().reply(&tag, CREWMATE_REPLY).build(),
    ));
    let persona = PersonaCatalog::builtin().get("The Observer");
    let mind = AgentMind::new(
        PlayerId(3),
        state.player(PlayerId(3)).unwrap().color,
        Role::Crewmate,
        persona,
        None,
        true,
    )
    .unwrap();
    let mut agent = LlmAgent::new(mind, client, LlmParams::default(), 0);
    let decision = agent.decide(&obs, "golden-crew").unwrap();
    assert!(!decision.fallback_used);
    assert_eq!(decision.chosen, ActionBody::CallMeeting);
    assert_eq!(
        decision.new_memory.as_deref(),
        Some("I saw Player 1 killed Player 2.")
    );
    assert_eq!(
        agent.mind.condensed_memory,
        "I saw Player 1 killed Player 2."
    );

    apply_action(&mut state, PlayerId(3), &decision.chosen).unwrap();
    assert!(matches!(state.phase(), Phase::Meeting(_)));
    for (_, ps) in state.players() {
        if ps.alive {
            assert_eq!(ps.location, RoomId::from("Cafeteria"));
        }
    }
}

#[test]
fn impostor_scripted_move_variant() {
    let mut state = impostor_scenario();
    let obs = observe(&state, PlayerId(1)).unwrap();
    let tag = CallTag {
        game: "golden-imp".into(),
        player: 1,
        timestep: 2,
        call_index: 0,
    };
    let client = Arc::new(LlmClient::new(
        ScriptBuilder::new()
            .reply(&tag, IMPOSTOR_MOVE_REPLY)
            .build(),
    ));
    let persona = PersonaCatalog::builtin().get("The Lone Wolf");
    let mind = AgentMind::new(
        PlayerId(1),
        state.player(PlayerId(1)).unwrap().color,
        Role::Impostor,
        persona,
        None,
        true,
    )
    .unwrap();
    let mut agent = LlmAgent::new(mind, client, LlmParams::default(), 0);
    let decision = agent.decide(&obs, "golden-imp").unwrap();
    assert!(!decision.fallback_used);
    assert_eq!(decision.chosen, ActionBody::Move { to: "O2".into() });
    apply_action(&mut state, PlayerId(1), &decision.chosen).unwrap();
    assert_eq!(
        state.player(PlayerId(1)).unwrap().location,
        RoomId::from("O2")
    );
}

#[test]
fn impostor_scripted_speak_variant() {
    let mut state = impostor_scenario();
    let obs = observe(&state, PlayerId(1)).unwrap();
    let tag = CallTag {
        game: "golden-imp".into(),
        player: 1,
        timestep: 2,
        call_index: 0,
    };
    let client = Arc::new(LlmClient::new(
        ScriptBuilder::new()
            .reply(&tag, IMPOSTOR_SPEAK_REPLY)
            .build(),
    ));
    let persona = PersonaCatalog::builtin().get("The Manipulator");
    let mind = AgentMind::new(
        PlayerId(1),
        state.player(PlayerId(1)).unwrap().color,
        Role::Impostor,
        persona,
        None,
        true,
    )
    .unwrap();
    let mut agent = LlmAgent::new(mind, client, LlmParams::default(), 0);
    let decision = agent.decide(&obs, "golden-imp").unwrap();
    assert!(!decision.fallback_used);
    assert_eq!(
        decision.chosen,
        ActionBody::Speak {
            text: "Hey Player 5, where are you headed next?".into()
        }
    );
    let events = apply_action(&mut state, PlayerId(1), &decision.chosen).unwrap();
    assert_eq!(events.len(), 1);
    assert!(events[0].visibility.covers(&"Admin".into()));
    assert!(!events[0].visibility.covers(&"Weapons".into()));
    // Player 5 shares the room and hears it.
    let heard = observe(&state, PlayerId(5)).unwrap();
    assert!(heard
        .recent_events
        .iter()
        .any(|e| matches!(&e.kind, EventKind::Speak { text } if text == "Hey Player 5, where are you headed next?")));
}

/// The planner ablation changes exactly one section of the rendered prompt.
#[test]
fn planner_ablation_renders_without_thought_section() {
    let state = impostor_scenario();
    let obs = observe(&state, PlayerId(1)).unwrap();
    let mut mind = impostor_mind();
    mind.planner_enabled = false;
    mind.previous_thought = None;
    let rendered = render_observation(&obs, &mind);
    assert!(!rendered.contains("Previous thought process:"));
}
