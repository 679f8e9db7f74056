//! Reference scenarios and scripted replies shared by the golden-prompt and
//! acceptance suites.

// Not every test target uses every shared item.
#![allow(dead_code)]

use amongagents_core::engine::{EventKind, Visibility};
use amongagents_core::world::{
    GameConfig, GameState, MapData, PlayerId, Role, RoomId, ScenarioBuilder,
};

/// Five players in the Cafeteria, player 2 just killed in view of the
/// others; the observer is player 3 with four tasks.
pub fn crewmate_scenario() -> GameState {
    ScenarioBuilder::new(GameConfig::default(), MapData::builtin(), "golden-crew")
        .player(1, Role::Impostor)
        .player(2, Role::Crewmate)
        .player(3, Role::Crewmate)
        .player(4, Role::Crewmate)
        .player(5, Role::Crewmate)
        .dead(2)
        .task(3, "Fix Wiring", "Electrical")
        .task(3, "Upload Data", "Admin")
        .task(3, "Clean O2 Filter", "O2")
        .task(3, "Clear Asteroids", "Weapons")
        .witnessed_event(
            0,
            Some(1),
            EventKind::Kill {
                victim: PlayerId(2),
            },
            Some("Cafeteria"),
            Visibility::rooms([&RoomId::from("Cafeteria")]),
            &[3, 4, 5],
        )
        .build()
        .unwrap()
}

/// Player 1 killed in the Cafeteria, vented to Admin, and now shares the
/// room with player 5; players 3 and 4 were last seen heading to Weapons.
pub fn impostor_scenario() -> GameState {
    ScenarioBuilder::new(GameConfig::default(), MapData::builtin(), "golden-imp")
        .player(1, Role::Impostor)
        .player(2, Role::Crewmate)
        .player(3, Role::Crewmate)
        .player(4, Role::Crewmate)
        .player(5, Role::Crewmate)
        .dead(2)
        .at_timestep(2)
        .place(1, "Admin")
        .place(3, "Weapons")
        .place(4, "Weapons")
        .place(5, "Admin")
        .knows_common(1, "Fix Wiring", "Electrical")
        .witnessed_event(
            0,
            Some(3),
            EventKind::Move {
                from: "Cafeteria".into(),
                to: "Weapons".into(),
            },
            Some("Cafeteria"),
            Visibility::rooms([&"Cafeteria".into(), &"Weapons".into()]),
            &[1],
        )
        .witnessed_event(
            0,
            Some(4),
            EventKind::Move {
                from: "Cafeteria".into(),
                to: "Weapons".into(),
            },
            Some("Cafeteria"),
            Visibility::rooms([&"Cafeteria".into(), &"Weapons".into()]),
            &[1],
        )
        .witnessed_event(
            0,
            Some(5),
            EventKind::Move {
                from: "Cafeteria".into(),
                to: "Weapons".into(),
            },
            Some("Cafeteria"),
            Visibility::rooms([&"Cafeteria".into(), &"Weapons".into()]),
            &[1],
        )
        .past_action(
            0,
            1,
            EventKind::Kill {
                victim: PlayerId(2),
            },
            Some("Cafeteria"),
            Visibility::rooms([&RoomId::from("Cafeteria")]),
        )
        .past_action(
            1,
            1,
            EventKind::Vent {
                from: "Cafeteria".into(),
                to: "Admin".into(),
            },
            Some("Cafeteria"),
            Visibility::rooms([&"Cafeteria".into(), &"Admin".into()]),
        )
        .build()
        .unwrap()
}

pub const CREWMATE_REPLY: &str = "[Condensed Memory]\n\nI saw Player 1 killed Player 2.\n\n[Thinking Process]\n\nI saw Player 1 killed Player 2. I have to call a meeting immediately to discuss this incident and ask the rest of the crew to vote Player 1 out. I would either REPORT DEAD BODY or CALL MEETING using the emergency button. In the available actions, I would choose CALL MEETING.\n\n[Action] CALL MEETING using the emergency button at Cafeteria";

pub const IMPOSTOR_MOVE_REPLY: &str = "[Condensed Memory]\nI killed Player 2 and vented from Cafeteria to Admin. Currently, I am in Admin with Player 5: cyan. The last time I saw the crew, they were moving to Weapons.\n\n[Thinking Process]\n\nNow Player 5 is in Admin. I should act normal and possibly move to another location.\n\n[Action] MOVE from Admin to O2";

pub const IMPOSTOR_SPEAK_REPLY: &str = "[Condensed Memory]\nI killed Player 2 and vented from Cafeteria to Admin. Currently, I am in Admin with Player 5: cyan. The last time I saw the crew, they were moving to Weapons.\n\n[Thinking Process]\nPlayer 5 is in Admin. Perhaps I could talk to them and try to build trust. I could ask them about their tasks or whereabouts.\n\n[Action] SPEAK: \"Hey Player 5, where are you headed next?\"";

/// Read a golden file, or rewrite it when UPDATE_GOLDEN is set.
pub fn check_golden(name: &str, actual: &str) {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var("UPDATE_GOLDEN").is_ok() {
        std::fs::write(&path, actual).expect("write golden");
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("golden file {name} missing; run with UPDATE_GOLDEN=1"));
    assert_eq!(actual, expected, "rendered prompt diverges from {name}");
}
