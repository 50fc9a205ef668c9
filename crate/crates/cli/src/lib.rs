//! Scenario files, the `bearform` command line, and trace/report output.

pub mod cli;
pub mod emit;
pub mod runner;
pub mod scenario;

pub use runner::{run, RunError, RunOptions, RunResult};
pub use scenario::{parse_scenario, Scenario};

/// Scenarios shipped with the binary, addressable as `bundled:NAME`.
pub const BUNDLED: &[(&str, &str)] = &[
    (
        "leaderless_5agent_2d",
        include_str!("../scenarios/leaderless_5agent_2d.toml"),
    ),
    (
        "leader_follower_2plus2_2d",
        include_str!("../scenarios/leader_follower_2plus2_2d.toml"),
    ),
    (
        "localization_2plus4_3d",
        include_str!("../scenarios/localization_2plus4_3d.toml"),
    ),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

/// Parses a bundled scenario; panics if the name is unknown.
pub fn bundled_scenario(name: &str) -> Scenario {
    let text = bundled(name).unwrap_or_else(|| panic!("no bundled scenario named {name}"));
    parse_scenario(text).unwrap_or_else(|e| panic!("bundled scenario {name} is invalid:\n{e}"))
}
