//! The three disturbed systems, their error signals, disturbance generation
//! and fixed-step integration.

mod disturbance;
mod integrate;
mod systems;
mod target;

pub use disturbance::{DisturbanceKind, DisturbanceProfile};
pub use integrate::{
    integrate, IntegratorSettings, Method, SimTrace, SpectralSample, TraceEvent, TraceEventKind,
};
pub use systems::{
    error_leader_follower, error_leaderless, error_localization, leader_follower_control,
    leaderless_control, localization_update, FormationSystem, LeaderFollowerSystem,
    LeaderlessSystem, LocalizationSystem, SystemKind,
};
pub use target::{BearingTarget, TargetMode};
