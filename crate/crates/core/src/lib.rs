//! Bearing-based formation control and network localization with bounded
//! exogenous disturbances.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`] – undirected oriented graphs, incidence matrices and leader/follower partitions.
//! * [`geometry`] – configurations, relative positions, bearings and the projection operator.
//! * [`rigidity`] – bearing rigidity matrix, bearing Laplacian, rigidity and localizability tests.
//! * [`dynamics`] – the leaderless, leader-follower and localization systems, disturbances and
//!   fixed-step integration.
//! * [`bounds`] – ultimate-bound sets, admissibility thresholds, the least-squares localization
//!   oracle and trace verdicts.

pub mod bounds;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod rigidity;

pub use error::{Error, Result};
