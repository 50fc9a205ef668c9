//! Scenario files.
//!
//! A scenario is a TOML document (schema version 1):
//!
//! ```toml
//! version = 1
//! name = "leader_follower_2plus2_2d"
//! system = "leader_follower"        # leaderless | leader_follower | localization
//! dimension = 2
//! seed = 1
//! edges = [[1, 2], [2, 3]]          # pairs of agent ids, any order
//!
//! [[agents]]
//! id = 1
//! leader = true                     # default false
//! position = [0.0, 0.0]             # initial position (true position for localization)
//! target = [0.0, 0.0]               # desired position p*_i (formation systems)
//! estimate = [0.5, 0.5]             # initial estimate (localization followers)
//!
//! [target]                          # leaderless only: explicit desired bearings
//! bearings = [{ edge = [1, 2], g = [1.0, 0.0] }]
//!
//! [disturbance]
//! kind = "uniform_ball"             # none | uniform_ball | sinusoidal
//! amplitude = 0.05                  # per-agent bound v_i, or
//! aggregate = 0.2                   # aggregate bound F, or
//! threshold_fraction = 0.5          # F as a fraction of the admissible threshold
//! omega = 1.0                       # sinusoidal angular frequency
//!
//! [integrator]
//! dt = 0.001
//! duration = 50.0
//! record_stride = 10
//! method = "rk4"                    # rk4 | euler
//!
//! [bounds]
//! epsilon = 0.5                     # leader-follower; default lambda_min(B_ff)/2
//! gamma = 0.7                       # localization; default from delta
//! delta = 0.1                       # localization; default lambda_min(B_ff)/10
//! settle_fraction = 0.2
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use bearform::bounds::{BoundParams, DEFAULT_SETTLE_FRACTION};
use bearform::dynamics::{DisturbanceKind, IntegratorSettings, Method, SystemKind};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Accepted deviation of an explicit bearing from unit length.
const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub system: SystemKind,
    pub dimension: usize,
    #[serde(default)]
    pub seed: u64,
    pub edges: Vec<[u32; 2]>,
    pub agents: Vec<Agent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub bounds: BoundsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Agent {
    pub id: u32,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub leader: bool,
    pub position: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub bearings: Vec<BearingSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BearingSpec {
    /// Bearing points from `edge[0]` towards `edge[1]`.
    pub edge: [u32; 2],
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        Self {
            kind: DisturbanceKind::None,
            amplitude: None,
            aggregate: None,
            threshold_fraction: None,
            omega: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub dt: f64,
    pub duration: f64,
    pub record_stride: usize,
    pub method: Method,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        let d = IntegratorSettings::default();
        Self {
            dt: d.dt,
            duration: d.duration,
            record_stride: d.record_stride,
            method: d.method,
        }
    }
}

impl From<IntegratorSpec> for IntegratorSettings {
    fn from(s: IntegratorSpec) -> Self {
        Self {
            dt: s.dt,
            duration: s.duration,
            record_stride: s.record_stride,
            method: s.method,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "default_settle_fraction")]
    pub settle_fraction: f64,
}

fn default_settle_fraction() -> f64 {
    DEFAULT_SETTLE_FRACTION
}

impl Default for BoundsSpec {
    fn default() -> Self {
        Self {
            epsilon: None,
            gamma: None,
            delta: None,
            settle_fraction: DEFAULT_SETTLE_FRACTION,
        }
    }
}

impl BoundsSpec {
    pub fn params(&self) -> BoundParams {
        BoundParams {
            epsilon: self.epsilon,
            gamma: self.gamma,
            delta: self.delta,
        }
    }
}

/// One problem found while validating a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    /// Dotted path to the offending field, or `line N` for syntax errors.
    pub field: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ValidationErrors(pub Vec<Issue>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, issue) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl Scenario {
    pub fn agent_index(&self) -> BTreeMap<u32, usize> {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| (a.id, i))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario always serialises")
    }

    /// Checks every field; returns all issues found rather than the first.
    pub fn validate(&self) -> Result<(), ValidationErrors> {
        let mut issues = Vec::new();
        let mut push = |field: String, message: String| issues.push(Issue { field, message });
        let d = self.dimension;

        if self.version != SCHEMA_VERSION {
            push(
                "version".into(),
                format!("unsupported schema version {}", self.version),
            );
        }
        if self.name.trim().is_empty() {
            push("name".into(), "must not be empty".into());
        }
        if d < 2 {
            push("dimension".into(), format!("must be >= 2, got {d}"));
        }
        if self.agents.len() < 2 {
            push("agents".into(), "at least two agents are required".into());
        }

        let mut ids = BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            let at = format!("agents[{i}] (id {})", a.id);
            if !ids.insert(a.id) {
                push(format!("{at}.id"), "duplicate agent id".into());
            }
            check_vector(&mut push, &format!("{at}.position"), &a.position, d);
            if let Some(t) = &a.target {
                check_vector(&mut push, &format!("{at}.target"), t, d);
            }
            if let Some(e) = &a.estimate {
                check_vector(&mut push, &format!("{at}.estimate"), e, d);
            }
        }

        let mut seen_edges = BTreeSet::new();
        for (k, [a, b]) in self.edges.iter().enumerate() {
            let at = format!("edges[{k}]");
            for id in [a, b] {
                if !ids.contains(id) {
                    push(at.clone(), format!("unknown agent id {id}"));
                }
            }
            if a == b {
                push(at.clone(), "self-loop".into());
            } else if !seen_edges.insert((*a.min(b), *a.max(b))) {
                push(at, format!("duplicate edge {a}-{b}"));
            }
        }

        let leaders = self.agents.iter().filter(|a| a.leader).count();
        let with_target = self.agents.iter().filter(|a| a.target.is_some()).count();
        match self.system {
            SystemKind::Leaderless => {
                if leaders > 0 {
                    push(
                        "agents".into(),
                        "leaderless scenarios cannot mark leaders".into(),
                    );
                }
                match (&self.target, with_target) {
                    (Some(_), 0) => {}
                    (None, n) if n == self.agents.len() => {}
                    (Some(_), _) => push(
                        "target".into(),
                        "give either explicit bearings or per-agent targets, not both".into(),
                    ),
                    (None, _) => push(
                        "agents".into(),
                        "every agent needs a target position (or give [target] bearings)".into(),
                    ),
                }
            }
            SystemKind::LeaderFollower => {
                if self.target.is_some() {
                    push(
                        "target".into(),
                        "leader-follower targets come from agent positions".into(),
                    );
                }
                for (i, a) in self.agents.iter().enumerate() {
                    let at = format!("agents[{i}] (id {})", a.id);
                    match &a.target {
                        None => push(
                            format!("{at}.target"),
                            "required for leader_follower".into(),
                        ),
                        Some(t) if a.leader && t != &a.position => push(
                            format!("{at}.position"),
                            "leaders must start at their target position".into(),
                        ),
                        _ => {}
                    }
                }
            }
            SystemKind::Localization => {
                if self.target.is_some() || with_target > 0 {
                    push(
                        "target".into(),
                        "localization scenarios have no target".into(),
                    );
                }
                for (i, a) in self.agents.iter().enumerate() {
                    let at = format!("agents[{i}] (id {})", a.id);
                    match (a.leader, &a.estimate) {
                        (false, None) => push(
                            format!("{at}.estimate"),
                            "followers need an initial estimate".into(),
                        ),
                        (true, Some(_)) => push(
                            format!("{at}.estimate"),
                            "leaders are anchors and carry no estimate".into(),
                        ),
                        _ => {}
                    }
                }
            }
        }
        if matches!(
            self.system,
            SystemKind::LeaderFollower | SystemKind::Localization
        ) && leaders < 2
        {
            push(
                "agents".into(),
                format!("at least two leaders required, got {leaders}"),
            );
        }

        if let Some(target) = &self.target {
            self.validate_bearings(target, &ids, &mut push);
        }

        let ds = &self.disturbance;
        let given = [ds.amplitude, ds.aggregate, ds.threshold_fraction]
            .iter()
            .filter(|x| x.is_some())
            .count();
        match ds.kind {
            DisturbanceKind::None if given > 0 => push(
                "disturbance".into(),
                "kind = \"none\" takes no magnitude".into(),
            ),
            DisturbanceKind::None => {}
            _ if given != 1 => push(
                "disturbance".into(),
                "give exactly one of amplitude, aggregate, threshold_fraction".into(),
            ),
            _ => {}
        }
        for (name, v) in [
            ("amplitude", ds.amplitude),
            ("aggregate", ds.aggregate),
            ("threshold_fraction", ds.threshold_fraction),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    push(
                        format!("disturbance.{name}"),
                        format!("must be finite and >= 0, got {v}"),
                    );
                }
            }
        }
        if ds.threshold_fraction.is_some() && self.system == SystemKind::Localization {
            push(
                "disturbance.threshold_fraction".into(),
                "localization admits any bounded disturbance; give amplitude or aggregate".into(),
            );
        }
        if let Some(w) = ds.omega {
            if !w.is_finite() {
                push("disturbance.omega".into(), "must be finite".into());
            }
        }

        let integ: IntegratorSettings = self.integrator.into();
        if let Err(e) = integ.validate() {
            push("integrator".into(), e.to_string());
        }
        let sf = self.bounds.settle_fraction;
        if !(sf > 0.0 && sf <= 1.0) {
            push(
                "bounds.settle_fraction".into(),
                format!("must lie in (0, 1], got {sf}"),
            );
        }
        for (name, v) in [
            ("epsilon", self.bounds.epsilon),
            ("gamma", self.bounds.gamma),
            ("delta", self.bounds.delta),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    push(
                        format!("bounds.{name}"),
                        format!("must be positive, got {v}"),
                    );
                }
            }
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(ValidationErrors(issues))
        }
    }

    fn validate_bearings(
        &self,
        target: &TargetSpec,
        ids: &BTreeSet<u32>,
        push: &mut impl FnMut(String, String),
    ) {
        let d = self.dimension;
        let edge_set: BTreeSet<(u32, u32)> = self
            .edges
            .iter()
            .map(|[a, b]| (*a.min(b), *a.max(b)))
            .collect();
        let mut given: BTreeMap<(u32, u32), (usize, Vec<f64>)> = BTreeMap::new();
        for (k, b) in target.bearings.iter().enumerate() {
            let at = format!("target.bearings[{k}]");
            let [i, j] = b.edge;
            if !ids.contains(&i) || !ids.contains(&j) {
                push(at.clone(), "unknown agent id".into());
                continue;
            }
            if !edge_set.contains(&(i.min(j), i.max(j))) {
                push(at.clone(), format!("{i}-{j} is not an edge"));
                continue;
            }
            if b.g.len() != d {
                push(
                    format!("{at}.g"),
                    format!("has {} components, expected {d}", b.g.len()),
                );
                continue;
            }
            let norm = b.g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= UNIT_TOL) {
                push(
                    format!("{at}.g"),
                    format!("bearing must be a unit vector, norm is {norm}"),
                );
                continue;
            }
            // Store in head→tail orientation (smaller id first).
            let oriented: Vec<f64> = if i < j {
                b.g.clone()
            } else {
                b.g.iter().map(|x| -x).collect()
            };
            let key = (i.min(j), i.max(j));
            if let Some((first, prev)) = given.get(&key) {
                let mismatch = prev
                    .iter()
                    .zip(&oriented)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if mismatch > UNIT_TOL {
                    push(
                        at,
                        format!("g*_{j}{i} must equal -g*_{i}{j} (see target.bearings[{first}])"),
                    );
                }
            } else {
                given.insert(key, (k, oriented));
            }
        }
        for (a, b) in &edge_set {
            if !given.contains_key(&(*a, *b)) {
                push(
                    "target.bearings".into(),
                    format!("no bearing given for edge {a}-{b}"),
                );
            }
        }
    }
}

fn check_vector(push: &mut impl FnMut(String, String), field: &str, v: &[f64], d: usize) {
    if v.len() != d {
        push(
            field.into(),
            format!("has {} coordinates but dimension is {d}", v.len()),
        );
    } else if v.iter().any(|x| !x.is_finite()) {
        push(field.into(), "contains non-finite values".into());
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ValidationErrors> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| {
        let field = match e.span() {
            Some(span) => format!("line {}", text[..span.start].lines().count().max(1)),
            None => "document".into(),
        };
        ValidationErrors(vec![Issue {
            field,
            message: e.message().to_string(),
        }])
    })?;
    scenario.validate()?;
    Ok(scenario)
}
