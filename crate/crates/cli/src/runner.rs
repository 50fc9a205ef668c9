//! Turning a scenario into a simulated, bounded and judged run.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use bearform::bounds::{
    bound_leader_follower, bound_leaderless, bound_localization, leader_follower_threshold,
    localization_oracle, verdict, BoundReport,
};
use bearform::dynamics::{
    integrate, BearingTarget, DisturbanceKind, DisturbanceProfile, FormationSystem,
    IntegratorSettings, LeaderFollowerSystem, LeaderlessSystem, LocalizationSystem, SimTrace,
    SystemKind,
};
use bearform::geometry::Configuration;
use bearform::graph::{canonicalize_partition, AgentPartition, NetworkGraph, Relabeling};
use bearform::rigidity::{
    is_bearing_localizable, is_infinitesimally_bearing_rigid, rigidity_gram_spectrum,
    LocalizabilityCheck, RigidityCheck,
};
use bearform::Error;
use nalgebra::DVector;
use serde::Serialize;

use crate::scenario::{Issue, Scenario, ValidationErrors};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const PRECHECK: i32 = 3;
    pub const NOT_CONTAINED: i32 = 4;
    pub const ABORTED: i32 = 5;
}

/// Command-line overrides applied on top of the scenario file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
}

impl RunOptions {
    pub fn apply(&self, scenario: &Scenario) -> Result<Scenario, RunError> {
        let mut s = scenario.clone();
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(dt) = self.dt {
            s.integrator.dt = dt;
        }
        if let Some(t) = self.duration {
            s.integrator.duration = t;
        }
        s.validate().map_err(RunError::Validation)?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum PreCheck {
    Rigidity {
        rigid: bool,
        rank: usize,
        expected_rank: usize,
        null_dim: usize,
    },
    Localizability {
        localizable: bool,
        lambda_min_bff: f64,
    },
}

impl PreCheck {
    fn from_rigidity(c: &RigidityCheck) -> Self {
        Self::Rigidity {
            rigid: c.rigid,
            rank: c.rank,
            expected_rank: c.expected_rank,
            null_dim: c.null_dim,
        }
    }

    fn from_localizability(c: &LocalizabilityCheck) -> Self {
        Self::Localizability {
            localizable: c.localizable,
            lambda_min_bff: c.lambda_min,
        }
    }

    pub fn passed(&self) -> bool {
        match self {
            Self::Rigidity { rigid, .. } => *rigid,
            Self::Localizability { localizable, .. } => *localizable,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid scenario:\n{0}")]
    Validation(ValidationErrors),
    #[error("pre-check failed: {message}")]
    PreCheck {
        message: String,
        check: Option<PreCheck>,
    },
    #[error("run aborted: {0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => exit::VALIDATION,
            Self::PreCheck { .. } => exit::PRECHECK,
            Self::Runtime(_) => exit::ABORTED,
        }
    }

    fn invalid(field: &str, message: impl Into<String>) -> Self {
        Self::Validation(ValidationErrors(vec![Issue {
            field: field.into(),
            message: message.into(),
        }]))
    }
}

fn classify(e: Error) -> RunError {
    match e {
        Error::NotRigid { .. }
        | Error::NotLocalizable { .. }
        | Error::InfeasibleTarget(_)
        | Error::Collocation { .. }
        | Error::ZeroVector
        | Error::Partition(_) => RunError::PreCheck {
            message: e.to_string(),
            check: None,
        },
        Error::InvalidParams(_)
        | Error::InvalidSettings(_)
        | Error::Dimension(_)
        | Error::InvalidGraph(_) => RunError::invalid("scenario", e.to_string()),
        other => RunError::Runtime(other.to_string()),
    }
}

enum Built {
    Leaderless(LeaderlessSystem),
    LeaderFollower(LeaderFollowerSystem),
    Localization(LocalizationSystem),
}

impl Built {
    fn as_dyn(&self) -> &dyn FormationSystem {
        match self {
            Self::Leaderless(s) => s,
            Self::LeaderFollower(s) => s,
            Self::Localization(s) => s,
        }
    }

    fn leader_count(&self) -> usize {
        match self {
            Self::Leaderless(_) => 0,
            Self::LeaderFollower(s) => s.leader_count(),
            Self::Localization(s) => s.leader_count(),
        }
    }
}

/// Framework data of a scenario, indexed in file order.
struct Framework {
    ids: Vec<u32>,
    graph: NetworkGraph,
    positions: Configuration,
}

fn framework(s: &Scenario) -> Result<Framework, RunError> {
    let index = s.agent_index();
    let edges: Vec<(usize, usize)> = s.edges.iter().map(|[a, b]| (index[a], index[b])).collect();
    let graph = NetworkGraph::new(s.agents.len(), &edges).map_err(classify)?;
    let pts: Vec<Vec<f64>> = s.agents.iter().map(|a| a.position.clone()).collect();
    let positions = Configuration::from_points(s.dimension, &pts).map_err(classify)?;
    Ok(Framework {
        ids: s.agents.iter().map(|a| a.id).collect(),
        graph,
        positions,
    })
}

fn leader_indices(s: &Scenario) -> Vec<usize> {
    s.agents
        .iter()
        .enumerate()
        .filter(|(_, a)| a.leader)
        .map(|(i, _)| i)
        .collect()
}

fn canonical(
    fw: &Framework,
    s: &Scenario,
) -> Result<(NetworkGraph, AgentPartition, Relabeling), RunError> {
    let part = AgentPartition::from_leaders(fw.graph.node_count(), &leader_indices(s))
        .map_err(classify)?;
    canonicalize_partition(&fw.graph, &part, 2).map_err(classify)
}

fn reorder(relabel: &Relabeling, c: &Configuration) -> Result<Configuration, RunError> {
    let stacked: Vec<f64> = c.stacked().iter().copied().collect();
    let v = relabel.to_canonical(&stacked, c.dim());
    Configuration::new(c.dim(), DVector::from_vec(v)).map_err(classify)
}

/// Rigidity of the framework formed by the agents' `position` entries.
pub fn check_rigidity(s: &Scenario) -> Result<RigidityCheck, RunError> {
    let fw = framework(s)?;
    is_infinitesimally_bearing_rigid(&fw.graph, &fw.positions).map_err(classify)
}

/// Localizability of the `position` framework with the scenario's leaders as anchors.
pub fn check_localizability(s: &Scenario) -> Result<LocalizabilityCheck, RunError> {
    let fw = framework(s)?;
    let (g, part, relabel) = canonical(&fw, s)?;
    is_bearing_localizable(&g, &reorder(&relabel, &fw.positions)?, &part).map_err(classify)
}

struct Prepared {
    scenario: Scenario,
    ids: Vec<u32>,
    relabel: Option<Relabeling>,
    built: Built,
    initial: DVector<f64>,
    precheck: PreCheck,
}

fn targets(s: &Scenario) -> Option<Vec<Vec<f64>>> {
    s.agents.iter().map(|a| a.target.clone()).collect()
}

fn prepare(s: &Scenario) -> Result<Prepared, RunError> {
    let fw = framework(s)?;
    let d = s.dimension;
    match s.system {
        SystemKind::Leaderless => {
            let target = match targets(s) {
                Some(pts) => {
                    let p_star = Configuration::from_points(d, &pts).map_err(classify)?;
                    BearingTarget::from_configuration(&fw.graph, p_star).map_err(classify)?
                }
                None => BearingTarget::from_bearings(&fw.graph, d, explicit_g_star(s, &fw)?)
                    .map_err(classify)?,
            };
            let built = LeaderlessSystem::new(fw.graph.clone(), target).map_err(|e| match e {
                Error::NotRigid { rank, expected } => RunError::PreCheck {
                    message: e.to_string(),
                    check: Some(PreCheck::Rigidity {
                        rigid: false,
                        rank,
                        expected_rank: expected,
                        null_dim: d * fw.graph.node_count() - rank,
                    }),
                },
                other => classify(other),
            })?;
            let precheck = PreCheck::from_rigidity(built.rigidity());
            Ok(Prepared {
                scenario: s.clone(),
                ids: fw.ids,
                relabel: None,
                initial: fw.positions.stacked().clone(),
                built: Built::Leaderless(built),
                precheck,
            })
        }
        SystemKind::LeaderFollower => {
            let (g, part, relabel) = canonical(&fw, s)?;
            let pts = targets(s)
                .ok_or_else(|| RunError::invalid("agents", "every agent needs a target"))?;
            let p_star = reorder(
                &relabel,
                &Configuration::from_points(d, &pts).map_err(classify)?,
            )?;
            let check = is_bearing_localizable(&g, &p_star, &part).map_err(classify)?;
            let precheck = PreCheck::from_localizability(&check);
            if !check.localizable {
                return Err(RunError::PreCheck {
                    message: format!(
                        "target formation is not bearing localizable (lambda_min(B_ff) = {:e})",
                        check.lambda_min
                    ),
                    check: Some(precheck),
                });
            }
            let initial = reorder(&relabel, &fw.positions)?.into_stacked();
            let built = LeaderFollowerSystem::new(g, &part, p_star).map_err(classify)?;
            Ok(Prepared {
                scenario: s.clone(),
                ids: fw.ids,
                relabel: Some(relabel),
                built: Built::LeaderFollower(built),
                initial,
                precheck,
            })
        }
        SystemKind::Localization => {
            let (g, part, relabel) = canonical(&fw, s)?;
            let truth = reorder(&relabel, &fw.positions)?;
            let check = is_bearing_localizable(&g, &truth, &part).map_err(classify)?;
            let precheck = PreCheck::from_localizability(&check);
            if !check.localizable {
                return Err(RunError::PreCheck {
                    message: format!(
                        "network is not bearing localizable (lambda_min(B_ff) = {:e})",
                        check.lambda_min
                    ),
                    check: Some(precheck),
                });
            }
            let mut initial = Vec::with_capacity(part.follower_count() * d);
            for &k in part.followers() {
                let agent = &s.agents[relabel.old_of_new[k]];
                let est = agent.estimate.as_ref().ok_or_else(|| {
                    RunError::invalid(&format!("agents (id {}).estimate", agent.id), "missing")
                })?;
                initial.extend_from_slice(est);
            }
            let built = LocalizationSystem::new(&g, &part, truth).map_err(classify)?;
            Ok(Prepared {
                scenario: s.clone(),
                ids: fw.ids,
                relabel: Some(relabel),
                built: Built::Localization(built),
                initial: DVector::from_vec(initial),
                precheck,
            })
        }
    }
}

/// Stacks the scenario's explicit bearings in graph edge order, head to tail.
fn explicit_g_star(s: &Scenario, fw: &Framework) -> Result<DVector<f64>, RunError> {
    let spec = s
        .target
        .as_ref()
        .ok_or_else(|| RunError::invalid("target", "missing"))?;
    let mut directed: BTreeMap<(u32, u32), Vec<f64>> = BTreeMap::new();
    for b in &spec.bearings {
        let [i, j] = b.edge;
        directed
            .entry((j, i))
            .or_insert_with(|| b.g.iter().map(|x| -x).collect());
        directed.insert((i, j), b.g.clone());
    }
    let mut out = Vec::with_capacity(fw.graph.edge_count() * s.dimension);
    for &(h, t) in fw.graph.edges() {
        let key = (fw.ids[h], fw.ids[t]);
        let g = directed.get(&key).ok_or_else(|| {
            RunError::invalid(
                "target.bearings",
                format!("no bearing for edge {}-{}", key.0, key.1),
            )
        })?;
        out.extend_from_slice(g);
    }
    Ok(DVector::from_vec(out))
}

/// Where the aggregate disturbance bound came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DisturbanceSource {
    None,
    Amplitude {
        per_agent: f64,
    },
    Aggregate,
    ThresholdFraction {
        fraction: f64,
        threshold: f64,
        sampled: bool,
    },
}

fn profile_for(
    prep: &Prepared,
    threshold: impl FnOnce() -> Result<(f64, bool), RunError>,
) -> Result<(DisturbanceProfile, DisturbanceSource), RunError> {
    let s = &prep.scenario;
    let ds = &s.disturbance;
    let (d, n, nl) = (s.dimension, s.agents.len(), prep.built.leader_count());
    let profile = |agg: f64| {
        DisturbanceProfile::with_aggregate_bound(ds.kind, s.system, d, n, nl, agg, s.seed)
            .map_err(classify)
    };
    let (mut profile, source) = if ds.kind == DisturbanceKind::None {
        (DisturbanceProfile::none(d, n), DisturbanceSource::None)
    } else if let Some(v) = ds.amplitude {
        (
            DisturbanceProfile::for_system(ds.kind, s.system, d, n, nl, v, s.seed)
                .map_err(classify)?,
            DisturbanceSource::Amplitude { per_agent: v },
        )
    } else if let Some(f) = ds.aggregate {
        (profile(f)?, DisturbanceSource::Aggregate)
    } else if let Some(fraction) = ds.threshold_fraction {
        let (threshold, sampled) = threshold()?;
        (
            profile(fraction * threshold)?,
            DisturbanceSource::ThresholdFraction {
                fraction,
                threshold,
                sampled,
            },
        )
    } else {
        return Err(RunError::invalid("disturbance", "no magnitude given"));
    };
    if let Some(w) = ds.omega {
        profile = profile.with_omega(w);
    }
    Ok((profile, source))
}

/// Report for the systems whose bound does not depend on the trajectory.
fn a_priori_report(prep: &Prepared, f: f64) -> Result<Option<BoundReport>, RunError> {
    let params = prep.scenario.bounds.params();
    let report = match &prep.built {
        Built::Leaderless(_) => return Ok(None),
        Built::LeaderFollower(sys) => bound_leader_follower(
            sys.lambda_min_bff(),
            sys.lifted_incidence_norm(),
            sys.p_star().stacked().norm(),
            f,
            &params,
        ),
        Built::Localization(sys) => bound_localization(sys.lambda_min_bff(), f, &params),
    };
    report.map(Some).map_err(|e| match e {
        Error::InvalidParams(m) => RunError::invalid("bounds", m),
        other => classify(other),
    })
}

fn lf_threshold(prep: &Prepared) -> Result<(f64, bool), RunError> {
    match &prep.built {
        Built::LeaderFollower(sys) => {
            let lambda = sys.lambda_min_bff();
            let eps = prep.scenario.bounds.epsilon.unwrap_or(lambda / 2.0);
            if !(eps > 0.0 && eps < lambda) {
                return Err(RunError::invalid(
                    "bounds.epsilon",
                    format!("must lie in (0, {lambda})"),
                ));
            }
            Ok((
                leader_follower_threshold(lambda, sys.lifted_incidence_norm(), eps),
                false,
            ))
        }
        _ => Err(RunError::invalid(
            "disturbance.threshold_fraction",
            "localization admits any bounded disturbance",
        )),
    }
}

fn spectral_threshold(lmin: f64, lmax: f64) -> f64 {
    (lmin * lmin / lmax).sqrt()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Contained,
    NotContained,
    Aborted,
}

/// Everything produced by one simulated scenario.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: Scenario,
    /// Agent ids in file order.
    pub ids: Vec<u32>,
    /// Agent ids of the state blocks as emitted (file order; followers only for localization).
    pub state_ids: Vec<u32>,
    pub relabeling: Option<Relabeling>,
    pub precheck: PreCheck,
    pub disturbance: DisturbanceProfile,
    pub disturbance_source: DisturbanceSource,
    pub trace: SimTrace,
    /// `None` only when a leaderless run aborts before sampling any spectrum.
    pub report: Option<BoundReport>,
    /// Error norm at `t = 0`.
    pub initial_error: f64,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn outcome(&self) -> Outcome {
        match self.report.as_ref().and_then(|r| r.verdict) {
            _ if !self.trace.completed => Outcome::Aborted,
            Some(v) if v.contained => Outcome::Contained,
            _ => Outcome::NotContained,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.outcome() {
            Outcome::Contained => exit::OK,
            Outcome::NotContained => exit::NOT_CONTAINED,
            Outcome::Aborted => exit::ABORTED,
        }
    }

    /// Recorded states with agent blocks in file order.
    pub fn states_in_file_order(&self) -> Vec<DVector<f64>> {
        let d = self.scenario.dimension;
        match (&self.relabeling, self.scenario.system) {
            (Some(r), SystemKind::LeaderFollower) => self
                .trace
                .states
                .iter()
                .map(|x| DVector::from_vec(r.to_original(x.as_slice(), d)))
                .collect(),
            _ => self.trace.states.clone(),
        }
    }

    pub fn final_error(&self) -> Option<f64> {
        self.trace.error_norms.last().copied()
    }
}

fn state_ids(prep: &Prepared) -> Vec<u32> {
    match (&prep.relabel, &prep.built) {
        (Some(r), Built::Localization(sys)) => {
            let nl = sys.leader_count();
            let mut olds: Vec<usize> = r.old_of_new[nl..].to_vec();
            olds.sort_unstable();
            debug_assert_eq!(olds, r.old_of_new[nl..]);
            olds.into_iter().map(|i| prep.ids[i]).collect()
        }
        _ => prep.ids.clone(),
    }
}

/// Pre-checks, integrates, bounds and judges one scenario.
pub fn run(scenario: &Scenario, options: &RunOptions) -> Result<RunResult, RunError> {
    let started = Instant::now();
    let scenario = options.apply(scenario)?;
    let prep = prepare(&scenario)?;
    let settings: IntegratorSettings = scenario.integrator.into();
    let sys = prep.built.as_dyn();

    let (profile, source) = profile_for(&prep, || match &prep.built {
        Built::Leaderless(_) => {
            let pilot = integrate(
                sys,
                &prep.initial,
                &DisturbanceProfile::none(scenario.dimension, scenario.agents.len()),
                &settings,
            )
            .map_err(classify)?;
            match (pilot.completed, pilot.spectral_extrema) {
                (true, Some(e)) => Ok((spectral_threshold(e.lambda_min_plus, e.lambda_max), true)),
                _ => Err(RunError::Runtime(format!(
                    "undisturbed pilot run for the threshold did not complete: {}",
                    pilot
                        .events
                        .first()
                        .map(ToString::to_string)
                        .unwrap_or_default()
                ))),
            }
        }
        _ => lf_threshold(&prep),
    })?;
    let f = profile.aggregate_bound();
    let mut report = a_priori_report(&prep, f)?;

    let trace = integrate(sys, &prep.initial, &profile, &settings).map_err(classify)?;

    if report.is_none() {
        if let Some(e) = trace.spectral_extrema {
            report = Some(bound_leaderless(e.lambda_min_plus, e.lambda_max, f).map_err(classify)?);
        }
    }
    if trace.completed {
        if let Some(r) = &report {
            report = Some(verdict(r, &trace, scenario.bounds.settle_fraction).map_err(classify)?);
        }
    }

    Ok(RunResult {
        ids: prep.ids.clone(),
        state_ids: state_ids(&prep),
        relabeling: prep.relabel.clone(),
        precheck: prep.precheck.clone(),
        disturbance: profile,
        disturbance_source: source,
        initial_error: trace.error_norms.first().copied().unwrap_or(f64::NAN),
        report,
        trace,
        scenario,
        wall_time: started.elapsed(),
    })
}

/// Bound evaluated without integrating. The leaderless spectra are taken at
/// the initial configuration, so that bound is only indicative.
#[derive(Debug, Clone)]
pub struct BoundsOnly {
    pub scenario: Scenario,
    pub precheck: PreCheck,
    pub disturbance_source: DisturbanceSource,
    pub report: BoundReport,
    pub spectra_at_initial: bool,
}

pub fn bounds_only(scenario: &Scenario, options: &RunOptions) -> Result<BoundsOnly, RunError> {
    let scenario = options.apply(scenario)?;
    let prep = prepare(&scenario)?;
    let initial_spectrum = || -> Result<(f64, f64), RunError> {
        let fw = framework(&scenario)?;
        let s = rigidity_gram_spectrum(&fw.graph, scenario.dimension, fw.positions.stacked())
            .map_err(classify)?;
        let lmin = s.lambda_min_plus.ok_or_else(|| {
            RunError::Runtime("R_b R_b^T vanishes at the initial configuration".into())
        })?;
        Ok((lmin, s.lambda_max))
    };
    let (profile, source) = profile_for(&prep, || match &prep.built {
        Built::Leaderless(_) => initial_spectrum().map(|(a, b)| (spectral_threshold(a, b), true)),
        _ => lf_threshold(&prep),
    })?;
    let f = profile.aggregate_bound();
    let (report, at_initial) = match a_priori_report(&prep, f)? {
        Some(r) => (r, false),
        None => {
            let (lmin, lmax) = initial_spectrum()?;
            (bound_leaderless(lmin, lmax, f).map_err(classify)?, true)
        }
    };
    Ok(BoundsOnly {
        scenario,
        precheck: prep.precheck,
        disturbance_source: source,
        report,
        spectra_at_initial: at_initial,
    })
}

/// Least-squares follower positions of a localization scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub follower_ids: Vec<u32>,
    pub dim: usize,
    pub estimates: DVector<f64>,
    pub truth: DVector<f64>,
    pub lambda_min_bff: f64,
}

impl OracleResult {
    pub fn max_deviation(&self) -> f64 {
        (&self.estimates - &self.truth).amax()
    }
}

pub fn localize_oracle(scenario: &Scenario) -> Result<OracleResult, RunError> {
    if scenario.system != SystemKind::Localization {
        return Err(RunError::invalid(
            "system",
            "localize-oracle needs a localization scenario",
        ));
    }
    let prep = prepare(scenario)?;
    let Built::Localization(sys) = &prep.built else {
        unreachable!()
    };
    let estimates = localization_oracle(sys.matrices(), &sys.anchors()).map_err(classify)?;
    Ok(OracleResult {
        follower_ids: state_ids(&prep),
        dim: scenario.dimension,
        estimates,
        truth: sys.true_followers(),
        lambda_min_bff: sys.lambda_min_bff(),
    })
}
