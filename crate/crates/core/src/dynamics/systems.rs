use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::target::BearingTarget;
use crate::error::{Error, Result};
use crate::geometry::{edge_kinematics_stacked, unit_projection, Configuration};
use crate::graph::{AgentPartition, NetworkGraph};
use crate::rigidity::{
    bearing_laplacian, is_infinitesimally_bearing_rigid, localizability_of, realize_bearings,
    rigidity_gram_spectrum, RigidityCheck, RigidityMatrices, SpectralSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Leaderless,
    LeaderFollower,
    Localization,
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SystemKind::Leaderless => "leaderless",
            SystemKind::LeaderFollower => "leader_follower",
            SystemKind::Localization => "localization",
        })
    }
}

/// A disturbed first-order system `ẋ = control(x) + f(t)`.
pub trait FormationSystem: Sync {
    fn kind(&self) -> SystemKind;

    fn dim(&self) -> usize;

    fn state_len(&self) -> usize;

    /// Control term only; the integrator adds the disturbance.
    fn velocity(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// The error signal tracked by the system's bound set.
    fn error(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Maps a stacked `n·d` disturbance onto the state space.
    fn restrict_disturbance(&self, f: &DVector<f64>) -> DVector<f64> {
        f.clone()
    }

    /// Spectrum of `R_b R_bᵀ` at `x`, for systems whose bound depends on it.
    fn spectral_sample(&self, _x: &DVector<f64>) -> Result<Option<SpectralSummary>> {
        Ok(None)
    }
}

/// `u_i = −Σ_{j∈N_i} P_{g_ij} g*_ij / ‖z_ij‖`, evaluated agent by agent.
pub fn leaderless_control(
    g: &NetworkGraph,
    d: usize,
    p: &DVector<f64>,
    target: &BearingTarget,
) -> Result<DVector<f64>> {
    let kin = edge_kinematics_stacked(g, d, p)?;
    let mut u = DVector::zeros(p.len());
    for i in 0..g.node_count() {
        let mut ui = DVector::zeros(d);
        for (k, &(h, t)) in g.edges().iter().enumerate() {
            // g_ij and g*_ij point from i to j; the stored edge points head → tail.
            let sign = if h == i {
                1.0
            } else if t == i {
                -1.0
            } else {
                continue;
            };
            let pk = unit_projection(&kin.bearing(k).into_owned());
            ui -= pk * target.bearing(k) * (sign / kin.lengths[k]);
        }
        u.rows_mut(i * d, d).copy_from(&ui);
    }
    Ok(u)
}

/// Leaders hold still; follower `i` moves with `Σ_{j∈N_i} (g_ij − g*_ij)`.
/// Nodes `0..leader_count` are the leaders.
pub fn leader_follower_control(
    g: &NetworkGraph,
    d: usize,
    p: &DVector<f64>,
    target: &BearingTarget,
    leader_count: usize,
) -> Result<DVector<f64>> {
    let kin = edge_kinematics_stacked(g, d, p)?;
    let mut u = DVector::zeros(p.len());
    for (k, &(h, t)) in g.edges().iter().enumerate() {
        let diff = kin.bearing(k) - target.bearing(k);
        if h >= leader_count {
            let mut row = u.rows_mut(h * d, d);
            row += &diff;
        }
        if t >= leader_count {
            let mut row = u.rows_mut(t * d, d);
            row -= &diff;
        }
    }
    Ok(u)
}

/// `−B_ff p̂_f − B_fl p_l`.
pub fn localization_update(
    estimates: &DVector<f64>,
    anchors: &DVector<f64>,
    matrices: &RigidityMatrices,
) -> Result<DVector<f64>> {
    let check = localizability_of(matrices);
    if !check.localizable {
        return Err(Error::NotLocalizable {
            lambda_min: check.lambda_min,
        });
    }
    let bff = matrices.b_ff();
    let bfl = matrices.b_fl();
    if estimates.len() != bff.nrows() || anchors.len() != bfl.ncols() {
        return Err(Error::Dimension(
            "estimate or anchor length does not match B".into(),
        ));
    }
    Ok(-(bff * estimates) - bfl * anchors)
}

/// `e_a = g − g*`.
pub fn error_leaderless(
    g: &NetworkGraph,
    d: usize,
    p: &DVector<f64>,
    target: &BearingTarget,
) -> Result<DVector<f64>> {
    let kin = edge_kinematics_stacked(g, d, p)?;
    Ok(kin.g - target.g_star())
}

/// `e_b = p − p*`; leader rows must match exactly.
pub fn error_leader_follower(
    p: &DVector<f64>,
    p_star: &Configuration,
    leader_count: usize,
) -> Result<DVector<f64>> {
    let d = p_star.dim();
    if p.len() != p_star.stacked().len() {
        return Err(Error::Dimension("state and target differ in length".into()));
    }
    let e = p - p_star.stacked();
    for agent in 0..leader_count {
        let drift = e.rows(agent * d, d).norm();
        if drift != 0.0 {
            return Err(Error::LeaderDrift { agent, drift });
        }
    }
    Ok(e)
}

/// `e_c = p̂_f − p_f`.
pub fn error_localization(estimates: &DVector<f64>, truth: &DVector<f64>) -> Result<DVector<f64>> {
    if estimates.len() != truth.len() {
        return Err(Error::Dimension(
            "estimates and truth differ in length".into(),
        ));
    }
    Ok(estimates - truth)
}

#[derive(Debug, Clone)]
pub struct LeaderlessSystem {
    graph: NetworkGraph,
    target: BearingTarget,
    shape: Configuration,
    rigidity: RigidityCheck,
}

impl LeaderlessSystem {
    /// Fails unless the target formation is infinitesimally bearing rigid.
    /// Explicit bearings are first realised as a configuration.
    pub fn new(graph: NetworkGraph, target: BearingTarget) -> Result<Self> {
        let shape = match target.p_star() {
            Some(p) => p.clone(),
            None => realize_bearings(&graph, target.dim(), target.g_star())?,
        };
        let rigidity = is_infinitesimally_bearing_rigid(&graph, &shape)?;
        if !rigidity.rigid {
            return Err(Error::NotRigid {
                rank: rigidity.rank,
                expected: rigidity.expected_rank,
            });
        }
        Ok(Self {
            graph,
            target,
            shape,
            rigidity,
        })
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn target(&self) -> &BearingTarget {
        &self.target
    }

    /// A configuration realising the target bearings.
    pub fn target_shape(&self) -> &Configuration {
        &self.shape
    }

    pub fn rigidity(&self) -> &RigidityCheck {
        &self.rigidity
    }
}

impl FormationSystem for LeaderlessSystem {
    fn kind(&self) -> SystemKind {
        SystemKind::Leaderless
    }

    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn state_len(&self) -> usize {
        self.graph.node_count() * self.dim()
    }

    fn velocity(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        leaderless_control(&self.graph, self.dim(), x, &self.target)
    }

    fn error(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        error_leaderless(&self.graph, self.dim(), x, &self.target)
    }

    fn spectral_sample(&self, x: &DVector<f64>) -> Result<Option<SpectralSummary>> {
        rigidity_gram_spectrum(&self.graph, self.dim(), x).map(Some)
    }
}

#[derive(Debug, Clone)]
pub struct LeaderFollowerSystem {
    graph: NetworkGraph,
    leader_count: usize,
    target: BearingTarget,
    p_star: Configuration,
    matrices: RigidityMatrices,
    lambda_min_bff: f64,
}

impl LeaderFollowerSystem {
    /// The partition must be canonical (leaders first) with at least two
    /// leaders, and `(G, p*)` must be bearing localizable.
    pub fn new(
        graph: NetworkGraph,
        partition: &AgentPartition,
        p_star: Configuration,
    ) -> Result<Self> {
        partition.require_leaders(2)?;
        let matrices = bearing_laplacian(&graph, &p_star, partition)?;
        let check = localizability_of(&matrices);
        if !check.localizable {
            return Err(Error::NotLocalizable {
                lambda_min: check.lambda_min,
            });
        }
        let target = BearingTarget::from_configuration(&graph, p_star.clone())?;
        Ok(Self {
            graph,
            leader_count: partition.leader_count(),
            target,
            p_star,
            matrices,
            lambda_min_bff: check.lambda_min,
        })
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn leader_count(&self) -> usize {
        self.leader_count
    }

    pub fn target(&self) -> &BearingTarget {
        &self.target
    }

    pub fn p_star(&self) -> &Configuration {
        &self.p_star
    }

    /// Bearing Laplacian of the target formation.
    pub fn matrices(&self) -> &RigidityMatrices {
        &self.matrices
    }

    pub fn lambda_min_bff(&self) -> f64 {
        self.lambda_min_bff
    }

    /// Spectral norm of `H ⊗ I_d`, equal to the largest singular value of `H`.
    pub fn lifted_incidence_norm(&self) -> f64 {
        spectral_norm(&self.graph.incidence_matrix())
    }
}

impl FormationSystem for LeaderFollowerSystem {
    fn kind(&self) -> SystemKind {
        SystemKind::LeaderFollower
    }

    fn dim(&self) -> usize {
        self.p_star.dim()
    }

    fn state_len(&self) -> usize {
        self.p_star.stacked().len()
    }

    fn velocity(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        leader_follower_control(&self.graph, self.dim(), x, &self.target, self.leader_count)
    }

    fn error(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        error_leader_follower(x, &self.p_star, self.leader_count)
    }

    fn restrict_disturbance(&self, f: &DVector<f64>) -> DVector<f64> {
        let mut f = f.clone();
        f.rows_mut(0, self.leader_count * self.dim()).fill(0.0);
        f
    }
}

#[derive(Debug, Clone)]
pub struct LocalizationSystem {
    truth: Configuration,
    leader_count: usize,
    matrices: RigidityMatrices,
    b_ff: DMatrix<f64>,
    anchor_term: DVector<f64>,
    lambda_min_bff: f64,
}

impl LocalizationSystem {
    /// Bearings are measured from the true configuration; leaders come first.
    pub fn new(
        graph: &NetworkGraph,
        partition: &AgentPartition,
        truth: Configuration,
    ) -> Result<Self> {
        partition.require_leaders(2)?;
        let matrices = bearing_laplacian(graph, &truth, partition)?;
        let check = localizability_of(&matrices);
        if !check.localizable {
            return Err(Error::NotLocalizable {
                lambda_min: check.lambda_min,
            });
        }
        let split = partition.leader_count() * truth.dim();
        let anchors = truth.stacked().rows(0, split).into_owned();
        let anchor_term = matrices.b_fl() * anchors;
        Ok(Self {
            leader_count: partition.leader_count(),
            b_ff: matrices.b_ff(),
            matrices,
            anchor_term,
            lambda_min_bff: check.lambda_min,
            truth,
        })
    }

    pub fn matrices(&self) -> &RigidityMatrices {
        &self.matrices
    }

    pub fn lambda_min_bff(&self) -> f64 {
        self.lambda_min_bff
    }

    pub fn leader_count(&self) -> usize {
        self.leader_count
    }

    pub fn truth(&self) -> &Configuration {
        &self.truth
    }

    pub fn anchors(&self) -> DVector<f64> {
        self.truth.stacked().rows(0, self.split()).into_owned()
    }

    pub fn true_followers(&self) -> DVector<f64> {
        let s = self.split();
        self.truth
            .stacked()
            .rows(s, self.truth.stacked().len() - s)
            .into_owned()
    }

    fn split(&self) -> usize {
        self.leader_count * self.truth.dim()
    }
}

impl FormationSystem for LocalizationSystem {
    fn kind(&self) -> SystemKind {
        SystemKind::Localization
    }

    fn dim(&self) -> usize {
        self.truth.dim()
    }

    fn state_len(&self) -> usize {
        self.b_ff.nrows()
    }

    fn velocity(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-(&self.b_ff * x) - &self.anchor_term)
    }

    fn error(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        error_localization(x, &self.true_followers())
    }

    fn restrict_disturbance(&self, f: &DVector<f64>) -> DVector<f64> {
        let s = self.split();
        f.rows(s, f.len() - s).into_owned()
    }
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}
