//! Bearing rigidity matrix, bearing Laplacian and the spectral tests built on them.
//!
//! Ranks use the relative threshold `max(rows, cols) · ε_mach · σ_max` on
//! singular values; eigenvalue-based tests use `dim · ε_mach · λ_max`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{edge_kinematics, edge_kinematics_stacked, unit_projection, Configuration};
use crate::graph::{AgentPartition, NetworkGraph};

const SYMMETRY_TOL: f64 = 1e-10;

/// Residual allowed when checking that translations and scaling lie in `Null(R_b)`.
const TRIVIAL_MOTION_TOL: f64 = 1e-10;

/// Spectrum of a symmetric positive semidefinite matrix with zero eigenvalues
/// identified by a relative tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// Smallest eigenvalue above the zero tolerance; `None` for a numerically zero matrix.
    pub lambda_min_plus: Option<f64>,
    pub lambda_max: f64,
    /// Smallest eigenvalue, zero or not.
    pub lambda_min: f64,
    pub rank: usize,
    pub null_dim: usize,
    pub zero_tol: f64,
}

impl SpectralSummary {
    fn from_eigenvalues(mut ev: Vec<f64>, dim: usize) -> Self {
        ev.sort_by(f64::total_cmp);
        let lambda_max = ev.last().copied().unwrap_or(0.0).max(0.0);
        let lambda_min = ev.first().copied().unwrap_or(0.0);
        let zero_tol = dim as f64 * f64::EPSILON * lambda_max;
        let positive: Vec<f64> = ev.iter().copied().filter(|&e| e > zero_tol).collect();
        Self {
            lambda_min_plus: positive.first().copied(),
            lambda_max,
            lambda_min,
            rank: positive.len(),
            null_dim: dim - positive.len(),
            zero_tol,
        }
    }

    /// Spectrum of `A Aᵀ` (dimension `rows`) from the singular values of `A`.
    fn gram_from_singular_values(sv: &DVector<f64>, rows: usize, cols: usize) -> Self {
        let sigma_max = sv.iter().copied().fold(0.0, f64::max);
        let sv_tol = rows.max(cols) as f64 * f64::EPSILON * sigma_max;
        let mut nonzero: Vec<f64> = sv.iter().copied().filter(|&s| s > sv_tol).collect();
        nonzero.sort_by(f64::total_cmp);
        let rank = nonzero.len();
        Self {
            lambda_min_plus: nonzero.first().map(|s| s * s),
            lambda_max: sigma_max * sigma_max,
            lambda_min: if rank == rows {
                nonzero[0] * nonzero[0]
            } else {
                0.0
            },
            rank,
            null_dim: rows - rank,
            zero_tol: sv_tol * sv_tol,
        }
    }
}

pub fn spectral_summary(m: &DMatrix<f64>) -> Result<SpectralSummary> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "matrix is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL {
        return Err(Error::Asymmetric(asym));
    }
    let eig = m.clone().symmetric_eigen();
    Ok(SpectralSummary::from_eigenvalues(
        eig.eigenvalues.iter().copied().collect(),
        m.nrows(),
    ))
}

/// `R_b(p) = diag(P_{g_k} / ‖z_k‖) (H ⊗ I_d)`, assembled block by block.
pub fn bearing_rigidity_matrix(g: &NetworkGraph, c: &Configuration) -> Result<DMatrix<f64>> {
    rigidity_matrix_stacked(g, c.dim(), c.stacked())
}

pub(crate) fn rigidity_matrix_stacked(
    g: &NetworkGraph,
    d: usize,
    p: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let kin = edge_kinematics_stacked(g, d, p)?;
    let mut rb = DMatrix::zeros(g.edge_count() * d, g.node_count() * d);
    for (k, &(head, tail)) in g.edges().iter().enumerate() {
        let block = unit_projection(&kin.bearing(k).into_owned()) / kin.lengths[k];
        rb.view_mut((k * d, head * d), (d, d)).copy_from(&(-&block));
        rb.view_mut((k * d, tail * d), (d, d)).copy_from(&block);
    }
    Ok(rb)
}

/// Spectrum of `R_b R_bᵀ` at a stacked configuration, via singular values of `R_b`.
pub fn rigidity_gram_spectrum(
    g: &NetworkGraph,
    d: usize,
    p: &DVector<f64>,
) -> Result<SpectralSummary> {
    let rb = rigidity_matrix_stacked(g, d, p)?;
    let (rows, cols) = rb.shape();
    let sv = rb.singular_values();
    Ok(SpectralSummary::gram_from_singular_values(&sv, rows, cols))
}

/// Bearing Laplacian of a set of stacked unit bearings (one per edge).
pub fn laplacian_from_bearings(
    g: &NetworkGraph,
    d: usize,
    bearings: &DVector<f64>,
) -> DMatrix<f64> {
    let n = g.node_count();
    let mut b = DMatrix::zeros(n * d, n * d);
    for (k, &(i, j)) in g.edges().iter().enumerate() {
        let pk = unit_projection(&bearings.rows(k * d, d).into_owned());
        for (r, c, sign) in [(i, i, 1.0), (j, j, 1.0), (i, j, -1.0), (j, i, -1.0)] {
            let mut blk = b.view_mut((r * d, c * d), (d, d));
            blk += &pk * sign;
        }
    }
    b
}

/// `R_b` together with the bearing Laplacian and its leader/follower blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidityMatrices {
    pub dim: usize,
    pub leader_count: usize,
    pub rb: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
}

impl RigidityMatrices {
    fn split(&self) -> usize {
        self.leader_count * self.dim
    }

    pub fn b_ll(&self) -> DMatrix<f64> {
        let s = self.split();
        self.laplacian.view((0, 0), (s, s)).into_owned()
    }

    pub fn b_lf(&self) -> DMatrix<f64> {
        let s = self.split();
        let f = self.laplacian.nrows() - s;
        self.laplacian.view((0, s), (s, f)).into_owned()
    }

    pub fn b_fl(&self) -> DMatrix<f64> {
        let s = self.split();
        let f = self.laplacian.nrows() - s;
        self.laplacian.view((s, 0), (f, s)).into_owned()
    }

    pub fn b_ff(&self) -> DMatrix<f64> {
        let s = self.split();
        let f = self.laplacian.nrows() - s;
        self.laplacian.view((s, s), (f, f)).into_owned()
    }
}

pub fn bearing_laplacian(
    g: &NetworkGraph,
    c: &Configuration,
    part: &AgentPartition,
) -> Result<RigidityMatrices> {
    if !part.is_canonical() || part.node_count() != g.node_count() {
        return Err(Error::Partition(
            "bearing Laplacian needs a canonical partition".into(),
        ));
    }
    let kin = edge_kinematics(g, c)?;
    Ok(RigidityMatrices {
        dim: c.dim(),
        leader_count: part.leader_count(),
        rb: bearing_rigidity_matrix(g, c)?,
        laplacian: laplacian_from_bearings(g, c.dim(), &kin.g),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidityCheck {
    pub rigid: bool,
    pub rank: usize,
    pub expected_rank: usize,
    pub null_dim: usize,
    /// Largest residual of `R_b` applied to the unit translations and to `p`.
    pub trivial_motion_residual: f64,
    /// Spectrum of `R_b R_bᵀ`.
    pub spectrum: SpectralSummary,
}

/// Rank test `rank(R_b) = nd − d − 1`, with translations and scaling
/// confirmed to lie in the null space.
pub fn is_infinitesimally_bearing_rigid(
    g: &NetworkGraph,
    c: &Configuration,
) -> Result<RigidityCheck> {
    let d = c.dim();
    let n = g.node_count();
    let rb = bearing_rigidity_matrix(g, c)?;
    let (rows, cols) = rb.shape();
    let sv = rb.singular_values();
    let spectrum = SpectralSummary::gram_from_singular_values(&sv, rows, cols);
    let rank = spectrum.rank;
    let expected_rank = n * d - d - 1;

    let mut residual = (&rb * c.stacked()).amax() / c.stacked().norm().max(1.0);
    for axis in 0..d {
        let mut t = DVector::zeros(n * d);
        for i in 0..n {
            t[i * d + axis] = 1.0;
        }
        residual = residual.max((&rb * t).amax());
    }
    Ok(RigidityCheck {
        rigid: rank == expected_rank && residual <= TRIVIAL_MOTION_TOL,
        rank,
        expected_rank,
        null_dim: cols - rank,
        trivial_motion_residual: residual,
        spectrum,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizabilityCheck {
    pub localizable: bool,
    /// `λ_min(B_ff)`; zero or negative round-off when not localizable.
    pub lambda_min: f64,
    pub spectrum: SpectralSummary,
}

/// Localizable iff `B_ff` is positive definite.
pub fn is_bearing_localizable(
    g: &NetworkGraph,
    c: &Configuration,
    part: &AgentPartition,
) -> Result<LocalizabilityCheck> {
    part.require_leaders(2)?;
    let mats = bearing_laplacian(g, c, part)?;
    Ok(localizability_of(&mats))
}

pub fn localizability_of(mats: &RigidityMatrices) -> LocalizabilityCheck {
    let bff = mats.b_ff();
    let spectrum = SpectralSummary::from_eigenvalues(
        bff.clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect(),
        bff.nrows(),
    );
    LocalizabilityCheck {
        localizable: spectrum.null_dim == 0 && spectrum.lambda_min > spectrum.zero_tol,
        lambda_min: spectrum.lambda_min,
        spectrum,
    }
}

/// Recovers a configuration realising the given bearings, unique up to
/// translation and positive scaling. The result is centred at the origin with
/// unit norm. Fails when the bearings are inconsistent or do not pin down
/// a unique shape.
pub fn realize_bearings(
    g: &NetworkGraph,
    d: usize,
    bearings: &DVector<f64>,
) -> Result<Configuration> {
    let n = g.node_count();
    if bearings.len() != g.edge_count() * d {
        return Err(Error::Dimension(format!(
            "expected {} bearing entries, got {}",
            g.edge_count() * d,
            bearings.len()
        )));
    }
    let b = laplacian_from_bearings(g, d, bearings);
    let eig = b.symmetric_eigen();
    let lambda_max = eig.eigenvalues.amax();
    let tol = 1e-8 * lambda_max.max(1.0);

    // Null space of B(g*) with translations projected out.
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for axis in 0..d {
        let mut t = DVector::zeros(n * d);
        for i in 0..n {
            t[i * d + axis] = 1.0;
        }
        basis.push(t.normalize());
    }
    let mut shapes = Vec::new();
    for (idx, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev.abs() > tol {
            continue;
        }
        let mut v = eig.eigenvectors.column(idx).into_owned();
        for q in basis.iter().chain(shapes.iter()) {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        if v.norm() > 1e-6 {
            shapes.push(v.normalize());
        }
    }
    match shapes.len() {
        0 => Err(Error::InfeasibleTarget(
            "bearings admit no non-trivial realisation".into(),
        )),
        1 => {
            let mut p = shapes.pop().unwrap();
            let kin = edge_kinematics_stacked(g, d, &p)
                .map_err(|_| Error::InfeasibleTarget("realisation collapses an edge".into()))?;
            if kin.g.dot(bearings) < 0.0 {
                p = -p;
            }
            let kin = edge_kinematics_stacked(g, d, &p)?;
            let mismatch = (&kin.g - bearings).amax();
            if mismatch > 1e-6 {
                return Err(Error::InfeasibleTarget(format!(
                    "bearings are not realisable (mismatch {mismatch:e})"
                )));
            }
            Configuration::new(d, p)
        }
        k => {
            let rank = n * d - d - k;
            Err(Error::NotRigid {
                rank,
                expected: n * d - d - 1,
            })
        }
    }
}
