//! Configurations, relative positions, bearings and the orthogonal projection operator.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::graph::NetworkGraph;

/// Edges shorter than this are treated as collocated.
pub const COLLOCATION_GUARD: f64 = 1e-9;

/// Relative tolerance for the parallel test.
pub const PARALLEL_TOL: f64 = 1e-9;

/// Stacked positions of `n` agents in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    dim: usize,
    stacked: DVector<f64>,
}

impl Configuration {
    pub fn new(dim: usize, stacked: DVector<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Dimension(format!(
                "ambient dimension must be >= 2, got {dim}"
            )));
        }
        if stacked.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "stacked length {} is not a multiple of d = {dim}",
                stacked.len()
            )));
        }
        if stacked.iter().any(|x| !x.is_finite()) {
            return Err(Error::Dimension(
                "configuration has non-finite entries".into(),
            ));
        }
        Ok(Self { dim, stacked })
    }

    pub fn from_points(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        let mut flat = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::Dimension(format!(
                    "agent {i} has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            flat.extend_from_slice(p);
        }
        Self::new(dim, DVector::from_vec(flat))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agent_count(&self) -> usize {
        self.stacked.len() / self.dim
    }

    pub fn stacked(&self) -> &DVector<f64> {
        &self.stacked
    }

    pub fn into_stacked(self) -> DVector<f64> {
        self.stacked
    }

    pub fn point(&self, i: usize) -> DVectorView<'_, f64> {
        self.stacked.rows(i * self.dim, self.dim)
    }
}

/// Relative positions, bearings and edge lengths of a framework.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeKinematics {
    pub dim: usize,
    /// Stacked `z_k = p_tail − p_head`.
    pub z: DVector<f64>,
    /// Stacked unit bearings `g_k = z_k / ‖z_k‖`.
    pub g: DVector<f64>,
    pub lengths: Vec<f64>,
}

impl EdgeKinematics {
    pub fn bearing(&self, k: usize) -> DVectorView<'_, f64> {
        self.g.rows(k * self.dim, self.dim)
    }

    pub fn relative(&self, k: usize) -> DVectorView<'_, f64> {
        self.z.rows(k * self.dim, self.dim)
    }

    pub fn max_length(&self) -> f64 {
        self.lengths.iter().copied().fold(0.0, f64::max)
    }
}

/// `P_x = I − x xᵀ / ‖x‖²`.
pub fn projection(x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let norm = x.norm();
    if !(norm > COLLOCATION_GUARD) {
        return Err(Error::ZeroVector);
    }
    Ok(unit_projection(&(x / norm)))
}

/// Projection for a vector already known to be unit length.
pub(crate) fn unit_projection(u: &DVector<f64>) -> DMatrix<f64> {
    let d = u.len();
    DMatrix::identity(d, d) - u * u.transpose()
}

pub fn edge_kinematics(g: &NetworkGraph, c: &Configuration) -> Result<EdgeKinematics> {
    edge_kinematics_stacked(g, c.dim(), c.stacked())
}

/// Same as [`edge_kinematics`] on a raw stacked vector; used inside the integrator.
pub fn edge_kinematics_stacked(
    g: &NetworkGraph,
    d: usize,
    p: &DVector<f64>,
) -> Result<EdgeKinematics> {
    if p.len() != g.node_count() * d {
        return Err(Error::Dimension(format!(
            "configuration has {} entries, graph needs {}",
            p.len(),
            g.node_count() * d
        )));
    }
    let m = g.edge_count();
    let mut z = DVector::zeros(m * d);
    let mut bearings = DVector::zeros(m * d);
    let mut lengths = Vec::with_capacity(m);
    for (k, &(head, tail)) in g.edges().iter().enumerate() {
        let zk = p.rows(tail * d, d) - p.rows(head * d, d);
        let len = zk.norm();
        if !(len > COLLOCATION_GUARD) {
            return Err(Error::Collocation {
                edge: k,
                length: len,
            });
        }
        z.rows_mut(k * d, d).copy_from(&zk);
        bearings.rows_mut(k * d, d).copy_from(&(zk / len));
        lengths.push(len);
    }
    Ok(EdgeKinematics {
        dim: d,
        z,
        g: bearings,
        lengths,
    })
}

/// Lemma-style parallel test: `‖P_x y‖ ≤ tol · ‖y‖`. Antiparallel vectors count as parallel.
pub fn is_parallel(x: &DVector<f64>, y: &DVector<f64>) -> Result<bool> {
    if x.len() != y.len() {
        return Err(Error::Dimension("vectors differ in length".into()));
    }
    let px = projection(x)?;
    let ynorm = y.norm();
    if !(ynorm > COLLOCATION_GUARD) {
        return Err(Error::ZeroVector);
    }
    Ok((px * y).norm() <= PARALLEL_TOL * ynorm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;
    use proptest::prelude::*;

    #[test]
    fn axis_aligned_projections() {
        let p = projection(&dvector![1.0, 0.0]).unwrap();
        assert_eq!(p, DMatrix::from_row_slice(2, 2, &[0., 0., 0., 1.]));
        let p = projection(&dvector![0.0, 0.0, 5.0]).unwrap();
        assert_eq!(p, DMatrix::from_diagonal(&dvector![1.0, 1.0, 0.0]));
    }

    #[test]
    fn diagonal_projection() {
        let p = projection(&dvector![1.0, 1.0]).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert_relative_eq!(p, expected, epsilon = 1e-15);
    }

    #[test]
    fn projection_of_zero_fails() {
        assert_eq!(projection(&dvector![0.0, 0.0]), Err(Error::ZeroVector));
    }

    #[test]
    fn single_edge_kinematics() {
        let g = NetworkGraph::new(2, &[(0, 1)]).unwrap();
        let c = Configuration::from_points(2, &[vec![0., 0.], vec![2., 0.]]).unwrap();
        let k = edge_kinematics(&g, &c).unwrap();
        assert_eq!(k.z, dvector![2.0, 0.0]);
        assert_eq!(k.g, dvector![1.0, 0.0]);
        assert_eq!(k.lengths, vec![2.0]);

        let c = Configuration::from_points(2, &[vec![0., 0.], vec![1., 1.]]).unwrap();
        let k = edge_kinematics(&g, &c).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(k.g, dvector![h, h], epsilon = 1e-15);
    }

    #[test]
    fn collocated_edge_is_reported() {
        let g = NetworkGraph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let c = Configuration::from_points(2, &[vec![0., 0.], vec![1., 0.], vec![1., 0.]]).unwrap();
        assert!(matches!(
            edge_kinematics(&g, &c),
            Err(Error::Collocation { edge: 1, .. })
        ));
    }

    #[test]
    fn parallel_examples() {
        assert!(is_parallel(&dvector![1.0, 0.0], &dvector![3.0, 0.0]).unwrap());
        assert!(!is_parallel(&dvector![1.0, 0.0], &dvector![0.0, 1.0]).unwrap());
        assert!(is_parallel(&dvector![1.0, 1.0], &dvector![-2.0, -2.0]).unwrap());
        assert!(is_parallel(&dvector![0.0, 0.0], &dvector![1.0, 0.0]).is_err());
    }

    #[test]
    fn configuration_validation() {
        assert!(Configuration::from_points(1, &[vec![0.0]]).is_err());
        assert!(Configuration::from_points(2, &[vec![0.0, 1.0, 2.0]]).is_err());
        assert!(Configuration::new(2, dvector![0.0, f64::NAN]).is_err());
    }

    fn nonzero_vec(d: usize) -> impl Strategy<Value = DVector<f64>> {
        proptest::collection::vec(-10.0..10.0f64, d)
            .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-4)
            .prop_map(DVector::from_vec)
    }

    proptest! {
        #[test]
        fn projection_properties(x in (2usize..5).prop_flat_map(nonzero_vec), alpha in prop_oneof![-5.0..-0.1f64, 0.1..5.0f64]) {
            let d = x.len();
            let p = projection(&x).unwrap();
            prop_assert!((&p - p.transpose()).amax() <= 1e-12);
            prop_assert!((&p * &p - &p).amax() <= 1e-12);
            prop_assert!((&p * &x).norm() <= 1e-12 * x.norm());
            prop_assert!((p.trace() - (d as f64 - 1.0)).abs() <= 1e-12);
            let scaled = projection(&(&x * alpha)).unwrap();
            prop_assert!((scaled - &p).amax() <= 1e-12);
            let eig = p.symmetric_eigen();
            let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            prop_assert!(ev[0].abs() <= 1e-12);
            prop_assert!(ev[1..].iter().all(|e| (e - 1.0).abs() <= 1e-12));
        }

        #[test]
        fn bearings_annihilate_their_own_relative_positions(
            pts in proptest::collection::vec(proptest::collection::vec(-5.0..5.0f64, 3), 4)
        ) {
            let g = NetworkGraph::new(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]).unwrap();
            let c = Configuration::from_points(3, &pts).unwrap();
            if let Ok(k) = edge_kinematics(&g, &c) {
                for e in 0..g.edge_count() {
                    let gk: DVector<f64> = k.bearing(e).into_owned();
                    prop_assert!(((gk.norm()) - 1.0).abs() <= 1e-12);
                    let zk: DVector<f64> = k.relative(e).into_owned();
                    prop_assert!((unit_projection(&gk) * zk).norm() <= 1e-10);
                }
                prop_assert!((g.lifted_incidence(3) * c.stacked() - &k.z).amax() <= 1e-12);
            }
        }
    }
}
