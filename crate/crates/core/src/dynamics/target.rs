use nalgebra::{DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{edge_kinematics, Configuration};
use crate::graph::NetworkGraph;

/// Accepted deviation of a desired bearing from unit length.
pub const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    Explicit,
    Derived,
}

/// Desired bearings, one unit vector per edge in the graph's orientation.
/// Reversing an edge negates its bearing, so `g*_ji = −g*_ij` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct BearingTarget {
    dim: usize,
    g_star: DVector<f64>,
    p_star: Option<Configuration>,
}

impl BearingTarget {
    pub fn from_configuration(g: &NetworkGraph, p_star: Configuration) -> Result<Self> {
        let kin = edge_kinematics(g, &p_star)?;
        Ok(Self {
            dim: p_star.dim(),
            g_star: kin.g,
            p_star: Some(p_star),
        })
    }

    pub fn from_bearings(g: &NetworkGraph, dim: usize, g_star: DVector<f64>) -> Result<Self> {
        if g_star.len() != g.edge_count() * dim {
            return Err(Error::Dimension(format!(
                "expected {} bearing entries, got {}",
                g.edge_count() * dim,
                g_star.len()
            )));
        }
        for k in 0..g.edge_count() {
            let norm = g_star.rows(k * dim, dim).norm();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::InfeasibleTarget(format!(
                    "bearing of edge {k} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self {
            dim,
            g_star,
            p_star: None,
        })
    }

    pub fn mode(&self) -> TargetMode {
        if self.p_star.is_some() {
            TargetMode::Derived
        } else {
            TargetMode::Explicit
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn g_star(&self) -> &DVector<f64> {
        &self.g_star
    }

    pub fn bearing(&self, k: usize) -> DVectorView<'_, f64> {
        self.g_star.rows(k * self.dim, self.dim)
    }

    pub fn p_star(&self) -> Option<&Configuration> {
        self.p_star.as_ref()
    }
}
