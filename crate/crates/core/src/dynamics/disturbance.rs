use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::systems::SystemKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    None,
    UniformBall,
    Sinusoidal,
}

/// Bounded exogenous disturbance acting on agent velocities.
///
/// Agent `i` receives a `d`-vector of norm at most `v_i`, so the stacked
/// disturbance never exceeds `F = sqrt(Σ v_i²)`. Samples are a pure function
/// of `(seed, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceProfile {
    kind: DisturbanceKind,
    dim: usize,
    amplitudes: Vec<f64>,
    seed: u64,
    omega: f64,
    phases: Vec<f64>,
    directions: Vec<DVector<f64>>,
}

impl DisturbanceProfile {
    /// `amplitudes[i]` is `v_i`; agents with zero amplitude are unaffected.
    pub fn new(kind: DisturbanceKind, dim: usize, amplitudes: Vec<f64>, seed: u64) -> Result<Self> {
        if amplitudes.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParams(
                "disturbance amplitudes must be finite and >= 0".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Time samples use the stream keyed by t's bit pattern; u64::MAX is a NaN
        // pattern, so it is free for the per-agent sinusoid constants.
        rng.set_stream(u64::MAX);
        let phases = (0..amplitudes.len())
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        let directions = (0..amplitudes.len())
            .map(|_| random_unit(&mut rng, dim))
            .collect();
        Ok(Self {
            kind,
            dim,
            amplitudes,
            seed,
            omega: 1.0,
            phases,
            directions,
        })
    }

    pub fn none(dim: usize, n: usize) -> Self {
        Self::new(DisturbanceKind::None, dim, vec![0.0; n], 0).expect("zero amplitudes are valid")
    }

    /// Per-agent bound `v` applied to the agents the system disturbs: all agents
    /// for the leaderless system, followers only otherwise.
    pub fn for_system(
        kind: DisturbanceKind,
        system: SystemKind,
        dim: usize,
        n: usize,
        leader_count: usize,
        v: f64,
        seed: u64,
    ) -> Result<Self> {
        let mask = applies_to(system, n, leader_count);
        let amps = mask.iter().map(|&on| if on { v } else { 0.0 }).collect();
        Self::new(kind, dim, amps, seed)
    }

    /// Equal per-agent bounds chosen so the aggregate bound is exactly `aggregate`.
    pub fn with_aggregate_bound(
        kind: DisturbanceKind,
        system: SystemKind,
        dim: usize,
        n: usize,
        leader_count: usize,
        aggregate: f64,
        seed: u64,
    ) -> Result<Self> {
        let count = applies_to(system, n, leader_count)
            .iter()
            .filter(|&&b| b)
            .count();
        if count == 0 {
            return Err(Error::InvalidParams(
                "no agent is subject to disturbance".into(),
            ));
        }
        Self::for_system(
            kind,
            system,
            dim,
            n,
            leader_count,
            aggregate / (count as f64).sqrt(),
            seed,
        )
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn kind(&self) -> DisturbanceKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn applies_to(&self) -> Vec<bool> {
        self.amplitudes.iter().map(|&v| v > 0.0).collect()
    }

    /// `F = sqrt(Σ v_i²)`; zero when the kind is `None`.
    pub fn aggregate_bound(&self) -> f64 {
        match self.kind {
            DisturbanceKind::None => 0.0,
            _ => self.amplitudes.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// Stacked disturbance (length `n·d`) at time `t`.
    pub fn generate(&self, t: f64) -> DVector<f64> {
        let d = self.dim;
        let mut f = DVector::zeros(self.amplitudes.len() * d);
        match self.kind {
            DisturbanceKind::None => {}
            DisturbanceKind::UniformBall => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(t.to_bits());
                for (i, &v) in self.amplitudes.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let dir = random_unit(&mut rng, d);
                    let u: f64 = rng.random();
                    let radius = v * u.powf(1.0 / d as f64);
                    f.rows_mut(i * d, d).copy_from(&(dir * radius));
                }
            }
            DisturbanceKind::Sinusoidal => {
                for (i, &v) in self.amplitudes.iter().enumerate() {
                    let s = v * (self.omega * t + self.phases[i]).sin();
                    f.rows_mut(i * d, d).copy_from(&(&self.directions[i] * s));
                }
            }
        }
        f
    }
}

fn applies_to(system: SystemKind, n: usize, leader_count: usize) -> Vec<bool> {
    match system {
        SystemKind::Leaderless => vec![true; n],
        SystemKind::LeaderFollower | SystemKind::Localization => {
            (0..n).map(|i| i >= leader_count).collect()
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn none_is_zero() {
        let p = DisturbanceProfile::none(2, 3);
        assert_eq!(p.generate(0.7), DVector::zeros(6));
        assert_eq!(p.aggregate_bound(), 0.0);
    }

    #[test]
    fn uniform_ball_respects_aggregate_bound() {
        let p = DisturbanceProfile::new(
            DisturbanceKind::UniformBall,
            3,
            vec![0.3, 0.0, 0.5, 1.2],
            11,
        )
        .unwrap();
        let bound = p.aggregate_bound();
        for k in 0..100_000u32 {
            let f = p.generate(k as f64 * 1e-3);
            assert!(f.norm() <= bound, "sample {k}: {} > {bound}", f.norm());
            assert_eq!(f.rows(3, 3).norm(), 0.0);
            assert!(f.rows(9, 3).norm() <= 1.2);
        }
    }

    #[test]
    fn sinusoid_respects_aggregate_bound() {
        let p = DisturbanceProfile::new(DisturbanceKind::Sinusoidal, 2, vec![0.2, 0.4], 5)
            .unwrap()
            .with_omega(3.0);
        let bound = p.aggregate_bound();
        for k in 0..10_000u32 {
            assert!(p.generate(k as f64 * 0.01).norm() <= bound * (1.0 + 1e-15));
        }
    }

    #[test]
    fn samples_are_deterministic_in_seed_and_time() {
        let a = DisturbanceProfile::new(DisturbanceKind::UniformBall, 2, vec![1.0; 4], 42).unwrap();
        let b = DisturbanceProfile::new(DisturbanceKind::UniformBall, 2, vec![1.0; 4], 42).unwrap();
        assert_eq!(a.generate(0.125), b.generate(0.125));
        assert_ne!(a.generate(0.125), a.generate(0.126));
        let c = DisturbanceProfile::new(DisturbanceKind::UniformBall, 2, vec![1.0; 4], 43).unwrap();
        assert_ne!(a.generate(0.125), c.generate(0.125));
    }

    #[test]
    fn followers_only_for_leader_systems() {
        let p = DisturbanceProfile::for_system(
            DisturbanceKind::UniformBall,
            SystemKind::LeaderFollower,
            2,
            4,
            2,
            0.1,
            0,
        )
        .unwrap();
        assert_eq!(p.applies_to(), vec![false, false, true, true]);
        let q = DisturbanceProfile::with_aggregate_bound(
            DisturbanceKind::UniformBall,
            SystemKind::Leaderless,
            2,
            4,
            0,
            1.0,
            0,
        )
        .unwrap();
        assert!((q.aggregate_bound() - 1.0).abs() < 1e-15);
        assert_eq!(q.applies_to(), vec![true; 4]);
    }
}
