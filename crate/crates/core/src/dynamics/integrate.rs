use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::disturbance::DisturbanceProfile;
use super::systems::{FormationSystem, SystemKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub duration: f64,
    pub record_stride: usize,
    pub method: Method,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            duration: 10.0,
            record_stride: 10,
            method: Method::Rk4,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidSettings(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return Err(Error::InvalidSettings(format!(
                "duration {} must be at least dt {}",
                self.duration, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidSettings("record_stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    pub lambda_min_plus: f64,
    pub lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEventKind {
    Collocation { edge: usize },
    NonFinite,
    RankDrop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: f64,
    pub step: usize,
    #[serde(flatten)]
    pub kind: TraceEventKind,
}

impl std::fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            TraceEventKind::Collocation { edge } => {
                write!(
                    f,
                    "collocation on edge {edge} at t = {} (step {})",
                    self.time, self.step
                )
            }
            TraceEventKind::NonFinite => {
                write!(
                    f,
                    "non-finite state at t = {} (step {})",
                    self.time, self.step
                )
            }
            TraceEventKind::RankDrop => {
                write!(
                    f,
                    "R_b R_b^T lost all positive eigenvalues at t = {}",
                    self.time
                )
            }
        }
    }
}

/// Sampled trajectory of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub system: SystemKind,
    pub dt: f64,
    pub record_stride: usize,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `‖e(t)‖` at every recorded sample.
    pub error_norms: Vec<f64>,
    /// Spectrum of `R_b R_bᵀ` at every recorded sample (leaderless only).
    pub spectral_samples: Vec<SpectralSample>,
    /// Running extrema over every integrator step: smallest `λ⁺_min`, largest `λ_max`.
    pub spectral_extrema: Option<SpectralSample>,
    pub events: Vec<TraceEvent>,
    pub completed: bool,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }
}

/// Fixed-step integration of `ẋ = control(x) + f(t)`.
///
/// The disturbance is sampled at the start of each step and held for the
/// whole step. Collocation or a non-finite state ends the run early with an
/// event and `completed = false`.
pub fn integrate(
    system: &dyn FormationSystem,
    initial: &DVector<f64>,
    profile: &DisturbanceProfile,
    settings: &IntegratorSettings,
) -> Result<SimTrace> {
    settings.validate()?;
    if initial.len() != system.state_len() {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, system expects {}",
            initial.len(),
            system.state_len()
        )));
    }
    let dt = settings.dt;
    let steps = settings.steps();
    let mut trace = SimTrace {
        system: system.kind(),
        dt,
        record_stride: settings.record_stride,
        times: Vec::new(),
        states: Vec::new(),
        error_norms: Vec::new(),
        spectral_samples: Vec::new(),
        spectral_extrema: None,
        events: Vec::new(),
        completed: false,
    };

    let mut x = initial.clone();
    for step in 0..=steps {
        let t = step as f64 * dt;
        let record = step % settings.record_stride == 0 || step == steps;

        let sample = match system.spectral_sample(&x) {
            Ok(s) => s,
            Err(e) => {
                trace.events.push(abort_event(e, t, step)?);
                return Ok(trace);
            }
        };
        let spectral = match sample {
            Some(s) => match s.lambda_min_plus {
                Some(lmin) => Some(SpectralSample {
                    lambda_min_plus: lmin,
                    lambda_max: s.lambda_max,
                }),
                None => {
                    trace.events.push(TraceEvent {
                        time: t,
                        step,
                        kind: TraceEventKind::RankDrop,
                    });
                    return Ok(trace);
                }
            },
            None => None,
        };
        if let Some(s) = spectral {
            trace.spectral_extrema = Some(match trace.spectral_extrema {
                None => s,
                Some(prev) => SpectralSample {
                    lambda_min_plus: prev.lambda_min_plus.min(s.lambda_min_plus),
                    lambda_max: prev.lambda_max.max(s.lambda_max),
                },
            });
        }

        if record {
            let err = match system.error(&x) {
                Ok(e) => e,
                Err(e @ Error::Collocation { .. }) => {
                    trace.events.push(abort_event(e, t, step)?);
                    return Ok(trace);
                }
                Err(e) => return Err(e),
            };
            trace.times.push(t);
            trace.states.push(x.clone());
            trace.error_norms.push(err.norm());
            if let Some(s) = spectral {
                trace.spectral_samples.push(s);
            }
        }
        if step == steps {
            break;
        }

        let f = system.restrict_disturbance(&profile.generate(t));
        let next = match settings.method {
            Method::Rk4 => rk4_step(system, &x, &f, dt),
            Method::Euler => system.velocity(&x).map(|v| &x + (v + &f) * dt),
        };
        match next {
            Ok(nx) if nx.iter().all(|v| v.is_finite()) => x = nx,
            Ok(_) => {
                trace.events.push(TraceEvent {
                    time: t + dt,
                    step: step + 1,
                    kind: TraceEventKind::NonFinite,
                });
                return Ok(trace);
            }
            Err(e) => {
                trace.events.push(abort_event(e, t, step)?);
                return Ok(trace);
            }
        }
    }
    trace.completed = true;
    Ok(trace)
}

fn rk4_step(
    system: &dyn FormationSystem,
    x: &DVector<f64>,
    f: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    let k1 = system.velocity(x)? + f;
    let k2 = system.velocity(&(x + &k1 * (dt / 2.0)))? + f;
    let k3 = system.velocity(&(x + &k2 * (dt / 2.0)))? + f;
    let k4 = system.velocity(&(x + &k3 * dt))? + f;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

fn abort_event(e: Error, time: f64, step: usize) -> Result<TraceEvent> {
    match e {
        Error::Collocation { edge, .. } => Ok(TraceEvent {
            time,
            step,
            kind: TraceEventKind::Collocation { edge },
        }),
        other => Err(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        BearingTarget, DisturbanceKind, LeaderFollowerSystem, LeaderlessSystem, LocalizationSystem,
    };
    use crate::geometry::Configuration;
    use crate::graph::{AgentPartition, NetworkGraph};
    use nalgebra::dvector;

    fn square() -> (NetworkGraph, Configuration) {
        let g = NetworkGraph::new(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]).unwrap();
        let p = Configuration::from_points(
            2,
            &[vec![0., 0.], vec![1., 0.], vec![1., 1.], vec![0., 1.]],
        )
        .unwrap();
        (g, p)
    }

    #[test]
    fn settings_are_validated() {
        let bad = IntegratorSettings {
            dt: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = IntegratorSettings {
            dt: 0.1,
            duration: 0.05,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = IntegratorSettings {
            record_stride: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn equilibrium_stays_put() {
        let (g, p) = square();
        let part = AgentPartition::from_leaders(4, &[0, 1]).unwrap();
        let sys = LeaderFollowerSystem::new(g, &part, p.clone()).unwrap();
        let settings = IntegratorSettings {
            duration: 1.0,
            ..Default::default()
        };
        let trace = integrate(
            &sys,
            p.stacked(),
            &DisturbanceProfile::none(2, 4),
            &settings,
        )
        .unwrap();
        assert!(trace.completed);
        assert_eq!(trace.len(), 101);
        for s in &trace.states {
            assert!((s - p.stacked()).amax() < 1e-14);
        }
        assert!(trace.error_norms.iter().all(|&e| e < 1e-14));
    }

    #[test]
    fn leaders_never_move_under_disturbance() {
        let (g, p) = square();
        let part = AgentPartition::from_leaders(4, &[0, 1]).unwrap();
        let sys = LeaderFollowerSystem::new(g, &part, p.clone()).unwrap();
        let profile = DisturbanceProfile::for_system(
            DisturbanceKind::UniformBall,
            SystemKind::LeaderFollower,
            2,
            4,
            2,
            0.2,
            9,
        )
        .unwrap();
        let mut x0 = p.stacked().clone();
        x0[5] += 0.3;
        let settings = IntegratorSettings {
            duration: 2.0,
            ..Default::default()
        };
        let trace = integrate(&sys, &x0, &profile, &settings).unwrap();
        assert!(trace.completed);
        for s in &trace.states {
            assert_eq!(s.rows(0, 4), p.stacked().rows(0, 4));
        }
    }

    #[test]
    fn collocation_aborts_the_run() {
        // Follower starts on top of leader 0.
        let g = NetworkGraph::new(3, &[(0, 2), (1, 2)]).unwrap();
        let p = Configuration::from_points(2, &[vec![0., 0.], vec![2., 0.], vec![1., 1.]]).unwrap();
        let part = AgentPartition::from_leaders(3, &[0, 1]).unwrap();
        let sys = LeaderFollowerSystem::new(g, &part, p).unwrap();
        let x0 = dvector![0., 0., 2., 0., 0., 0.];
        let trace = integrate(
            &sys,
            &x0,
            &DisturbanceProfile::none(2, 3),
            &IntegratorSettings {
                duration: 0.1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!trace.completed);
        assert_eq!(trace.len(), 1);
        assert_eq!(
            trace.events[0].kind,
            TraceEventKind::Collocation { edge: 0 }
        );
    }

    #[test]
    fn leaderless_trace_carries_spectra() {
        let (g, p) = square();
        let t = BearingTarget::from_configuration(&g, p.clone()).unwrap();
        let sys = LeaderlessSystem::new(g, t).unwrap();
        let mut x0 = p.stacked().clone();
        x0[4] += 0.1;
        let settings = IntegratorSettings {
            duration: 0.5,
            record_stride: 5,
            ..Default::default()
        };
        let trace = integrate(&sys, &x0, &DisturbanceProfile::none(2, 4), &settings).unwrap();
        assert_eq!(trace.spectral_samples.len(), trace.len());
        let ext = trace.spectral_extrema.unwrap();
        for s in &trace.spectral_samples {
            assert!(ext.lambda_min_plus <= s.lambda_min_plus);
            assert!(ext.lambda_max >= s.lambda_max);
        }
    }

    #[test]
    fn localization_matches_closed_form_decay() {
        // B_ff = I on the three-node network, so e(t) = e(0)·exp(−t).
        let g = NetworkGraph::new(3, &[(0, 2), (1, 2)]).unwrap();
        let p = Configuration::from_points(2, &[vec![0., 0.], vec![2., 0.], vec![1., 1.]]).unwrap();
        let part = AgentPartition::from_leaders(3, &[0, 1]).unwrap();
        let sys = LocalizationSystem::new(&g, &part, p).unwrap();
        let settings = IntegratorSettings {
            duration: 2.0,
            record_stride: 100,
            ..Default::default()
        };
        let trace = integrate(
            &sys,
            &dvector![0.0, 0.0],
            &DisturbanceProfile::none(2, 3),
            &settings,
        )
        .unwrap();
        for (t, e) in trace.times.iter().zip(&trace.error_norms) {
            let exact = 2f64.sqrt() * (-t).exp();
            assert!((e - exact).abs() < 1e-12, "t={t}: {e} vs {exact}");
        }
    }

    #[test]
    fn euler_and_rk4_agree_to_first_order() {
        let g = NetworkGraph::new(3, &[(0, 2), (1, 2)]).unwrap();
        let p = Configuration::from_points(2, &[vec![0., 0.], vec![2., 0.], vec![1., 1.]]).unwrap();
        let part = AgentPartition::from_leaders(3, &[0, 1]).unwrap();
        let sys = LocalizationSystem::new(&g, &part, p).unwrap();
        let none = DisturbanceProfile::none(2, 3);
        let rk = integrate(
            &sys,
            &dvector![0.0, 0.0],
            &none,
            &IntegratorSettings {
                duration: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let eu = integrate(
            &sys,
            &dvector![0.0, 0.0],
            &none,
            &IntegratorSettings {
                duration: 1.0,
                method: Method::Euler,
                ..Default::default()
            },
        )
        .unwrap();
        let diff = (rk.final_state().unwrap() - eu.final_state().unwrap()).amax();
        assert!(diff < 1e-3 && diff > 0.0);
    }
}
