//! Ultimate-bound sets, admissible disturbance thresholds, the least-squares
//! localization oracle and trace verdicts.
//!
//! The leaderless and localization sets are stated on the squared error norm,
//! the leader-follower set on the plain norm; [`BoundReport::metric`] records
//! which one a report uses and [`verdict`] compares in that metric.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SimTrace, SystemKind};
use crate::error::{Error, Result};
use crate::rigidity::{localizability_of, RigidityMatrices};

/// Fraction of the trace used for the steady-state error when none is given.
pub const DEFAULT_SETTLE_FRACTION: f64 = 0.2;

/// Residual accepted from the oracle's linear solve.
pub const ORACLE_RESIDUAL_TOL: f64 = 1e-10;

/// Tuning constants. `None` selects the default for that constant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamMode {
    Default,
    User,
}

/// Constants actually used to evaluate a bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsUsed {
    pub mode: ParamMode,
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMetric {
    /// Bound is on `‖e‖²`.
    Squared,
    /// Bound is on `‖e‖`.
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum SpectralInputs {
    Leaderless {
        lambda_min_plus_t: f64,
        lambda_max_t: f64,
    },
    LeaderFollower {
        lambda_min_bff: f64,
        norm_h_bar: f64,
        norm_p_star: f64,
    },
    Localization {
        lambda_min_bff: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub settle_fraction: f64,
    /// Largest error over the settling window, in the report's metric.
    pub steady_state_error: f64,
    pub contained: bool,
    /// First sample after which the error never exceeds the bound.
    pub settling_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub system: SystemKind,
    pub metric: BoundMetric,
    /// Aggregate disturbance bound `F`.
    pub disturbance_bound: f64,
    /// Largest admissible `F`; `None` when every bounded disturbance is admissible.
    pub threshold: Option<f64>,
    pub admissible: bool,
    /// Radius (plain metric) or squared radius; `None` when inadmissible.
    pub bound_value: Option<f64>,
    pub params: ParamsUsed,
    pub spectral: SpectralInputs,
    /// Spectral inputs were sampled along a trajectory rather than known up front.
    pub a_posteriori: bool,
    pub verdict: Option<Verdict>,
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::InvalidParams(format!(
            "{name} must be positive and finite, got {x}"
        )));
    }
    Ok(())
}

fn check_disturbance(f: f64) -> Result<()> {
    if !(f.is_finite() && f >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "disturbance bound must be >= 0, got {f}"
        )));
    }
    Ok(())
}

/// Leaderless set: `‖e_a‖² ≤ 2 − 2·sqrt(1 − λ_max F² / (λ⁺_min)²)`, admissible
/// while `F ≤ λ⁺_min / sqrt(λ_max)`. Spectral inputs are trajectory extrema of `R_b R_bᵀ`.
pub fn bound_leaderless(lambda_min_plus_t: f64, lambda_max_t: f64, f: f64) -> Result<BoundReport> {
    check_positive("lambda_min_plus_t", lambda_min_plus_t)?;
    check_positive("lambda_max_t", lambda_max_t)?;
    check_disturbance(f)?;
    let threshold = (lambda_min_plus_t * lambda_min_plus_t / lambda_max_t).sqrt();
    let admissible = f <= threshold;
    let bound_value = admissible.then(|| {
        let ratio = lambda_max_t * f * f / (lambda_min_plus_t * lambda_min_plus_t);
        2.0 - 2.0 * (1.0 - ratio).max(0.0).sqrt()
    });
    Ok(BoundReport {
        system: SystemKind::Leaderless,
        metric: BoundMetric::Squared,
        disturbance_bound: f,
        threshold: Some(threshold),
        admissible,
        bound_value,
        params: ParamsUsed {
            mode: ParamMode::Default,
            epsilon: None,
            gamma: None,
            delta: None,
        },
        spectral: SpectralInputs::Leaderless {
            lambda_min_plus_t,
            lambda_max_t,
        },
        a_posteriori: true,
        verdict: None,
    })
}

/// Admissible disturbance threshold `sqrt(ε(λ − ε)) / ‖H̄‖` for the leader-follower system.
pub fn leader_follower_threshold(lambda_min_bff: f64, norm_h_bar: f64, epsilon: f64) -> f64 {
    (epsilon * (lambda_min_bff - epsilon)).sqrt() / norm_h_bar
}

/// Leader-follower set `‖e_b‖ ≤ ‖p*‖‖H̄‖F / (sqrt(ε(λ − ε)) − ‖H̄‖F)`, with
/// `λ = λ_min(B_ff)`. The default `ε = λ/2` gives the smallest set and the
/// largest admissible `F`.
pub fn bound_leader_follower(
    lambda_min_bff: f64,
    norm_h_bar: f64,
    norm_p_star: f64,
    f: f64,
    params: &BoundParams,
) -> Result<BoundReport> {
    check_positive("lambda_min(B_ff)", lambda_min_bff)?;
    check_positive("norm of lifted incidence", norm_h_bar)?;
    check_disturbance(f)?;
    if !(norm_p_star.is_finite() && norm_p_star >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "||p*|| must be >= 0, got {norm_p_star}"
        )));
    }
    let (epsilon, mode) = match params.epsilon {
        Some(e) => (e, ParamMode::User),
        None => (lambda_min_bff / 2.0, ParamMode::Default),
    };
    if !(epsilon > 0.0 && epsilon < lambda_min_bff) {
        return Err(Error::InvalidParams(format!(
            "epsilon must lie in (0, {lambda_min_bff}), got {epsilon}"
        )));
    }
    let margin = (epsilon * (lambda_min_bff - epsilon)).sqrt();
    let threshold = margin / norm_h_bar;
    let admissible = f < threshold;
    let bound_value = admissible.then(|| norm_p_star * norm_h_bar * f / (margin - norm_h_bar * f));
    Ok(BoundReport {
        system: SystemKind::LeaderFollower,
        metric: BoundMetric::Plain,
        disturbance_bound: f,
        threshold: Some(threshold),
        admissible,
        bound_value,
        params: ParamsUsed {
            mode,
            epsilon: Some(epsilon),
            gamma: None,
            delta: None,
        },
        spectral: SpectralInputs::LeaderFollower {
            lambda_min_bff,
            norm_h_bar,
            norm_p_star,
        },
        a_posteriori: false,
        verdict: None,
    })
}

/// Closed form of the smallest leader-follower set, `2‖p*‖‖H̄‖F / (λ − 2‖H̄‖F)`.
pub fn leader_follower_min_bound(
    lambda_min_bff: f64,
    norm_h_bar: f64,
    norm_p_star: f64,
    f: f64,
) -> Option<f64> {
    let denom = lambda_min_bff - 2.0 * norm_h_bar * f;
    (denom > 0.0).then(|| 2.0 * norm_p_star * norm_h_bar * f / denom)
}

/// Localization set `‖e_c‖² ≤ γ²F² / (λ − γ⁻²/4 − δ/2)` subject to
/// `λ − γ⁻²/4 > δ/2`. Defaults: `δ = λ/10`, `γ⁻² = 2λ − δ`.
pub fn bound_localization(
    lambda_min_bff: f64,
    f: f64,
    params: &BoundParams,
) -> Result<BoundReport> {
    check_positive("lambda_min(B_ff)", lambda_min_bff)?;
    check_disturbance(f)?;
    let user = params.gamma.is_some() || params.delta.is_some();
    let delta = params.delta.unwrap_or(lambda_min_bff / 10.0);
    check_positive("delta", delta)?;
    let inv_gamma_sq = match params.gamma {
        Some(g) => {
            check_positive("gamma", g)?;
            1.0 / (g * g)
        }
        None => 2.0 * lambda_min_bff - delta,
    };
    if !(inv_gamma_sq > 0.0) {
        return Err(Error::InvalidParams(format!(
            "default gamma needs delta < 2·lambda_min(B_ff), got delta = {delta}"
        )));
    }
    let denom = lambda_min_bff - inv_gamma_sq / 4.0 - delta / 2.0;
    if !(denom > 0.0) {
        return Err(Error::InvalidParams(format!(
            "lambda_min(B_ff) - gamma^-2/4 = {} must exceed delta/2 = {}",
            lambda_min_bff - inv_gamma_sq / 4.0,
            delta / 2.0
        )));
    }
    let gamma = (1.0 / inv_gamma_sq).sqrt();
    Ok(BoundReport {
        system: SystemKind::Localization,
        metric: BoundMetric::Squared,
        disturbance_bound: f,
        threshold: None,
        admissible: true,
        bound_value: Some(f * f / (inv_gamma_sq * denom)),
        params: ParamsUsed {
            mode: if user {
                ParamMode::User
            } else {
                ParamMode::Default
            },
            epsilon: None,
            gamma: Some(gamma),
            delta: Some(delta),
        },
        spectral: SpectralInputs::Localization { lambda_min_bff },
        a_posteriori: false,
        verdict: None,
    })
}

/// Solves `B_ff x = −B_fl p_l`, the constrained minimiser of `p̂ᵀ B p̂` with leaders pinned.
pub fn localization_oracle(
    matrices: &RigidityMatrices,
    anchors: &DVector<f64>,
) -> Result<DVector<f64>> {
    let check = localizability_of(matrices);
    if !check.localizable {
        return Err(Error::NotLocalizable {
            lambda_min: check.lambda_min,
        });
    }
    let bff = matrices.b_ff();
    let bfl = matrices.b_fl();
    if anchors.len() != bfl.ncols() {
        return Err(Error::Dimension(format!(
            "expected {} anchor entries, got {}",
            bfl.ncols(),
            anchors.len()
        )));
    }
    let rhs = -(&bfl * anchors);
    let chol = bff.clone().cholesky().ok_or(Error::NotLocalizable {
        lambda_min: check.lambda_min,
    })?;
    let x = chol.solve(&rhs);
    let residual = (&bff * &x - &rhs).norm();
    let scale = rhs.norm().max(1.0);
    if residual > ORACLE_RESIDUAL_TOL * scale {
        return Err(Error::NotLocalizable {
            lambda_min: check.lambda_min,
        });
    }
    Ok(x)
}

/// Compares a completed trace with a bound report.
pub fn verdict(
    report: &BoundReport,
    trace: &SimTrace,
    settle_fraction: f64,
) -> Result<BoundReport> {
    if !trace.completed || trace.is_empty() {
        let why = trace
            .events
            .first()
            .map(ToString::to_string)
            .unwrap_or_else(|| "trace is incomplete".into());
        return Err(Error::AbortedTrace(why));
    }
    if !(settle_fraction > 0.0 && settle_fraction <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "settle fraction must lie in (0, 1], got {settle_fraction}"
        )));
    }
    let errors: Vec<f64> = trace
        .error_norms
        .iter()
        .map(|&e| match report.metric {
            BoundMetric::Squared => e * e,
            BoundMetric::Plain => e,
        })
        .collect();
    let len = errors.len();
    let start = ((len as f64 * (1.0 - settle_fraction)).floor() as usize).min(len - 1);
    let steady_state_error = errors[start..].iter().copied().fold(0.0, f64::max);

    let (contained, settling_index) = match report.bound_value {
        Some(bound) => {
            let settling = match errors.iter().rposition(|&e| e > bound) {
                None => Some(0),
                Some(last) if last + 1 < len => Some(last + 1),
                Some(_) => None,
            };
            (steady_state_error <= bound, settling)
        }
        None => (false, None),
    };
    let mut out = report.clone();
    out.verdict = Some(Verdict {
        settle_fraction,
        steady_state_error,
        contained,
        settling_index,
    });
    Ok(out)
}
