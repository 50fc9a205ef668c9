//! CSV traces and plain-text reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bearform::bounds::{BoundMetric, BoundReport, ParamMode, SpectralInputs};
use bearform::dynamics::{DisturbanceKind, Method, SystemKind};
use clap::ValueEnum;

use crate::runner::{BoundsOnly, DisturbanceSource, OracleResult, Outcome, PreCheck, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Report,
    Both,
}

impl Format {
    fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }

    fn report(self) -> bool {
        matches!(self, Self::Report | Self::Both)
    }
}

/// Full double precision: 17 significant digits.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn axis(k: usize) -> String {
    match k {
        0 => "x".into(),
        1 => "y".into(),
        2 => "z".into(),
        _ => format!("c{}", k + 1),
    }
}

fn labels(system: SystemKind) -> (&'static str, &'static str, &'static str) {
    match system {
        SystemKind::Leaderless => ("p", "err_ea", "bound_Sa"),
        SystemKind::LeaderFollower => ("p", "err_eb", "bound_Sb"),
        SystemKind::Localization => ("phat", "err_ec", "bound_Sc"),
    }
}

pub fn csv_header(system: SystemKind, dim: usize, ids: &[u32]) -> Vec<String> {
    let (prefix, err, bound) = labels(system);
    let mut h = vec!["t".to_string()];
    for id in ids {
        for k in 0..dim {
            h.push(format!("{prefix}{id}{}", axis(k)));
        }
    }
    h.push(err.into());
    h.push(bound.into());
    if system == SystemKind::Leaderless {
        h.push("lmin_RRt".into());
        h.push("lmax_RRt".into());
    }
    h
}

/// The trace as CSV. The error column uses the metric of the bound column.
pub fn csv_string(result: &RunResult) -> Result<String, csv::Error> {
    let s = &result.scenario;
    let trace = &result.trace;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header(s.system, s.dimension, &result.state_ids))?;
    let squared = result
        .report
        .as_ref()
        .map(|r| r.metric == BoundMetric::Squared)
        .unwrap_or(false);
    let bound = result
        .report
        .as_ref()
        .map(|r| r.bound_value.unwrap_or(f64::INFINITY))
        .unwrap_or(f64::NAN);
    let states = result.states_in_file_order();
    for (k, x) in states.iter().enumerate() {
        let mut row = Vec::with_capacity(x.len() + 5);
        row.push(num(trace.times[k]));
        row.extend(x.iter().map(|&v| num(v)));
        let e = trace.error_norms[k];
        row.push(num(if squared { e * e } else { e }));
        row.push(num(bound));
        if s.system == SystemKind::Leaderless {
            let sample = trace.spectral_samples.get(k);
            row.push(num(sample.map_or(f64::NAN, |p| p.lambda_min_plus)));
            row.push(num(sample.map_or(f64::NAN, |p| p.lambda_max)));
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn system_name(s: SystemKind) -> &'static str {
    match s {
        SystemKind::Leaderless => "leaderless",
        SystemKind::LeaderFollower => "leader_follower",
        SystemKind::Localization => "localization",
    }
}

fn write_precheck(out: &mut String, p: &PreCheck) {
    match p {
        PreCheck::Rigidity {
            rigid,
            rank,
            expected_rank,
            null_dim,
        } => {
            let _ = writeln!(
                out,
                "pre-check: infinitesimal bearing rigidity of the target formation"
            );
            let _ = writeln!(
                out,
                "  rank(R_b)        = {rank} (rigid needs {expected_rank})"
            );
            let _ = writeln!(out, "  null space dim   = {null_dim}");
            let _ = writeln!(out, "  rigid            = {rigid}");
        }
        PreCheck::Localizability {
            localizable,
            lambda_min_bff,
        } => {
            let _ = writeln!(out, "pre-check: bearing localizability");
            let _ = writeln!(out, "  lambda_min(B_ff) = {}", num(*lambda_min_bff));
            let _ = writeln!(out, "  localizable      = {localizable}");
        }
    }
}

fn write_disturbance(
    out: &mut String,
    kind: DisturbanceKind,
    source: &DisturbanceSource,
    omega: Option<f64>,
) {
    let kind = match kind {
        DisturbanceKind::None => "none",
        DisturbanceKind::UniformBall => "uniform_ball",
        DisturbanceKind::Sinusoidal => "sinusoidal",
    };
    let _ = writeln!(out, "disturbance: {kind}");
    match source {
        DisturbanceSource::None => {}
        DisturbanceSource::Amplitude { per_agent } => {
            let _ = writeln!(out, "  per-agent bound v = {}", num(*per_agent));
        }
        DisturbanceSource::Aggregate => {
            let _ = writeln!(out, "  aggregate bound given directly");
        }
        DisturbanceSource::ThresholdFraction {
            fraction,
            threshold,
            sampled,
        } => {
            let from = if *sampled {
                "sampled spectra"
            } else {
                "closed form"
            };
            let _ = writeln!(
                out,
                "  F = {fraction} x threshold {} ({from})",
                num(*threshold)
            );
        }
    }
    if let Some(w) = omega {
        let _ = writeln!(out, "  omega = {w}");
    }
}

/// The bound derivation with every input and the admissibility check.
pub fn write_bound(out: &mut String, r: &BoundReport) {
    let f = r.disturbance_bound;
    let _ = writeln!(out, "bound:");
    match r.spectral {
        SpectralInputs::Leaderless {
            lambda_min_plus_t,
            lambda_max_t,
        } => {
            let _ = writeln!(
                out,
                "  set              = ||e_a||^2 <= 2 - 2 sqrt(1 - lambda_max F^2 / lambda_min+^2)"
            );
            let _ = writeln!(out, "  lambda_min+(RRt) = {}", num(lambda_min_plus_t));
            let _ = writeln!(out, "  lambda_max(RRt)  = {}", num(lambda_max_t));
            let _ = writeln!(out, "  F                = {}", num(f));
            if let Some(th) = r.threshold {
                let _ = writeln!(
                    out,
                    "  admissible if F <= lambda_min+ / sqrt(lambda_max) = {}",
                    num(th)
                );
            }
        }
        SpectralInputs::LeaderFollower {
            lambda_min_bff,
            norm_h_bar,
            norm_p_star,
        } => {
            let eps = r.params.epsilon.unwrap_or(f64::NAN);
            let _ = writeln!(out, "  set              = ||e_b|| <= ||p*|| ||H|| F / (sqrt(eps (lambda - eps)) - ||H|| F)");
            let _ = writeln!(out, "  lambda_min(B_ff) = {}", num(lambda_min_bff));
            let _ = writeln!(out, "  ||H_bar||        = {}", num(norm_h_bar));
            let _ = writeln!(out, "  ||p*||           = {}", num(norm_p_star));
            let _ = writeln!(out, "  F                = {}", num(f));
            let _ = writeln!(
                out,
                "  epsilon          = {} ({})",
                num(eps),
                mode(r.params.mode, "lambda/2")
            );
            if let Some(th) = r.threshold {
                let _ = writeln!(
                    out,
                    "  admissible if F < sqrt(eps (lambda - eps)) / ||H_bar|| = {}",
                    num(th)
                );
            }
        }
        SpectralInputs::Localization { lambda_min_bff } => {
            let gamma = r.params.gamma.unwrap_or(f64::NAN);
            let delta = r.params.delta.unwrap_or(f64::NAN);
            let _ = writeln!(
                out,
                "  set              = ||e_c||^2 <= gamma^2 F^2 / (lambda - gamma^-2/4 - delta/2)"
            );
            let _ = writeln!(out, "  lambda_min(B_ff) = {}", num(lambda_min_bff));
            let _ = writeln!(out, "  F                = {}", num(f));
            let _ = writeln!(
                out,
                "  gamma            = {} ({})",
                num(gamma),
                mode(r.params.mode, "gamma^-2 = 2 lambda - delta")
            );
            let _ = writeln!(
                out,
                "  delta            = {} ({})",
                num(delta),
                mode(r.params.mode, "lambda/10")
            );
            let _ = writeln!(
                out,
                "  condition        : lambda - gamma^-2/4 = {} > delta/2 = {}",
                num(lambda_min_bff - 1.0 / (4.0 * gamma * gamma)),
                num(delta / 2.0)
            );
            let _ = writeln!(out, "  every bounded disturbance is admissible");
        }
    }
    let _ = writeln!(out, "  admissible       = {}", r.admissible);
    match r.bound_value {
        Some(b) => {
            let _ = writeln!(
                out,
                "  bound            = {} ({})",
                num(b),
                metric(r.metric)
            );
        }
        None => {
            let _ = writeln!(
                out,
                "  bound            = none: F = {} exceeds the admissible threshold {}",
                num(f),
                num(r.threshold.unwrap_or(f64::NAN))
            );
        }
    }
    if r.a_posteriori {
        let _ = writeln!(out, "  note             : diagnostic (a posteriori); spectral constants come from trajectory sampling");
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Rk4 => "rk4",
        Method::Euler => "euler",
    }
}

fn mode(m: ParamMode, default: &str) -> String {
    match m {
        ParamMode::Default => format!("default, {default}"),
        ParamMode::User => "user".into(),
    }
}

fn metric(m: BoundMetric) -> &'static str {
    match m {
        BoundMetric::Squared => "on the squared error norm",
        BoundMetric::Plain => "on the error norm",
    }
}

pub fn report_string(result: &RunResult) -> String {
    let s = &result.scenario;
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", s.name);
    let _ = writeln!(out, "system: {}", system_name(s.system));
    let _ = writeln!(out, "dimension: {}", s.dimension);
    let _ = writeln!(out, "agents: {}  edges: {}", s.agents.len(), s.edges.len());
    let _ = writeln!(out, "seed: {}", s.seed);
    let i = &s.integrator;
    let _ = writeln!(
        out,
        "integrator: {} dt = {} T = {} record_stride = {}",
        method_name(i.method),
        i.dt,
        i.duration,
        i.record_stride
    );
    write_precheck(&mut out, &result.precheck);
    write_disturbance(
        &mut out,
        s.disturbance.kind,
        &result.disturbance_source,
        s.disturbance.omega,
    );
    let err = labels(s.system).1.trim_start_matches("err_");
    let squared = s.system != SystemKind::LeaderFollower;
    let e0 = result.initial_error;
    if squared {
        let _ = writeln!(out, "initial ||{err}||^2 = {}", num(e0 * e0));
    } else {
        let _ = writeln!(out, "initial ||{err}|| = {}", num(e0));
    }
    if let Some(r) = &result.report {
        write_bound(&mut out, r);
    }
    for ev in &result.trace.events {
        let _ = writeln!(out, "event: {ev}");
    }
    match result.outcome() {
        Outcome::Aborted => {
            let _ = writeln!(
                out,
                "verdict: aborted after {} recorded samples; no trace written",
                result.trace.len()
            );
        }
        _ => {
            if let Some(v) = result.report.as_ref().and_then(|r| r.verdict) {
                let _ = writeln!(out, "verdict:");
                let _ = writeln!(out, "  settle fraction  = {}", v.settle_fraction);
                let _ = writeln!(
                    out,
                    "  steady state     = {} ({})",
                    num(v.steady_state_error),
                    metric(result.report.as_ref().unwrap().metric)
                );
                match v.settling_index {
                    Some(k) => {
                        let _ = writeln!(
                            out,
                            "  settles at       = sample {k} (t = {})",
                            result.trace.times[k]
                        );
                    }
                    None => {
                        let _ = writeln!(out, "  settles at       = never");
                    }
                }
                let _ = writeln!(out, "  contained        = {}", v.contained);
            }
            if let Some(e) = result.final_error() {
                let _ = writeln!(out, "final ||{err}|| = {}", num(e));
            }
        }
    }
    let _ = writeln!(out, "wall time: {:.3} s", result.wall_time.as_secs_f64());
    out
}

pub fn bounds_report_string(b: &BoundsOnly) -> String {
    let s = &b.scenario;
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", s.name);
    let _ = writeln!(out, "system: {}", system_name(s.system));
    write_precheck(&mut out, &b.precheck);
    write_disturbance(
        &mut out,
        s.disturbance.kind,
        &b.disturbance_source,
        s.disturbance.omega,
    );
    write_bound(&mut out, &b.report);
    if b.spectra_at_initial {
        let _ = writeln!(out, "  spectra          : initial configuration only; simulate samples the whole trajectory");
    }
    out
}

pub fn oracle_string(o: &OracleResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "lambda_min(B_ff) = {}", num(o.lambda_min_bff));
    let d = o.dim;
    for (k, id) in o.follower_ids.iter().enumerate() {
        let est: Vec<String> = (0..d).map(|a| num(o.estimates[k * d + a])).collect();
        let _ = writeln!(out, "agent {id}: {}", est.join(" "));
    }
    let _ = writeln!(out, "max |estimate - truth| = {}", num(o.max_deviation()));
    out
}

/// Base name for output files of one run.
pub fn stem(result: &RunResult) -> String {
    format!("{}_seed{}", result.scenario.name, result.scenario.seed)
}

/// Writes the requested files into `dir`. Aborted runs get a report only.
pub fn write_outputs(
    result: &RunResult,
    dir: &Path,
    format: Format,
) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let stem = stem(result);
    let aborted = result.outcome() == Outcome::Aborted;
    if format.csv() && !aborted {
        let path = dir.join(format!("{stem}.csv"));
        let text = csv_string(result).map_err(std::io::Error::other)?;
        fs::write(&path, text)?;
        written.push(path);
    }
    if format.report() || aborted {
        let path = dir.join(format!("{stem}.report.txt"));
        fs::write(&path, report_string(result))?;
        written.push(path);
    }
    Ok(written)
}
