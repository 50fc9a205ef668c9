use std::fs;
use std::process::Command;

use bearform::dynamics::SystemKind;
use bearform_cli::emit::{csv_string, report_string};
use bearform_cli::runner::{self, exit, Outcome, RunError, RunOptions};
use bearform_cli::{bundled_scenario, parse_scenario, BUNDLED};

fn bearform(args: &[&str], cwd: &std::path::Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_bearform"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

const PAIR: &str = r#"
version = 1
name = "pair"
system = "leaderless"
dimension = 2
edges = [[1, 2]]

[[agents]]
id = 1
position = [0.0, 0.0]
target = [0.0, 0.0]

[[agents]]
id = 2
position = [1.0, 0.2]
target = [1.0, 0.0]

[integrator]
dt = 0.001
duration = 0.5
record_stride = 100
method = "rk4"
"#;

#[test]
fn bundled_scenarios_parse_and_round_trip() {
    for (name, text) in BUNDLED {
        let s = parse_scenario(text).unwrap();
        assert_eq!(&s.name, name);
        assert_eq!(parse_scenario(&s.to_toml()).unwrap(), s);
    }
    let s = bundled_scenario("leaderless_5agent_2d");
    assert_eq!((s.agents.len(), s.edges.len()), (5, 10));
    let s = bundled_scenario("leader_follower_2plus2_2d");
    assert_eq!(s.agents.iter().filter(|a| a.leader).count(), 2);
    assert_eq!((s.agents.len(), s.edges.len()), (4, 5));
    let s = bundled_scenario("localization_2plus4_3d");
    assert_eq!(s.agents.iter().filter(|a| a.leader).count(), 2);
    assert_eq!((s.agents.len(), s.dimension), (6, 3));
}

#[test]
fn two_agent_csv_header() {
    let r = runner::run(&parse_scenario(PAIR).unwrap(), &RunOptions::default()).unwrap();
    let csv = csv_string(&r).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "t,p1x,p1y,p2x,p2y,err_ea,bound_Sa,lmin_RRt,lmax_RRt"
    );
    assert_eq!(csv.lines().count(), 1 + 6);
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(
        first[1..5],
        [
            "0.0000000000000000e0",
            "0.0000000000000000e0",
            "1.0000000000000000e0",
            "2.0000000000000001e-1"
        ]
    );
}

#[test]
fn bundled_localization_is_contained() {
    let r = runner::run(
        &bundled_scenario("localization_2plus4_3d"),
        &RunOptions::default(),
    )
    .unwrap();
    assert_eq!(r.outcome(), Outcome::Contained);
    assert_eq!(r.exit_code(), exit::OK);
    assert_eq!(r.state_ids, vec![3, 4, 5, 6]);
    let csv = csv_string(&r).unwrap();
    assert!(csv.starts_with("t,phat3x,phat3y,phat3z,phat4x"));
    assert!(csv.lines().next().unwrap().ends_with("err_ec,bound_Sc"));
}

#[test]
fn leaders_listed_late_keep_file_order_and_stay_put() {
    let mut s = bundled_scenario("leader_follower_2plus2_2d");
    s.integrator.duration = 1.0;
    let r = runner::run(&s, &RunOptions::default()).unwrap();
    // Agent 3 is a leader but third in the file; its columns stay third and fixed.
    assert!(!r.relabeling.as_ref().unwrap().is_identity());
    for x in r.states_in_file_order() {
        assert_eq!((x[4], x[5]), (1.0, 1.0));
        assert_eq!((x[0], x[1]), (0.0, 0.0));
    }
    let header = csv_string(&r).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("t,p1x,p1y,p2x,p2y,p3x,p3y,p4x,p4y,err_eb,bound_Sb"));
}

#[test]
fn non_localizable_network_is_refused_before_running() {
    let text = r#"
version = 1
name = "collinear"
system = "localization"
dimension = 2
edges = [[1, 3], [2, 3]]

[[agents]]
id = 1
leader = true
position = [0.0, 0.0]

[[agents]]
id = 2
leader = true
position = [2.0, 0.0]

[[agents]]
id = 3
position = [1.0, 0.0]
estimate = [0.0, 1.0]
"#;
    let err = runner::run(&parse_scenario(text).unwrap(), &RunOptions::default()).unwrap_err();
    match &err {
        RunError::PreCheck { check: Some(c), .. } => assert!(!c.passed()),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(err.exit_code(), exit::PRECHECK);
}

#[test]
fn explicit_bearings_drive_the_leaderless_system() {
    let text = r#"
version = 1
name = "triangle_bearings"
system = "leaderless"
dimension = 2
edges = [[1, 2], [2, 3], [1, 3]]

[[agents]]
id = 1
position = [0.0, 0.0]

[[agents]]
id = 2
position = [1.2, 0.1]

[[agents]]
id = 3
position = [0.4, 0.9]

[target]
bearings = [
    { edge = [1, 2], g = [1.0, 0.0] },
    { edge = [3, 2], g = [0.7071067811865476, -0.7071067811865476] },
    { edge = [1, 3], g = [0.0, 1.0] },
]

[disturbance]
kind = "sinusoidal"
amplitude = 0.01
omega = 2.0

[integrator]
dt = 0.001
duration = 15.0
record_stride = 100
method = "rk4"
"#;
    let r = runner::run(&parse_scenario(text).unwrap(), &RunOptions::default()).unwrap();
    assert!(
        r.final_error().unwrap() < 0.05,
        "{}",
        r.final_error().unwrap()
    );
    assert!(r.initial_error > 0.1);
    assert_eq!(r.exit_code(), exit::OK);
}

#[test]
fn inadmissible_report_states_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = bundled_scenario("leader_follower_2plus2_2d");
    s.disturbance.threshold_fraction = Some(2.0);
    let path = dir.path().join("s.toml");
    fs::write(&path, s.to_toml()).unwrap();
    let (code, out, _) = bearform(&["bounds", path.to_str().unwrap()], dir.path());
    assert_eq!(code, exit::OK);
    assert!(out.contains("admissible       = false"), "{out}");
    assert!(
        out.contains("exceeds the admissible threshold 2.4999999999999983e-1"),
        "{out}"
    );

    let (code, out, _) = bearform(
        &[
            "simulate",
            path.to_str().unwrap(),
            "--duration",
            "1",
            "--format",
            "report",
        ],
        dir.path(),
    );
    assert_eq!(code, exit::NOT_CONTAINED);
    assert!(out.contains("contained        = false"));
    assert!(!dir
        .path()
        .join("leader_follower_2plus2_2d_seed1.csv")
        .exists());
    assert!(dir
        .path()
        .join("leader_follower_2plus2_2d_seed1.report.txt")
        .exists());
}

#[test]
fn report_shows_every_bound_input() {
    let r = runner::run(
        &bundled_scenario("leader_follower_2plus2_2d"),
        &RunOptions {
            duration: Some(2.0),
            ..Default::default()
        },
    )
    .unwrap();
    let text = report_string(&r);
    for key in [
        "lambda_min(B_ff)",
        "||H_bar||",
        "||p*||",
        "F ",
        "epsilon",
        "admissible if F <",
    ] {
        assert!(text.contains(key), "missing {key}:\n{text}");
    }
    let r = runner::run(
        &bundled_scenario("localization_2plus4_3d"),
        &RunOptions {
            duration: Some(2.0),
            ..Default::default()
        },
    )
    .unwrap();
    let text = report_string(&r);
    for key in ["gamma", "delta", "condition"] {
        assert!(text.contains(key), "missing {key}:\n{text}");
    }
}

#[test]
fn several_seeds_write_separate_files() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = bearform(
        &[
            "simulate",
            "bundled:localization_2plus4_3d",
            "--seed",
            "4",
            "--seed",
            "5",
            "--duration",
            "10",
            "--dt",
            "0.002",
            "--out-dir",
            "out",
        ],
        dir.path(),
    );
    assert_eq!(code, exit::OK, "{err}");
    let a = fs::read_to_string(dir.path().join("out/localization_2plus4_3d_seed4.csv")).unwrap();
    let b = fs::read_to_string(dir.path().join("out/localization_2plus4_3d_seed5.csv")).unwrap();
    assert_ne!(a, b);
    // dt = 0.002 over ten seconds, recorded every 10 steps, plus the header.
    assert_eq!(a.lines().count(), 1 + 501);
}

#[test]
fn subcommands_report_checks() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = bearform(&["list-scenarios"], dir.path());
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), BUNDLED.len());

    let (code, out, _) = bearform(
        &["check-rigidity", "bundled:leaderless_5agent_2d"],
        dir.path(),
    );
    assert_eq!(code, 0);
    assert!(out.contains("rank(R_b) = 7"));

    let (code, out, _) = bearform(
        &["check-localizability", "bundled:localization_2plus4_3d"],
        dir.path(),
    );
    assert_eq!(code, 0);
    assert!(out.contains("bearing localizable = true"));

    let (code, out, _) = bearform(
        &["localize-oracle", "bundled:localization_2plus4_3d"],
        dir.path(),
    );
    assert_eq!(code, 0);
    assert!(out.contains("agent 3: 9.99999999999999"));

    let (code, _, _) = bearform(
        &["localize-oracle", "bundled:leaderless_5agent_2d"],
        dir.path(),
    );
    assert_eq!(code, exit::VALIDATION);

    let (code, _, err) = bearform(&["simulate", "bundled:nope"], dir.path());
    assert_eq!(code, exit::IO);
    assert!(err.contains("no bundled scenario"));

    let (code, _, _) = bearform(&["simulate", "bundled:pair", "--format", "xml"], dir.path());
    assert_eq!(code, exit::VALIDATION);
}

#[test]
fn leaderless_bounds_without_simulation_use_initial_spectra() {
    let b = runner::bounds_only(
        &bundled_scenario("leaderless_5agent_2d"),
        &RunOptions::default(),
    )
    .unwrap();
    assert_eq!(b.report.system, SystemKind::Leaderless);
    assert!(b.spectra_at_initial && b.report.a_posteriori && b.report.admissible);
}

#[test]
fn overrides_are_validated() {
    let s = parse_scenario(PAIR).unwrap();
    let err = runner::run(
        &s,
        &RunOptions {
            dt: Some(-1.0),
            ..Default::default()
        },
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), exit::VALIDATION);
}
