use bearform::bounds::localization_oracle;
use bearform::dynamics::{
    error_leaderless, integrate, BearingTarget, DisturbanceKind, DisturbanceProfile,
    FormationSystem, IntegratorSettings, LeaderFollowerSystem, LeaderlessSystem,
    LocalizationSystem, SystemKind,
};
use bearform::geometry::Configuration;
use bearform::graph::{AgentPartition, NetworkGraph};
use bearform::rigidity::bearing_rigidity_matrix;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pentagon() -> (NetworkGraph, Configuration) {
    let pts: Vec<Vec<f64>> = (0..5)
        .map(|k| {
            let a = std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::TAU / 5.0;
            vec![a.cos(), a.sin()]
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..5 {
        for j in i + 1..5 {
            edges.push((i, j));
        }
    }
    (
        NetworkGraph::new(5, &edges).unwrap(),
        Configuration::from_points(2, &pts).unwrap(),
    )
}

fn perturbed(p: &Configuration, amount: f64, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    p.stacked().map(|x| x + rng.random_range(-amount..amount))
}

fn square_2plus2() -> LeaderFollowerSystem {
    let g = NetworkGraph::new(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]).unwrap();
    let p =
        Configuration::from_points(2, &[vec![0., 0.], vec![1., 0.], vec![1., 1.], vec![0., 1.]])
            .unwrap();
    let part = AgentPartition::from_leaders(4, &[0, 1]).unwrap();
    LeaderFollowerSystem::new(g, &part, p).unwrap()
}

fn octahedron_2plus4() -> LocalizationSystem {
    let pts = vec![
        vec![0., 0., 1.],
        vec![0., 0., -1.],
        vec![1., 0., 0.],
        vec![0., 1., 0.],
        vec![-1., 0., 0.],
        vec![0., -1., 0.],
    ];
    let mut edges = vec![(2, 3), (3, 4), (4, 5), (2, 5)];
    for f in 2..6 {
        edges.push((0, f));
        edges.push((1, f));
    }
    let g = NetworkGraph::new(6, &edges).unwrap();
    let part = AgentPartition::from_leaders(6, &[0, 1]).unwrap();
    LocalizationSystem::new(&g, &part, Configuration::from_points(3, &pts).unwrap()).unwrap()
}

#[test]
fn leaderless_error_dynamics_match_finite_differences() {
    let (g, p) = pentagon();
    let target = BearingTarget::from_configuration(&g, p.clone()).unwrap();
    let sys = LeaderlessSystem::new(g.clone(), target.clone()).unwrap();
    let profile = DisturbanceProfile::for_system(
        DisturbanceKind::Sinusoidal,
        SystemKind::Leaderless,
        2,
        5,
        0,
        0.05,
        3,
    )
    .unwrap()
    .with_omega(2.0);
    let dt = 1e-4;
    let settings = IntegratorSettings {
        dt,
        duration: 0.05,
        record_stride: 1,
        ..Default::default()
    };
    let trace = integrate(&sys, &perturbed(&p, 0.1, 1), &profile, &settings).unwrap();
    for k in (0..trace.len() - 1).step_by(50) {
        let x = &trace.states[k];
        let e0 = error_leaderless(&g, 2, x, &target).unwrap();
        let e1 = error_leaderless(&g, 2, &trace.states[k + 1], &target).unwrap();
        let fd = (e1 - &e0) / dt;
        let c = Configuration::new(2, x.clone()).unwrap();
        let rb = bearing_rigidity_matrix(&g, &c).unwrap();
        let f = profile.generate(trace.times[k]);
        let model = -(&rb * rb.transpose() * &e0) + &rb * f;
        let scale = model.norm().max(1e-3);
        assert!(
            (fd - &model).norm() <= 50.0 * dt * scale.max(1.0),
            "step {k}"
        );
    }
}

#[test]
fn lyapunov_functions_do_not_increase_without_disturbance() {
    let tol = 1e-12;
    let settings = IntegratorSettings {
        duration: 5.0,
        record_stride: 1,
        ..Default::default()
    };

    let (g, p) = pentagon();
    let t = BearingTarget::from_configuration(&g, p.clone()).unwrap();
    let sys = LeaderlessSystem::new(g, t).unwrap();
    let tr = integrate(
        &sys,
        &perturbed(&p, 0.1, 2),
        &DisturbanceProfile::none(2, 5),
        &settings,
    )
    .unwrap();
    assert!(tr.completed);
    for w in tr.error_norms.windows(2) {
        assert!(0.5 * w[1] * w[1] <= 0.5 * w[0] * w[0] + tol);
    }

    let lf = square_2plus2();
    let mut x0 = lf.p_star().stacked().clone();
    x0[4] += 0.7;
    x0[7] -= 0.5;
    let tr = integrate(&lf, &x0, &DisturbanceProfile::none(2, 4), &settings).unwrap();
    for w in tr.error_norms.windows(2) {
        assert!(0.5 * w[1] * w[1] <= 0.5 * w[0] * w[0] + tol);
    }

    let loc = octahedron_2plus4();
    let x0 = DVector::from_element(12, 0.3);
    let tr = integrate(&loc, &x0, &DisturbanceProfile::none(3, 6), &settings).unwrap();
    for w in tr.error_norms.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn leaderless_trace_is_translation_invariant() {
    let (g, p) = pentagon();
    let t = BearingTarget::from_configuration(&g, p.clone()).unwrap();
    let sys = LeaderlessSystem::new(g, t).unwrap();
    let profile = DisturbanceProfile::for_system(
        DisturbanceKind::UniformBall,
        SystemKind::Leaderless,
        2,
        5,
        0,
        0.05,
        4,
    )
    .unwrap();
    let settings = IntegratorSettings {
        duration: 2.0,
        ..Default::default()
    };
    let x0 = perturbed(&p, 0.1, 3);
    let shift = DVector::from_fn(10, |i, _| if i % 2 == 0 { 0.5 } else { -0.25 });
    let a = integrate(&sys, &x0, &profile, &settings).unwrap();
    let b = integrate(&sys, &(&x0 + &shift), &profile, &settings).unwrap();
    for (sa, sb) in a.states.iter().zip(&b.states) {
        assert!((sb - sa - &shift).amax() <= 1e-10);
    }
    for (ea, eb) in a.error_norms.iter().zip(&b.error_norms) {
        assert!((ea - eb).abs() <= 1e-10);
    }
}

#[test]
fn identical_inputs_give_bit_identical_traces() {
    let lf = square_2plus2();
    let profile = DisturbanceProfile::for_system(
        DisturbanceKind::UniformBall,
        SystemKind::LeaderFollower,
        2,
        4,
        2,
        0.1,
        77,
    )
    .unwrap();
    let mut x0 = lf.p_star().stacked().clone();
    x0[4] -= 0.4;
    let settings = IntegratorSettings {
        duration: 3.0,
        ..Default::default()
    };
    let a = integrate(&lf, &x0, &profile, &settings).unwrap();
    let b = integrate(&lf, &x0, &profile, &settings).unwrap();
    assert_eq!(a, b);
}

#[test]
fn undisturbed_localization_reaches_the_oracle() {
    let loc = octahedron_2plus4();
    let oracle = localization_oracle(loc.matrices(), &loc.anchors()).unwrap();
    assert!((&oracle - loc.true_followers()).amax() <= 1e-10);
    let lambda = loc.lambda_min_bff();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..3 {
        let x0 = DVector::from_fn(12, |_, _| rng.random_range(-3.0..3.0));
        let settings = IntegratorSettings {
            duration: 20.0 / lambda,
            record_stride: 100,
            ..Default::default()
        };
        let tr = integrate(&loc, &x0, &DisturbanceProfile::none(3, 6), &settings).unwrap();
        let end = tr.final_state().unwrap();
        assert!((end - &oracle).amax() <= 1e-6);
        // ‖e_c‖ decreases monotonically for a symmetric positive definite B_ff.
        assert!(tr.error_norms.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn systems_report_their_shapes() {
    let loc = octahedron_2plus4();
    assert_eq!(loc.state_len(), 12);
    assert_eq!(loc.kind(), SystemKind::Localization);
    let lf = square_2plus2();
    assert_eq!(lf.state_len(), 8);
    assert!(lf.lambda_min_bff() > 0.0);
}
