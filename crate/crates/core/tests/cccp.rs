mod common;

use laser_relay::cccp::{self, census, CccpOptions, CccpState, DcScaling, Freeze, SubproblemKind};
use laser_relay::error::Error;
use laser_relay::evaluation::{battery_trace, check_feasibility, objective, BatteryModel, DEFAULT_FEASIBILITY_TOL};
use laser_relay::scenario::{Scenario, Vec2};
use laser_relay::socp::{self, SolveStatus};
use rand::Rng;

fn scaled(n: usize, gamma: f64) -> Scenario {
    let mut sc = Scenario::nominal().with_weight(gamma);
    sc.n_slots = n;
    sc.delta_t = sc.t_total / n as f64;
    sc.r_sum *= n as f64 / 30.0;
    sc
}

#[test]
fn nominal_start_is_feasible_with_battery_above_floor() {
    let sc = Scenario::nominal();
    let st = cccp::initialize(&sc, &CccpOptions::default()).unwrap();
    let (traj, pw) = cccp::nominal_start(&sc);
    // No restoration needed: the start is the constructed point.
    assert_eq!(st.traj, traj);
    assert_eq!(st.pw, pw);
    for (k, w) in traj.waypoints.iter().enumerate() {
        let want = sc.q_init + (sc.q_final - sc.q_init) * (k as f64 / (sc.n_slots - 1) as f64);
        assert!((*w - want).norm() < 1e-9);
    }
    let trace = battery_trace(&traj, &pw, &sc, BatteryModel::default()).unwrap();
    assert!(trace.iter().all(|&e| e >= sc.energy_floor));
    assert!(check_feasibility(&traj, &pw, &sc, DEFAULT_FEASIBILITY_TOL).unwrap().feasible);
}

#[test]
fn hover_start_is_feasible() {
    let mut sc = Scenario::nominal();
    sc.q_init = Vec2::new(500.0, 400.0);
    sc.q_final = sc.q_init;
    // A full battery cannot absorb harvest while hovering; keep the beacon
    // out of range.
    sc.pb_pos = Vec2::new(500.0, 40_000.0);
    let st = cccp::initialize(&sc, &CccpOptions::default()).unwrap();
    assert!(st.traj.waypoints.iter().all(|w| (*w - sc.q_init).norm() < 1e-9));
    assert!(check_feasibility(&st.traj, &st.pw, &sc, DEFAULT_FEASIBILITY_TOL).unwrap().feasible);
}

#[test]
fn unreachable_destination_is_rejected() {
    let mut sc = Scenario::nominal();
    sc.v_max = 0.9 * (sc.q_final - sc.q_init).norm() / sc.t_total;
    assert!(matches!(cccp::initialize(&sc, &CccpOptions::default()), Err(Error::InvalidScenario(_))));
}

#[test]
fn census_regression() {
    // (linear rows, dim-3 cones, dim-4 cones, variables)
    for (n, want) in [(5, (19, 22, 22, 63)), (10, (34, 47, 47, 133)), (30, (94, 147, 147, 413))] {
        let sc = scaled(n, 100.0);
        let st = cccp::initialize(&sc, &CccpOptions::default()).unwrap();
        let c = census(&cccp::build_subproblem(&st, &sc));
        let dims: Vec<usize> = c.soc_by_dim.keys().copied().collect();
        assert_eq!(dims, vec![3, 4], "n = {n}");
        let got = (c.linear_rows, c.soc_by_dim[&3], c.soc_by_dim[&4], c.variables);
        assert_eq!(got, want, "n = {n}");
    }
}

#[test]
fn linearization_point_is_feasible_for_its_subproblem() {
    for gamma in [1.0, 100.0, 1000.0] {
        let sc = scaled(10, gamma);
        let st = cccp::initialize(&sc, &CccpOptions::default()).unwrap();
        let next = cccp::iterate(&st, &sc, &CccpOptions::default()).unwrap();
        assert!(next.objective(&sc) >= st.objective(&sc) * (1.0 - 1e-7), "gamma {gamma}");
    }
}

#[test]
fn surrogate_points_are_feasible() {
    let sc = scaled(10, 100.0);
    let opts = CccpOptions::default();
    let mut rng = common::rng(17);
    let mut st = cccp::initialize(&sc, &opts).unwrap();
    let mut checked = 0;
    for round in 0..3 {
        let sub = cccp::build(&st, &sc, SubproblemKind::Standard, Freeze::default(), DcScaling::default());
        let scale = sub.program.objective.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for _ in 0..8 {
            let mut cp = sub.program.clone();
            // Boxed variables only, so the program stays bounded.
            for j in 0..cp.n {
                if cp.lower[j].is_finite() && cp.upper[j].is_finite() {
                    cp.objective[j] += scale * rng.random_range(-1.0..1.0);
                }
            }
            let sol = socp::solve(&cp, &opts.solver).unwrap();
            // Inclusion only needs a primal-feasible sample, optimal or not.
            let sampled = matches!(sol.status, SolveStatus::Optimal | SolveStatus::IterLimit);
            if !sampled || sol.residuals.primal > 1e-9 {
                continue;
            }
            let (traj, pw) = sub.recover(&sol.x, &st, &sc);
            let rep = check_feasibility(&traj, &pw, &sc, DEFAULT_FEASIBILITY_TOL).unwrap();
            assert!(rep.feasible, "round {round}: {:?}", rep.worst());
            checked += 1;
        }
        st = cccp::iterate(&st, &sc, &opts).unwrap();
    }
    assert!(checked >= 20, "only {checked} bounded samples");
}

#[test]
fn iterates_are_monotone_and_feasible() {
    for gamma in [1.0, 100.0, 1000.0] {
        let sc = scaled(12, gamma);
        let opts = CccpOptions::default();
        let mut st = cccp::initialize(&sc, &opts).unwrap();
        for _ in 0..25 {
            let prev = st.objective(&sc);
            st = cccp::iterate(&st, &sc, &opts).unwrap();
            let cur = st.objective(&sc);
            assert!(cur >= prev - 1e-7 * prev.abs(), "gamma {gamma}: {prev} -> {cur}");
            let rep = check_feasibility(&st.traj, &st.pw, &sc, opts.feasibility_tol).unwrap();
            assert!(rep.feasible, "gamma {gamma}, iteration {}: {:?}", st.iteration, rep.worst());
        }
        assert_eq!(st.history.len(), 26);
    }
}

#[test]
fn converged_point_is_a_fixed_point() {
    let sc = scaled(8, 100.0);
    let opts = CccpOptions {
        tol: 1e-9,
        ..Default::default()
    };
    let res = cccp::solve(&sc, &opts).unwrap();
    let st = CccpState::new(res.traj.clone(), res.pw.clone(), &sc);
    let next = cccp::iterate(&st, &sc, &opts).unwrap();
    let (a, b) = (st.objective(&sc), next.objective(&sc));
    assert!((b - a).abs() <= 1e-6 * a, "{a} -> {b}");
    for (p, q) in st.traj.waypoints.iter().zip(&next.traj.waypoints) {
        assert!((*p - *q).norm() < 0.5, "waypoint moved {}", (*p - *q).norm());
    }
}

#[test]
fn frozen_groups_stay_fixed() {
    let sc = scaled(10, 100.0);
    let opts = CccpOptions::default();
    let st = cccp::initialize(&sc, &opts).unwrap();
    let a = cccp::step(&st, &sc, &opts, SubproblemKind::Standard, Freeze::COMM_ONLY).unwrap();
    assert_eq!(a.traj, st.traj);
    assert_eq!(a.pw.beacon, st.pw.beacon);
    let b = cccp::step(&st, &sc, &opts, SubproblemKind::Standard, Freeze::TRAJECTORY_AND_BEACON).unwrap();
    assert_eq!(b.pw.source, st.pw.source);
    assert_eq!(b.pw.relay, st.pw.relay);
}

#[test]
fn toy_instance_reaches_grid_optimum() {
    for gamma in [1.0, 100.0] {
        let sc = common::toy::toy_scenario(gamma);
        let grid = common::toy::grid_optimum(&sc);
        let res = cccp::solve(&sc, &CccpOptions::default()).unwrap();
        let m = objective(&res.traj, &res.pw, &sc).unwrap();
        assert!(m.objective >= 0.98 * grid.objective, "gamma {gamma}: {} vs grid {}", m.objective, grid.objective);
    }
}
