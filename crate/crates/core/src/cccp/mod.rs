//! Convex-concave procedure: every iteration solves one SOCP built around
//! the current point and moves to its optimum.
//!
//! The state only stores the physical point. Auxiliary quantities (SNRs,
//! squared distances, link efficiencies, ratio variables) are recomputed
//! tight from it, which keeps every surrogate exact at the linearization
//! point.

mod builder;

use serde::{Deserialize, Serialize};

pub use builder::{build, build_subproblem, census, Census, DcScaling, Freeze, Subproblem, SubproblemKind};

use crate::error::{Error, Result};
use crate::evaluation::{check_feasibility, objective, SolutionMetrics, DEFAULT_FEASIBILITY_TOL};
use crate::scenario::{
    affine_received_power, consumed_comm_power, laser_efficiency, relay_rates, source_rates, PowerSchedule,
    Scenario, Trajectory, Vec2,
};
use crate::socp::{solve as solve_socp, SolveStatus, SolverOptions};

#[derive(Debug, Clone)]
pub struct CccpOptions {
    /// Relative objective improvement below which an iteration counts as stalled.
    pub tol: f64,
    /// Consecutive stalled iterations before stopping.
    pub patience: usize,
    pub max_iters: usize,
    pub restoration_iters: usize,
    pub solver: SolverOptions,
    pub feasibility_tol: f64,
    pub dc_scaling: DcScaling,
}

impl Default for CccpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            patience: 3,
            max_iters: 500,
            restoration_iters: 20,
            solver: SolverOptions::default(),
            feasibility_tol: DEFAULT_FEASIBILITY_TOL,
            dc_scaling: DcScaling::default(),
        }
    }
}

/// Tight auxiliary values at a physical point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Auxiliaries {
    /// Relay SNR `s^r_n` (slot 0 unused, zero).
    pub snr_relay: Vec<f64>,
    /// Source SNR `s^s_n` (last slot unused, zero).
    pub snr_source: Vec<f64>,
    /// Squared UAV-source distances including altitude.
    pub dist_sq_source: Vec<f64>,
    pub dist_sq_dest: Vec<f64>,
    /// Laser link efficiency `t_n`.
    pub eta: Vec<f64>,
    /// `t_n P_n` (watts).
    pub eta_power: Vec<f64>,
    /// Sum of relay rates.
    pub rate_total: f64,
    /// Energy-efficiency denominator.
    pub power_total: f64,
    pub e_i: f64,
    /// Sum of affine received powers.
    pub harvest_total: f64,
    pub beacon_total: f64,
    pub e_e: f64,
}

impl Auxiliaries {
    pub fn at(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario) -> Self {
        let n = sc.n_slots;
        let h2 = sc.altitude * sc.altitude;
        let ds: Vec<f64> = traj.waypoints.iter().map(|q| h2 + (*q - sc.source_pos).norm_sq()).collect();
        let dd: Vec<f64> = traj.waypoints.iter().map(|q| h2 + (*q - sc.dest_pos).norm_sq()).collect();
        let snr_source = (0..n)
            .map(|i| if i + 1 < n { pw.source[i] * sc.gamma0 / ds[i] } else { 0.0 })
            .collect();
        let snr_relay = (0..n)
            .map(|i| if i > 0 { pw.relay[i] * sc.gamma0 / dd[i] } else { 0.0 })
            .collect();
        let eta: Vec<f64> = traj.waypoints.iter().map(|q| laser_efficiency(*q, sc)).collect();
        let eta_power = eta.iter().zip(&pw.beacon).map(|(t, p)| t * p).collect();
        let rate_total = relay_rates(traj, pw, sc).iter().sum();
        let power_total = consumed_comm_power(pw, sc);
        let harvest_total = (0..n).map(|i| affine_received_power(pw.beacon[i], eta[i], &sc.laser)).sum();
        let beacon_total: f64 = pw.beacon.iter().sum();
        Self {
            snr_relay,
            snr_source,
            dist_sq_source: ds,
            dist_sq_dest: dd,
            eta,
            eta_power,
            rate_total,
            power_total,
            e_i: rate_total / power_total,
            harvest_total,
            beacon_total,
            e_e: harvest_total / beacon_total,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CccpState {
    pub traj: Trajectory,
    pub pw: PowerSchedule,
    pub aux: Auxiliaries,
    pub iteration: usize,
    /// Objective value of every accepted point, starting with the initial one.
    pub history: Vec<f64>,
}

impl CccpState {
    pub fn new(traj: Trajectory, pw: PowerSchedule, sc: &Scenario) -> Self {
        let aux = Auxiliaries::at(&traj, &pw, sc);
        let mut s = Self {
            traj,
            pw,
            aux,
            iteration: 0,
            history: Vec::new(),
        };
        s.history.push(s.objective(sc));
        s
    }

    /// `f_EE + gamma f_PE` at the stored point.
    pub fn objective(&self, sc: &Scenario) -> f64 {
        objective(&self.traj, &self.pw, sc).map(|m| m.objective).unwrap_or(f64::NEG_INFINITY)
    }

    fn with_point(&self, traj: Trajectory, pw: PowerSchedule, sc: &Scenario) -> Self {
        let aux = Auxiliaries::at(&traj, &pw, sc);
        let mut s = Self {
            traj,
            pw,
            aux,
            iteration: self.iteration + 1,
            history: self.history.clone(),
        };
        let v = s.objective(sc);
        s.history.push(v);
        s
    }
}

/// Straight-line schedule at full source and beacon power with the relay
/// echoing the previous slot's source rate.
pub fn nominal_start(sc: &Scenario) -> (Trajectory, PowerSchedule) {
    let traj = Trajectory::straight_line(sc);
    let pw = echo_relay(&traj, PowerSchedule::constant(sc.n_slots, sc.p_max_s, 0.0, sc.pb_max), sc);
    (traj, pw)
}

/// Straight line bent by `bump * sin(pi k / (N - 1))`, constant beacon power
/// `pb_min + beacon_fraction (pb_max - pb_min)`, full source power and an
/// echoing relay. Not necessarily feasible.
pub fn perturbed_start(sc: &Scenario, bump: Vec2, beacon_fraction: f64) -> (Trajectory, PowerSchedule) {
    let n = sc.n_slots;
    let line = Trajectory::straight_line(sc);
    let waypoints = line
        .waypoints
        .iter()
        .enumerate()
        .map(|(k, q)| *q + bump * (std::f64::consts::PI * k as f64 / (n - 1) as f64).sin())
        .collect();
    let traj = Trajectory::new(waypoints);
    let pb = sc.pb_min + beacon_fraction.clamp(0.0, 1.0) * (sc.pb_max - sc.pb_min);
    let pw = echo_relay(&traj, PowerSchedule::constant(n, sc.p_max_s, 0.0, pb), sc);
    (traj, pw)
}

fn echo_relay(traj: &Trajectory, mut pw: PowerSchedule, sc: &Scenario) -> PowerSchedule {
    let rs = source_rates(traj, &pw, sc);
    let h2 = sc.altitude * sc.altitude;
    for i in 1..sc.n_slots {
        let d = h2 + (traj.waypoints[i] - sc.dest_pos).norm_sq();
        let p = (2f64.powf(rs[i - 1]) - 1.0) * d / sc.gamma0;
        pw.relay[i] = p.min(sc.p_max_r);
    }
    pw
}

/// Feasible starting state from the nominal start.
pub fn initialize(sc: &Scenario, opts: &CccpOptions) -> Result<CccpState> {
    let (traj, pw) = nominal_start(sc);
    initialize_from(traj, pw, sc, opts)
}

/// Feasible starting state from `(traj, pw)`; runs slack-penalized
/// restoration when the point misses the sum-rate or energy constraints.
/// Mobility and power boxes must already hold.
pub fn initialize_from(traj: Trajectory, pw: PowerSchedule, sc: &Scenario, opts: &CccpOptions) -> Result<CccpState> {
    sc.validate()?;
    let mut state = CccpState::new(traj, pw, sc);
    if check_feasibility(&state.traj, &state.pw, sc, opts.feasibility_tol)?.feasible {
        return Ok(state);
    }
    for _ in 0..opts.restoration_iters {
        state = step(&state, sc, opts, SubproblemKind::Restoration, Freeze::default())?;
        if check_feasibility(&state.traj, &state.pw, sc, opts.feasibility_tol)?.feasible {
            let mut s = CccpState::new(state.traj, state.pw, sc);
            s.iteration = 0;
            return Ok(s);
        }
    }
    let rep = check_feasibility(&state.traj, &state.pw, sc, opts.feasibility_tol)?;
    let (family, v) = rep.worst();
    Err(Error::NoFeasibleStart(format!(
        "{family} still violated by {v:.3e} (relative) after {} restoration iterations",
        opts.restoration_iters
    )))
}

/// One CCCP step with the given subproblem variant and frozen groups.
pub fn step(state: &CccpState, sc: &Scenario, opts: &CccpOptions, kind: SubproblemKind, freeze: Freeze) -> Result<CccpState> {
    let sub = builder::build(state, sc, kind, freeze, opts.dc_scaling);
    let sol = solve_socp(&sub.program, &opts.solver)?;
    let usable = match sol.status {
        SolveStatus::Optimal => true,
        // Accept a stalled solve only if it is close to optimal.
        SolveStatus::IterLimit => sol.residuals.within(opts.solver.tol.sqrt()),
        _ => false,
    };
    if !usable {
        return Err(Error::Subproblem {
            status: sol.status,
            iteration: state.iteration + 1,
            primal: sol.residuals.primal,
            dual: sol.residuals.dual,
            gap: sol.residuals.gap,
        });
    }
    let (traj, pw) = sub.recover(&sol.x, state, sc);
    Ok(state.with_point(traj, pw, sc))
}

/// One iteration of the procedure on the full variable set.
pub fn iterate(state: &CccpState, sc: &Scenario, opts: &CccpOptions) -> Result<CccpState> {
    step(state, sc, opts, SubproblemKind::Standard, Freeze::default())
}

/// Runs `step` until the relative improvement stays below `opts.tol` for
/// `opts.patience` consecutive iterations.
pub fn run(mut state: CccpState, sc: &Scenario, opts: &CccpOptions, freeze: Freeze) -> Result<CccpState> {
    let mut stalled = 0;
    let start = state.iteration;
    while state.iteration - start < opts.max_iters {
        let prev = *state.history.last().unwrap();
        state = step(&state, sc, opts, SubproblemKind::Standard, freeze)?;
        let cur = *state.history.last().unwrap();
        if (cur - prev) / prev.abs().max(1e-12) < opts.tol {
            stalled += 1;
            if stalled >= opts.patience {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(state)
}

#[derive(Debug, Clone)]
pub struct CccpResult {
    pub traj: Trajectory,
    pub pw: PowerSchedule,
    pub metrics: SolutionMetrics,
    pub history: Vec<f64>,
}

pub fn solve(sc: &Scenario, opts: &CccpOptions) -> Result<CccpResult> {
    let state = initialize(sc, opts)?;
    let state = run(state, sc, opts, Freeze::default())?;
    let metrics = objective(&state.traj, &state.pw, sc)?;
    Ok(CccpResult {
        traj: state.traj,
        pw: state.pw,
        metrics,
        history: state.history,
    })
}
