//! Penalty dual decomposition: the problem is split with auxiliary copies
//! until every constraint couples only a few variables, the copies are tied
//! together by an augmented Lagrangian, and the inner loop sweeps eight
//! blocks with closed-form (or one-dimensional root-search) updates. The
//! outer loop updates the multipliers and shrinks the penalty.

mod blocks;
mod qcqp;
mod state;

use serde::{Deserialize, Serialize};

pub use blocks::{
    beacon_power_update, block1_update_s, block2_update_sbar, block3_update_comm_powers, block4_update_prefix,
    block5_slot, block5_update_copies, block6_slot, block6_update_traj, block7_update_laser_aux,
    block8_update_speed_laserpower, eta_bounds, eta_model, eta_power_update, harvest_update, last_v_tilde,
    rate_block_model, snr_curvature, snr_update, sweep, traj_slot_problem, TrajSlot, PHI_FLOOR,
};
pub use qcqp::{Qcqp1, Qcqp1Solution};
pub use state::{Family, PddState, Pen, Weights};

use crate::cccp::{self, CccpOptions};
use crate::error::Result;
use crate::evaluation::{check_feasibility, objective, FeasibilityReport, SolutionMetrics, DEFAULT_FEASIBILITY_TOL};
use crate::scenario::{
    affine_received_power, flying_energy, laser_efficiency, rate_source_to_uav, rate_uav_to_dest, PowerSchedule,
    Scenario, Trajectory,
};

#[derive(Debug, Clone)]
pub struct PddOptions {
    /// Initial penalty; `None` selects `10 / (1 + |f0|)`.
    pub rho0: Option<f64>,
    pub q_decay: f64,
    /// Inner loop stops once the relative change of the augmented
    /// Lagrangian drops below `inner_tol_factor * rho`.
    pub inner_tol_factor: f64,
    pub max_inner_per_outer: usize,
    pub max_inner_total: usize,
    pub max_outer: usize,
    pub viol_tol: f64,
    /// `None` selects [`Weights::balanced`].
    pub weights: Option<Weights>,
    pub feasibility_tol: f64,
}

impl Default for PddOptions {
    fn default() -> Self {
        Self {
            rho0: None,
            q_decay: 0.8,
            inner_tol_factor: 1e-2,
            max_inner_per_outer: 100,
            max_inner_total: 5000,
            max_outer: 300,
            viol_tol: 1e-4,
            weights: None,
            feasibility_tol: DEFAULT_FEASIBILITY_TOL,
        }
    }
}

/// One inner iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PddRecord {
    pub iteration: usize,
    pub outer: usize,
    /// Split objective at the current iterate.
    pub objective: f64,
    pub al_value: f64,
    pub violation: f64,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct PddResult {
    pub traj: Trajectory,
    pub pw: PowerSchedule,
    pub metrics: SolutionMetrics,
    pub history: Vec<PddRecord>,
    /// Violation reached `viol_tol` before the iteration caps.
    pub converged: bool,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    /// Feasibility of the projected point.
    pub feasibility: FeasibilityReport,
    /// Split state before projection.
    pub state: PddState,
}

/// Runs the inner loop at the current multipliers and penalty. Returns the
/// number of sweeps.
pub fn inner_loop(
    st: &mut PddState,
    sc: &Scenario,
    opts: &PddOptions,
    outer: usize,
    iteration: &mut usize,
    budget: usize,
    history: &mut Vec<PddRecord>,
) -> Result<usize> {
    let mut prev = st.al_value(sc);
    let mut sweeps = 0;
    while sweeps < opts.max_inner_per_outer.min(budget) {
        sweep(st, sc)?;
        sweeps += 1;
        *iteration += 1;
        let cur = st.al_value(sc);
        history.push(PddRecord {
            iteration: *iteration,
            outer,
            objective: st.split_objective(sc),
            al_value: cur,
            violation: st.constraint_violation(sc),
            rho: st.rho,
        });
        if (cur - prev).abs() <= opts.inner_tol_factor * st.rho * cur.abs().max(1.0) {
            break;
        }
        prev = cur;
    }
    Ok(sweeps)
}

pub fn solve(sc: &Scenario, opts: &PddOptions) -> Result<PddResult> {
    let start = cccp::initialize(sc, &CccpOptions::default())?;
    solve_from(&start.traj, &start.pw, sc, opts)
}

/// Runs the method from a given physical point.
pub fn solve_from(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario, opts: &PddOptions) -> Result<PddResult> {
    sc.validate()?;
    let f0 = objective(traj, pw, sc)?.objective;
    let rho0 = opts.rho0.unwrap_or(10.0 / (1.0 + f0.abs()));
    let weights = opts.weights.unwrap_or_else(|| Weights::balanced(sc));
    let mut st = PddState::from_point(traj, pw, sc, rho0, opts.q_decay, weights);
    let mut history = Vec::new();
    let mut iteration = 0;
    let mut outer = 0;
    let mut converged = false;
    loop {
        let budget = opts.max_inner_total - iteration;
        inner_loop(&mut st, sc, opts, outer, &mut iteration, budget, &mut history)?;
        outer += 1;
        if st.constraint_violation(sc) < opts.viol_tol {
            converged = true;
            break;
        }
        if outer >= opts.max_outer || iteration >= opts.max_inner_total {
            break;
        }
        st.dual_and_penalty_update(sc);
    }
    let (traj, pw) = project(&st, sc);
    let feasibility = check_feasibility(&traj, &pw, sc, opts.feasibility_tol)?;
    let metrics = objective(&traj, &pw, sc)?;
    Ok(PddResult {
        traj,
        pw,
        metrics,
        history,
        converged,
        inner_iterations: iteration,
        outer_iterations: outer,
        feasibility,
        state: st,
    })
}

/// Maps a split state to a physical point that satisfies the original
/// constraints: copies are dropped, the trajectory is pulled toward the
/// straight line until the speed limit holds, relay rates are clipped to
/// information causality (and topped up to the sum-rate target where
/// headroom exists), and beacon power is lowered where the harvest would
/// outrun the flight energy.
pub fn project(st: &PddState, sc: &Scenario) -> (Trajectory, PowerSchedule) {
    let n = st.n();
    let mut q = st.q.clone();
    q[0] = sc.q_init;
    q[n - 1] = sc.q_final;
    let line = Trajectory::straight_line(sc).waypoints;
    let max_step = |q: &[crate::scenario::Vec2]| (0..n - 1).map(|i| (q[i + 1] - q[i]).norm()).fold(0.0, f64::max);
    let lim = sc.v_max * sc.delta_t;
    if max_step(&q) > lim {
        let (mut lo, mut hi) = (0.0, 1.0);
        let blend = |w: f64| -> Vec<crate::scenario::Vec2> { (0..n).map(|i| q[i] * (1.0 - w) + line[i] * w).collect() };
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if max_step(&blend(mid)) > lim {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        q = blend(hi);
    }
    let traj = Trajectory::new(q);
    let mut pw = st.powers();
    pw.source[n - 1] = 0.0;
    pw.relay[0] = 0.0;
    for i in 0..n {
        pw.source[i] = pw.source[i].clamp(0.0, sc.p_max_s);
        pw.relay[i] = pw.relay[i].clamp(0.0, sc.p_max_r);
        pw.beacon[i] = pw.beacon[i].clamp(sc.pb_min, sc.pb_max);
    }
    repair_rates(&traj, &mut pw, sc);
    repair_energy(&traj, &mut pw, sc);
    (traj, pw)
}

fn relay_power_for_rate(rate: f64, i: usize, traj: &Trajectory, sc: &Scenario) -> f64 {
    let d = sc.altitude * sc.altitude + (traj.waypoints[i] - sc.dest_pos).norm_sq();
    (rate.exp2() - 1.0) * d / sc.gamma0
}

fn repair_rates(traj: &Trajectory, pw: &mut PowerSchedule, sc: &Scenario) {
    let n = sc.n_slots;
    let q = &traj.waypoints;
    let rs: Vec<f64> = (0..n).map(|i| if i + 1 < n { rate_source_to_uav(pw.source[i], q[i], sc) } else { 0.0 }).collect();
    let mut rr: Vec<f64> = (0..n).map(|i| if i > 0 { rate_uav_to_dest(pw.relay[i], q[i], sc) } else { 0.0 }).collect();
    // Clip to information causality, earliest slot first.
    let mut received = 0.0;
    let mut sent = 0.0;
    for m in 1..n {
        received += rs[m - 1];
        if sent + rr[m] > received {
            rr[m] = (received - sent).max(0.0);
            pw.relay[m] = relay_power_for_rate(rr[m], m, traj, sc).min(pw.relay[m]);
            rr[m] = rate_uav_to_dest(pw.relay[m], q[m], sc);
        }
        sent += rr[m];
    }
    // Top up toward the sum-rate target, latest slot first.
    let mut deficit = sc.r_sum - rr.iter().sum::<f64>();
    if deficit > 0.0 {
        let mut slack = vec![0.0; n];
        let (mut recv, mut snt) = (0.0, 0.0);
        for m in 1..n {
            recv += rs[m - 1];
            snt += rr[m];
            slack[m] = recv - snt;
        }
        for m in (1..n).rev() {
            if deficit <= 0.0 {
                break;
            }
            let tail = slack[m..].iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
            let cap = rate_uav_to_dest(sc.p_max_r, q[m], sc) - rr[m];
            let add = deficit.min(tail).min(cap.max(0.0));
            if add > 0.0 {
                rr[m] += add;
                pw.relay[m] = relay_power_for_rate(rr[m], m, traj, sc).min(sc.p_max_r);
                for s in slack[m..].iter_mut() {
                    *s -= add;
                }
                deficit -= add;
            }
        }
    }
}

fn repair_energy(traj: &Trajectory, pw: &mut PowerSchedule, sc: &Scenario) {
    let n = sc.n_slots;
    let mut flown = 0.0;
    let mut harvested = 0.0;
    for i in 0..n {
        flown += flying_energy(traj.velocity(i, sc.delta_t), sc);
        let eta = laser_efficiency(traj.waypoints[i], sc);
        let rx = |p: f64| affine_received_power(p, eta, &sc.laser).max(0.0);
        let allowed = flown - harvested;
        if rx(pw.beacon[i]) * sc.delta_t > allowed {
            // Invert the affine receive model.
            let lp = &sc.laser;
            let p = (allowed / sc.delta_t - lp.a2 * lp.b1 * eta - lp.b2) / (lp.a1 * lp.a2 * eta);
            pw.beacon[i] = p.clamp(sc.pb_min, pw.beacon[i]);
        }
        harvested += rx(pw.beacon[i]) * sc.delta_t;
    }
}
