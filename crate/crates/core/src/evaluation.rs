//! Feasibility checks, objective metrics and a first-order stationarity
//! measure for the original (non-convex) problem.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{
    affine_received_power, check_shapes, consumed_comm_power, f_ee, f_pe, flying_energy, laser_efficiency,
    received_laser_power, received_laser_power_clamped, relay_rates, source_rates, PowerSchedule, Scenario,
    Trajectory, Vec2,
};

pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-6;

/// Worst violation of each constraint family, in native units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Violations {
    /// Endpoint mismatch, meters.
    pub endpoints: f64,
    /// Speed excess, m/s.
    pub speed: f64,
    /// Information causality, bps/Hz.
    pub info_causality: f64,
    /// Battery below the floor, joules.
    pub energy_floor: f64,
    /// Battery above capacity, joules.
    pub energy_cap: f64,
    /// Distance outside the box of any transmit power, watts.
    pub power_bounds: f64,
    /// Sum-rate shortfall, bps/Hz.
    pub rate_sum: f64,
}

impl Violations {
    fn families(&self) -> [(&'static str, f64); 7] {
        [
            ("endpoints", self.endpoints),
            ("speed", self.speed),
            ("info-causality", self.info_causality),
            ("energy-floor", self.energy_floor),
            ("energy-cap", self.energy_cap),
            ("power-bounds", self.power_bounds),
            ("rate-sum", self.rate_sum),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Violations,
    /// Violations divided by the family scale (see [`family_scales`]).
    pub relative: Violations,
    pub tolerance: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    /// Family with the largest relative violation.
    pub fn worst(&self) -> (&'static str, f64) {
        self.relative
            .families()
            .into_iter()
            .fold(("none", 0.0), |a, b| if b.1 > a.1 { b } else { a })
    }
}

/// Normalizers turning native violations into relative ones.
pub fn family_scales(sc: &Scenario) -> Violations {
    Violations {
        endpoints: 1.0 + sc.q_init.dist(sc.q_final),
        speed: sc.v_max.max(1.0),
        info_causality: 1.0 + sc.r_sum,
        energy_floor: sc.energy_budget,
        energy_cap: sc.energy_budget,
        power_bounds: sc.pb_max.max(sc.p_max_s).max(sc.p_max_r),
        rate_sum: sc.r_sum.max(1.0),
    }
}

/// Endpoint and speed violations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityViolation {
    pub endpoint: f64,
    pub speed: f64,
}

pub fn check_mobility(traj: &Trajectory, sc: &Scenario) -> MobilityViolation {
    let w = &traj.waypoints;
    let endpoint = w[0].dist(sc.q_init).max(w[w.len() - 1].dist(sc.q_final));
    let speed = traj
        .velocities(sc.delta_t)
        .iter()
        .map(|v| (v.norm() - sc.v_max).max(0.0))
        .fold(0.0, f64::max);
    MobilityViolation { endpoint, speed }
}

/// Worst `(sum_{2..m} R^r - sum_{1..m-1} R^s)_+`.
pub fn check_info_causality(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario) -> Result<f64> {
    check_shapes(traj, pw, sc)?;
    let rr = relay_rates(traj, pw, sc);
    let rs = source_rates(traj, pw, sc);
    let mut relay = 0.0;
    let mut source = 0.0;
    let mut worst: f64 = 0.0;
    for m in 1..sc.n_slots {
        relay += rr[m];
        source += rs[m - 1];
        worst = worst.max(relay - source);
    }
    Ok(worst)
}

/// How received power enters the battery bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BatteryModel {
    /// Use the raw affine receiver model, which can be negative far from the beacon.
    pub affine_receive: bool,
    /// Cap the stored energy at capacity after every slot.
    pub clamp_capacity: bool,
}

/// Battery level after each slot, starting from a full battery.
pub fn battery_trace(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario, model: BatteryModel) -> Result<Vec<f64>> {
    check_shapes(traj, pw, sc)?;
    let mut level = sc.energy_budget;
    let mut out = Vec::with_capacity(sc.n_slots);
    for n in 0..sc.n_slots {
        let q = traj.waypoints[n];
        let rx = if model.affine_receive {
            received_laser_power(pw.beacon[n], q, sc)
        } else {
            received_laser_power_clamped(pw.beacon[n], q, sc)
        };
        level += rx * sc.delta_t - flying_energy(traj.velocity(n, sc.delta_t), sc);
        if model.clamp_capacity {
            level = level.min(sc.energy_budget);
        }
        out.push(level);
    }
    Ok(out)
}

/// `(max under-floor, max over-cap)` in joules.
pub fn check_energy_causality_with(
    traj: &Trajectory,
    pw: &PowerSchedule,
    sc: &Scenario,
    model: BatteryModel,
) -> Result<(f64, f64)> {
    let trace = battery_trace(traj, pw, sc, model)?;
    let under = trace.iter().map(|b| (sc.energy_floor - b).max(0.0)).fold(0.0, f64::max);
    let over = trace.iter().map(|b| (b - sc.energy_budget).max(0.0)).fold(0.0, f64::max);
    Ok((under, over))
}

/// Energy causality with clamped receive power and no capacity clamp.
pub fn check_energy_causality(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario) -> Result<(f64, f64)> {
    check_energy_causality_with(traj, pw, sc, BatteryModel::default())
}

pub fn check_power_bounds(pw: &PowerSchedule, sc: &Scenario) -> f64 {
    let n = sc.n_slots;
    let out = |v: f64, lo: f64, hi: f64| (lo - v).max(v - hi).max(0.0);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let ps_hi = if i + 1 == n { 0.0 } else { sc.p_max_s };
        let pr_hi = if i == 0 { 0.0 } else { sc.p_max_r };
        worst = worst
            .max(out(pw.source[i], 0.0, ps_hi))
            .max(out(pw.relay[i], 0.0, pr_hi))
            .max(out(pw.beacon[i], sc.pb_min, sc.pb_max));
    }
    worst
}

pub fn sum_rate(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario) -> f64 {
    relay_rates(traj, pw, sc).iter().sum()
}

pub fn check_feasibility(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario, tol: f64) -> Result<FeasibilityReport> {
    check_shapes(traj, pw, sc)?;
    let mob = check_mobility(traj, sc);
    let (under, over) = check_energy_causality(traj, pw, sc)?;
    let v = Violations {
        endpoints: mob.endpoint,
        speed: mob.speed,
        info_causality: check_info_causality(traj, pw, sc)?,
        energy_floor: under,
        energy_cap: over,
        power_bounds: check_power_bounds(pw, sc),
        rate_sum: (sc.r_sum - sum_rate(traj, pw, sc)).max(0.0),
    };
    let s = family_scales(sc);
    let relative = Violations {
        endpoints: v.endpoints / s.endpoints,
        speed: v.speed / s.speed,
        info_causality: v.info_causality / s.info_causality,
        energy_floor: v.energy_floor / s.energy_floor,
        energy_cap: v.energy_cap / s.energy_cap,
        power_bounds: v.power_bounds / s.power_bounds,
        rate_sum: v.rate_sum / s.rate_sum,
    };
    let feasible = relative.families().iter().all(|(_, r)| *r <= tol);
    Ok(FeasibilityReport {
        violations: v,
        relative,
        tolerance: tol,
        feasible,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionMetrics {
    pub f_ee: f64,
    pub f_pe: f64,
    pub gamma: f64,
    /// `f_ee + gamma f_pe`.
    pub objective: f64,
    pub sum_rate: f64,
    /// Battery after each slot (clamped receive power, no capacity clamp).
    pub battery: Vec<f64>,
    pub final_battery: f64,
    /// Same trace with the affine receive model.
    pub battery_affine: Vec<f64>,
    /// Min UAV-beacon horizontal distance over the mission.
    pub min_beacon_distance: f64,
}

pub fn objective(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario) -> Result<SolutionMetrics> {
    let ee = f_ee(traj, pw, sc)?;
    let pe = f_pe(traj, pw, sc)?;
    let battery = battery_trace(traj, pw, sc, BatteryModel::default())?;
    let battery_affine = battery_trace(
        traj,
        pw,
        sc,
        BatteryModel {
            affine_receive: true,
            clamp_capacity: false,
        },
    )?;
    Ok(SolutionMetrics {
        f_ee: ee,
        f_pe: pe,
        gamma: sc.gamma_weight,
        objective: ee + sc.gamma_weight * pe,
        sum_rate: sum_rate(traj, pw, sc),
        final_battery: *battery.last().unwrap(),
        battery,
        battery_affine,
        min_beacon_distance: traj.waypoints.iter().map(|q| q.dist(sc.pb_pos)).fold(f64::INFINITY, f64::min),
    })
}

/// Variables of the original problem in scaled coordinates: interior
/// waypoints divided by the altitude, powers divided by their maxima.
struct Packing {
    n: usize,
}

impl Packing {
    fn len(&self) -> usize {
        2 * (self.n - 2) + (self.n - 1) * 2 + self.n
    }

    fn pack(&self, traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario) -> Vec<f64> {
        let n = self.n;
        let l = sc.altitude;
        let mut x = Vec::with_capacity(self.len());
        for q in &traj.waypoints[1..n - 1] {
            x.push(q.x / l);
            x.push(q.y / l);
        }
        x.extend(pw.source[..n - 1].iter().map(|p| p / sc.p_max_s));
        x.extend(pw.relay[1..].iter().map(|p| p / sc.p_max_r));
        x.extend(pw.beacon.iter().map(|p| p / sc.pb_max));
        x
    }

    fn unpack(&self, x: &[f64], sc: &Scenario) -> (Trajectory, PowerSchedule) {
        let n = self.n;
        let l = sc.altitude;
        let mut w = vec![sc.q_init];
        for k in 0..n - 2 {
            w.push(Vec2::new(x[2 * k] * l, x[2 * k + 1] * l));
        }
        w.push(sc.q_final);
        let o = 2 * (n - 2);
        let mut source = x[o..o + n - 1].iter().map(|p| p * sc.p_max_s).collect::<Vec<_>>();
        source.push(0.0);
        let mut relay = vec![0.0];
        relay.extend(x[o + n - 1..o + 2 * n - 2].iter().map(|p| p * sc.p_max_r));
        let beacon = x[o + 2 * n - 2..].iter().map(|p| p * sc.pb_max).collect();
        (Trajectory::new(w), PowerSchedule { source, relay, beacon })
    }
}

/// Smooth objective: affine receive model without the activation threshold
/// (the power box keeps the beacon above it anyway).
fn smooth_objective(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario) -> f64 {
    let num: f64 = relay_rates(traj, pw, sc).iter().sum();
    let ee = num / consumed_comm_power(pw, sc);
    let rx: f64 = (0..sc.n_slots)
        .map(|n| affine_received_power(pw.beacon[n], laser_efficiency(traj.waypoints[n], sc), &sc.laser))
        .sum();
    let tx: f64 = pw.beacon.iter().sum();
    ee + sc.gamma_weight * rx / tx
}

/// All inequality constraints as scaled `g(x) <= 0`.
fn smooth_constraints(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario, x: &[f64]) -> Vec<f64> {
    let n = sc.n_slots;
    let mut g = Vec::new();
    for v in traj.velocities(sc.delta_t) {
        g.push((v.norm_sq() - sc.v_max * sc.v_max) / (sc.v_max * sc.v_max));
    }
    let rr = relay_rates(traj, pw, sc);
    let rs = source_rates(traj, pw, sc);
    let (mut a, mut b) = (0.0, 0.0);
    for m in 1..n {
        a += rr[m];
        b += rs[m - 1];
        g.push((a - b) / (1.0 + sc.r_sum));
    }
    g.push((sc.r_sum - rr.iter().sum::<f64>()) / sc.r_sum.max(1.0));
    let mut level = sc.energy_budget;
    for k in 0..n {
        let eta = laser_efficiency(traj.waypoints[k], sc);
        level += affine_received_power(pw.beacon[k], eta, &sc.laser) * sc.delta_t
            - flying_energy(traj.velocity(k, sc.delta_t), sc);
        g.push((sc.energy_floor - level) / sc.energy_budget);
        g.push((level - sc.energy_budget) / sc.energy_budget);
    }
    // Box constraints on the scaled powers.
    let o = 2 * (n - 2);
    for (k, &v) in x[o..].iter().enumerate() {
        let lo = if k >= 2 * n - 2 { sc.pb_min / sc.pb_max } else { 0.0 };
        g.push(lo - v);
        g.push(v - 1.0);
    }
    g
}

/// Nonnegative least squares `min |A mu - b|, mu >= 0` (Lawson-Hanson).
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let m = a.ncols();
    let mut x = DVector::zeros(m);
    let mut passive = vec![false; m];
    for _outer in 0..3 * m + 10 {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..m).filter(|&j| !passive[j]).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        match cand {
            Some(j) if w[j] > 1e-12 * (1.0 + w.amax()) => passive[j] = true,
            _ => break,
        }
        loop {
            let idx: Vec<usize> = (0..m).filter(|&j| passive[j]).collect();
            let sub = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
            let z = match sub.clone().svd(true, true).solve(b, 1e-12) {
                Ok(z) => z,
                Err(_) => return x,
            };
            if z.iter().all(|v| *v > 0.0) {
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = z[k];
                }
                for j in 0..m {
                    if !passive[j] {
                        x[j] = 0.0;
                    }
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (k, &j) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    alpha = alpha.min(x[j] / (x[j] - z[k]));
                }
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (z[k] - x[j]);
                if x[j].abs() < 1e-14 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    x
}

/// Options for [`stationarity_residual_with`].
#[derive(Debug, Clone, Copy)]
pub struct StationarityOptions {
    /// Feasibility tolerance required of the input point.
    pub feasibility_tol: f64,
    /// Scaled constraints with `g >= -active_tol` count as active.
    pub active_tol: f64,
}

impl Default for StationarityOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: DEFAULT_FEASIBILITY_TOL,
            active_tol: 1e-4,
        }
    }
}

/// First-order stationarity measure of a feasible point:
/// `min_{mu >= 0} |grad f - sum mu_i grad g_i| / max(1, |grad f|)` over the
/// active constraints, with central finite differences on scaled variables.
pub fn stationarity_residual(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario) -> Result<f64> {
    stationarity_residual_with(traj, pw, sc, StationarityOptions::default())
}

pub fn stationarity_residual_with(
    traj: &Trajectory,
    pw: &PowerSchedule,
    sc: &Scenario,
    opts: StationarityOptions,
) -> Result<f64> {
    let rep = check_feasibility(traj, pw, sc, opts.feasibility_tol)?;
    if !rep.feasible {
        let (family, violation) = rep.worst();
        return Err(Error::Infeasible { family, violation });
    }
    let pk = Packing { n: sc.n_slots };
    let x0 = pk.pack(traj, pw, sc);
    let f = |x: &[f64]| {
        let (t, p) = pk.unpack(x, sc);
        smooth_objective(&t, &p, sc)
    };
    let g = |x: &[f64]| {
        let (t, p) = pk.unpack(x, sc);
        smooth_constraints(&t, &p, sc, x)
    };
    let g0 = g(&x0);
    let active: Vec<usize> = (0..g0.len()).filter(|&i| g0[i] >= -opts.active_tol).collect();
    let dim = x0.len();
    let mut grad_f = DVector::zeros(dim);
    let mut jac = DMatrix::zeros(dim, active.len());
    for j in 0..dim {
        let h = 1e-5 * (1.0 + x0[j].abs());
        let mut xp = x0.clone();
        xp[j] += h;
        let mut xm = x0.clone();
        xm[j] -= h;
        grad_f[j] = (f(&xp) - f(&xm)) / (2.0 * h);
        let (gp, gm) = (g(&xp), g(&xm));
        for (c, &i) in active.iter().enumerate() {
            jac[(j, c)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let norm_f = grad_f.norm();
    if active.is_empty() {
        return Ok(norm_f / norm_f.max(1.0));
    }
    let mu = nnls(&jac, &grad_f);
    let r = &grad_f - &jac * &mu;
    Ok(r.norm() / norm_f.max(1.0))
}
