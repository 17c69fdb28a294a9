//! Convex subproblem around a tight point.
//!
//! Scaled variables (L = altitude): waypoints `q / L`, powers over their
//! maxima, SNRs over `p_max gamma0 / L^2`, squared distances over `L^2`,
//! `t_hat`, `P_tilde` and `t_tilde` over the beacon power scale.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::CccpState;
use crate::scenario::{laser_efficiency, PowerSchedule, Scenario, Trajectory, Vec2};
use crate::socp::{ConicProgram, LinExpr};

/// Variable groups held at their current values.
///
/// Freezing the beacon powers requires freezing the trajectory too.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Freeze {
    pub trajectory: bool,
    pub comm_powers: bool,
    pub beacon: bool,
}

impl Freeze {
    /// Only source and relay powers move.
    pub const COMM_ONLY: Freeze = Freeze {
        trajectory: true,
        comm_powers: false,
        beacon: true,
    };
    /// Only the trajectory and beacon powers move.
    pub const TRAJECTORY_AND_BEACON: Freeze = Freeze {
        trajectory: false,
        comm_powers: true,
        beacon: false,
    };
}

/// Relative scaling of the two factors when a bilinear term `x y` is split
/// into a difference of convex squares. The split is not scale invariant,
/// so this choice changes the surrogate (not its fixed points).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DcScaling {
    /// Squares of the quantities in SI units (watts, square meters, ...).
    Native,
    /// Factors rescaled to equal magnitude at the linearization point.
    #[default]
    Balanced,
}

impl DcScaling {
    /// Factor `k` applied as `(k x, y / k)`, given the SI factor.
    fn factor(self, native: f64, x_l: f64, y_l: f64) -> f64 {
        match self {
            DcScaling::Native => native,
            DcScaling::Balanced => {
                let floor = 1e-9;
                (y_l.abs().max(floor) / x_l.abs().max(floor)).sqrt().clamp(1e-4 * native, 1e4 * native)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubproblemKind {
    /// Maximize `E_i + gamma E_e`.
    Standard,
    /// Minimize slacks on the sum-rate and energy rows.
    Restoration,
}

/// Row and cone counts of a program.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Census {
    pub linear_rows: usize,
    /// Cone dimension -> count.
    pub soc_by_dim: BTreeMap<usize, usize>,
    pub variables: usize,
    /// Tag -> (linear rows, cones).
    pub by_tag: BTreeMap<&'static str, (usize, usize)>,
}

pub fn census(cp: &ConicProgram) -> Census {
    let mut c = Census {
        linear_rows: cp.linear.len(),
        variables: cp.n,
        ..Default::default()
    };
    for r in &cp.linear {
        c.by_tag.entry(r.tag).or_default().0 += 1;
    }
    for s in &cp.socs {
        *c.soc_by_dim.entry(s.dim()).or_default() += 1;
        c.by_tag.entry(s.tag).or_default().1 += 1;
    }
    c
}

pub(crate) struct Layout {
    q: Vec<Option<(usize, usize)>>,
    a: Vec<Option<usize>>,
    b: Vec<Option<usize>>,
    pb: Vec<Option<usize>>,
    sig_s: Vec<Option<usize>>,
    sig_r: Vec<Option<usize>>,
    t: Vec<Option<usize>>,
    th: Vec<Option<usize>>,
}

/// A convexified program together with the map from its solution back to a
/// physical point.
pub struct Subproblem {
    pub program: ConicProgram,
    lay: Layout,
    freeze: Freeze,
}

/// Builds the convex subproblem at `state`.
pub fn build_subproblem(state: &CccpState, sc: &Scenario) -> ConicProgram {
    build(state, sc, SubproblemKind::Standard, Freeze::default(), DcScaling::default()).program
}

/// `|x|^2 <= a` as `|(2x, a - 1)| <= a + 1`.
fn quad_le(cp: &mut ConicProgram, x: Vec<LinExpr>, a: LinExpr, tag: &'static str) {
    let mut u: Vec<LinExpr> = x.into_iter().map(|e| e.scaled(2.0)).collect();
    u.push(a.clone().plus(-1.0));
    cp.add_soc(a.plus(1.0), u, tag);
}

/// `x y >= c^2` with `x, y >= 0` as `|(x - y, 2c)| <= x + y`.
fn hyperbolic(cp: &mut ConicProgram, x: LinExpr, y: LinExpr, c: f64, tag: &'static str) {
    cp.add_soc(sum(&x, &y, 1.0), vec![sum(&x, &y, -1.0), LinExpr::constant(2.0 * c)], tag);
}

/// `x + k y`.
fn sum(x: &LinExpr, y: &LinExpr, k: f64) -> LinExpr {
    let mut e = x.clone();
    for &(j, a) in &y.terms {
        e.push(j, k * a);
    }
    e.constant += k * y.constant;
    e
}

fn var_or(ix: Option<usize>, value: f64) -> LinExpr {
    match ix {
        Some(j) => LinExpr::var(j),
        None => LinExpr::constant(value),
    }
}

fn add_into(acc: &mut LinExpr, e: &LinExpr, k: f64) {
    *acc = sum(acc, e, k);
}

pub fn build(
    state: &CccpState,
    sc: &Scenario,
    kind: SubproblemKind,
    freeze: Freeze,
    dc: DcScaling,
) -> Subproblem {
    let n = sc.n_slots;
    let l = sc.altitude;
    let l2 = l * l;
    let h2 = sc.altitude * sc.altitude / l2;
    let pb_scale = sc.pb_max;
    let s_src = sc.p_max_s * sc.gamma0 / l2;
    let s_rel = sc.p_max_r * sc.gamma0 / l2;
    let lp = &sc.laser;
    let (c1, c2, c3) = (lp.a1 * lp.a2, lp.a2 * lp.b1, lp.b2);
    let omega = sc.omega();
    let fly = omega * l2 / (sc.delta_t * sc.delta_t);
    let alpha = sc.alpha();
    let aux = &state.aux;
    let wp: Vec<Vec2> = state.traj.waypoints.iter().map(|q| *q * (1.0 / l)).collect();
    let (qs, qd, qp) = (sc.source_pos * (1.0 / l), sc.dest_pos * (1.0 / l), sc.pb_pos * (1.0 / l));
    let both_frozen = freeze.trajectory && freeze.beacon;

    let mut cp = ConicProgram::new(0);
    let inf = f64::INFINITY;
    let mut lay = Layout {
        q: vec![None; n],
        a: vec![None; n],
        b: vec![None; n],
        pb: vec![None; n],
        sig_s: vec![None; n],
        sig_r: vec![None; n],
        t: vec![None; n],
        th: vec![None; n],
    };
    for i in 0..n {
        if !freeze.trajectory && i > 0 && i + 1 < n {
            lay.q[i] = Some((cp.add_var(-inf, inf), cp.add_var(-inf, inf)));
        }
        if !freeze.comm_powers {
            if i + 1 < n {
                lay.a[i] = Some(cp.add_var(0.0, 1.0));
            }
            if i > 0 {
                lay.b[i] = Some(cp.add_var(0.0, 1.0));
            }
        }
        if !freeze.beacon {
            lay.pb[i] = Some(cp.add_var(sc.pb_min / pb_scale, sc.pb_max / pb_scale));
        }
        if i + 1 < n {
            lay.sig_s[i] = Some(cp.add_var(0.0, inf));
        }
        if i > 0 {
            lay.sig_r[i] = Some(cp.add_var(0.0, inf));
        }
        if !freeze.trajectory {
            lay.t[i] = Some(cp.add_var(0.0, 1.0));
        }
        if !both_frozen {
            lay.th[i] = Some(cp.add_var(0.0, inf));
        }
    }
    let r_tilde = cp.add_var(-inf, inf);
    let p_tilde = cp.add_var(0.0, inf);
    let e_i = cp.add_var(-inf, inf);
    let p_big = cp.add_var(0.0, inf);
    let t_big = cp.add_var(-inf, inf);
    let e_e = cp.add_var(-inf, inf);
    let (zeta_r, zeta_e) = match kind {
        SubproblemKind::Standard => (None, None),
        SubproblemKind::Restoration => (Some(cp.add_var(0.0, inf)), Some(cp.add_var(0.0, inf))),
    };

    let q = |i: usize| -> [LinExpr; 2] {
        match lay.q[i] {
            Some((x, y)) => [LinExpr::var(x), LinExpr::var(y)],
            None => [LinExpr::constant(wp[i].x), LinExpr::constant(wp[i].y)],
        }
    };
    let rel = |i: usize, p: Vec2| -> [LinExpr; 2] {
        let [x, y] = q(i);
        [x.plus(-p.x), y.plus(-p.y)]
    };
    let a = |i: usize| var_or(lay.a[i], state.pw.source[i] / sc.p_max_s);
    let b = |i: usize| var_or(lay.b[i], state.pw.relay[i] / sc.p_max_r);
    let pbx = |i: usize| var_or(lay.pb[i], state.pw.beacon[i] / pb_scale);
    let t = |i: usize| var_or(lay.t[i], aux.eta[i]);
    let th = |i: usize| var_or(lay.th[i], aux.eta_power[i] / pb_scale);
    // Received power in watts.
    let harvest = |i: usize| -> LinExpr { sum(&th(i).scaled(c1 * pb_scale), &t(i).scaled(c2), 1.0).plus(c3) };

    // Mobility and flight energy.
    let mut flight = Vec::with_capacity(n);
    for i in 0..n - 1 {
        let [x1, y1] = q(i + 1);
        let [x0, y0] = q(i);
        let dx = sum(&x1, &x0, -1.0);
        let dy = sum(&y1, &y0, -1.0);
        if lay.q[i].is_some() || lay.q[i + 1].is_some() {
            cp.add_soc(
                LinExpr::constant(sc.v_max * sc.delta_t / l),
                vec![dx.clone(), dy.clone()],
                "speed",
            );
            let e = cp.add_var(0.0, inf);
            quad_le(&mut cp, vec![dx.clone(), dy.clone()], LinExpr::var(e), "flight-energy");
            let d_l = wp[i + 1] - wp[i];
            let lin = sum(&dx.scaled(2.0 * d_l.x), &dy, 2.0 * d_l.y).plus(-d_l.norm_sq());
            flight.push((LinExpr::term(e, fly), lin.scaled(fly)));
        } else {
            let d_l = (wp[i + 1] - wp[i]).norm_sq() * fly;
            flight.push((LinExpr::constant(d_l), LinExpr::constant(d_l)));
        }
    }

    // Rates: distance epigraphs, SNR products and log minorants.
    let mut minor_s = vec![LinExpr::new(); n];
    let mut minor_r = vec![LinExpr::new(); n];
    let mut lin_r = vec![LinExpr::new(); n];
    for i in 0..n {
        for (sig, node, s_scale, d_exact, snr_l, minor, power, tag) in [
            (lay.sig_s[i], qs, s_src, aux.dist_sq_source[i], aux.snr_source[i], &mut minor_s, a(i), "source-snr"),
            (lay.sig_r[i], qd, s_rel, aux.dist_sq_dest[i], aux.snr_relay[i], &mut minor_r, b(i), "relay-snr"),
        ] {
            let Some(sig) = sig else { continue };
            let d = cp.add_var(0.0, inf);
            let [rx, ry] = rel(i, node);
            quad_le(&mut cp, vec![rx, ry], LinExpr::var(d).plus(-h2), "distance");
            let sig_l = snr_l / s_scale;
            let d_l = d_exact / l2;
            let k = dc.factor(s_scale.sqrt() / l, sig_l, d_l);
            dc_upper(&mut cp, (sig, sig_l), (d, d_l), k, power, tag);
            // ln(1+s) >= ln(1+s_l) + 1 - (1+s_l) u with u (1+s) >= 1.
            let u = cp.add_var(0.0, inf);
            let w = LinExpr::term(sig, s_scale / (1.0 + snr_l)).plus(1.0 / (1.0 + snr_l));
            hyperbolic(&mut cp, LinExpr::var(u), w, 1.0, "log-minorant");
            minor[i] = LinExpr::term(u, -1.0 / LN_2).plus((snr_l.ln_1p() + 1.0) / LN_2);
            if tag == "relay-snr" {
                lin_r[i] = LinExpr::term(sig, s_scale / ((1.0 + snr_l) * LN_2))
                    .plus(snr_l.ln_1p() / LN_2 - snr_l / ((1.0 + snr_l) * LN_2));
            }
        }
    }
    if freeze.comm_powers {
        // Fixed relay powers: bound the true relay SNR from above through a
        // lower bound on the squared distance, so causality holds at the
        // physical point.
        for i in 1..n {
            let p = state.pw.relay[i] / sc.p_max_r;
            let snr_l = aux.snr_relay[i];
            let sig_hat = cp.add_var(0.0, inf);
            let r_l = wp[i] - qd;
            let [rx, ry] = rel(i, qd);
            let d_lb = sum(&rx.scaled(2.0 * r_l.x), &ry, 2.0 * r_l.y).plus(h2 - r_l.norm_sq());
            hyperbolic(&mut cp, LinExpr::var(sig_hat), d_lb, p.sqrt(), "relay-snr-upper");
            lin_r[i] = LinExpr::term(sig_hat, s_rel / ((1.0 + snr_l) * LN_2))
                .plus(snr_l.ln_1p() / LN_2 - snr_l / ((1.0 + snr_l) * LN_2));
        }
    }

    // Information causality, m = 2..N.
    let mut lhs = LinExpr::new();
    for m in 1..n {
        add_into(&mut lhs, &lin_r[m], 1.0);
        add_into(&mut lhs, &minor_s[m - 1], -1.0);
        cp.add_le(lhs.clone(), "info-causality");
    }
    let mut rate_sum = LinExpr::new();
    for m in minor_r.iter().skip(1) {
        add_into(&mut rate_sum, m, 1.0);
    }
    let mut row = rate_sum.clone().scaled(-1.0 / sc.r_sum).plus(1.0);
    if let Some(z) = zeta_r {
        row.push(z, -1.0);
    }
    cp.add_le(row, "rate-sum");
    cp.add_le(sum(&LinExpr::var(r_tilde), &rate_sum, -1.0), "rate-aux");

    // Energy-efficiency ratio.
    let mut denom = LinExpr::constant(n as f64 * sc.p_on).add(p_tilde, -1.0);
    for i in 0..n {
        if i + 1 < n {
            add_into(&mut denom, &a(i), sc.upsilon_s * sc.p_max_s);
        }
        if i > 0 {
            add_into(&mut denom, &b(i), sc.upsilon_r * sc.p_max_r);
        }
    }
    cp.add_le(denom, "power-aux");
    let k = dc.factor(1.0, aux.power_total, aux.e_i);
    dc_upper(&mut cp, (p_tilde, aux.power_total), (e_i, aux.e_i), k, LinExpr::var(r_tilde), "ee-ratio");

    // Laser link: efficiency bound, product with beacon power, totals.
    let nf = n as f64;
    let mut harvest_sum = LinExpr::term(t_big, -1.0);
    let mut beacon_sum = LinExpr::term(p_big, -1.0);
    for i in 0..n {
        let eta_l = aux.eta[i];
        let pb_l = state.pw.beacon[i] / pb_scale;
        if let Some(tv) = lay.t[i] {
            // sqrt(H^2 + |q - q_P|^2) <= -ln t / alpha, linearized in t.
            let [rx, ry] = rel(i, qp);
            let k = 1.0 / (alpha * l);
            cp.add_soc(
                LinExpr::term(tv, -k / eta_l).plus(k * (1.0 - eta_l.ln())),
                vec![LinExpr::constant(h2.sqrt()), rx, ry],
                "laser-efficiency",
            );
        }
        if let Some(thv) = lay.th[i] {
            // t_hat <= t P; linear when one factor is frozen.
            match (lay.t[i], lay.pb[i]) {
                (Some(tv), Some(pv)) => {
                    let k = dc.factor(1.0 / pb_scale.sqrt(), eta_l, pb_l);
                    dc_lower(&mut cp, (tv, eta_l), (pv, pb_l), k, LinExpr::var(thv), "eta-power");
                }
                (Some(tv), None) => cp.add_le(LinExpr::var(thv).add(tv, -pb_l), "eta-power"),
                (None, Some(pv)) => cp.add_le(LinExpr::var(thv).add(pv, -eta_l), "eta-power"),
                (None, None) => cp.add_le(LinExpr::var(thv).plus(-eta_l * pb_l), "eta-power"),
            }
        }
        add_into(&mut harvest_sum, &harvest(i), 1.0 / (nf * pb_scale));
        add_into(&mut beacon_sum, &pbx(i), 1.0 / nf);
    }
    cp.add_le(harvest_sum.scaled(-1.0), "harvest-aux");
    cp.add_le(beacon_sum, "beacon-aux");
    let p_big_l = aux.beacon_total / (nf * pb_scale);
    let k = dc.factor((nf * pb_scale).sqrt(), p_big_l, aux.e_e);
    dc_upper(&mut cp, (p_big, p_big_l), (e_e, aux.e_e), k, LinExpr::var(t_big), "pe-ratio");

    // Energy causality: floor with exact flight energy, cap with its
    // linearization.
    let e_cap = sc.energy_budget;
    let mut used = LinExpr::new();
    let mut used_lin = LinExpr::new();
    let mut gained = LinExpr::new();
    for m in 0..n {
        if m + 1 < n {
            add_into(&mut used, &flight[m].0, 1.0);
            add_into(&mut used_lin, &flight[m].1, 1.0);
        }
        add_into(&mut gained, &harvest(m), sc.delta_t);
        let mut floor = sum(&used, &gained, -1.0).plus(sc.energy_floor - e_cap).scaled(1.0 / e_cap);
        let mut cap = sum(&gained, &used_lin, -1.0).scaled(1.0 / e_cap);
        if let Some(z) = zeta_e {
            floor.push(z, -1.0);
            cap.push(z, -1.0);
        }
        cp.add_le(floor, "energy-floor");
        cp.add_le(cap, "energy-cap");
    }

    match kind {
        SubproblemKind::Standard => {
            cp.objective[e_i] = 1.0;
            cp.objective[e_e] = sc.gamma_weight;
        }
        SubproblemKind::Restoration => {
            cp.objective[zeta_r.unwrap()] = -1.0;
            cp.objective[zeta_e.unwrap()] = -1.0;
        }
    }
    Subproblem { program: cp, lay, freeze }
}

/// `x y <= z` as `(k x + y / k)^2 <= 2 z + lin(k^2 x^2 + y^2 / k^2)`.
fn dc_upper(cp: &mut ConicProgram, x: (usize, f64), y: (usize, f64), k: f64, z: LinExpr, tag: &'static str) {
    let (k2, (x, x_l), (y, y_l)) = (k * k, x, y);
    let rhs = z
        .scaled(2.0)
        .add(x, 2.0 * k2 * x_l)
        .add(y, 2.0 * y_l / k2)
        .plus(-k2 * x_l * x_l - y_l * y_l / k2);
    quad_le(cp, vec![LinExpr::term(x, k).add(y, 1.0 / k)], rhs, tag);
}

/// `z <= x y` as `k^2 x^2 + y^2 / k^2 + 2 z <= lin((k x + y / k)^2)`.
fn dc_lower(cp: &mut ConicProgram, x: (usize, f64), y: (usize, f64), k: f64, z: LinExpr, tag: &'static str) {
    let ((x, x_l), (y, y_l)) = (x, y);
    let s_l = k * x_l + y_l / k;
    let rhs = LinExpr::term(x, 2.0 * s_l * k)
        .add(y, 2.0 * s_l / k)
        .plus(-s_l * s_l);
    let rhs = sum(&rhs, &z, -2.0);
    quad_le(cp, vec![LinExpr::term(x, k), LinExpr::term(y, 1.0 / k)], rhs, tag);
}

impl Subproblem {
    /// Physical point from a subproblem solution. Transmit powers are
    /// lowered to the smallest values that deliver the solved SNRs and
    /// received powers, unless their group is frozen.
    pub fn recover(&self, x: &[f64], state: &CccpState, sc: &Scenario) -> (Trajectory, PowerSchedule) {
        let n = sc.n_slots;
        let l = sc.altitude;
        let l2 = l * l;
        let lp = &sc.laser;
        let (c1, c2, c3) = (lp.a1 * lp.a2, lp.a2 * lp.b1, lp.b2);
        let lay = &self.lay;
        let waypoints: Vec<Vec2> = (0..n)
            .map(|i| match lay.q[i] {
                Some((a, b)) => Vec2::new(x[a] * l, x[b] * l),
                None => state.traj.waypoints[i],
            })
            .collect();
        let traj = Trajectory::new(waypoints);
        let mut pw = state.pw.clone();
        let h2 = sc.altitude * sc.altitude;
        for i in 0..n {
            let q = traj.waypoints[i];
            if !self.freeze.comm_powers {
                if let (Some(ai), Some(si)) = (lay.a[i], lay.sig_s[i]) {
                    let d = (h2 + (q - sc.source_pos).norm_sq()) / l2;
                    pw.source[i] = sc.p_max_s * x[ai].min(x[si] * d).clamp(0.0, 1.0);
                }
                if let (Some(bi), Some(si)) = (lay.b[i], lay.sig_r[i]) {
                    let d = (h2 + (q - sc.dest_pos).norm_sq()) / l2;
                    pw.relay[i] = sc.p_max_r * x[bi].min(x[si] * d).clamp(0.0, 1.0);
                }
            }
            if let Some(pi) = lay.pb[i] {
                let p = x[pi] * sc.pb_max;
                let t = lay.t[i].map_or(state.aux.eta[i], |j| x[j]);
                let th = lay.th[i].map_or(state.aux.eta_power[i], |j| x[j] * sc.pb_max);
                let model = c1 * th + c2 * t + c3;
                let eta = laser_efficiency(q, sc);
                let needed = (model - c2 * eta - c3) / (c1 * eta);
                pw.beacon[i] = p.min(needed).clamp(sc.pb_min, sc.pb_max);
            }
        }
        (traj, pw)
    }
}
