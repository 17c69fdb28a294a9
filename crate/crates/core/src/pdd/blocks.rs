//! The eight block updates of one inner sweep. Each one minimizes the
//! negated augmented Lagrangian over its block, either exactly or through a
//! majorizer that is tight at the current point.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use super::qcqp::Qcqp1;
use super::state::{energy_flight_index, Family, Pen, PddState};
use crate::error::{Error, Result};
use crate::scenario::{Scenario, Vec2};

/// Lower bound on majorizer curvatures.
pub const PHI_FLOOR: f64 = 1e-6;

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

/// Majorized SNR update for one slot: minimizes
/// `link.k (p gamma0 - s d + link.s)^2 + rate.k (log2(1+s) - sbar + rate.s)^2`
/// after replacing the log term by its quadratic upper bound at `s_hat`.
pub fn snr_update(s_hat: f64, p: f64, d: f64, sbar: f64, link: Pen, rate: Pen, gamma0: f64) -> f64 {
    let c = sbar - rate.s;
    let g = log2_1p(s_hat);
    let gp = 1.0 / (LN_2 * (1.0 + s_hat));
    let phi = snr_curvature(c);
    let a = p * gamma0 + link.s;
    let num = 2.0 * link.k * d * a - 2.0 * rate.k * (g - c) * gp + rate.k * phi * s_hat;
    let den = 2.0 * link.k * d * d + rate.k * phi;
    (num / den).max(0.0)
}

/// Supremum over `s >= 0` of the second derivative of `(log2(1+s) - c)^2`,
/// floored.
pub fn snr_curvature(c: f64) -> f64 {
    ((2.0 + 2.0 * LN_2 * c) / (LN_2 * LN_2)).max(PHI_FLOOR)
}

pub fn block1_update_s(st: &mut PddState, sc: &Scenario) {
    let n = st.n();
    for i in 0..n {
        st.snr_r[i] = if i > 0 {
            let (link, rate) = (st.pen(Family::LinkRelay, i), st.pen(Family::RateRelay, i));
            snr_update(st.snr_r[i], st.p_r[i], st.d_d[i], st.rate_r[i], link, rate, sc.gamma0)
        } else {
            0.0
        };
        st.snr_s[i] = if i + 1 < n {
            let (link, rate) = (st.pen(Family::LinkSource, i), st.pen(Family::RateSource, i));
            snr_update(st.snr_s[i], st.p_s[i], st.d_s[i], st.rate_s[i], link, rate, sc.gamma0)
        } else {
            0.0
        };
    }
}

/// Quadratic model `x'Bx + b'x` of the rate block, with
/// `x = [sbar^s_0 .. sbar^s_{N-2}, sbar^r_1 .. sbar^r_{N-1}]`.
pub fn rate_block_model(st: &PddState, sc: &Scenario) -> (DMatrix<f64>, DVector<f64>) {
    let n = st.n();
    let m = n - 1;
    let mut bm = DMatrix::zeros(2 * m, 2 * m);
    let mut bv = DVector::zeros(2 * m);
    let denom = st.comm_power(sc);
    for k in 0..m {
        let ps = st.pen(Family::RateSource, k);
        bm[(k, k)] += ps.k;
        bv[k] -= 2.0 * ps.k * (log2_1p(st.snr_s[k]) + ps.s);
        let pr = st.pen(Family::RateRelay, k + 1);
        bm[(m + k, m + k)] += pr.k;
        bv[m + k] -= 2.0 * pr.k * (log2_1p(st.snr_r[k + 1]) + pr.s) + 1.0 / denom;
    }
    for j in 1..n {
        // a_j: -1 on sbar^s_0..j-1, +1 on sbar^r_1..j
        let pi = st.pen(Family::Info, j);
        let idx: Vec<(usize, f64)> = (0..j).map(|k| (k, -1.0)).chain((0..j).map(|k| (m + k, 1.0))).collect();
        for &(a, va) in &idx {
            bv[a] += 2.0 * pi.k * (pi.s - st.info_gap[j]) * va;
            for &(b, vb) in &idx {
                bm[(a, b)] += pi.k * va * vb;
            }
        }
    }
    (bm, bv)
}

pub fn block2_update_sbar(st: &mut PddState, sc: &Scenario) -> Result<()> {
    let n = st.n();
    let m = n - 1;
    let (bm, bv) = rate_block_model(st, sc);
    let chol = bm
        .cholesky()
        .ok_or_else(|| Error::Block("rate block matrix is not positive definite".into()))?;
    let u = chol.solve(&bv);
    let unconstrained_sum: f64 = -0.5 * u.rows(m, m).sum();
    let x = if unconstrained_sum >= sc.r_sum {
        -0.5 * u
    } else {
        let mut a1 = DVector::zeros(2 * m);
        a1.rows_mut(m, m).fill(-1.0);
        let v = chol.solve(&a1);
        let lam = (2.0 * sc.r_sum - a1.dot(&u)) / a1.dot(&v);
        -0.5 * (u + lam * v)
    };
    for k in 0..m {
        st.rate_s[k] = x[k];
        st.rate_r[k + 1] = x[m + k];
    }
    st.rate_s[n - 1] = 0.0;
    st.rate_r[0] = 0.0;
    Ok(())
}

pub fn block3_update_comm_powers(st: &mut PddState, sc: &Scenario) {
    let n = st.n();
    let denom = st.comm_power(sc);
    let num = st.rate_total();
    let g = num / (denom * denom);
    let g0 = sc.gamma0;
    for i in 0..n {
        st.p_r[i] = if i > 0 {
            let pl = st.pen(Family::LinkRelay, i);
            let p = (st.snr_r[i] * st.d_d[i] - pl.s) / g0 - sc.upsilon_r * g / (2.0 * pl.k * g0 * g0);
            p.clamp(0.0, sc.p_max_r)
        } else {
            0.0
        };
        st.p_s[i] = if i + 1 < n {
            let pl = st.pen(Family::LinkSource, i);
            let p = (st.snr_s[i] * st.d_s[i] - pl.s) / g0 - sc.upsilon_s * g / (2.0 * pl.k * g0 * g0);
            p.clamp(0.0, sc.p_max_s)
        } else {
            0.0
        };
    }
}

pub fn block4_update_prefix(st: &mut PddState, sc: &Scenario) {
    let n = st.n();
    st.info_gap[0] = 0.0;
    for m in 1..n {
        let p = st.pen(Family::Info, m);
        st.info_gap[m] = (st.info_prefix(m) + p.s).min(0.0);
    }
    for m in 0..n {
        let p = st.pen(Family::Energy, m);
        st.energy_gap[m] = (st.energy_prefix(m, sc) + p.s).clamp(sc.energy_floor - sc.energy_budget, 0.0);
    }
}

/// Copy `x` of `q` constrained to `H^2 + |x - node|^2 = d`, with an optional
/// link term `k (p gamma0 - s d + s_shift)^2` and an optional second copy
/// pulling toward `x`.
struct DistanceCopy {
    anchor: Vec2,
    anchor_pen: [Pen; 2],
    follower: Option<(Vec2, [Pen; 2])>,
    link: Option<(f64, f64, Pen)>,
    node: Vec2,
}

fn solve_distance_copy(dc: &DistanceCopy, sc: &Scenario) -> Result<(Vec2, f64)> {
    let h2 = sc.altitude * sc.altitude;
    let mut pr = Qcqp1::new(3);
    let anchor = [dc.anchor.x, dc.anchor.y];
    for j in 0..2 {
        pr.add_square(dc.anchor_pen[j].k, &[(j, 1.0)], -anchor[j] + dc.anchor_pen[j].s);
        if let Some((f, pens)) = &dc.follower {
            let fv = [f.x, f.y];
            pr.add_square(pens[j].k, &[(j, -1.0)], fv[j] + pens[j].s);
        }
    }
    let link = dc.link.filter(|(_, s, _)| *s > 0.0);
    let q = match link {
        None => {
            // The distance is pinned by the constraint alone.
            let x0 = -pr.b[0] / (2.0 * pr.a[(0, 0)]);
            let x1 = -pr.b[1] / (2.0 * pr.a[(1, 1)]);
            Vec2::new(x0, x1)
        }
        Some((pg, s, pen)) => {
            pr.add_square(pen.k, &[(2, -s)], pg + pen.s);
            pr.c_quad[(0, 0)] = 1.0;
            pr.c_quad[(1, 1)] = 1.0;
            pr.c_lin[0] = -2.0 * dc.node.x;
            pr.c_lin[1] = -2.0 * dc.node.y;
            pr.c_lin[2] = -1.0;
            pr.d = dc.node.norm_sq() + h2;
            let sol = pr.solve()?;
            Vec2::new(sol.x[0], sol.x[1])
        }
    };
    Ok((q, h2 + (q - dc.node).norm_sq()))
}

fn copy_pens(st: &PddState, f: Family, i: usize) -> [Pen; 2] {
    [st.pen(f, 2 * i), st.pen(f, 2 * i + 1)]
}

/// Updates `(q_bar, d^S)`, `(q_hat, t^L)` and `(q_dot, d^D)` of one slot.
pub fn block5_slot(st: &PddState, sc: &Scenario, i: usize) -> Result<[(Vec2, f64); 3]> {
    let n = st.n();
    let src = DistanceCopy {
        anchor: st.q[i],
        anchor_pen: copy_pens(st, Family::CopyBar, i),
        follower: (i > 0).then(|| (st.q_tilde[i], copy_pens(st, Family::CopyTilde, i))),
        link: (i + 1 < n).then(|| (st.p_s[i] * sc.gamma0, st.snr_s[i], st.pen(Family::LinkSource, i))),
        node: sc.source_pos,
    };
    let dst = DistanceCopy {
        anchor: st.q[i],
        anchor_pen: copy_pens(st, Family::CopyDot, i),
        follower: None,
        link: (i > 0).then(|| (st.p_r[i] * sc.gamma0, st.snr_r[i], st.pen(Family::LinkRelay, i))),
        node: sc.dest_pos,
    };
    let bar = solve_distance_copy(&src, sc)?;
    let dot = solve_distance_copy(&dst, sc)?;

    // (q_hat, t^L) on the hyperboloid |q_hat - q_P|^2 + H^2 = (t^L)^2.
    let alpha = sc.alpha();
    let h2 = sc.altitude * sc.altitude;
    let mut pr = Qcqp1::new(3);
    let ph = copy_pens(st, Family::CopyHat, i);
    pr.add_square(ph[0].k, &[(0, 1.0)], -st.q[i].x + ph[0].s);
    pr.add_square(ph[1].k, &[(1, 1.0)], -st.q[i].y + ph[1].s);
    let pl = st.pen(Family::LogEta, i);
    pr.add_square(pl.k, &[(2, -alpha)], st.eta[i].ln() + pl.s);
    pr.c_quad[(0, 0)] = 1.0;
    pr.c_quad[(1, 1)] = 1.0;
    pr.c_quad[(2, 2)] = -1.0;
    pr.c_lin[0] = -2.0 * sc.pb_pos.x;
    pr.c_lin[1] = -2.0 * sc.pb_pos.y;
    pr.d = sc.pb_pos.norm_sq() + h2;
    let sol = pr.solve()?;
    let qh = Vec2::new(sol.x[0], sol.x[1]);
    let range = (h2 + (qh - sc.pb_pos).norm_sq()).sqrt();
    let tl = if sol.x[2] > 0.0 { range } else { -range };
    Ok([bar, (qh, tl), dot])
}

pub fn block5_update_copies(st: &mut PddState, sc: &Scenario) -> Result<()> {
    let n = st.n();
    let out: Vec<[(Vec2, f64); 3]> = (0..n).map(|i| block5_slot(st, sc, i)).collect::<Result<_>>()?;
    for (i, [bar, hat, dot]) in out.into_iter().enumerate() {
        st.q_bar[i] = bar.0;
        st.d_s[i] = bar.1;
        st.q_hat[i] = hat.0;
        st.log_range[i] = hat.1;
        st.q_dot[i] = dot.0;
        st.d_d[i] = dot.1;
    }
    Ok(())
}

/// Variables of the per-slot trajectory subproblem `n < N-1`:
/// `(q_n, q_tilde_{n+1}, v_breve_{n+1}, v_tilde_n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajSlot {
    pub q: Vec2,
    pub q_next: Vec2,
    pub v_breve: f64,
    pub v_tilde: f64,
}

/// Harvest part of energy residual `m`, `(sum_{i<=m} t_breve_i + (m+1) b2) dt`.
fn harvest_prefix(st: &PddState, sc: &Scenario, m: usize) -> f64 {
    (st.harvest[..=m].iter().sum::<f64>() + (m + 1) as f64 * sc.laser.b2) * sc.delta_t
}

/// Quadratic model and constraint of slot `i` with endpoints substituted.
pub fn traj_slot_problem(st: &PddState, sc: &Scenario, i: usize) -> (Qcqp1, Vec<Option<f64>>) {
    let n = st.n();
    let omega = sc.omega();
    let mut pr = Qcqp1::new(6);
    for (f, c) in [
        (Family::CopyDot, st.q_dot[i]),
        (Family::CopyBar, st.q_bar[i]),
        (Family::CopyHat, st.q_hat[i]),
    ] {
        let p = copy_pens(st, f, i);
        pr.add_square(p[0].k, &[(0, -1.0)], c.x + p[0].s);
        pr.add_square(p[1].k, &[(1, -1.0)], c.y + p[1].s);
    }
    let pt = copy_pens(st, Family::CopyTilde, i + 1);
    pr.add_square(pt[0].k, &[(2, 1.0)], -st.q_bar[i + 1].x + pt[0].s);
    pr.add_square(pt[1].k, &[(3, 1.0)], -st.q_bar[i + 1].y + pt[1].s);
    let pb = st.pen(Family::VelBreve, i + 1);
    pr.add_square(pb.k, &[(4, 1.0)], -st.v_dot[i + 1] + pb.s);
    let pv = st.pen(Family::VelBar, i);
    pr.add_square(pv.k, &[(4, 1.0), (5, -1.0)], -st.v_bar[i] + pv.s);
    if i > 0 {
        let pt = st.pen(Family::VelTilde, i);
        pr.add_square(pt.k, &[(5, 1.0)], -st.v_dot[i] + pt.s);
        for m in 0..n {
            if energy_flight_index(m, n) == i {
                let pe = st.pen(Family::Energy, m);
                pr.add_square(pe.k, &[(5, -omega)], harvest_prefix(st, sc, m) - st.energy_gap[m] + pe.s);
            }
        }
    }
    let inv = 1.0 / (sc.delta_t * sc.delta_t);
    for j in 0..2 {
        pr.c_quad[(j, j)] = inv;
        pr.c_quad[(j + 2, j + 2)] = inv;
        pr.c_quad[(j, j + 2)] = -inv;
        pr.c_quad[(j + 2, j)] = -inv;
    }
    pr.c_lin[4] = -1.0;
    pr.c_lin[5] = 1.0;
    let mut fixed = vec![None; 6];
    if i == 0 {
        fixed[0] = Some(sc.q_init.x);
        fixed[1] = Some(sc.q_init.y);
        fixed[5] = Some(0.0);
    }
    if i + 2 == n {
        fixed[2] = Some(sc.q_final.x);
        fixed[3] = Some(sc.q_final.y);
    }
    (pr, fixed)
}

pub fn block6_slot(st: &PddState, sc: &Scenario, i: usize) -> Result<TrajSlot> {
    let (pr, fixed) = traj_slot_problem(st, sc, i);
    let red = pr.reduce(&fixed);
    let sol = red.solve()?;
    let x = Qcqp1::expand(&fixed, &sol.x);
    Ok(TrajSlot {
        q: Vec2::new(x[0], x[1]),
        q_next: Vec2::new(x[2], x[3]),
        v_breve: x[4],
        v_tilde: x[5],
    })
}

/// Closed-form update of the last cumulative-flight entry, which sits in
/// no trajectory constraint.
pub fn last_v_tilde(st: &PddState, sc: &Scenario) -> f64 {
    let n = st.n();
    let omega = sc.omega();
    let pt = st.pen(Family::VelTilde, n - 1);
    // minimize sum k (g v + h)^2
    let mut terms = vec![(pt.k, 1.0, -st.v_dot[n - 1] + pt.s)];
    for m in 0..n {
        if energy_flight_index(m, n) == n - 1 {
            let pe = st.pen(Family::Energy, m);
            terms.push((pe.k, -omega, harvest_prefix(st, sc, m) - st.energy_gap[m] + pe.s));
        }
    }
    let aa: f64 = terms.iter().map(|(k, g, _)| k * g * g).sum();
    let bb: f64 = terms.iter().map(|(k, g, h)| k * g * h).sum();
    -bb / aa
}

pub fn block6_update_traj(st: &mut PddState, sc: &Scenario) -> Result<()> {
    let n = st.n();
    let out: Vec<TrajSlot> = (0..n - 1).map(|i| block6_slot(st, sc, i)).collect::<Result<_>>()?;
    let last = if n > 1 { last_v_tilde(st, sc) } else { 0.0 };
    for (i, s) in out.into_iter().enumerate() {
        st.q[i] = s.q;
        st.q_tilde[i + 1] = s.q_next;
        st.v_breve[i + 1] = s.v_breve;
        st.v_tilde[i] = s.v_tilde;
    }
    if n > 1 {
        st.v_tilde[n - 1] = last;
    }
    st.q[0] = sc.q_init;
    st.q[n - 1] = sc.q_final;
    st.q_tilde[n - 1] = sc.q_final;
    st.v_tilde[0] = 0.0;
    Ok(())
}

/// Admissible range of the link efficiency.
pub fn eta_bounds(sc: &Scenario) -> (f64, f64) {
    let alpha = sc.alpha();
    ((-alpha * sc.max_beacon_dist_sq().sqrt()).exp(), (-alpha * sc.altitude).exp())
}

/// Coefficients `(a, b)` of the majorized scalar problem `a t^2 + b t` for
/// the link efficiency of slot `i`, plus the curvature used.
pub fn eta_model(st: &PddState, sc: &Scenario, i: usize) -> (f64, f64, f64) {
    let lp = &sc.laser;
    let a1a2 = lp.a1 * lp.a2;
    let a2b1 = lp.a2 * lp.b1;
    let alpha = sc.alpha();
    let (t_lo, _) = eta_bounds(sc);
    let total_p: f64 = st.beacon.iter().sum();
    let t_prev = st.eta[i];
    let ps = st.pen(Family::Beacon, i);
    let pl = st.pen(Family::LogEta, i);
    let ph = st.pen(Family::Harvest, i);
    let c = alpha * st.log_range[i] - pl.s;
    let lo = t_lo.min(t_prev);
    let phi = ((2.0 - 2.0 * (lo.ln() - c)) / (lo * lo)).max(PHI_FLOOR);
    let grad = 2.0 * (t_prev.ln() - c) / t_prev;
    let p = st.beacon[i];
    let a = ps.k * p * p + ph.k * a2b1 * a2b1 + 0.5 * pl.k * phi;
    let b = -sc.gamma_weight * a2b1 / total_p + 2.0 * ps.k * p * (ps.s - st.eta_power[i]) + pl.k * (grad - phi * t_prev)
        - 2.0 * ph.k * a2b1 * (st.harvest[i] - a1a2 * st.eta_power[i] + ph.s);
    (a, b, phi)
}

/// Stationary point of the `t_hat` subproblem of slot `i`.
pub fn eta_power_update(st: &PddState, sc: &Scenario, i: usize) -> f64 {
    let lp = &sc.laser;
    let a1a2 = lp.a1 * lp.a2;
    let a2b1 = lp.a2 * lp.b1;
    let total_p: f64 = st.beacon.iter().sum();
    let ps = st.pen(Family::Beacon, i);
    let ph = st.pen(Family::Harvest, i);
    let num = sc.gamma_weight * a1a2 / total_p
        + 2.0 * ps.k * (st.eta[i] * st.beacon[i] + ps.s)
        + 2.0 * ph.k * a1a2 * (st.harvest[i] - a2b1 * st.eta[i] + ph.s);
    num / (2.0 * ps.k + 2.0 * ph.k * a1a2 * a1a2)
}

/// Joint least-squares update of all `t_breve`.
pub fn harvest_update(st: &PddState, sc: &Scenario) -> Result<DVector<f64>> {
    let n = st.n();
    let lp = &sc.laser;
    let a1a2 = lp.a1 * lp.a2;
    let a2b1 = lp.a2 * lp.b1;
    let dt = sc.delta_t;
    let omega = sc.omega();
    let mut mat = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for i in 0..n {
        let ph = st.pen(Family::Harvest, i);
        mat[(i, i)] += ph.k;
        rhs[i] += ph.k * (a1a2 * st.eta_power[i] + a2b1 * st.eta[i] - ph.s);
    }
    for m in 0..n {
        let pe = st.pen(Family::Energy, m);
        let h = omega * st.v_tilde[energy_flight_index(m, n)] - (m + 1) as f64 * lp.b2 * dt + st.energy_gap[m] - pe.s;
        for i in 0..=m {
            rhs[i] += pe.k * dt * h;
            for j in 0..=m {
                mat[(i, j)] += pe.k * dt * dt;
            }
        }
    }
    let chol = mat
        .cholesky()
        .ok_or_else(|| Error::Block("harvest block matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

pub fn block7_update_laser_aux(st: &mut PddState, sc: &Scenario) -> Result<()> {
    let n = st.n();
    let (t_lo, t_hi) = eta_bounds(sc);
    let mut eta = vec![0.0; n];
    for (i, e) in eta.iter_mut().enumerate() {
        let (a, b, _) = eta_model(st, sc, i);
        if !(a > 0.0) {
            return Err(Error::Block(format!("non-convex link-efficiency model at slot {i} (a = {a:e})")));
        }
        *e = (-0.5 * b / a).clamp(t_lo, t_hi);
    }
    st.eta = eta;
    let tp: Vec<f64> = (0..n).map(|i| eta_power_update(st, sc, i)).collect();
    st.eta_power = tp;
    let h = harvest_update(st, sc)?;
    st.harvest = h.iter().copied().collect();
    Ok(())
}

/// Minimizer of `g P + k (t P - t_hat + s)^2` over the beacon power box.
pub fn beacon_power_update(st: &PddState, sc: &Scenario, i: usize, grad: f64) -> f64 {
    let ps = st.pen(Family::Beacon, i);
    let t = st.eta[i];
    let p = -(grad + 2.0 * ps.k * t * (ps.s - st.eta_power[i])) / (2.0 * ps.k * t * t);
    p.clamp(sc.pb_min, sc.pb_max)
}

pub fn block8_update_speed_laserpower(st: &mut PddState, sc: &Scenario) {
    let n = st.n();
    let vmax2 = sc.v_max * sc.v_max;
    for i in 1..n {
        let pb = st.pen(Family::VelBreve, i);
        let pt = st.pen(Family::VelTilde, i);
        st.v_dot[i] = (pb.k * (st.v_breve[i] + pb.s) + pt.k * (st.v_tilde[i] + pt.s)) / (pb.k + pt.k);
    }
    for i in 0..n - 1 {
        let pv = st.pen(Family::VelBar, i);
        st.v_bar[i] = (st.v_breve[i + 1] - st.v_tilde[i] + pv.s).clamp(0.0, vmax2);
    }
    st.v_bar[n - 1] = 0.0;
    let total_p: f64 = st.beacon.iter().sum();
    // Tangent of -gamma * received / total beacon power.
    let grad = sc.gamma_weight * st.received_total(sc) / (total_p * total_p);
    let p: Vec<f64> = (0..n).map(|i| beacon_power_update(st, sc, i, grad)).collect();
    st.beacon = p;
}

/// One full sweep over blocks 1 to 8.
pub fn sweep(st: &mut PddState, sc: &Scenario) -> Result<()> {
    block1_update_s(st, sc);
    block2_update_sbar(st, sc)?;
    block3_update_comm_powers(st, sc);
    block4_update_prefix(st, sc);
    block5_update_copies(st, sc)?;
    block6_update_traj(st, sc)?;
    block7_update_laser_aux(st, sc)?;
    block8_update_speed_laserpower(st, sc);
    Ok(())
}
