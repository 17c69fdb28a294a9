//! Brute-force oracles for the block updates of the penalty dual
//! decomposition. Every oracle is built from `al_value` (or a surrogate
//! derived from it) and never from the closed forms it checks.

use laser_relay::pdd::{
    beacon_power_update, block1_update_s, block2_update_sbar, block3_update_comm_powers, block4_update_prefix,
    block5_slot, block6_slot, block7_update_laser_aux, block8_update_speed_laserpower, eta_bounds, eta_model,
    eta_power_update, harvest_update, last_v_tilde, Family, PddState, Weights, PHI_FLOOR,
};
use laser_relay::scenario::{PowerSchedule, Scenario, Trajectory, Vec2};
use laser_relay::socp::{self, ConicProgram, LinExpr, SolveStatus, SolverOptions};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::LN_2;

use super::rng;

/// Five 24 s slots over the nominal geometry.
pub fn small_scenario(gamma: f64) -> Scenario {
    let mut sc = Scenario::nominal().with_weight(gamma);
    sc.n_slots = 5;
    sc.delta_t = 24.0;
    sc
}

fn jitter(r: &mut ChaCha8Rng, v: Vec2, a: f64) -> Vec2 {
    v + Vec2::new(r.random_range(-a..a), r.random_range(-a..a))
}

/// Slots whose residual is identically zero.
fn inactive(f: Family, i: usize, n: usize) -> bool {
    match f {
        Family::LinkRelay | Family::RateRelay | Family::Info | Family::VelBreve | Family::VelTilde | Family::CopyTilde => {
            i == 0
        }
        Family::LinkSource | Family::RateSource | Family::VelBar => i == n - 1,
        _ => false,
    }
}

/// Random split state with inconsistent copies and nonzero duals that still
/// satisfies every hard constraint of the blocks.
pub fn random_state(seed: u64) -> (Scenario, PddState) {
    let mut r = rng(seed);
    let gamma = [1.0, 100.0, 1000.0][r.random_range(0..3)];
    let mut sc = small_scenario(gamma);
    let n = sc.n_slots;
    let mut wp = Trajectory::straight_line(&sc).waypoints;
    for p in wp.iter_mut().take(n - 1).skip(1) {
        *p = jitter(&mut r, *p, 150.0);
    }
    let pw = PowerSchedule {
        source: (0..n).map(|_| r.random_range(0.2..1.0) * sc.p_max_s).collect(),
        relay: (0..n).map(|_| r.random_range(0.2..1.0) * sc.p_max_r).collect(),
        beacon: (0..n).map(|_| r.random_range(sc.pb_min..sc.pb_max)).collect(),
    };
    let rho = 10f64.powf(r.random_range(-1.3..0.7));
    let mut st = PddState::from_point(&Trajectory::new(wp), &pw, &sc, rho, 0.8, Weights::balanced(&sc));
    let (t_lo, t_hi) = eta_bounds(&sc);
    let lp = sc.laser;
    let vmax2 = sc.v_max * sc.v_max;
    for i in 0..n {
        st.q_dot[i] = jitter(&mut r, st.q[i], 30.0);
        st.q_bar[i] = jitter(&mut r, st.q[i], 30.0);
        st.q_hat[i] = jitter(&mut r, st.q[i], 30.0);
        st.q_tilde[i] = jitter(&mut r, st.q[i], 30.0);
        st.snr_s[i] *= r.random_range(0.7..1.4);
        st.snr_r[i] *= r.random_range(0.7..1.4);
        st.rate_s[i] = (st.rate_s[i] + r.random_range(-0.5..0.5)).max(0.0);
        st.rate_r[i] = (st.rate_r[i] + r.random_range(-0.5..0.5)).max(0.0);
        st.eta[i] = r.random_range(t_lo..t_hi);
        st.eta_power[i] = st.eta[i] * st.beacon[i] * r.random_range(0.9..1.1);
        st.harvest[i] = lp.a1 * lp.a2 * st.eta_power[i] + lp.a2 * lp.b1 * st.eta[i] + r.random_range(-1.0..1.0);
        st.v_dot[i] += r.random_range(-10.0..10.0);
        st.v_tilde[i] += r.random_range(-10.0..10.0);
        st.v_bar[i] = (st.v_bar[i] + r.random_range(-10.0..10.0)).clamp(0.0, vmax2);
    }
    // Pinned entries.
    st.q[0] = sc.q_init;
    st.q[n - 1] = sc.q_final;
    st.q_tilde[n - 1] = sc.q_final;
    st.v_tilde[0] = 0.0;
    st.v_bar[n - 1] = 0.0;
    st.snr_r[0] = 0.0;
    st.rate_r[0] = 0.0;
    st.snr_s[n - 1] = 0.0;
    st.rate_s[n - 1] = 0.0;
    // Points on the constraint manifolds of blocks 5 and 6.
    let h2 = sc.altitude * sc.altitude;
    for i in 0..n {
        st.d_s[i] = h2 + (st.q_bar[i] - sc.source_pos).norm_sq();
        st.d_d[i] = h2 + (st.q_dot[i] - sc.dest_pos).norm_sq();
        st.log_range[i] = -(h2 + (st.q_hat[i] - sc.pb_pos).norm_sq()).sqrt();
    }
    for i in 0..n - 1 {
        st.v_breve[i + 1] = st.v_tilde[i] + (st.q_tilde[i + 1] - st.q[i]).norm_sq() / (sc.delta_t * sc.delta_t);
    }
    sc.r_sum = r.random_range(0.3..1.0) * st.rate_total();
    for m in 1..n {
        st.info_gap[m] = (st.info_prefix(m) + r.random_range(-1.0..1.0)).min(0.0);
    }
    for m in 0..n {
        st.energy_gap[m] =
            (st.energy_prefix(m, &sc) + r.random_range(-500.0..500.0)).clamp(sc.energy_floor - sc.energy_budget, 0.0);
    }
    for f in Family::ALL {
        let per_slot = f.len(n) / n;
        for e in 0..f.len(n) {
            st.duals[f.index()][e] = if inactive(f, e / per_slot, n) { 0.0 } else { r.random_range(-0.3..0.3) / rho };
        }
    }
    (sc, st)
}

pub fn neg_al(st: &PddState, sc: &Scenario) -> f64 {
    -st.al_value(sc)
}

/// `|a - b|` relative to `max(1, |b|)`.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Golden-section minimum of a unimodal function on `[lo, hi]`, endpoints
/// included.
pub fn golden(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..400 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if b - a <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
    }
    [(lo, f(lo)), (hi, f(hi)), (c, fc), (d, fd)]
        .into_iter()
        .fold((f64::NAN, f64::INFINITY), |best, p| if p.1 < best.1 { p } else { best })
}

/// Bracket of the minimizer of a convex function around `x0`.
pub fn bracket(f: &impl Fn(f64) -> f64, x0: f64, scale: f64) -> (f64, f64) {
    let mut h = scale;
    while f(x0 + 2.0 * h) <= f(x0 + h) {
        h *= 2.0;
    }
    let hi = x0 + 2.0 * h;
    let mut h = scale;
    while f(x0 - 2.0 * h) <= f(x0 - h) {
        h *= 2.0;
    }
    (x0 - 2.0 * h, hi)
}

pub fn golden_free(f: impl Fn(f64) -> f64, x0: f64, scale: f64) -> (f64, f64) {
    let (a, b) = bracket(&f, x0, scale);
    golden(f, a, b)
}

/// Exact second-order model of a quadratic function by central differences.
pub struct Quad {
    pub x0: DVector<f64>,
    pub f0: f64,
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
}

impl Quad {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.x0;
        self.f0 + self.g.dot(&d) + 0.5 * d.dot(&(&self.h * &d))
    }
}

pub fn quad_model(f: impl Fn(&DVector<f64>) -> f64, x0: DVector<f64>, steps: &[f64]) -> Quad {
    let n = x0.len();
    let at = |pairs: &[(usize, f64)]| {
        let mut x = x0.clone();
        for &(i, v) in pairs {
            x[i] += v;
        }
        f(&x)
    };
    let f0 = f(&x0);
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let s = steps[i];
        g[i] = (at(&[(i, s)]) - at(&[(i, -s)])) / (2.0 * s);
        for j in 0..=i {
            let t = steps[j];
            let v = (at(&[(i, s), (j, t)]) - at(&[(i, s), (j, -t)]) - at(&[(i, -s), (j, t)]) + at(&[(i, -s), (j, -t)]))
                / (4.0 * s * t);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Quad { x0, f0, g, h }
}

/// Grid search over a square followed by compass search from the best grid
/// points and from any extra starts.
pub fn min2d(f: impl Fn(f64, f64) -> f64, center: Vec2, half: f64, steps: usize, extra: &[Vec2]) -> f64 {
    let h = 2.0 * half / steps as f64;
    let mut pts: Vec<(f64, Vec2)> = Vec::with_capacity((steps + 1) * (steps + 1));
    for a in 0..=steps {
        for b in 0..=steps {
            let p = Vec2::new(center.x - half + a as f64 * h, center.y - half + b as f64 * h);
            pts.push((f(p.x, p.y), p));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut starts: Vec<(f64, Vec2, f64)> = pts.iter().take(8).map(|&(v, p)| (v, p, h)).collect();
    for &p in extra {
        starts.push((f(p.x, p.y), p, 1.0));
    }
    let dirs = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
    let mut best = f64::INFINITY;
    for (mut v, mut p, mut s) in starts {
        while s > 1e-10 * (1.0 + p.x.abs().max(p.y.abs())) {
            let mut moved = false;
            for (dx, dy) in dirs {
                let c = Vec2::new(p.x + dx * s, p.y + dy * s);
                let fc = f(c.x, c.y);
                if fc < v {
                    v = fc;
                    p = c;
                    moved = true;
                    break;
                }
            }
            if !moved {
                s *= 0.5;
            }
        }
        best = best.min(v);
    }
    best
}

fn al_drop(before: f64, after: f64) -> f64 {
    ((before - after) / before.abs().max(1.0)).max(0.0)
}

/// Result of one oracle over a batch of random states.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub name: &'static str,
    pub tol: f64,
    pub worst: f64,
    /// Cases in which the check applied (for conditional cross-checks).
    pub cases: usize,
}

impl OracleReport {
    pub fn pass(&self) -> bool {
        self.worst <= self.tol && self.cases > 0
    }
}

/// SNR update: the majorizer built here from the stated curvature must lie
/// above the true slot objective, its minimizer must match a 1-D search and
/// the true objective must not increase.
pub fn check_snr(st: &PddState, sc: &Scenario) -> f64 {
    let n = st.n();
    let mut after = st.clone();
    block1_update_s(&mut after, sc);
    let mut err = al_drop(st.al_value(sc), after.al_value(sc));
    for i in 0..n {
        let mut slots = Vec::new();
        if i > 0 {
            slots.push((st.snr_r[i], st.p_r[i], st.d_d[i], st.rate_r[i], Family::LinkRelay, Family::RateRelay, after.snr_r[i]));
        }
        if i + 1 < n {
            slots.push((st.snr_s[i], st.p_s[i], st.d_s[i], st.rate_s[i], Family::LinkSource, Family::RateSource, after.snr_s[i]));
        }
        for (s_hat, p, d, sbar, lf, rf, s_new) in slots {
            let link = st.pen(lf, i);
            let rate = st.pen(rf, i);
            let c = sbar - rate.s;
            let big_f = |s: f64| ((1.0 + s).log2() - c).powi(2);
            let big_fp = 2.0 * ((1.0 + s_hat).log2() - c) / (LN_2 * (1.0 + s_hat));
            let phi = ((2.0 + 2.0 * LN_2 * c) / (LN_2 * LN_2)).max(PHI_FLOOR);
            let lin = |s: f64| link.k * (p * sc.gamma0 - s * d + link.s).powi(2);
            let maj = |s: f64| lin(s) + rate.k * (big_f(s_hat) + big_fp * (s - s_hat) + 0.5 * phi * (s - s_hat).powi(2));
            let mut hi = 1.0;
            while maj(2.0 * hi) <= maj(hi) {
                hi *= 2.0;
            }
            let (_, best) = golden(maj, 0.0, 2.0 * hi);
            err = err.max(rel(maj(s_new), best));
            for k in 0..=400 {
                let s = 4.0 * hi * k as f64 / 400.0;
                let truth = lin(s) + rate.k * big_f(s);
                err = err.max(((truth - maj(s)) / truth.abs().max(1.0)).max(0.0));
            }
        }
    }
    err
}

fn rate_vector(st: &PddState) -> DVector<f64> {
    let m = st.n() - 1;
    DVector::from_iterator(2 * m, st.rate_s[..m].iter().chain(&st.rate_r[1..]).copied())
}

fn set_rates(st: &mut PddState, x: &DVector<f64>) {
    let m = st.n() - 1;
    for k in 0..m {
        st.rate_s[k] = x[k];
        st.rate_r[k + 1] = x[m + k];
    }
}

fn rate_model(st: &PddState, sc: &Scenario) -> Quad {
    let f = |x: &DVector<f64>| {
        let mut s = st.clone();
        set_rates(&mut s, x);
        neg_al(&s, sc)
    };
    let x0 = rate_vector(st);
    let steps = vec![1.0; x0.len()];
    quad_model(f, x0, &steps)
}

/// Rate block against the KKT solution of the quadratic model with the
/// sum-rate constraint handled by enumeration of its two states.
pub fn check_rates(st: &PddState, sc: &Scenario) -> f64 {
    let m = st.n() - 1;
    let q = rate_model(st, sc);
    let mut a = DVector::zeros(2 * m);
    a.rows_mut(m, m).fill(1.0);
    let hinv = q.h.clone().try_inverse().expect("rate model is singular");
    let uncon = &q.x0 - &hinv * &q.g;
    let x = if a.dot(&uncon) >= sc.r_sum {
        uncon
    } else {
        let k = 2 * m;
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        kkt.view_mut((0, 0), (k, k)).copy_from(&q.h);
        kkt.view_mut((0, k), (k, 1)).copy_from(&a);
        kkt.view_mut((k, 0), (1, k)).copy_from(&a.transpose());
        let mut rhs = DVector::zeros(k + 1);
        rhs.rows_mut(0, k).copy_from(&(-&q.g));
        rhs[k] = sc.r_sum - a.dot(&q.x0);
        let sol = kkt.lu().solve(&rhs).expect("singular KKT system");
        &q.x0 + sol.rows(0, k)
    };
    let mut after = st.clone();
    block2_update_sbar(&mut after, sc).unwrap();
    let got = neg_al(&after, sc);
    let infeasible = ((sc.r_sum - after.rate_total()) / sc.r_sum.max(1.0)).max(0.0);
    rel(got, q.eval(&x)).max(infeasible)
}

/// Minimum of a quadratic model subject to `a'x >= rhs` from the conic
/// solver, through the epigraph `0.5 d'Hd + g'd <= u`.
pub fn conic_qp(q: &Quad, a: &DVector<f64>, rhs: f64) -> f64 {
    let k = q.x0.len();
    let l = q.h.clone().cholesky().expect("model not positive definite").l();
    let mut cp = ConicProgram::new(k);
    let u = cp.add_var(f64::NEG_INFINITY, f64::INFINITY);
    cp.objective[u] = -1.0;
    let mut epi = LinExpr::var(u);
    for j in 0..k {
        epi.push(j, -q.g[j]);
    }
    let mut vec: Vec<LinExpr> = (0..k)
        .map(|i| {
            let mut e = LinExpr::new();
            for j in i..k {
                e.push(j, 2f64.sqrt() * l[(j, i)]);
            }
            e
        })
        .collect();
    vec.push(epi.clone().plus(-1.0));
    cp.add_soc(epi.plus(1.0), vec, "epigraph");
    let mut lin = LinExpr::constant(rhs - a.dot(&q.x0));
    for j in 0..k {
        if a[j] != 0.0 {
            lin.push(j, -a[j]);
        }
    }
    cp.add_le(lin, "sum");
    let sol = socp::solve(&cp, &SolverOptions::default()).expect("conic solve failed");
    assert_eq!(sol.status, SolveStatus::Optimal);
    let d = DVector::from_column_slice(&sol.x[..k]);
    q.eval(&(&q.x0 + d))
}

pub fn check_rates_conic(st: &PddState, sc: &Scenario) -> f64 {
    let m = st.n() - 1;
    let q = rate_model(st, sc);
    let mut a = DVector::zeros(2 * m);
    a.rows_mut(m, m).fill(1.0);
    let conic = conic_qp(&q, &a, sc.r_sum);
    let mut after = st.clone();
    block2_update_sbar(&mut after, sc).unwrap();
    rel(neg_al(&after, sc), conic)
}

/// Communication powers against a 1-D search on the objective with the
/// energy-efficiency ratio replaced by its tangent in the denominator.
pub fn check_powers(st: &PddState, sc: &Scenario) -> f64 {
    let n = st.n();
    let mut after = st.clone();
    block3_update_comm_powers(&mut after, sc);
    let mut err = al_drop(st.al_value(sc), after.al_value(sc));
    let d0 = st.comm_power(sc);
    let g = st.rate_total() / (d0 * d0);
    for i in 0..n {
        for relay in [true, false] {
            if (relay && i == 0) || (!relay && i + 1 == n) {
                continue;
            }
            let (ups, pmax) = if relay { (sc.upsilon_r, sc.p_max_r) } else { (sc.upsilon_s, sc.p_max_s) };
            let sur = |p: f64| {
                let mut s = st.clone();
                if relay {
                    s.p_r[i] = p;
                } else {
                    s.p_s[i] = p;
                }
                neg_al(&s, sc) + s.rate_total() / s.comm_power(sc) + g * ups * p
            };
            let (_, best) = golden(sur, 0.0, pmax);
            let got = if relay { after.p_r[i] } else { after.p_s[i] };
            err = err.max(rel(sur(got), best));
        }
    }
    err
}

/// Prefix slacks against per-entry 1-D searches over their boxes.
pub fn check_prefix(st: &PddState, sc: &Scenario) -> f64 {
    let n = st.n();
    let mut oracle = st.clone();
    for m in 1..n {
        let f = |x: f64| {
            let mut s = st.clone();
            s.info_gap[m] = x;
            neg_al(&s, sc)
        };
        oracle.info_gap[m] = golden(f, -1e4, 0.0).0;
    }
    for m in 0..n {
        let f = |x: f64| {
            let mut s = st.clone();
            s.energy_gap[m] = x;
            neg_al(&s, sc)
        };
        oracle.energy_gap[m] = golden(f, sc.energy_floor - sc.energy_budget, 0.0).0;
    }
    let mut after = st.clone();
    block4_update_prefix(&mut after, sc);
    let boxed = (1..n).map(|m| after.info_gap[m].max(0.0)).fold(0.0, f64::max);
    rel(neg_al(&after, sc), neg_al(&oracle, sc)).max(boxed)
}

#[derive(Clone, Copy)]
enum CopyKind {
    Source,
    Beacon,
    Dest,
}

fn copy_vars(st: &PddState, kind: CopyKind, i: usize) -> DVector<f64> {
    let (q, v) = match kind {
        CopyKind::Source => (st.q_bar[i], st.d_s[i]),
        CopyKind::Beacon => (st.q_hat[i], st.log_range[i]),
        CopyKind::Dest => (st.q_dot[i], st.d_d[i]),
    };
    DVector::from_vec(vec![q.x, q.y, v])
}

fn set_copy(st: &mut PddState, kind: CopyKind, i: usize, x: &DVector<f64>) {
    let q = Vec2::new(x[0], x[1]);
    match kind {
        CopyKind::Source => {
            st.q_bar[i] = q;
            st.d_s[i] = x[2];
        }
        CopyKind::Beacon => {
            st.q_hat[i] = q;
            st.log_range[i] = x[2];
        }
        CopyKind::Dest => {
            st.q_dot[i] = q;
            st.d_d[i] = x[2];
        }
    }
}

fn copy_model(st: &PddState, sc: &Scenario, kind: CopyKind, i: usize) -> Quad {
    let f = |x: &DVector<f64>| {
        let mut s = st.clone();
        set_copy(&mut s, kind, i, x);
        neg_al(&s, sc)
    };
    let third = if matches!(kind, CopyKind::Beacon) { 10.0 } else { 1e3 };
    quad_model(f, copy_vars(st, kind, i), &[10.0, 10.0, third])
}

/// Copy block: each of the three sub-blocks against a global search over
/// the horizontal position with the scalar fixed by the constraint.
pub fn check_copies(st: &PddState, sc: &Scenario) -> f64 {
    let n = st.n();
    let h2 = sc.altitude * sc.altitude;
    let mut err = 0.0f64;
    for i in 0..n {
        let out = block5_slot(st, sc, i).unwrap();
        for (kind, (q_new, v_new)) in [CopyKind::Source, CopyKind::Beacon, CopyKind::Dest].into_iter().zip(out) {
            let model = copy_model(st, sc, kind, i);
            let node = match kind {
                CopyKind::Source => sc.source_pos,
                CopyKind::Beacon => sc.pb_pos,
                CopyKind::Dest => sc.dest_pos,
            };
            let on_manifold = |x: f64, y: f64| {
                let r2 = h2 + (Vec2::new(x, y) - node).norm_sq();
                match kind {
                    CopyKind::Beacon => {
                        let r = r2.sqrt();
                        model
                            .eval(&DVector::from_vec(vec![x, y, r]))
                            .min(model.eval(&DVector::from_vec(vec![x, y, -r])))
                    }
                    _ => model.eval(&DVector::from_vec(vec![x, y, r2])),
                }
            };
            let centre = Vec2::new(model.x0[0], model.x0[1]);
            let best = min2d(on_manifold, centre, 1500.0, 100, &[q_new, centre]);
            let mut s = st.clone();
            set_copy(&mut s, kind, i, &DVector::from_vec(vec![q_new.x, q_new.y, v_new]));
            err = err.max(rel(neg_al(&s, sc), best));
            let r2 = h2 + (q_new - node).norm_sq();
            let cons = match kind {
                CopyKind::Beacon => (v_new * v_new - r2) / r2,
                _ => (v_new - r2) / r2,
            };
            // Constraint residual has its own 1e-8 tolerance.
            err = err.max(cons.abs() * 1e-5 / 1e-8);
        }
    }
    err
}

/// Conic relaxation `d >= H^2 + |x - node|^2` of the two distance copies:
/// its value bounds the block from below and must match it whenever the
/// relaxation is tight. Returns `(error, tight cases)`.
pub fn check_copies_conic(st: &PddState, sc: &Scenario) -> (f64, usize) {
    let n = st.n();
    let h2 = sc.altitude * sc.altitude;
    let (mut err, mut tight) = (0.0f64, 0);
    for i in 0..n {
        let out = block5_slot(st, sc, i).unwrap();
        for (kind, (q_new, d_new), node) in [
            (CopyKind::Source, out[0], sc.source_pos),
            (CopyKind::Dest, out[2], sc.dest_pos),
        ] {
            let model = copy_model(st, sc, kind, i);
            // Inactive link: the distance is free and the relaxation is trivial.
            if model.h[(2, 2)] <= 1e-12 * model.h[(0, 0)] {
                continue;
            }
            // Scaled variables: z = x0 + D z', D = diag(100, 100, 1e4).
            let dsc = DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 100.0, 1e4]));
            let scaled = Quad {
                x0: DVector::zeros(3),
                f0: model.f0,
                g: &dsc * &model.g,
                h: &dsc * &model.h * &dsc,
            };
            let Some(chol) = scaled.h.clone().cholesky() else {
                continue;
            };
            let l = chol.l();
            let mut cp = ConicProgram::new(3);
            let u = cp.add_var(f64::NEG_INFINITY, f64::INFINITY);
            cp.objective[u] = -1.0;
            let mut epi = LinExpr::var(u);
            for j in 0..3 {
                epi.push(j, -scaled.g[j]);
            }
            let mut vec: Vec<LinExpr> = (0..3)
                .map(|r| {
                    let mut e = LinExpr::new();
                    for j in r..3 {
                        e.push(j, 2f64.sqrt() * l[(j, r)]);
                    }
                    e
                })
                .collect();
            vec.push(epi.clone().plus(-1.0));
            cp.add_soc(epi.plus(1.0), vec, "epigraph");
            let off = (Vec2::new(model.x0[0], model.x0[1]) - node) * 0.01;
            let a2 = LinExpr::term(2, 1.0).plus((model.x0[2] - h2) / 1e4);
            cp.add_soc(
                a2.clone().plus(1.0),
                vec![
                    LinExpr::term(0, 2.0).plus(2.0 * off.x),
                    LinExpr::term(1, 2.0).plus(2.0 * off.y),
                    a2.plus(-1.0),
                ],
                "distance",
            );
            let sol = socp::solve(&cp, &SolverOptions::default()).expect("conic solve failed");
            assert_eq!(sol.status, SolveStatus::Optimal);
            let zs = DVector::from_column_slice(&sol.x[..3]);
            let relaxed = scaled.eval(&zs);
            let x = &model.x0 + &dsc * &zs;
            let mut s = st.clone();
            set_copy(&mut s, kind, i, &DVector::from_vec(vec![q_new.x, q_new.y, d_new]));
            let block = neg_al(&s, sc);
            // Lower bound always.
            err = err.max(((relaxed - block) / block.abs().max(1.0)).max(0.0));
            let gap = (x[2] - h2 - (Vec2::new(x[0], x[1]) - node).norm_sq()) / x[2];
            if gap.abs() <= 1e-7 {
                tight += 1;
                err = err.max(rel(block, relaxed));
            }
        }
    }
    (err, tight)
}

fn traj_vars(st: &PddState, i: usize) -> DVector<f64> {
    DVector::from_vec(vec![
        st.q[i].x,
        st.q[i].y,
        st.q_tilde[i + 1].x,
        st.q_tilde[i + 1].y,
        st.v_breve[i + 1],
        st.v_tilde[i],
    ])
}

fn set_traj(st: &mut PddState, i: usize, x: &DVector<f64>) {
    st.q[i] = Vec2::new(x[0], x[1]);
    st.q_tilde[i + 1] = Vec2::new(x[2], x[3]);
    st.v_breve[i + 1] = x[4];
    st.v_tilde[i] = x[5];
}

/// Trajectory block: per slot, a search over the step `z = q_tilde - q`
/// (which fixes `v_breve - v_tilde`) with the remaining free variables
/// minimized exactly.
pub fn check_traj(st: &PddState, sc: &Scenario) -> f64 {
    let n = st.n();
    let dt2 = sc.delta_t * sc.delta_t;
    let mut err = 0.0f64;
    for i in 0..n - 1 {
        let f = |x: &DVector<f64>| {
            let mut s = st.clone();
            set_traj(&mut s, i, x);
            neg_al(&s, sc)
        };
        let model = quad_model(f, traj_vars(st, i), &[10.0; 6]);
        // x = c(z) + M w
        let (cols, build): (usize, Box<dyn Fn(Vec2) -> (DVector<f64>, DMatrix<f64>)>) = if i == 0 {
            (0, Box::new(move |z: Vec2| {
                let c = DVector::from_vec(vec![sc.q_init.x, sc.q_init.y, sc.q_init.x + z.x, sc.q_init.y + z.y, z.norm_sq() / dt2, 0.0]);
                (c, DMatrix::zeros(6, 0))
            }))
        } else if i + 2 == n {
            (1, Box::new(move |z: Vec2| {
                let c = DVector::from_vec(vec![sc.q_final.x - z.x, sc.q_final.y - z.y, sc.q_final.x, sc.q_final.y, z.norm_sq() / dt2, 0.0]);
                let mut m = DMatrix::zeros(6, 1);
                m[(4, 0)] = 1.0;
                m[(5, 0)] = 1.0;
                (c, m)
            }))
        } else {
            (3, Box::new(move |z: Vec2| {
                let c = DVector::from_vec(vec![0.0, 0.0, z.x, z.y, z.norm_sq() / dt2, 0.0]);
                let mut m = DMatrix::zeros(6, 3);
                m[(0, 0)] = 1.0;
                m[(2, 0)] = 1.0;
                m[(1, 1)] = 1.0;
                m[(3, 1)] = 1.0;
                m[(4, 2)] = 1.0;
                m[(5, 2)] = 1.0;
                (c, m)
            }))
        };
        let reduced = |zx: f64, zy: f64| {
            let (c, m) = build(Vec2::new(zx, zy));
            if cols == 0 {
                return model.eval(&c);
            }
            let hm = &model.h * &m;
            let lhs = m.transpose() * &hm;
            let rhs = -(m.transpose() * (&model.g + &model.h * (&c - &model.x0)));
            let w = lhs.lu().solve(&rhs).expect("singular inner model");
            model.eval(&(c + m * w))
        };
        let got = block6_slot(st, sc, i).unwrap();
        let z_block = got.q_next - got.q;
        let centre = st.q_tilde[i + 1] - st.q[i];
        let best = min2d(reduced, centre, 1500.0, 100, &[z_block, centre]);
        let x = DVector::from_vec(vec![got.q.x, got.q.y, got.q_next.x, got.q_next.y, got.v_breve, got.v_tilde]);
        err = err.max(rel(f(&x), best));
        let cons = z_block.norm_sq() / dt2 - (got.v_breve - got.v_tilde);
        // Constraint residual has its own 1e-8 tolerance.
        err = err.max(cons.abs() / got.v_breve.abs().max(1.0) * 1e-4 / 1e-8);
    }
    let f = |x: f64| {
        let mut s = st.clone();
        s.v_tilde[n - 1] = x;
        neg_al(&s, sc)
    };
    let (_, best) = golden_free(&f, st.v_tilde[n - 1], 1.0);
    err.max(rel(f(last_v_tilde(st, sc)), best))
}

/// Link efficiency: the scalar model must majorize the true objective over
/// the admissible range and the update must minimize it on the box.
pub fn check_eta(st: &PddState, sc: &Scenario) -> f64 {
    let n = st.n();
    let (t_lo, t_hi) = eta_bounds(sc);
    let mut after = st.clone();
    block7_update_laser_aux(&mut after, sc).unwrap();
    let mut err = 0.0f64;
    for i in 0..n {
        let (a, b, _) = eta_model(st, sc, i);
        let model = |t: f64| a * t * t + b * t;
        let f = |t: f64| {
            let mut s = st.clone();
            s.eta[i] = t;
            neg_al(&s, sc)
        };
        let t0 = st.eta[i];
        let base = model(t0) - f(t0);
        let lo = t_lo.min(t0);
        for k in 0..=200 {
            let t = lo + (t_hi - lo) * k as f64 / 200.0;
            let ft = f(t);
            err = err.max(((base - (model(t) - ft)) / ft.abs().max(1.0)).max(0.0));
        }
        let (_, best) = golden(model, t_lo, t_hi);
        err = err.max(rel(model(after.eta[i]), best));
    }
    err
}

/// Received-power auxiliary `t_hat` against a 1-D search, after the link
/// efficiency step.
pub fn check_eta_power(st: &PddState, sc: &Scenario) -> f64 {
    let n = st.n();
    let mut after = st.clone();
    block7_update_laser_aux(&mut after, sc).unwrap();
    let mut mid = st.clone();
    mid.eta = after.eta.clone();
    let mut err = 0.0f64;
    for i in 0..n {
        let f = |x: f64| {
            let mut s = mid.clone();
            s.eta_power[i] = x;
            neg_al(&s, sc)
        };
        let (_, best) = golden_free(&f, mid.eta_power[i], 1.0);
        err = err.max(rel(f(eta_power_update(&mid, sc, i)), best));
        err = err.max(rel(f(after.eta_power[i]), best));
    }
    err
}

/// Harvest auxiliaries: the exact quadratic model rebuilt around the update
/// must predict no further decrease.
pub fn check_harvest(st: &PddState, sc: &Scenario) -> f64 {
    let n = st.n();
    let mut after = st.clone();
    block7_update_laser_aux(&mut after, sc).unwrap();
    let mut mid = st.clone();
    mid.eta = after.eta.clone();
    mid.eta_power = after.eta_power.clone();
    let f = |x: &DVector<f64>| {
        let mut s = mid.clone();
        s.harvest = x.iter().copied().collect();
        neg_al(&s, sc)
    };
    let got = harvest_update(&mid, sc).unwrap();
    let mut err = rel(f(&got), f(&DVector::from_column_slice(&after.harvest)));
    let model = quad_model(f, got, &vec![1.0; n]);
    let step = model.h.clone().lu().solve(&model.g).expect("singular harvest model");
    let decrease = 0.5 * model.g.dot(&step);
    err = err.max(decrease.abs() / model.f0.abs().max(1.0));
    err
}

/// Speed auxiliaries and beacon power against 1-D searches, the beacon
/// power on the objective with the power-transfer ratio replaced by its
/// tangent in the total beacon power.
pub fn check_speed_beacon(st: &PddState, sc: &Scenario) -> f64 {
    let n = st.n();
    let mut after = st.clone();
    block8_update_speed_laserpower(&mut after, sc);
    let mut err = al_drop(st.al_value(sc), after.al_value(sc));
    for i in 1..n {
        let f = |x: f64| {
            let mut s = st.clone();
            s.v_dot[i] = x;
            neg_al(&s, sc)
        };
        let (_, best) = golden_free(&f, st.v_dot[i], 1.0);
        err = err.max(rel(f(after.v_dot[i]), best));
    }
    for i in 0..n - 1 {
        let f = |x: f64| {
            let mut s = st.clone();
            s.v_bar[i] = x;
            neg_al(&s, sc)
        };
        let (_, best) = golden(f, 0.0, sc.v_max * sc.v_max);
        err = err.max(rel(f(after.v_bar[i]), best));
    }
    let lp = &sc.laser;
    let received: f64 =
        (0..n).map(|i| lp.a1 * lp.a2 * st.eta_power[i] + lp.a2 * lp.b1 * st.eta[i] + lp.b2).sum();
    let s0: f64 = st.beacon.iter().sum();
    let slope = sc.gamma_weight * received / (s0 * s0);
    for i in 0..n {
        let sur = |p: f64| {
            let mut s = st.clone();
            s.beacon[i] = p;
            let total: f64 = s.beacon.iter().sum();
            neg_al(&s, sc) + sc.gamma_weight * received / total + slope * p
        };
        let (_, best) = golden(sur, sc.pb_min, sc.pb_max);
        err = err.max(rel(sur(after.beacon[i]), best));
        err = err.max(rel(sur(beacon_power_update(st, sc, i, slope)), best));
    }
    err
}

/// Runs every oracle on `count` random states.
pub fn run_suite(count: u64) -> Vec<OracleReport> {
    type Check = fn(&PddState, &Scenario) -> f64;
    let checks: [(&'static str, f64, Check); 10] = [
        ("snr (block 1)", 1e-8, check_snr),
        ("rates (block 2)", 1e-8, check_rates),
        ("comm powers (block 3)", 1e-8, check_powers),
        ("prefix slacks (block 4)", 1e-10, check_prefix),
        ("copies (block 5)", 1e-5, check_copies),
        ("trajectory (block 6)", 1e-4, check_traj),
        ("link efficiency (block 7)", 1e-8, check_eta),
        ("received power aux (block 7)", 1e-8, check_eta_power),
        ("harvest aux (block 7)", 1e-8, check_harvest),
        ("speed and beacon power (block 8)", 1e-8, check_speed_beacon),
    ];
    let mut reports: Vec<OracleReport> =
        checks.iter().map(|&(name, tol, _)| OracleReport { name, tol, worst: 0.0, cases: 0 }).collect();
    reports.push(OracleReport { name: "rates vs conic solver", tol: 1e-6, worst: 0.0, cases: 0 });
    reports.push(OracleReport { name: "distance copies vs conic relaxation", tol: 1e-6, worst: 0.0, cases: 0 });
    for seed in 0..count {
        let (sc, st) = random_state(seed);
        for (k, (_, _, check)) in checks.iter().enumerate() {
            let e = check(&st, &sc);
            let rep = &mut reports[k];
            rep.worst = rep.worst.max(if e.is_nan() { f64::INFINITY } else { e });
            rep.cases += 1;
        }
        let e = check_rates_conic(&st, &sc);
        reports[10].worst = reports[10].worst.max(e);
        reports[10].cases += 1;
        let (e, tight) = check_copies_conic(&st, &sc);
        reports[11].worst = reports[11].worst.max(e);
        reports[11].cases += tight;
    }
    reports
}
