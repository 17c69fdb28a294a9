//! Split-variable state, equality residuals and the augmented Lagrangian.
//!
//! Indices are zero-based slots `0..N`. Families that only exist on part of
//! the horizon (the relay link has no slot 0, the source link no slot N-1,
//! ...) keep full-length vectors whose inactive entries are identically
//! zero in both residual and dual.

use serde::{Deserialize, Serialize};

use crate::scenario::{laser_efficiency, PowerSchedule, Scenario, Trajectory, Vec2};

/// Equality-constraint families of the split problem, each with its own
/// dual vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// `p^r gamma0 - s^r d^D` (dual mu^D).
    LinkRelay,
    /// `p^s gamma0 - s^s d^S` (dual mu^S).
    LinkSource,
    /// `t P - t_hat` (dual xi^S).
    Beacon,
    /// `ln t - alpha t^L` (dual xi^L).
    LogEta,
    /// `log2(1 + s^r) - sbar^r` (dual zeta^r).
    RateRelay,
    RateSource,
    /// Information-causality prefix minus its slack (dual zeta^i).
    Info,
    /// Energy prefix minus its slack (dual zeta^e).
    Energy,
    /// `t_breve - a1a2 t_hat - a2b1 t` (dual eta~).
    Harvest,
    /// `v_breve[n+1] - v_tilde[n] - v_bar[n]` (dual tau_bar).
    VelBar,
    /// `v_breve - v_dot` (dual tau).
    VelBreve,
    /// `v_tilde - v_dot` (dual tau~).
    VelTilde,
    /// Trajectory copies, two entries per slot (x then y).
    CopyDot,
    CopyBar,
    CopyHat,
    /// `q_tilde - q_bar`.
    CopyTilde,
}

impl Family {
    pub const ALL: [Family; 16] = [
        Family::LinkRelay,
        Family::LinkSource,
        Family::Beacon,
        Family::LogEta,
        Family::RateRelay,
        Family::RateSource,
        Family::Info,
        Family::Energy,
        Family::Harvest,
        Family::VelBar,
        Family::VelBreve,
        Family::VelTilde,
        Family::CopyDot,
        Family::CopyBar,
        Family::CopyHat,
        Family::CopyTilde,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::LinkRelay => "link-relay",
            Family::LinkSource => "link-source",
            Family::Beacon => "beacon",
            Family::LogEta => "log-eta",
            Family::RateRelay => "rate-relay",
            Family::RateSource => "rate-source",
            Family::Info => "info",
            Family::Energy => "energy",
            Family::Harvest => "harvest",
            Family::VelBar => "vel-bar",
            Family::VelBreve => "vel-breve",
            Family::VelTilde => "vel-tilde",
            Family::CopyDot => "copy-dot",
            Family::CopyBar => "copy-bar",
            Family::CopyHat => "copy-hat",
            Family::CopyTilde => "copy-tilde",
        }
    }

    fn is_copy(self) -> bool {
        matches!(self, Family::CopyDot | Family::CopyBar | Family::CopyHat | Family::CopyTilde)
    }

    pub fn len(self, n: usize) -> usize {
        if self.is_copy() {
            2 * n
        } else {
            n
        }
    }
}

/// Constant multiplier applied to each residual family before it enters
/// the penalty. Rescaling an equality does not change the feasible set;
/// it only balances the penalty across families with different units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub link: f64,
    pub beacon: f64,
    pub log_eta: f64,
    pub rate: f64,
    pub info: f64,
    pub energy: f64,
    pub harvest: f64,
    pub velocity: f64,
    pub copy: f64,
}

impl Weights {
    /// Every family unscaled.
    pub fn unit() -> Self {
        Self {
            link: 1.0,
            beacon: 1.0,
            log_eta: 1.0,
            rate: 1.0,
            info: 1.0,
            energy: 1.0,
            harvest: 1.0,
            velocity: 1.0,
            copy: 1.0,
        }
    }

    /// Residuals expressed in natural units of the scenario.
    pub fn balanced(sc: &Scenario) -> Self {
        let vmax2 = sc.v_max * sc.v_max;
        Self {
            link: 1.0 / (sc.gamma0 * sc.p_max_s.max(sc.p_max_r)),
            beacon: 1.0 / sc.pb_max,
            log_eta: 1.0 / (sc.alpha() * sc.altitude),
            rate: 1.0,
            info: 1.0,
            energy: 1.0 / (sc.omega() * vmax2),
            harvest: 1.0 / (sc.laser.a1 * sc.laser.a2 * sc.pb_max),
            velocity: 1.0 / vmax2,
            copy: 1.0 / sc.altitude,
        }
    }

    pub fn of(&self, f: Family) -> f64 {
        match f {
            Family::LinkRelay | Family::LinkSource => self.link,
            Family::Beacon => self.beacon,
            Family::LogEta => self.log_eta,
            Family::RateRelay | Family::RateSource => self.rate,
            Family::Info => self.info,
            Family::Energy => self.energy,
            Family::Harvest => self.harvest,
            Family::VelBar | Family::VelBreve | Family::VelTilde => self.velocity,
            Family::CopyDot | Family::CopyBar | Family::CopyHat | Family::CopyTilde => self.copy,
        }
    }
}

/// Penalty term `k (r + s)^2` of one residual: `k = w^2 / (2 rho)` and
/// `s = rho lambda / w`, so that `k (r + s)^2 = (w r + rho lambda)^2 / (2 rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pen {
    pub k: f64,
    pub s: f64,
}

/// All primal and dual variables of the split problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PddState {
    pub q: Vec<Vec2>,
    pub p_s: Vec<f64>,
    pub p_r: Vec<f64>,
    /// Beacon power `P_n`.
    pub beacon: Vec<f64>,
    pub d_s: Vec<f64>,
    pub d_d: Vec<f64>,
    /// Link efficiency `t_n`.
    pub eta: Vec<f64>,
    /// `t_hat_n = t_n P_n`.
    pub eta_power: Vec<f64>,
    /// `t_breve_n`, the received power without the constant term.
    pub harvest: Vec<f64>,
    /// `t^L_n = ln(t_n) / alpha`, the negated slant range.
    pub log_range: Vec<f64>,
    pub snr_s: Vec<f64>,
    pub snr_r: Vec<f64>,
    pub rate_s: Vec<f64>,
    pub rate_r: Vec<f64>,
    pub q_dot: Vec<Vec2>,
    pub q_bar: Vec<Vec2>,
    pub q_hat: Vec<Vec2>,
    pub q_tilde: Vec<Vec2>,
    /// Squared speed of slot n (last entry unused).
    pub v_bar: Vec<f64>,
    pub v_breve: Vec<f64>,
    /// `v_tilde[n] = sum_{k<n} v_bar[k]`; entry 0 is pinned to zero.
    pub v_tilde: Vec<f64>,
    pub v_dot: Vec<f64>,
    /// Information-causality slack `s~_m <= 0` (entry 0 unused).
    pub info_gap: Vec<f64>,
    /// Energy slack `e_m` in `[theta - E, 0]`.
    pub energy_gap: Vec<f64>,
    /// Duals indexed by [`Family::index`].
    pub duals: Vec<Vec<f64>>,
    pub rho: f64,
    pub q_decay: f64,
    pub weights: Weights,
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// Index of the cumulative-flight entry used by energy prefix `m`.
pub(crate) fn energy_flight_index(m: usize, n: usize) -> usize {
    (m + 1).min(n - 1)
}

impl PddState {
    /// Consistent split state at a physical point with zero duals.
    pub fn from_point(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario, rho: f64, q_decay: f64, weights: Weights) -> Self {
        let n = sc.n_slots;
        let h2 = sc.altitude * sc.altitude;
        let q = traj.waypoints.clone();
        let mut p_s = pw.source.clone();
        let mut p_r = pw.relay.clone();
        p_s[n - 1] = 0.0;
        p_r[0] = 0.0;
        let d_s: Vec<f64> = q.iter().map(|x| h2 + (*x - sc.source_pos).norm_sq()).collect();
        let d_d: Vec<f64> = q.iter().map(|x| h2 + (*x - sc.dest_pos).norm_sq()).collect();
        let eta: Vec<f64> = q.iter().map(|x| laser_efficiency(*x, sc)).collect();
        let alpha = sc.alpha();
        let log_range = eta.iter().map(|t| t.ln() / alpha).collect();
        let eta_power: Vec<f64> = eta.iter().zip(&pw.beacon).map(|(t, p)| t * p).collect();
        let lp = &sc.laser;
        let harvest = (0..n).map(|i| lp.a1 * lp.a2 * eta_power[i] + lp.a2 * lp.b1 * eta[i]).collect();
        let snr_s: Vec<f64> = (0..n).map(|i| p_s[i] * sc.gamma0 / d_s[i]).collect();
        let snr_r: Vec<f64> = (0..n).map(|i| p_r[i] * sc.gamma0 / d_d[i]).collect();
        let rate_s = snr_s.iter().map(|s| log2_1p(*s)).collect();
        let rate_r = snr_r.iter().map(|s| log2_1p(*s)).collect();
        let dt2 = sc.delta_t * sc.delta_t;
        let mut v_bar = vec![0.0; n];
        for i in 0..n - 1 {
            v_bar[i] = (q[i + 1] - q[i]).norm_sq() / dt2;
        }
        let mut v_tilde = vec![0.0; n];
        for i in 1..n {
            v_tilde[i] = v_tilde[i - 1] + v_bar[i - 1];
        }
        let mut st = Self {
            q_dot: q.clone(),
            q_bar: q.clone(),
            q_hat: q.clone(),
            q_tilde: q.clone(),
            q,
            p_s,
            p_r,
            beacon: pw.beacon.clone(),
            d_s,
            d_d,
            eta,
            eta_power,
            harvest,
            log_range,
            snr_s,
            snr_r,
            rate_s,
            rate_r,
            v_bar,
            v_breve: v_tilde.clone(),
            v_dot: v_tilde.clone(),
            v_tilde,
            info_gap: vec![0.0; n],
            energy_gap: vec![0.0; n],
            duals: Family::ALL.iter().map(|f| vec![0.0; f.len(n)]).collect(),
            rho,
            q_decay,
            weights,
        };
        for m in 1..n {
            st.info_gap[m] = st.info_prefix(m).min(0.0);
        }
        for m in 0..n {
            st.energy_gap[m] = st.energy_prefix(m, sc).clamp(sc.energy_floor - sc.energy_budget, 0.0);
        }
        st
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory::new(self.q.clone())
    }

    pub fn powers(&self) -> PowerSchedule {
        PowerSchedule {
            source: self.p_s.clone(),
            relay: self.p_r.clone(),
            beacon: self.beacon.clone(),
        }
    }

    pub fn dual(&self, f: Family) -> &[f64] {
        &self.duals[f.index()]
    }

    pub fn pen(&self, f: Family, i: usize) -> Pen {
        let w = self.weights.of(f);
        Pen {
            k: w * w / (2.0 * self.rho),
            s: self.rho * self.duals[f.index()][i] / w,
        }
    }

    /// `sum_{k=1..m} sbar^r_k - sum_{k<m} sbar^s_k`.
    pub fn info_prefix(&self, m: usize) -> f64 {
        self.rate_r[1..=m].iter().sum::<f64>() - self.rate_s[..m].iter().sum::<f64>()
    }

    /// Cumulative harvest minus flight energy through slot `m`.
    pub fn energy_prefix(&self, m: usize, sc: &Scenario) -> f64 {
        let harvest: f64 = self.harvest[..=m].iter().sum::<f64>() + (m + 1) as f64 * sc.laser.b2;
        -sc.omega() * self.v_tilde[energy_flight_index(m, self.n())] + harvest * sc.delta_t
    }

    /// Denominator of the energy-efficiency ratio.
    pub fn comm_power(&self, sc: &Scenario) -> f64 {
        let n = self.n();
        sc.upsilon_s * self.p_s[..n - 1].iter().sum::<f64>()
            + sc.upsilon_r * self.p_r[1..].iter().sum::<f64>()
            + n as f64 * sc.p_on
    }

    pub fn rate_total(&self) -> f64 {
        self.rate_r[1..].iter().sum()
    }

    /// Numerator of the power-transfer ratio.
    pub fn received_total(&self, sc: &Scenario) -> f64 {
        let lp = &sc.laser;
        (0..self.n())
            .map(|i| lp.a1 * lp.a2 * self.eta_power[i] + lp.a2 * lp.b1 * self.eta[i] + lp.b2)
            .sum()
    }

    /// Split objective `f_EE + gamma f_PE` in terms of the auxiliaries.
    pub fn split_objective(&self, sc: &Scenario) -> f64 {
        let beacon: f64 = self.beacon.iter().sum();
        self.rate_total() / self.comm_power(sc) + sc.gamma_weight * self.received_total(sc) / beacon
    }

    /// Unweighted residuals of every family.
    pub fn residuals(&self, sc: &Scenario) -> Vec<Vec<f64>> {
        let n = self.n();
        let lp = &sc.laser;
        let alpha = sc.alpha();
        let mut r: Vec<Vec<f64>> = Family::ALL.iter().map(|f| vec![0.0; f.len(n)]).collect();
        for i in 0..n {
            if i > 0 {
                r[Family::LinkRelay.index()][i] = self.p_r[i] * sc.gamma0 - self.snr_r[i] * self.d_d[i];
                r[Family::RateRelay.index()][i] = log2_1p(self.snr_r[i]) - self.rate_r[i];
                r[Family::Info.index()][i] = self.info_prefix(i) - self.info_gap[i];
                r[Family::VelBreve.index()][i] = self.v_breve[i] - self.v_dot[i];
                r[Family::VelTilde.index()][i] = self.v_tilde[i] - self.v_dot[i];
                let ct = self.q_tilde[i] - self.q_bar[i];
                r[Family::CopyTilde.index()][2 * i] = ct.x;
                r[Family::CopyTilde.index()][2 * i + 1] = ct.y;
            }
            if i + 1 < n {
                r[Family::LinkSource.index()][i] = self.p_s[i] * sc.gamma0 - self.snr_s[i] * self.d_s[i];
                r[Family::RateSource.index()][i] = log2_1p(self.snr_s[i]) - self.rate_s[i];
                r[Family::VelBar.index()][i] = self.v_breve[i + 1] - self.v_tilde[i] - self.v_bar[i];
            }
            r[Family::Beacon.index()][i] = self.eta[i] * self.beacon[i] - self.eta_power[i];
            r[Family::LogEta.index()][i] = self.eta[i].ln() - alpha * self.log_range[i];
            r[Family::Energy.index()][i] = self.energy_prefix(i, sc) - self.energy_gap[i];
            r[Family::Harvest.index()][i] =
                self.harvest[i] - lp.a1 * lp.a2 * self.eta_power[i] - lp.a2 * lp.b1 * self.eta[i];
            for (f, c) in [
                (Family::CopyDot, self.q_dot[i]),
                (Family::CopyBar, self.q_bar[i]),
                (Family::CopyHat, self.q_hat[i]),
            ] {
                let d = c - self.q[i];
                r[f.index()][2 * i] = d.x;
                r[f.index()][2 * i + 1] = d.y;
            }
        }
        r
    }

    /// Split objective minus every penalty `(w r + rho lambda)^2 / (2 rho)`.
    pub fn al_value(&self, sc: &Scenario) -> f64 {
        let res = self.residuals(sc);
        let mut pen = 0.0;
        for f in Family::ALL {
            let w = self.weights.of(f);
            for (r, l) in res[f.index()].iter().zip(&self.duals[f.index()]) {
                let v = w * r + self.rho * l;
                pen += v * v;
            }
        }
        self.split_objective(sc) - pen / (2.0 * self.rho)
    }

    /// Largest weighted residual magnitude.
    pub fn constraint_violation(&self, sc: &Scenario) -> f64 {
        let res = self.residuals(sc);
        let mut worst = 0.0f64;
        for f in Family::ALL {
            let w = self.weights.of(f);
            for r in &res[f.index()] {
                worst = worst.max((w * r).abs());
            }
        }
        worst
    }

    /// Family with the largest weighted residual, for diagnostics.
    pub fn worst_family(&self, sc: &Scenario) -> (Family, f64) {
        let res = self.residuals(sc);
        let mut out = (Family::LinkRelay, 0.0f64);
        for f in Family::ALL {
            let w = self.weights.of(f);
            for r in &res[f.index()] {
                if (w * r).abs() > out.1 {
                    out = (f, (w * r).abs());
                }
            }
        }
        out
    }

    /// `lambda <- lambda + w r / rho` for every family, then `rho <- q rho`.
    pub fn dual_and_penalty_update(&mut self, sc: &Scenario) {
        let res = self.residuals(sc);
        for f in Family::ALL {
            let w = self.weights.of(f);
            for (l, r) in self.duals[f.index()].iter_mut().zip(&res[f.index()]) {
                *l += w * r / self.rho;
            }
        }
        self.rho *= self.q_decay;
    }
}
