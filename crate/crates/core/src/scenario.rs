//! Physical model of the relay system: geometry, laser link, propulsion
//! energy, and the two efficiency metrics.
//!
//! All quantities are SI (meters, seconds, watts, joules). Positions are
//! horizontal-plane coordinates; the UAV flies at the fixed altitude
//! [`Scenario::altitude`] and the ground nodes sit at zero height.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point or displacement in the horizontal plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Wavelength {
    Nm810,
    Nm1550,
}

impl Wavelength {
    pub fn nanometers(self) -> f64 {
        match self {
            Wavelength::Nm810 => 810.0,
            Wavelength::Nm1550 => 1550.0,
        }
    }

    pub fn from_nanometers(nm: f64) -> Option<Self> {
        if (nm - 810.0).abs() < 0.5 {
            Some(Wavelength::Nm810)
        } else if (nm - 1550.0).abs() < 0.5 {
            Some(Wavelength::Nm1550)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Weather {
    ClearAir,
    Haze,
    Fog,
}

impl Weather {
    pub fn name(self) -> &'static str {
        match self {
            Weather::ClearAir => "clear-air",
            Weather::Haze => "haze",
            Weather::Fog => "fog",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
            "clear-air" | "clearair" | "clear" => Some(Weather::ClearAir),
            "haze" => Some(Weather::Haze),
            "fog" => Some(Weather::Fog),
            _ => None,
        }
    }
}

/// Laser link constants: the affine receiver fit `(a1, b1, a2, b2)` and the
/// atmospheric attenuation model `alpha = (epsilon / kappa) (lambda / chi)^-varrho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserParams {
    pub wavelength_nm: f64,
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub epsilon: f64,
    pub chi_nm: f64,
    /// Visibility in kilometers.
    pub visibility_km: f64,
    /// Size-distribution exponent of the scattering particles.
    pub varrho: f64,
    pub weather: Weather,
}

impl LaserParams {
    /// GaAs receiver at 25 C, tabulated for the two supported wavelengths
    /// and three weather conditions.
    pub fn preset(wavelength: Wavelength, weather: Weather) -> Self {
        let (a1, b1, a2, b2) = match wavelength {
            Wavelength::Nm810 => (0.445, -0.75, 0.5414, -0.2313),
            Wavelength::Nm1550 => (0.34, -1.1, 0.4979, -0.2989),
        };
        let visibility_km = match weather {
            Weather::ClearAir => 10.0,
            Weather::Haze => 3.0,
            Weather::Fog => 0.4,
        };
        let varrho = match weather {
            Weather::ClearAir => 1.3,
            // Kim model for 1 km < V < 6 km.
            Weather::Haze => 0.16 * visibility_km + 0.34,
            Weather::Fog => 0.0,
        };
        Self {
            wavelength_nm: wavelength.nanometers(),
            a1,
            b1,
            a2,
            b2,
            epsilon: 3.92,
            chi_nm: 550.0,
            visibility_km,
            varrho,
            weather,
        }
    }

    pub fn wavelength(&self) -> Option<Wavelength> {
        Wavelength::from_nanometers(self.wavelength_nm)
    }
}

/// Attenuation coefficient in 1/m.
pub fn attenuation_alpha(lp: &LaserParams) -> f64 {
    let per_km = lp.epsilon / lp.visibility_km * (lp.wavelength_nm / lp.chi_nm).powf(-lp.varrho);
    per_km / 1000.0
}

/// Immutable problem configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub source_pos: Vec2,
    pub dest_pos: Vec2,
    pub pb_pos: Vec2,
    /// Flight altitude H in meters.
    pub altitude: f64,
    pub q_init: Vec2,
    pub q_final: Vec2,
    /// Mission duration T in seconds.
    pub t_total: f64,
    /// Slot length in seconds.
    pub delta_t: f64,
    /// Number of slots N; `t_total = n_slots * delta_t`.
    pub n_slots: usize,
    pub v_max: f64,
    /// Reference SNR at 1 m (linear).
    pub gamma0: f64,
    pub p_max_s: f64,
    pub p_max_r: f64,
    pub pb_min: f64,
    pub pb_max: f64,
    pub laser: LaserParams,
    /// UAV mass including payload, kg.
    pub mass: f64,
    /// Battery capacity, joules.
    pub energy_budget: f64,
    /// Minimum battery level, joules.
    pub energy_floor: f64,
    pub upsilon_s: f64,
    pub upsilon_r: f64,
    /// Constant circuit power, watts.
    pub p_on: f64,
    /// Minimum end-to-end sum rate, bps/Hz.
    pub r_sum: f64,
    /// Weight of the power-transfer efficiency in the objective.
    pub gamma_weight: f64,
}

/// Circuit power assembled from typical transceiver block figures
/// (DAC, mixer, filters, synthesizer, LNA, IFA, ADC).
pub const DEFAULT_P_ON: f64 = 0.37;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm) / 1000.0
}

impl Scenario {
    /// The reference configuration: 1 km source-destination separation,
    /// 120 s mission in 4 s slots, 810 nm laser in clear air.
    pub fn nominal() -> Self {
        Self {
            source_pos: Vec2::ZERO,
            dest_pos: Vec2::new(1000.0, 0.0),
            pb_pos: Vec2::new(500.0, 800.0),
            altitude: 100.0,
            q_init: Vec2::new(0.0, 500.0),
            q_final: Vec2::new(1000.0, 500.0),
            t_total: 120.0,
            delta_t: 4.0,
            n_slots: 30,
            v_max: 15.0,
            gamma0: db_to_linear(80.0),
            p_max_s: dbm_to_watts(20.0),
            p_max_r: dbm_to_watts(20.0),
            pb_min: 10.0,
            pb_max: 100.0,
            laser: LaserParams::preset(Wavelength::Nm810, Weather::ClearAir),
            mass: 9.7,
            energy_budget: 1e5,
            energy_floor: 1e3,
            upsilon_s: 5.0,
            upsilon_r: 5.0,
            p_on: DEFAULT_P_ON,
            r_sum: 100.0,
            gamma_weight: 1.0,
        }
    }

    pub fn with_weight(mut self, gamma_weight: f64) -> Self {
        self.gamma_weight = gamma_weight;
        self
    }

    /// Changes the mission duration keeping the slot length.
    pub fn with_horizon(mut self, t_total: f64) -> Self {
        self.t_total = t_total;
        self.n_slots = (t_total / self.delta_t).round() as usize;
        self
    }

    pub fn with_laser(mut self, laser: LaserParams) -> Self {
        self.laser = laser;
        self
    }

    /// Flying-energy weight `0.5 M dt`, so that slot energy is `omega |v|^2`.
    pub fn omega(&self) -> f64 {
        0.5 * self.mass * self.delta_t
    }

    pub fn alpha(&self) -> f64 {
        attenuation_alpha(&self.laser)
    }

    /// Largest squared UAV-beacon distance any sensible trajectory reaches,
    /// including the altitude term.
    pub fn max_beacon_dist_sq(&self) -> f64 {
        [self.source_pos, self.dest_pos, self.q_init, self.q_final]
            .iter()
            .map(|p| (*p - self.pb_pos).norm_sq())
            .fold(0.0, f64::max)
            + self.altitude * self.altitude
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        let finite = [
            self.altitude,
            self.t_total,
            self.delta_t,
            self.v_max,
            self.gamma0,
            self.p_max_s,
            self.p_max_r,
            self.pb_min,
            self.pb_max,
            self.mass,
            self.energy_budget,
            self.energy_floor,
            self.upsilon_s,
            self.upsilon_r,
            self.p_on,
            self.r_sum,
            self.gamma_weight,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        if self.n_slots < 2 {
            return bad(format!("n_slots = {} (need at least 2)", self.n_slots));
        }
        if ((self.n_slots as f64) * self.delta_t - self.t_total).abs() > 1e-9 * self.t_total.max(1.0) {
            return bad(format!(
                "t_total {} s is not n_slots ({}) x delta_t ({} s)",
                self.t_total, self.n_slots, self.delta_t
            ));
        }
        for (name, v) in [
            ("altitude", self.altitude),
            ("delta_t", self.delta_t),
            ("gamma0", self.gamma0),
            ("p_max_s", self.p_max_s),
            ("p_max_r", self.p_max_r),
            ("pb_min", self.pb_min),
            ("mass", self.mass),
            ("energy_budget", self.energy_budget),
            ("p_on", self.p_on),
        ] {
            if v <= 0.0 {
                return bad(format!("{name} must be positive (got {v})"));
            }
        }
        if self.v_max < 0.0 || self.energy_floor < 0.0 || self.r_sum < 0.0 || self.gamma_weight < 0.0 {
            return bad("v_max, energy_floor, r_sum and gamma_weight must be nonnegative".into());
        }
        if self.pb_max < self.pb_min {
            return bad("pb_max < pb_min".into());
        }
        if self.energy_floor >= self.energy_budget {
            return bad("energy_floor must be below energy_budget".into());
        }
        if self.upsilon_s < 1.0 || self.upsilon_r < 1.0 {
            return bad("amplifier inefficiencies must be >= 1".into());
        }
        let lp = &self.laser;
        if lp.epsilon <= 0.0 || lp.chi_nm <= 0.0 || lp.visibility_km <= 0.0 || lp.varrho < 0.0 || lp.wavelength_nm <= 0.0 {
            return bad("laser attenuation constants must be positive".into());
        }
        // Reachability with N - 1 moves of at most v_max * dt each.
        let reach = self.v_max * self.delta_t * (self.n_slots - 1) as f64;
        let need = self.q_init.dist(self.q_final);
        if need > reach * (1.0 + 1e-12) {
            return bad(format!(
                "final location unreachable: {need:.3} m apart but at most {reach:.3} m can be flown (v_max = {} m/s)",
                self.v_max
            ));
        }
        Ok(())
    }
}

/// UAV waypoints, one per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<Vec2>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Vec2>) -> Self {
        Self { waypoints }
    }

    /// Constant-speed straight flight from `q_init` to `q_final`.
    pub fn straight_line(sc: &Scenario) -> Self {
        let n = sc.n_slots;
        let waypoints = (0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                sc.q_init + (sc.q_final - sc.q_init) * f
            })
            .collect();
        Self { waypoints }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Velocities `v_n = (q_{n+1} - q_n) / dt` for the N - 1 moves.
    pub fn velocities(&self, delta_t: f64) -> Vec<Vec2> {
        self.waypoints
            .windows(2)
            .map(|w| (w[1] - w[0]) * (1.0 / delta_t))
            .collect()
    }

    /// Velocity at slot `n` (0-based); the last slot has no move.
    pub fn velocity(&self, n: usize, delta_t: f64) -> Vec2 {
        if n + 1 < self.waypoints.len() {
            (self.waypoints[n + 1] - self.waypoints[n]) * (1.0 / delta_t)
        } else {
            Vec2::ZERO
        }
    }
}

/// Per-slot source, relay and beacon transmit powers.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSchedule {
    pub source: Vec<f64>,
    pub relay: Vec<f64>,
    pub beacon: Vec<f64>,
}

impl PowerSchedule {
    pub fn constant(n: usize, source: f64, relay: f64, beacon: f64) -> Self {
        let mut s = vec![source; n];
        let mut r = vec![relay; n];
        s[n - 1] = 0.0;
        r[0] = 0.0;
        Self {
            source: s,
            relay: r,
            beacon: vec![beacon; n],
        }
    }

    pub fn len(&self) -> usize {
        self.beacon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beacon.is_empty()
    }
}

pub(crate) fn check_shapes(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario) -> Result<()> {
    let n = sc.n_slots;
    for (what, got) in [
        ("waypoints", traj.len()),
        ("source power", pw.source.len()),
        ("relay power", pw.relay.len()),
        ("beacon power", pw.beacon.len()),
    ] {
        if got != n {
            return Err(Error::Shape { what, expected: n, got });
        }
    }
    Ok(())
}

fn rate(p: f64, q: Vec2, node: Vec2, sc: &Scenario) -> f64 {
    let d2 = sc.altitude * sc.altitude + (q - node).norm_sq();
    (p * sc.gamma0 / d2).ln_1p() / std::f64::consts::LN_2
}

/// Achievable source-to-UAV rate in bps/Hz.
pub fn rate_source_to_uav(p_s: f64, q: Vec2, sc: &Scenario) -> f64 {
    rate(p_s, q, sc.source_pos, sc)
}

/// Achievable UAV-to-destination rate in bps/Hz.
pub fn rate_uav_to_dest(p_r: f64, q: Vec2, sc: &Scenario) -> f64 {
    rate(p_r, q, sc.dest_pos, sc)
}

/// Laser transmission efficiency `exp(-alpha d)` over the slant range to the beacon.
pub fn laser_efficiency(q: Vec2, sc: &Scenario) -> f64 {
    let d = (sc.altitude * sc.altitude + (q - sc.pb_pos).norm_sq()).sqrt();
    (-sc.alpha() * d).exp()
}

/// Received electrical power at the UAV.
///
/// Zero below the activation threshold, otherwise the affine receiver fit,
/// which can dip below zero at very low link efficiency. Use
/// [`received_laser_power_clamped`] for energy bookkeeping.
pub fn received_laser_power(p_beacon: f64, q: Vec2, sc: &Scenario) -> f64 {
    if p_beacon < sc.pb_min {
        return 0.0;
    }
    affine_received_power(p_beacon, laser_efficiency(q, sc), &sc.laser)
}

pub fn received_laser_power_clamped(p_beacon: f64, q: Vec2, sc: &Scenario) -> f64 {
    received_laser_power(p_beacon, q, sc).max(0.0)
}

/// `a1 a2 eta P + a2 b1 eta + b2`.
pub fn affine_received_power(p_beacon: f64, eta: f64, lp: &LaserParams) -> f64 {
    lp.a1 * lp.a2 * eta * p_beacon + lp.a2 * lp.b1 * eta + lp.b2
}

/// Propulsion energy spent in one slot at velocity `v`.
pub fn flying_energy(v: Vec2, sc: &Scenario) -> f64 {
    sc.omega() * v.norm_sq()
}

/// Total communication power term of the energy-efficiency denominator.
pub fn consumed_comm_power(pw: &PowerSchedule, sc: &Scenario) -> f64 {
    let n = sc.n_slots;
    let src: f64 = pw.source[..n - 1].iter().sum();
    let rel: f64 = pw.relay[1..].iter().sum();
    sc.upsilon_s * src + sc.upsilon_r * rel + n as f64 * sc.p_on
}

/// Relay rates `R_n^r` (slot 0 is always zero).
pub fn relay_rates(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario) -> Vec<f64> {
    (0..sc.n_slots)
        .map(|n| if n == 0 { 0.0 } else { rate_uav_to_dest(pw.relay[n], traj.waypoints[n], sc) })
        .collect()
}

/// Source rates `R_n^s` (last slot is always zero).
pub fn source_rates(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario) -> Vec<f64> {
    (0..sc.n_slots)
        .map(|n| {
            if n + 1 == sc.n_slots {
                0.0
            } else {
                rate_source_to_uav(pw.source[n], traj.waypoints[n], sc)
            }
        })
        .collect()
}

/// Information-transmission energy efficiency.
pub fn f_ee(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario) -> Result<f64> {
    check_shapes(traj, pw, sc)?;
    let num: f64 = relay_rates(traj, pw, sc).iter().sum();
    Ok(num / consumed_comm_power(pw, sc))
}

/// Laser power-transfer efficiency, with received power clamped at zero.
pub fn f_pe(traj: &Trajectory, pw: &PowerSchedule, sc: &Scenario) -> Result<f64> {
    check_shapes(traj, pw, sc)?;
    let tx: f64 = pw.beacon.iter().sum();
    if tx <= 0.0 {
        return Err(Error::ZeroBeaconPower);
    }
    let rx: f64 = pw
        .beacon
        .iter()
        .zip(&traj.waypoints)
        .map(|(&p, &q)| received_laser_power_clamped(p, q, sc))
        .sum();
    Ok(rx / tx)
}
