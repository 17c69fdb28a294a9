use std::path::{Path, PathBuf};

use clap::ValueEnum;
use laser_relay::scenario::{db_to_linear, dbm_to_watts, LaserParams, Scenario, Vec2, Wavelength, Weather};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Cccp,
    Pdd,
    Ao,
    All,
}

impl SolverChoice {
    pub fn expand(self) -> Vec<Solver> {
        match self {
            SolverChoice::Cccp => vec![Solver::Cccp],
            SolverChoice::Pdd => vec![Solver::Pdd],
            SolverChoice::Ao => vec![Solver::Ao],
            SolverChoice::All => vec![Solver::Cccp, Solver::Pdd, Solver::Ao],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Cccp,
    Pdd,
    Ao,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Cccp => "cccp",
            Solver::Pdd => "pdd",
            Solver::Ao => "ao",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum WeatherArg {
    ClearAir,
    Haze,
    Fog,
}

impl From<WeatherArg> for Weather {
    fn from(w: WeatherArg) -> Self {
        match w {
            WeatherArg::ClearAir => Weather::ClearAir,
            WeatherArg::Haze => Weather::Haze,
            WeatherArg::Fog => Weather::Fog,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaserConfig {
    /// 810 or 1550.
    pub wavelength_nm: u32,
    pub weather: WeatherArg,
}

impl Default for LaserConfig {
    fn default() -> Self {
        Self {
            wavelength_nm: 810,
            weather: WeatherArg::ClearAir,
        }
    }
}

impl LaserConfig {
    pub fn wavelength(&self) -> Result<Wavelength, CliError> {
        match self.wavelength_nm {
            810 => Ok(Wavelength::Nm810),
            1550 => Ok(Wavelength::Nm1550),
            w => Err(CliError::Config(format!("laser.wavelength_nm = {w} (supported: 810, 1550)"))),
        }
    }

    pub fn tag(&self) -> String {
        format!("{}nm-{}", self.wavelength_nm, Weather::from(self.weather).name())
    }
}

/// Everything an experiment needs. Scenario quantities use the units in
/// their names; powers are given in dBm or watts as named.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub solver: SolverChoice,
    pub gammas: Vec<f64>,
    /// Mission durations to sweep; empty means `t_total_s` only.
    pub horizons_s: Vec<f64>,
    pub seed: u64,
    /// Amplitude of the random bend applied to the initial trajectory; zero
    /// keeps the straight-line start.
    pub perturbation_m: f64,
    pub out: PathBuf,
    /// Relative-improvement stop tolerance for CCCP and AO.
    pub tol: Option<f64>,
    /// Iteration cap: CCCP iterations, AO rounds, PDD inner iterations.
    pub max_iters: Option<usize>,
    pub pdd_viol_tol: Option<f64>,

    pub source: [f64; 2],
    pub destination: [f64; 2],
    pub power_beacon: [f64; 2],
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub altitude_m: f64,
    pub t_total_s: f64,
    pub delta_t_s: f64,
    pub v_max_mps: f64,
    pub gamma0_db: f64,
    pub p_max_source_dbm: f64,
    pub p_max_relay_dbm: f64,
    pub beacon_min_w: f64,
    pub beacon_max_w: f64,
    pub mass_kg: f64,
    pub battery_j: f64,
    pub battery_floor_j: f64,
    pub upsilon_source: f64,
    pub upsilon_relay: f64,
    pub circuit_power_w: f64,
    pub r_sum: f64,

    pub laser: LaserConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sc = Scenario::nominal();
        let xy = |v: Vec2| [v.x, v.y];
        Self {
            solver: SolverChoice::All,
            gammas: vec![1.0, 100.0, 1000.0],
            horizons_s: Vec::new(),
            seed: 0,
            perturbation_m: 0.0,
            out: PathBuf::from("results"),
            tol: None,
            max_iters: None,
            pdd_viol_tol: None,
            source: xy(sc.source_pos),
            destination: xy(sc.dest_pos),
            power_beacon: xy(sc.pb_pos),
            start: xy(sc.q_init),
            end: xy(sc.q_final),
            altitude_m: sc.altitude,
            t_total_s: sc.t_total,
            delta_t_s: sc.delta_t,
            v_max_mps: sc.v_max,
            gamma0_db: 80.0,
            p_max_source_dbm: 20.0,
            p_max_relay_dbm: 20.0,
            beacon_min_w: sc.pb_min,
            beacon_max_w: sc.pb_max,
            mass_kg: sc.mass,
            battery_j: sc.energy_budget,
            battery_floor_j: sc.energy_floor,
            upsilon_source: sc.upsilon_s,
            upsilon_relay: sc.upsilon_r,
            circuit_power_w: sc.p_on,
            r_sum: sc.r_sum,
            laser: LaserConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn horizons(&self) -> Vec<f64> {
        if self.horizons_s.is_empty() {
            vec![self.t_total_s]
        } else {
            self.horizons_s.clone()
        }
    }

    /// Scenario for one sweep point.
    pub fn scenario(&self, gamma: f64, horizon_s: f64) -> Result<Scenario, CliError> {
        let v = |a: [f64; 2]| Vec2::new(a[0], a[1]);
        if horizon_s <= 0.0 || self.delta_t_s <= 0.0 {
            return Err(CliError::Config("horizon and delta_t_s must be positive".into()));
        }
        let slots = horizon_s / self.delta_t_s;
        if (slots - slots.round()).abs() > 1e-9 * slots.max(1.0) {
            return Err(CliError::Config(format!(
                "horizon {horizon_s} s is not a multiple of delta_t_s = {} s",
                self.delta_t_s
            )));
        }
        let sc = Scenario {
            source_pos: v(self.source),
            dest_pos: v(self.destination),
            pb_pos: v(self.power_beacon),
            altitude: self.altitude_m,
            q_init: v(self.start),
            q_final: v(self.end),
            t_total: horizon_s,
            delta_t: self.delta_t_s,
            n_slots: slots.round() as usize,
            v_max: self.v_max_mps,
            gamma0: db_to_linear(self.gamma0_db),
            p_max_s: dbm_to_watts(self.p_max_source_dbm),
            p_max_r: dbm_to_watts(self.p_max_relay_dbm),
            pb_min: self.beacon_min_w,
            pb_max: self.beacon_max_w,
            laser: LaserParams::preset(self.laser.wavelength()?, self.laser.weather.into()),
            mass: self.mass_kg,
            energy_budget: self.battery_j,
            energy_floor: self.battery_floor_j,
            upsilon_s: self.upsilon_source,
            upsilon_r: self.upsilon_relay,
            p_on: self.circuit_power_w,
            r_sum: self.r_sum,
            gamma_weight: gamma,
        };
        sc.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(sc)
    }

    /// Checks every sweep point resolves to a valid scenario.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.gammas.is_empty() {
            return Err(CliError::Config("gammas is empty".into()));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(CliError::Config(format!("tol = {t} (must be positive)")));
            }
        }
        if self.perturbation_m < 0.0 || !self.perturbation_m.is_finite() {
            return Err(CliError::Config(format!("perturbation_m = {}", self.perturbation_m)));
        }
        for &t in &self.horizons() {
            for &g in &self.gammas {
                self.scenario(g, t)?;
            }
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ExperimentConfig::parse(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
