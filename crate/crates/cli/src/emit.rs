use std::fs;
use std::path::{Path, PathBuf};

use laser_relay::pdd::PddRecord;
use laser_relay::scenario::received_laser_power_clamped;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::run::{Convergence, RunOutcome, Solution};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub slot: usize,
    pub x: f64,
    pub y: f64,
    /// Speed flown from this waypoint to the next; zero in the last slot.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub slot: usize,
    pub p_s: f64,
    pub p_r: f64,
    /// Beacon transmit power.
    #[serde(rename = "P_s")]
    pub beacon: f64,
    /// Received laser power.
    #[serde(rename = "P_r")]
    pub received: f64,
    /// Battery level after the slot.
    pub battery: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CccpRow {
    pub iteration: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoRow {
    pub iteration: usize,
    pub round: usize,
    pub group: String,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PddRow {
    pub iteration: usize,
    pub outer: usize,
    pub objective: f64,
    pub al_value: f64,
    pub violation: f64,
    pub rho: f64,
}

impl From<&PddRecord> for PddRow {
    fn from(r: &PddRecord) -> Self {
        Self {
            iteration: r.iteration,
            outer: r.outer,
            objective: r.objective,
            al_value: r.al_value,
            violation: r.violation,
            rho: r.rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub solver: String,
    pub gamma: f64,
    pub tag: String,
    pub horizon_s: f64,
    pub slots: usize,
    pub status: String,
    pub error: Option<String>,
    pub f_ee: Option<f64>,
    pub f_pe: Option<f64>,
    pub objective: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub feasible: Option<bool>,
    pub worst_family: Option<String>,
    pub worst_relative_violation: Option<f64>,
    pub min_beacon_distance_m: Option<f64>,
}

pub fn trajectory_rows(sol: &Solution, dt: f64) -> Vec<TrajectoryRow> {
    let w = &sol.traj.waypoints;
    (0..w.len())
        .map(|k| TrajectoryRow {
            slot: k,
            x: w[k].x,
            y: w[k].y,
            speed: if k + 1 < w.len() { (w[k + 1] - w[k]).norm() / dt } else { 0.0 },
        })
        .collect()
}

pub fn power_rows(out: &RunOutcome, sol: &Solution) -> Vec<PowerRow> {
    (0..sol.traj.waypoints.len())
        .map(|k| PowerRow {
            slot: k,
            p_s: sol.pw.source[k],
            p_r: sol.pw.relay[k],
            beacon: sol.pw.beacon[k],
            received: received_laser_power_clamped(sol.pw.beacon[k], sol.traj.waypoints[k], &out.scenario),
            battery: sol.metrics.battery[k],
        })
        .collect()
}

pub fn summary(out: &RunOutcome) -> Summary {
    let mut s = Summary {
        solver: out.spec.solver.name().into(),
        gamma: out.spec.gamma,
        tag: out.spec.tag.clone(),
        horizon_s: out.spec.horizon_s,
        slots: out.scenario.n_slots,
        status: "ok".into(),
        error: None,
        f_ee: None,
        f_pe: None,
        objective: None,
        iterations: None,
        converged: None,
        feasible: None,
        worst_family: None,
        worst_relative_violation: None,
        min_beacon_distance_m: None,
    };
    match &out.result {
        Ok(sol) => {
            let (family, v) = sol.feasibility.worst();
            s.f_ee = Some(sol.metrics.f_ee);
            s.f_pe = Some(sol.metrics.f_pe);
            s.objective = Some(sol.metrics.objective);
            s.iterations = Some(sol.iterations);
            s.converged = Some(sol.converged);
            s.feasible = Some(sol.feasibility.feasible);
            s.worst_family = Some(family.into());
            s.worst_relative_violation = Some(v);
            s.min_beacon_distance_m = Some(sol.metrics.min_beacon_distance);
        }
        Err(e) => {
            s.status = "error".into();
            s.error = Some(e.clone());
        }
    }
    s
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let io = |e: csv::Error| {
        let err = match e.into_kind() {
            csv::ErrorKind::Io(e) => e,
            other => std::io::Error::other(format!("{other:?}")),
        };
        CliError::io(path, err)
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes the per-run tables and summaries, the sweep summary, a timing
/// table and the resolved configuration. Everything except `timings.csv`
/// is a deterministic function of the configuration.
pub fn emit(cfg: &ExperimentConfig, outcomes: &[RunOutcome], dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    let mut push = |p: PathBuf| {
        written.push(p.clone());
        p
    };
    for out in outcomes {
        let stem = out.spec.stem();
        if let Ok(sol) = &out.result {
            let p = push(dir.join(format!("{stem}.trajectory.csv")));
            write_csv(&p, &trajectory_rows(sol, out.scenario.delta_t))?;
            let p = push(dir.join(format!("{stem}.power.csv")));
            write_csv(&p, &power_rows(out, sol))?;
            let p = push(dir.join(format!("{stem}.convergence.csv")));
            match &sol.convergence {
                Convergence::Cccp(h) => {
                    let rows: Vec<CccpRow> =
                        h.iter().enumerate().map(|(i, &v)| CccpRow { iteration: i, objective: v }).collect();
                    write_csv(&p, &rows)?;
                }
                Convergence::Ao(h) => {
                    let rows: Vec<AoRow> = h
                        .iter()
                        .enumerate()
                        .map(|(i, r)| AoRow {
                            iteration: i + 1,
                            round: r.round,
                            group: format!("{:?}", r.group),
                            objective: r.objective,
                        })
                        .collect();
                    write_csv(&p, &rows)?;
                }
                Convergence::Pdd(h) => {
                    let rows: Vec<PddRow> = h.iter().map(PddRow::from).collect();
                    write_csv(&p, &rows)?;
                }
            }
        }
        let p = push(dir.join(format!("{stem}.summary.json")));
        let json = serde_json::to_string_pretty(&summary(out)).expect("summary serializes");
        write_text(&p, &(json + "\n"))?;
    }
    let rows: Vec<Summary> = outcomes.iter().map(summary).collect();
    let p = push(dir.join("summary.csv"));
    write_csv(&p, &rows)?;
    #[derive(Serialize)]
    struct Timing<'a> {
        run: &'a str,
        wall_time_s: f64,
    }
    let stems: Vec<String> = outcomes.iter().map(|o| o.spec.stem()).collect();
    let timings: Vec<Timing> = outcomes
        .iter()
        .zip(&stems)
        .map(|(o, s)| Timing {
            run: s,
            wall_time_s: o.wall_time_s,
        })
        .collect();
    let p = push(dir.join("timings.csv"));
    write_csv(&p, &timings)?;
    let p = push(dir.join("config.toml"));
    write_text(&p, &cfg.to_toml())?;
    Ok(written)
}
