use std::time::Instant;

use laser_relay::ao::{self, AoOptions, AoRecord};
use laser_relay::cccp::{self, CccpOptions, CccpState, Freeze};
use laser_relay::evaluation::{check_feasibility, objective, FeasibilityReport, SolutionMetrics};
use laser_relay::pdd::{self, PddOptions, PddRecord};
use laser_relay::scenario::{PowerSchedule, Scenario, Trajectory, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Solver};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub solver: Solver,
    pub gamma: f64,
    pub horizon_s: f64,
    /// Sweep position of the horizon; selects the initialization stream.
    pub horizon_index: usize,
    pub tag: String,
}

impl RunSpec {
    /// `<solver>_<gamma>_<tag>`
    pub fn stem(&self) -> String {
        format!("{}_{}_{}", self.solver.name(), self.gamma, self.tag)
    }
}

#[derive(Debug, Clone)]
pub enum Convergence {
    Cccp(Vec<f64>),
    Pdd(Vec<PddRecord>),
    Ao(Vec<AoRecord>),
}

impl Convergence {
    pub fn len(&self) -> usize {
        match self {
            Convergence::Cccp(h) => h.len(),
            Convergence::Pdd(h) => h.len(),
            Convergence::Ao(h) => h.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub traj: Trajectory,
    pub pw: PowerSchedule,
    pub metrics: SolutionMetrics,
    pub feasibility: FeasibilityReport,
    pub iterations: usize,
    pub converged: bool,
    pub convergence: Convergence,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub scenario: Scenario,
    pub result: Result<Solution, String>,
    pub wall_time_s: f64,
}

pub fn plan(cfg: &ExperimentConfig) -> Vec<RunSpec> {
    let mut runs = Vec::new();
    for (h, &t) in cfg.horizons().iter().enumerate() {
        for &gamma in &cfg.gammas {
            for solver in cfg.solver.expand() {
                runs.push(RunSpec {
                    solver,
                    gamma,
                    horizon_s: t,
                    horizon_index: h,
                    tag: format!("T{t}-{}", cfg.laser.tag()),
                });
            }
        }
    }
    runs
}

fn cccp_options(cfg: &ExperimentConfig) -> CccpOptions {
    let mut o = CccpOptions::default();
    if let Some(t) = cfg.tol {
        o.tol = t;
    }
    if let Some(m) = cfg.max_iters {
        o.max_iters = m;
    }
    o
}

/// Starting point shared by all solvers at one sweep point.
pub fn start_point(cfg: &ExperimentConfig, spec: &RunSpec, sc: &Scenario) -> Result<CccpState, String> {
    let opts = cccp_options(cfg);
    let (traj, pw) = if cfg.perturbation_m > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(spec.horizon_index as u64));
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let radius = cfg.perturbation_m * rng.random_range(0.0..1.0f64).sqrt();
        let bump = Vec2::new(radius * angle.cos(), radius * angle.sin());
        cccp::perturbed_start(sc, bump, rng.random_range(0.5..1.0))
    } else {
        cccp::nominal_start(sc)
    };
    cccp::initialize_from(traj, pw, sc, &opts).map_err(|e| e.to_string())
}

fn solve_one(cfg: &ExperimentConfig, spec: &RunSpec, sc: &Scenario) -> Result<Solution, String> {
    let start = start_point(cfg, spec, sc)?;
    let copts = cccp_options(cfg);
    let (traj, pw, iterations, converged, convergence) = match spec.solver {
        Solver::Cccp => {
            let st = cccp::run(start, sc, &copts, Freeze::default()).map_err(|e| e.to_string())?;
            let converged = st.iteration < copts.max_iters;
            (st.traj, st.pw, st.iteration, converged, Convergence::Cccp(st.history))
        }
        Solver::Ao => {
            let mut o = AoOptions {
                cccp: copts.clone(),
                ..Default::default()
            };
            if let Some(t) = cfg.tol {
                o.tol = t;
            }
            if let Some(m) = cfg.max_iters {
                o.max_rounds = m;
            }
            let r = ao::solve_from(start, sc, &o).map_err(|e| e.to_string())?;
            let converged = r.rounds < o.max_rounds;
            (r.traj, r.pw, r.rounds, converged, Convergence::Ao(r.history))
        }
        Solver::Pdd => {
            let mut o = PddOptions::default();
            if let Some(v) = cfg.pdd_viol_tol {
                o.viol_tol = v;
            }
            if let Some(m) = cfg.max_iters {
                o.max_inner_total = m;
            }
            let r = pdd::solve_from(&start.traj, &start.pw, sc, &o).map_err(|e| e.to_string())?;
            (r.traj, r.pw, r.inner_iterations, r.converged, Convergence::Pdd(r.history))
        }
    };
    let metrics = objective(&traj, &pw, sc).map_err(|e| e.to_string())?;
    let feasibility = check_feasibility(&traj, &pw, sc, copts.feasibility_tol).map_err(|e| e.to_string())?;
    Ok(Solution {
        traj,
        pw,
        metrics,
        feasibility,
        iterations,
        converged,
        convergence,
    })
}

/// Executes every planned run concurrently; results keep plan order.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<RunOutcome>, CliError> {
    let specs = plan(cfg);
    let scenarios = specs
        .iter()
        .map(|s| cfg.scenario(s.gamma, s.horizon_s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(specs
        .into_par_iter()
        .zip(scenarios)
        .map(|(spec, scenario)| {
            let t0 = Instant::now();
            let result = solve_one(cfg, &spec, &scenario);
            RunOutcome {
                spec,
                scenario,
                result,
                wall_time_s: t0.elapsed().as_secs_f64(),
            }
        })
        .collect())
}
