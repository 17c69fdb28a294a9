//! Alternating optimization baseline. The variables are split into the
//! communication powers and the pair (trajectory, beacon power); each group
//! is optimized by the convex-concave procedure with the other held fixed.

use serde::{Deserialize, Serialize};

use crate::cccp::{self, CccpOptions, CccpState, Freeze};
use crate::error::Result;
use crate::evaluation::{objective, SolutionMetrics};
use crate::scenario::{PowerSchedule, Scenario, Trajectory};

#[derive(Debug, Clone)]
pub struct AoOptions {
    /// Relative objective change that ends the alternation.
    pub tol: f64,
    pub max_rounds: usize,
    /// Iteration cap for the (trajectory, beacon) group.
    pub group2_max_iters: usize,
    pub cccp: CccpOptions,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_rounds: 200,
            group2_max_iters: 100,
            cccp: CccpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    CommPowers,
    TrajectoryAndBeacon,
}

/// Objective after one group update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoRecord {
    pub round: usize,
    pub group: Group,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct AoResult {
    pub traj: Trajectory,
    pub pw: PowerSchedule,
    pub metrics: SolutionMetrics,
    pub history: Vec<AoRecord>,
    pub rounds: usize,
}

/// Starts from the same point as the convex-concave procedure.
pub fn solve(sc: &Scenario, opts: &AoOptions) -> Result<AoResult> {
    let start = cccp::initialize(sc, &opts.cccp)?;
    solve_from(start, sc, opts)
}

pub fn solve_from(start: CccpState, sc: &Scenario, opts: &AoOptions) -> Result<AoResult> {
    let mut state = start;
    let mut history = Vec::new();
    let mut prev = state.objective(sc);
    let mut rounds = 0;
    let group2 = CccpOptions {
        max_iters: opts.group2_max_iters,
        ..opts.cccp.clone()
    };
    while rounds < opts.max_rounds {
        rounds += 1;
        state = cccp::run(state, sc, &opts.cccp, Freeze::COMM_ONLY)?;
        history.push(AoRecord {
            round: rounds,
            group: Group::CommPowers,
            objective: state.objective(sc),
        });
        state = cccp::run(state, sc, &group2, Freeze::TRAJECTORY_AND_BEACON)?;
        let cur = state.objective(sc);
        history.push(AoRecord {
            round: rounds,
            group: Group::TrajectoryAndBeacon,
            objective: cur,
        });
        if ((cur - prev) / prev.abs().max(1e-12)).abs() < opts.tol {
            break;
        }
        prev = cur;
    }
    let metrics = objective(&state.traj, &state.pw, sc)?;
    Ok(AoResult {
        traj: state.traj,
        pw: state.pw,
        metrics,
        history,
        rounds,
    })
}
