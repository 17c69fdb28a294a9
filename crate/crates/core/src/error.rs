use thiserror::Error;

use crate::socp::SolveStatus;

/// Errors raised by the model and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("schedule length mismatch: expected {expected} slots, got {got} ({what})")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("laser power transfer efficiency undefined: total beacon power is zero")]
    ZeroBeaconPower,

    #[error("point is infeasible (worst relative violation {violation:.3e} in {family})")]
    Infeasible { family: &'static str, violation: f64 },

    #[error("malformed conic program: {0}")]
    MalformedProgram(String),

    #[error("conic subproblem returned {status:?} at outer iteration {iteration} (primal res {primal:.2e}, dual res {dual:.2e}, gap {gap:.2e})")]
    Subproblem {
        status: SolveStatus,
        iteration: usize,
        primal: f64,
        dual: f64,
        gap: f64,
    },

    #[error("no feasible starting point: {0}")]
    NoFeasibleStart(String),

    #[error("block update failed: {0}")]
    Block(String),
}

pub type Result<T> = std::result::Result<T, Error>;
