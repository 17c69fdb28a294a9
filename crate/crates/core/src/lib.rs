//! Joint power and trajectory optimization for a UAV relay that is
//! recharged in flight by a ground laser power beacon.
//!
//! The crate provides the physical model ([`scenario`]), feasibility and
//! quality checks ([`evaluation`]), a dense SOCP solver ([`socp`]) and three
//! optimizers for the weighted efficiency objective:
//!
//! * [`cccp`]: convex-concave procedure, one SOCP per iteration;
//! * [`pdd`]: penalty dual decomposition with closed-form block updates;
//! * [`ao`]: alternating optimization baseline.

pub mod ao;
pub mod cccp;
pub mod error;
pub mod evaluation;
pub mod pdd;
pub mod scenario;
pub mod socp;

pub use error::{Error, Result};
