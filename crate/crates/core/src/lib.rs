//! Semi-Lagrangian solvers for hybrid optimal visiting problems, where an
//! agent (or a crowd of agents) must visit or discard a list of targets
//! before a horizon, and the mean-field game obtained by coupling the crowd
//! density back into the running cost.

pub mod check;
pub mod cli;
pub mod cost;
pub mod error;
pub mod export;
pub mod grid;
pub mod hjb;
pub mod mfg;
pub mod scenario;
pub mod statespace;
pub mod trajectory;
pub mod transport;

pub use error::{Error, Result};
