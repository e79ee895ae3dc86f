//! Mean-field ground state, phase classification, critical coupling and
//! critical temperature of the disordered Dicke model, with a small-N exact
//! diagonalization oracle.
//!
//! Energies use ħ = 1 throughout: Δ, ε, g, ω and k_BT all share one unit.

pub mod cli;
pub mod error;
pub mod meanfield;
pub mod model;
pub mod oracle;
pub mod phase;
pub mod specialfn;
mod sum;

pub use error::{Error, Result};
pub use meanfield::{ClassicalState, SelfConsistentSolution, Stability, StationaryPoint};
pub use model::{DisorderSpec, Ensemble, QubitParams, ThermalSpec};
pub use phase::{Classification, CriticalitySummary, PhasePoint};
