//! Resonance-fluorescence simulator: a laser-driven two-level emitter whose
//! output is cascaded into detector modes or a polariton target.
//!
//! Units: the emitter decay rate γ_σ is 1, and every frequency is measured
//! from the laser frequency.

pub mod correlator;
pub mod entglmeas;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod liouville;
pub mod modelkit;
pub mod opalg;
pub mod scenarios;
pub mod trajec;

pub use error::{Error, Result};
pub use faer::c64;
