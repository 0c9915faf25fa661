//! Simulation and phase tuning for linear-optical Mean King's Problem setups.
//!
//! The pipeline is:
//!
//! 1. [`qstate`] builds mutually unbiased bases (MUBs) in an odd prime
//!    dimension, the generalized Bell state and the states left behind by
//!    the King's projective measurement.
//! 2. [`vaa`] builds the Latin-square mapping table and the D² orthonormal
//!    VAA measurement states.
//! 3. [`optics`] describes a graph-derived linear-optical setup and expands
//!    two-photon inputs into detector click-pattern distributions.
//! 4. [`inference`] decodes click patterns with a MAP rule and scores the
//!    setup (`p_V` for VAA identification, `p_M` per King basis).
//! 5. [`tuner`] searches phase-shifter settings with multi-start BFGS.
//!
//! [`report`] and [`verify`] hold the file formats and invariant suites used
//! by the `mkp` command-line tool.

pub mod error;
pub mod inference;
pub mod optics;
pub mod qstate;
pub mod report;
pub mod tuner;
pub mod vaa;
pub mod verify;

pub use error::{Error, Result};
pub use inference::{Experiment, Scoring, Strategy};
pub use optics::{PhaseVector, SetupModel};
pub use qstate::{MubFamily, TwoPhotonState};
pub use vaa::VaaBasis;

/// Complex amplitude type used throughout the crate.
pub type C64 = num_complex::Complex64;
