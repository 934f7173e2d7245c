//! Simulation and analysis toolkit for single-photon emitters.
//!
//! The crate is organised around the measurement chain of a Hanbury Brown–Twiss
//! experiment:
//!
//! - [`emitter`]: N-level rate-equation models, steady states, analytic g²(τ)
//!   and the Arrhenius thermal-quenching law.
//! - [`sim`]: stochastic trajectories that turn a level system into detector
//!   time tags, including beam splitting, background and detector response.
//! - [`timetag`]: the time-tag stream type and the PTAG/CSV file formats.
//! - [`correlator`]: coincidence histograms g²(τ) and TCSPC lifetime histograms.
//! - [`fitting`]: Levenberg–Marquardt engine and the photophysical models.
//! - [`spectral`]: zero-phonon-line fits, Huang–Rhys factors and thermal-cycle
//!   metric tables.

pub mod correlator;
pub mod emitter;
pub mod error;
pub mod fitting;
mod master;
pub mod sim;
pub mod spectral;
pub mod timetag;

pub use error::{Error, Result};

/// Boltzmann constant in eV/K.
pub const K_B_EV: f64 = 8.617333e-5;

/// Picoseconds per second.
pub const PS_PER_S: f64 = 1e12;
