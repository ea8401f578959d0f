//! Direct Wigner-function measurement by photon-number-resolving detection.
//!
//! The crate is organised bottom-up:
//!
//! * [`fockspace`] - truncated Fock-space states, displacement, parity and
//!   closed-form phase-space references.
//! * [`tes_sim`] - synthetic transition-edge-sensor traces and the packet
//!   file format.
//! * [`pulse_pipeline`] - edge detection, peak windows, histogram thresholds
//!   and per-bin photon counts.
//! * [`tomography`] - polar phase-space scans with the loss/visibility model.
//! * [`fitting`] - Gaussian surface fits with uncertainties.

pub mod error;
pub mod fitting;
pub mod fockspace;
pub mod fsutil;
pub mod pulse_pipeline;
mod rng;
pub mod tes_sim;
pub mod tomography;

pub use error::{Error, ErrorKind, Result};
pub use fockspace::{ComplexAmplitude, DensityMatrix, PhotonDistribution};
