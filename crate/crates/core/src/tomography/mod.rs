//! Point-by-point phase-space scans.
//!
//! The probe displaces the detected field by `−β`, where `β = √η α` lives in
//! detected units; the parity of the resulting photon statistics is the
//! measured Wigner value `W(β)`. Losses act in this order: the signal passes
//! the beamsplitter (`t²`), a fraction `1 − V` of its power fails to
//! interfere with the probe, and the detector registers each photon with
//! probability `η`. The mismatched part is counted incoherently, which for a
//! coherent source yields
//!
//! `W(β) = exp(−2|β − √(Vη) t α₀|² − 2(1 − V) η t² |α₀|²)`.

mod beamsplitter;
mod scan;
mod source;

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::fockspace::ComplexAmplitude;

pub use beamsplitter::{beamsplitter_finite_r_check, BeamsplitterReport};
pub use scan::{
    assemble_grid, estimate_point, interpolate_polar, point_packet, run_scan, run_scan_with,
    scan_point_statistics, GridPoint, InterpolatedSurface, PhaseDrift, PointEstimate, ScanManifest,
    ScanMode, ScanOptions, ScanTiming, TraceSettings, WignerGrid, DEFAULT_OVERFLOW_LIMIT,
    GRID_CSV_HEADER,
};
pub use source::{
    displaced_distribution, phase_diffused_mixture, DetectedStatistics, Modulation, SourceState,
};

/// Detection chain parameters. The mode overlap `V` is derived from the
/// visibility on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentModel {
    /// Detection efficiency.
    pub eta: f64,
    /// Signal/probe interference visibility.
    pub v: f64,
    /// Beamsplitter power transmission for the signal.
    pub t2: f64,
}

impl ExperimentModel {
    pub const IDEAL: Self = Self {
        eta: 1.0,
        v: 1.0,
        t2: 1.0,
    };

    pub fn new(eta: f64, v: f64, t2: f64) -> Result<Self> {
        let m = Self { eta, v, t2 };
        m.validate()?;
        Ok(m)
    }

    /// Efficiency 0.72, visibility 0.98, transmission 0.99.
    pub fn detector_regime() -> Self {
        Self {
            eta: 0.72,
            v: 0.98,
            t2: 0.99,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (quantity, value) in [("eta", self.eta), ("v", self.v), ("t2", self.t2)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Domain {
                    quantity,
                    value,
                    domain: "[0, 1]",
                });
            }
        }
        Ok(())
    }

    /// `V = v / (2 − v)`.
    pub fn overlap(&self) -> f64 {
        self.v / (2.0 - self.v)
    }

    pub fn r2(&self) -> f64 {
        1.0 - self.t2
    }

    /// Amplitude factor `√(Vη) t` mapping `α₀` to the measured centre.
    pub fn centre_factor(&self) -> f64 {
        (self.overlap() * self.eta * self.t2).sqrt()
    }

    /// Mean count added by the mismatched part, per unit `|α₀|²`.
    pub fn background_factor(&self) -> f64 {
        (1.0 - self.overlap()) * self.eta * self.t2
    }
}

/// Mean detected count `λ` for a coherent source at probe point `β`.
pub fn coherent_mean_count(
    beta: ComplexAmplitude,
    alpha0: ComplexAmplitude,
    model: &ExperimentModel,
) -> f64 {
    let centre = alpha0.alpha() * model.centre_factor();
    (beta.alpha() - centre).norm_sqr() + model.background_factor() * alpha0.norm_sqr()
}

/// Closed-form measured Wigner value of a coherent source (peak-one).
pub fn measured_wigner_theory(
    beta: ComplexAmplitude,
    alpha0: ComplexAmplitude,
    model: &ExperimentModel,
) -> f64 {
    (-2.0 * coherent_mean_count(beta, alpha0, model)).exp()
}

/// Polar sampling of the probe `β`: `n_phase` uniform phases on each of
/// `n_amplitude` circles from `|β| = 0` to `max_amplitude`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanGeometry {
    pub n_amplitude: usize,
    pub n_phase: usize,
    pub max_amplitude: f64,
}

impl Default for ScanGeometry {
    fn default() -> Self {
        Self {
            n_amplitude: 40,
            n_phase: 60,
            max_amplitude: 2.5,
        }
    }
}

impl ScanGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.n_amplitude == 0 || self.n_phase == 0 {
            return Err(Error::InvalidArgument(
                "scan needs at least one amplitude and one phase".into(),
            ));
        }
        if !(self.max_amplitude >= 0.0) || !self.max_amplitude.is_finite() {
            return Err(Error::Domain {
                quantity: "max_amplitude",
                value: self.max_amplitude,
                domain: "[0, ∞)",
            });
        }
        Ok(())
    }

    pub fn amplitude(&self, k: usize) -> f64 {
        if self.n_amplitude == 1 {
            self.max_amplitude
        } else {
            self.max_amplitude * k as f64 / (self.n_amplitude - 1) as f64
        }
    }

    pub fn phase(&self, j: usize) -> f64 {
        TAU * j as f64 / self.n_phase as f64
    }

    pub fn len(&self) -> usize {
        self.n_amplitude * self.n_phase
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(amp_index, phase_index, β)` circle by circle.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize, ComplexAmplitude)> + '_ {
        (0..self.n_amplitude).flat_map(move |k| {
            (0..self.n_phase).map(move |j| {
                let b = num_complex::Complex64::from_polar(self.amplitude(k), self.phase(j));
                (k, j, ComplexAmplitude::from_alpha(b))
            })
        })
    }
}
