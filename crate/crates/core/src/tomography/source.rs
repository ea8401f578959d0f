use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::{coherent_mean_count, ExperimentModel};
use crate::error::{Error, Result};
use crate::fockspace::{
    displace, loss_channel, loss_kraus_branches, parity, poisson_tail, ComplexAmplitude,
    DensityMatrix, PhotonDistribution, Truncation,
};
use crate::tes_sim::PhotonCountSampler;

/// Signal state before the beamsplitter.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceState {
    Vacuum,
    /// Coherent state `|α₀⟩`, amplitude before any loss.
    Coherent {
        alpha0: ComplexAmplitude,
    },
    /// Statistical mixture of coherent states, `(weight, α₀)` pairs.
    Mixture {
        components: Vec<(f64, ComplexAmplitude)>,
    },
    Raw(DensityMatrix),
}

/// Phase modulation producing a phase-diffused source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modulation {
    /// `φ(t) = depth · sin(2π f t)`, sampled uniformly in time.
    Sinusoidal { frequency: f64, depth: f64 },
    /// Phases uniform on `[0, 2π)`.
    Uniform,
}

/// Discretizes a phase-modulated coherent state into `n_components` equal
/// weights. Uniform time sampling of a sinusoid reproduces the arcsine law of
/// the phase.
pub fn phase_diffused_mixture(
    alpha0: ComplexAmplitude,
    modulation: Modulation,
    n_components: usize,
) -> Result<SourceState> {
    if n_components < 2 {
        return Err(Error::InvalidArgument(
            "a phase-diffused mixture needs at least 2 components".into(),
        ));
    }
    let w = 1.0 / n_components as f64;
    let phases: Vec<f64> = match modulation {
        Modulation::Sinusoidal { frequency, depth } => {
            if !(depth >= 0.0) || !depth.is_finite() {
                return Err(Error::Domain {
                    quantity: "modulation depth",
                    value: depth,
                    domain: "[0, ∞)",
                });
            }
            if !(frequency > 0.0) {
                return Err(Error::Domain {
                    quantity: "modulation frequency",
                    value: frequency,
                    domain: "(0, ∞)",
                });
            }
            if depth == 0.0 {
                return Ok(SourceState::Coherent { alpha0 });
            }
            (0..n_components)
                .map(|k| depth * (TAU * (k as f64 + 0.5) / n_components as f64).sin())
                .collect()
        }
        Modulation::Uniform => (0..n_components)
            .map(|k| TAU * k as f64 / n_components as f64)
            .collect(),
    };
    Ok(SourceState::Mixture {
        components: phases
            .into_iter()
            .map(|phi| (w, alpha0.rotate(phi)))
            .collect(),
    })
}

impl SourceState {
    pub fn kind(&self) -> &'static str {
        match self {
            SourceState::Vacuum => "vacuum",
            SourceState::Coherent { .. } => "coherent",
            SourceState::Mixture { .. } => "phase_diffused",
            SourceState::Raw(_) => "raw",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SourceState::Vacuum | SourceState::Coherent { .. } => Ok(()),
            SourceState::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidArgument("empty mixture".into()));
                }
                if components.iter().any(|(w, _)| !(*w >= 0.0)) {
                    return Err(Error::InvalidArgument(
                        "mixture weights must be non-negative".into(),
                    ));
                }
                let total: f64 = components.iter().map(|(w, _)| w).sum();
                if (total - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidArgument(format!(
                        "mixture weights sum to {total}"
                    )));
                }
                Ok(())
            }
            SourceState::Raw(rho) => rho.validate(),
        }
    }

    /// The state with its optical phase advanced by `phi`.
    pub fn rotated(&self, phi: f64) -> Self {
        match self {
            SourceState::Vacuum => SourceState::Vacuum,
            SourceState::Coherent { alpha0 } => SourceState::Coherent {
                alpha0: alpha0.rotate(phi),
            },
            SourceState::Mixture { components } => SourceState::Mixture {
                components: components
                    .iter()
                    .map(|&(w, a)| (w, a.rotate(phi)))
                    .collect(),
            },
            SourceState::Raw(rho) => {
                let m = rho.elements();
                let r = DMatrix::from_fn(m.nrows(), m.ncols(), |a, b| {
                    m[(a, b)] * Complex64::from_polar(1.0, phi * (a as f64 - b as f64))
                });
                SourceState::Raw(DensityMatrix::from_parts_unchecked(r, rho.tail_mass()))
            }
        }
    }

    /// Photon statistics at the detector for probe point `β`.
    ///
    /// `working_cutoff` bounds the Fock space used for raw states; closed
    /// forms are used otherwise.
    pub fn detected(
        &self,
        beta: ComplexAmplitude,
        model: &ExperimentModel,
        working_cutoff: usize,
    ) -> Result<DetectedStatistics> {
        model.validate()?;
        let coherent = |a: ComplexAmplitude| coherent_mean_count(beta, a, model);
        Ok(match self {
            SourceState::Vacuum => DetectedStatistics::PoissonMixture {
                weights: vec![1.0],
                means: vec![coherent(ComplexAmplitude::ZERO)],
            },
            SourceState::Coherent { alpha0 } => DetectedStatistics::PoissonMixture {
                weights: vec![1.0],
                means: vec![coherent(*alpha0)],
            },
            SourceState::Mixture { components } => DetectedStatistics::PoissonMixture {
                weights: components.iter().map(|c| c.0).collect(),
                means: components.iter().map(|c| coherent(c.1)).collect(),
            },
            SourceState::Raw(rho) => {
                DetectedStatistics::Numeric(raw_detected(rho, beta, model, working_cutoff)?)
            }
        })
    }
}

/// Transmission and detection loss, then the overlap split: Kraus branch `k`
/// of the split leaves the interfering part conditioned on `k` photons in
/// the mismatched mode, all of which are counted.
fn raw_detected(
    rho: &DensityMatrix,
    beta: ComplexAmplitude,
    model: &ExperimentModel,
    working_cutoff: usize,
) -> Result<PhotonDistribution> {
    let w = working_cutoff.max(rho.cutoff());
    let lossy = loss_channel(rho, model.eta * model.t2)?;
    let branches = loss_kraus_branches(&lossy, model.overlap())?;
    let mut probs = vec![0.0; w + 1];
    for (k, b) in branches.into_iter().enumerate() {
        if b.trace().re <= 0.0 {
            continue;
        }
        let shifted = displace(&DensityMatrix::from_parts_unchecked(b, 0.0), -beta, w)?;
        let m = shifted.elements();
        for n in 0..=(w - k) {
            probs[n + k] += m[(n, n)].re.max(0.0);
        }
    }
    let sum: f64 = probs.iter().sum();
    let tail = (1.0 - sum).max(0.0);
    PhotonDistribution::with_tail(probs, tail)
}

/// Photon-count statistics at one scan point.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectedStatistics {
    PoissonMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
    },
    /// Tabulated distribution; the tail is mass the working space missed.
    Numeric(PhotonDistribution),
}

impl DetectedStatistics {
    /// Parity over all photon numbers (the truncated sum for tabulated
    /// statistics).
    pub fn parity(&self) -> f64 {
        match self {
            DetectedStatistics::PoissonMixture { weights, means } => weights
                .iter()
                .zip(means)
                .map(|(w, l)| w * (-2.0 * l).exp())
                .sum(),
            DetectedStatistics::Numeric(d) => parity(d),
        }
    }

    /// Probability not represented in [`parity`](Self::parity).
    pub fn unresolved_mass(&self) -> f64 {
        match self {
            DetectedStatistics::PoissonMixture { .. } => 0.0,
            DetectedStatistics::Numeric(d) => d.tail_mass(),
        }
    }

    /// `p(0..=cutoff)` with the exact remainder as tail.
    pub fn distribution(&self, cutoff: usize) -> Result<PhotonDistribution> {
        match self {
            DetectedStatistics::PoissonMixture { weights, means } => {
                let mut probs = vec![0.0; cutoff + 1];
                let mut tail = 0.0;
                for (w, &l) in weights.iter().zip(means) {
                    let p = PhotonDistribution::poisson(l, cutoff)?;
                    for (acc, v) in probs.iter_mut().zip(p.probs()) {
                        *acc += w * v;
                    }
                    tail += w * poisson_tail(l, cutoff);
                }
                PhotonDistribution::with_tail(probs, tail.min(1.0))
            }
            DetectedStatistics::Numeric(d) => Ok(d.truncated(cutoff)),
        }
    }
}

impl PhotonCountSampler for DetectedStatistics {
    fn sample_count(&self, rng: &mut dyn RngCore) -> u32 {
        match self {
            DetectedStatistics::PoissonMixture { weights, means } => {
                let l = if weights.len() == 1 {
                    means[0]
                } else {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = means[means.len() - 1];
                    for (w, &m) in weights.iter().zip(means) {
                        acc += w;
                        if u < acc {
                            pick = m;
                            break;
                        }
                    }
                    pick
                };
                if l <= 0.0 {
                    0
                } else {
                    Poisson::new(l).expect("positive mean").sample(rng) as u32
                }
            }
            DetectedStatistics::Numeric(d) => d.sample_count(rng),
        }
    }

    fn mean_count(&self) -> Option<f64> {
        match self {
            DetectedStatistics::PoissonMixture { weights, means } => {
                Some(weights.iter().zip(means).map(|(w, l)| w * l).sum())
            }
            DetectedStatistics::Numeric(d) => Some(d.mean()),
        }
    }
}

/// Detector photon statistics at `β`, truncated at `truncation.cutoff`.
/// Fails when the discarded mass exceeds the truncation bound.
pub fn displaced_distribution(
    source: &SourceState,
    beta: ComplexAmplitude,
    model: &ExperimentModel,
    truncation: Truncation,
) -> Result<PhotonDistribution> {
    source.validate()?;
    let d = source
        .detected(beta, model, truncation.cutoff)?
        .distribution(truncation.cutoff)?;
    truncation.check(d.tail_mass())?;
    Ok(d)
}
