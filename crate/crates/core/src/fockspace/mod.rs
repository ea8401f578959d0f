//! Truncated Fock-space engine.
//!
//! States live in the span of `|0⟩ … |N⟩` where `N` is the cutoff. Every
//! constructor that truncates an infinite-dimensional state keeps track of
//! the probability mass beyond the cutoff (`tail_mass`), so callers can bound
//! truncation bias explicitly.
//!
//! Wigner values are reported in the peak-one convention (the raw parity
//! expectation) unless [`WignerConvention::Normalized`] is requested, which
//! multiplies by `1/π` so that the distribution integrates to one over
//! `dq dp`.

mod displacement;
mod loss;
mod wigner;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};
use std::ops::{Neg, Sub};

use crate::error::{Error, Result};

pub use displacement::{displace, displacement_matrix};
pub use loss::{apply_loss, loss_channel, loss_kraus_branches};
pub use wigner::{
    parity_wigner, quadrature_fock_overlap, quadrature_wavefunctions, s_ordered_coherent,
    wigner_integral_oracle, QuadratureConfig, HERMITE_ORDER_LIMIT,
};

pub const DEFAULT_CUTOFF: usize = 5;
/// Default bound on discarded probability mass; admits the detector regime
/// (|α|² ≈ 2.55 at cutoff 5 leaves ≈ 0.046 beyond the cutoff).
pub const DEFAULT_MAX_TAIL: f64 = 0.05;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

/// Cutoff together with the largest tail mass a truncated state may discard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub cutoff: usize,
    pub max_tail: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            cutoff: DEFAULT_CUTOFF,
            max_tail: DEFAULT_MAX_TAIL,
        }
    }
}

impl Truncation {
    pub fn new(cutoff: usize, max_tail: f64) -> Result<Self> {
        if cutoff < 1 {
            return Err(Error::InvalidArgument("cutoff must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&max_tail) {
            return Err(Error::Domain {
                quantity: "max_tail",
                value: max_tail,
                domain: "[0, 1]",
            });
        }
        Ok(Self { cutoff, max_tail })
    }

    pub(crate) fn check(&self, tail: f64) -> Result<()> {
        if tail > self.max_tail {
            Err(Error::Truncation {
                cutoff: self.cutoff,
                tail,
                bound: self.max_tail,
            })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WignerConvention {
    /// Parity expectation; a coherent state peaks at 1.
    #[default]
    PeakOne,
    /// Normalized over `dq dp`; the peak-one value divided by π.
    Normalized,
}

impl WignerConvention {
    pub fn from_parity(self, parity: f64) -> f64 {
        match self {
            WignerConvention::PeakOne => parity,
            WignerConvention::Normalized => parity / PI,
        }
    }
}

/// Phase-space point `α = (q + i p)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexAmplitude {
    pub q: f64,
    pub p: f64,
}

impl ComplexAmplitude {
    pub const ZERO: Self = Self { q: 0.0, p: 0.0 };

    pub fn from_quadratures(q: f64, p: f64) -> Self {
        Self { q, p }
    }

    pub fn from_alpha(alpha: Complex64) -> Self {
        Self {
            q: SQRT_2 * alpha.re,
            p: SQRT_2 * alpha.im,
        }
    }

    pub fn from_polar(modulus: f64, phase: f64) -> Self {
        Self::from_alpha(Complex64::from_polar(modulus, phase))
    }

    pub fn alpha(&self) -> Complex64 {
        Complex64::new(self.q, self.p) / SQRT_2
    }

    /// `|α|² = (q² + p²)/2`.
    pub fn norm_sqr(&self) -> f64 {
        (self.q * self.q + self.p * self.p) / 2.0
    }

    pub fn abs(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn arg(&self) -> f64 {
        self.p.atan2(self.q)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            q: self.q * factor,
            p: self.p * factor,
        }
    }

    pub fn rotate(&self, angle: f64) -> Self {
        Self::from_alpha(self.alpha() * Complex64::from_polar(1.0, angle))
    }
}

impl Neg for ComplexAmplitude {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            q: -self.q,
            p: -self.p,
        }
    }
}

impl Sub for ComplexAmplitude {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self {
            q: self.q - rhs.q,
            p: self.p - rhs.p,
        }
    }
}

/// Photon-number probabilities `p(0..=N)` plus the mass beyond `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonDistribution {
    probs: Vec<f64>,
    tail: f64,
}

impl PhotonDistribution {
    /// Validates entries; the tail is whatever mass the entries leave out.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        Self::with_tail(probs, (1.0 - sum).max(0.0))
    }

    pub fn with_tail(probs: Vec<f64>, tail: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty photon distribution".into()));
        }
        for (n, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "p({n}) = {p} is not a probability"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if sum > 1.0 + TRACE_TOL {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {sum} > 1"
            )));
        }
        if !(0.0..=1.0 + TRACE_TOL).contains(&tail) {
            return Err(Error::Domain {
                quantity: "tail mass",
                value: tail,
                domain: "[0, 1]",
            });
        }
        let probs = probs.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
        Ok(Self { probs, tail })
    }

    pub fn vacuum(cutoff: usize) -> Self {
        Self::fock(0, cutoff)
    }

    pub fn fock(n: usize, cutoff: usize) -> Self {
        let mut probs = vec![0.0; cutoff.max(n) + 1];
        probs[n] = 1.0;
        Self { probs, tail: 0.0 }
    }

    /// Poisson(λ) truncated at `cutoff`; the tail is computed as one minus the
    /// retained mass.
    pub fn poisson(mean: f64, cutoff: usize) -> Result<Self> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::Domain {
                quantity: "Poisson mean",
                value: mean,
                domain: "[0, ∞)",
            });
        }
        let mut probs = Vec::with_capacity(cutoff + 1);
        let mut term = (-mean).exp();
        for n in 0..=cutoff {
            if n > 0 {
                term *= mean / n as f64;
            }
            probs.push(term);
        }
        let tail = poisson_tail(mean, cutoff);
        Ok(Self { probs, tail })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cutoff(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail
    }

    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    pub fn truncated(&self, cutoff: usize) -> Self {
        if cutoff >= self.cutoff() {
            let mut probs = self.probs.clone();
            probs.resize(cutoff + 1, 0.0);
            return Self {
                probs,
                tail: self.tail,
            };
        }
        let dropped: f64 = self.probs[cutoff + 1..].iter().sum();
        Self {
            probs: self.probs[..=cutoff].to_vec(),
            tail: self.tail + dropped,
        }
    }
}

/// `P(n > cutoff)` for Poisson(λ), summed from the far side to avoid the
/// cancellation in `1 − Σ p(n)`.
pub fn poisson_tail(mean: f64, cutoff: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let mut term = (-mean).exp();
    let mut head = term;
    for n in 1..=cutoff {
        term *= mean / n as f64;
        head += term;
    }
    if head < 0.5 {
        return 1.0 - head;
    }
    let mut tail = 0.0;
    let mut n = cutoff + 1;
    term *= mean / n as f64;
    while term > tail * 1e-17 || (n as f64) < mean {
        tail += term;
        n += 1;
        term *= mean / n as f64;
        if n > cutoff + 100_000 {
            break;
        }
    }
    tail
}

/// `Σ (−1)ⁿ p(n)` over the available entries (peak-one convention).
pub fn parity(dist: &PhotonDistribution) -> f64 {
    dist.probs
        .iter()
        .enumerate()
        .map(|(n, p)| if n % 2 == 0 { *p } else { -*p })
        .sum()
}

/// Truncated density operator `ρ = Σ ρ_nn′ |n⟩⟨n′|`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    elements: DMatrix<Complex64>,
    tail: f64,
    renormalized: bool,
}

impl DensityMatrix {
    /// Validates hermiticity, `trace + tail = 1` and positivity.
    pub fn from_matrix(elements: DMatrix<Complex64>, tail: f64) -> Result<Self> {
        let rho = Self {
            elements,
            tail,
            renormalized: false,
        };
        rho.validate()?;
        Ok(rho)
    }

    /// `ρ = G G† / Tr(G G†)`; always a valid state.
    pub fn from_gram(g: &DMatrix<Complex64>) -> Result<Self> {
        let m = g * g.adjoint();
        let tr = m.trace().re;
        if !(tr > 0.0) {
            return Err(Error::Degenerate(
                "zero matrix has no normalized Gram state".into(),
            ));
        }
        let mut m = m / Complex64::from(tr);
        hermitize(&mut m);
        Self::from_matrix(m, 0.0)
    }

    pub fn pure(amplitudes: &[Complex64], tail: f64) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidArgument("empty state vector".into()));
        }
        let v = nalgebra::DVector::from_column_slice(amplitudes);
        let mut m = &v * v.adjoint();
        hermitize(&mut m);
        Self::from_matrix(m, tail)
    }

    pub fn vacuum(cutoff: usize) -> Self {
        Self::fock(0, cutoff)
    }

    pub fn fock(n: usize, cutoff: usize) -> Self {
        let dim = cutoff.max(n) + 1;
        let mut m = DMatrix::zeros(dim, dim);
        m[(n, n)] = Complex64::new(1.0, 0.0);
        Self {
            elements: m,
            tail: 0.0,
            renormalized: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.elements;
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "density matrix must be square and non-empty".into(),
            ));
        }
        let dev = (m - m.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if dev > HERMITIAN_TOL {
            return Err(Error::InvalidArgument(format!(
                "not Hermitian (max deviation {dev:.3e})"
            )));
        }
        let tr = m.trace().re;
        if (tr + self.tail - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidArgument(format!(
                "trace {tr} plus tail {} differs from one",
                self.tail
            )));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidArgument(format!(
                "not positive semidefinite (eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.elements
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn elements(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn cutoff(&self) -> usize {
        self.dim() - 1
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail
    }

    pub fn is_renormalized(&self) -> bool {
        self.renormalized
    }

    pub fn trace(&self) -> f64 {
        self.elements.trace().re
    }

    /// Rescales to unit trace and zero tail, flagging the result.
    pub fn renormalized(&self) -> Self {
        let tr = self.trace();
        Self {
            elements: &self.elements / Complex64::from(tr),
            tail: 0.0,
            renormalized: self.tail > 0.0 || self.renormalized,
        }
    }

    /// Zero-pads into a larger Fock space; the state itself is unchanged.
    pub fn embed(&self, cutoff: usize) -> Self {
        let dim = cutoff + 1;
        if dim <= self.dim() {
            return self.clone();
        }
        let mut m = DMatrix::zeros(dim, dim);
        m.view_mut((0, 0), (self.dim(), self.dim()))
            .copy_from(&self.elements);
        Self {
            elements: m,
            tail: self.tail,
            renormalized: self.renormalized,
        }
    }

    pub fn photon_distribution(&self) -> PhotonDistribution {
        let probs = (0..self.dim())
            .map(|n| self.elements[(n, n)].re.max(0.0))
            .collect();
        PhotonDistribution {
            probs,
            tail: self.tail.max(0.0),
        }
    }

    pub(crate) fn from_parts_unchecked(elements: DMatrix<Complex64>, tail: f64) -> Self {
        Self {
            elements,
            tail,
            renormalized: false,
        }
    }
}

pub(crate) fn hermitize(m: &mut DMatrix<Complex64>) {
    let h = (m.clone() + m.adjoint()) * Complex64::from(0.5);
    *m = h;
}

/// Fock amplitudes `e^{−|α|²/2} αⁿ/√n!`, `n = 0..=cutoff`.
pub fn coherent_amplitudes(alpha: ComplexAmplitude, cutoff: usize) -> Vec<Complex64> {
    let a = alpha.alpha();
    let mut out = Vec::with_capacity(cutoff + 1);
    let mut c = Complex64::from((-alpha.norm_sqr() / 2.0).exp());
    out.push(c);
    for n in 1..=cutoff {
        c = c * a / (n as f64).sqrt();
        out.push(c);
    }
    out
}

/// `|α⟩⟨α|` truncated at `cutoff` under the default tail bound.
pub fn coherent_state(alpha: ComplexAmplitude, cutoff: usize) -> Result<DensityMatrix> {
    coherent_state_with(alpha, Truncation::new(cutoff, DEFAULT_MAX_TAIL)?)
}

pub fn coherent_state_with(
    alpha: ComplexAmplitude,
    truncation: Truncation,
) -> Result<DensityMatrix> {
    if truncation.cutoff < 1 {
        return Err(Error::InvalidArgument("cutoff must be at least 1".into()));
    }
    let tail = poisson_tail(alpha.norm_sqr(), truncation.cutoff);
    truncation.check(tail)?;
    let amps = coherent_amplitudes(alpha, truncation.cutoff);
    let v = nalgebra::DVector::from_column_slice(&amps);
    let mut m = &v * v.adjoint();
    hermitize(&mut m);
    // Retained trace is 1 − tail up to rounding; store the complement so the
    // trace invariant holds exactly.
    let tail = 1.0 - m.trace().re;
    Ok(DensityMatrix::from_parts_unchecked(m, tail.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_poisson_tail(lambda: f64, cutoff: usize) -> f64 {
        // Independent route: sum the far tail term by term from factorials.
        let mut s = 0.0;
        for n in (cutoff + 1)..200 {
            let ln =
                -lambda + n as f64 * lambda.ln() - (1..=n).map(|k| (k as f64).ln()).sum::<f64>();
            s += ln.exp();
        }
        s
    }

    #[test]
    fn vacuum_coherent_state() {
        let rho = coherent_state(ComplexAmplitude::ZERO, 5).unwrap();
        let d = rho.photon_distribution();
        assert!((d.get(0) - 1.0).abs() < 1e-15);
        assert!(d.probs()[1..].iter().all(|&p| p == 0.0));
        rho.validate().unwrap();
    }

    #[test]
    fn coherent_tail_matches_brute_force_in_detector_regime() {
        let alpha = ComplexAmplitude::from_polar(2.553f64.sqrt(), 0.3);
        let rho = coherent_state(alpha, 5).unwrap();
        let brute = brute_poisson_tail(2.553, 5);
        assert!((brute - 0.04566).abs() < 1e-4, "brute tail {brute}");
        assert!((rho.tail_mass() - brute).abs() < 1e-12);
        rho.validate().unwrap();
    }

    #[test]
    fn tail_above_bound_is_an_error() {
        let alpha = ComplexAmplitude::from_polar(2.0, 0.0);
        let err = coherent_state(alpha, 5).unwrap_err();
        assert!(matches!(err, Error::Truncation { cutoff: 5, .. }), "{err}");
        assert!(coherent_state(alpha, 20).is_ok());
    }

    #[test]
    fn coherent_distribution_is_poisson() {
        let alpha = ComplexAmplitude::from_polar(0.5f64.sqrt(), 1.1);
        let d = coherent_state(alpha, 8).unwrap().photon_distribution();
        let mut fact = 1.0;
        for n in 0..=8 {
            if n > 0 {
                fact *= n as f64;
            }
            let expected = (-0.5f64).exp() * 0.5f64.powi(n as i32) / fact;
            assert!((d.get(n) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn parity_reference_values() {
        assert_eq!(parity(&PhotonDistribution::vacuum(5)), 1.0);
        assert_eq!(parity(&PhotonDistribution::fock(1, 5)), -1.0);
        let d = PhotonDistribution::poisson(0.5, 40).unwrap();
        let brute: f64 = (0..=40)
            .map(|n| {
                let f: f64 = (1..=n).map(|k| k as f64).product();
                (-1f64).powi(n) * (-0.5f64).exp() * 0.5f64.powi(n) / f
            })
            .sum();
        assert!((parity(&d) - brute).abs() < 1e-15);
        assert!((parity(&d) - 0.367_879_441_171_442_3).abs() < 1e-12);
    }

    #[test]
    fn amplitude_norm_is_exact() {
        let a = ComplexAmplitude::from_quadratures(1.25, -0.5);
        assert_eq!(a.norm_sqr(), (1.25f64 * 1.25 + 0.25) / 2.0);
        assert!((a.alpha().norm_sqr() - a.norm_sqr()).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_states() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = Complex64::new(1.5, 0.0);
        m[(1, 1)] = Complex64::new(-0.5, 0.0);
        assert!(DensityMatrix::from_matrix(m, 0.0).is_err());
        let mut h = DMatrix::zeros(2, 2);
        h[(0, 0)] = Complex64::new(1.0, 0.0);
        h[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(DensityMatrix::from_matrix(h, 0.0).is_err());
        assert!(PhotonDistribution::new(vec![0.7, 0.6]).is_err());
    }

    #[test]
    fn renormalization_sets_flag() {
        let rho = coherent_state(ComplexAmplitude::from_polar(1.5, 0.0), 5).unwrap();
        assert!(rho.tail_mass() > 0.0);
        let r = rho.renormalized();
        assert!(r.is_renormalized());
        assert!((r.trace() - 1.0).abs() < 1e-12);
        r.validate().unwrap();
    }
}
