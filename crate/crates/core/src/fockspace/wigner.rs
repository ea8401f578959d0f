use std::f64::consts::PI;

use num_complex::Complex64;

use super::{displace, parity, ComplexAmplitude, DensityMatrix, WignerConvention};
use crate::error::{Error, Result};

/// Highest Hermite order accepted by the overlap recursion.
pub const HERMITE_ORDER_LIMIT: usize = 200;

/// `⟨q|n⟩` for `n = 0..=nmax` by the three-term recursion on the
/// weighted Hermite functions (no factorials are formed).
pub fn quadrature_wavefunctions(q: f64, nmax: usize) -> Result<Vec<f64>> {
    if nmax > HERMITE_ORDER_LIMIT {
        return Err(Error::HermiteOrder {
            order: nmax,
            limit: HERMITE_ORDER_LIMIT,
        });
    }
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(PI.powf(-0.25) * (-q * q / 2.0).exp());
    if nmax >= 1 {
        out.push(std::f64::consts::SQRT_2 * q * out[0]);
    }
    for n in 2..=nmax {
        let nf = n as f64;
        let next = (2.0 / nf).sqrt() * q * out[n - 1] - ((nf - 1.0) / nf).sqrt() * out[n - 2];
        out.push(next);
    }
    Ok(out)
}

/// `π^{-1/4} (2ⁿ n!)^{-1/2} e^{-q²/2} Hₙ(q)`.
pub fn quadrature_fock_overlap(q: f64, n: usize) -> Result<f64> {
    Ok(quadrature_wavefunctions(q, n)?[n])
}

/// Grid for the `dy` integral of the Wigner definition.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    pub step: f64,
    /// Integration half-width beyond `2|q|`, in units of `y`.
    pub margin: f64,
    /// Largest accepted difference between the `step` and `2·step` results.
    pub tolerance: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            step: 0.02,
            margin: 24.0,
            tolerance: 1e-9,
        }
    }
}

/// Wigner value from the integral definition, normalized over `dq dp`:
/// `W(q,p) = (1/2π) ∫ e^{iyp} ⟨q − y/2|ρ|q + y/2⟩ dy`.
///
/// The integrand is smooth and decays like a Gaussian, so the trapezoid rule
/// converges spectrally; the result is accepted once halving the node count
/// changes it by less than the configured tolerance.
pub fn wigner_integral_oracle(rho: &DensityMatrix, q: f64, p: f64) -> Result<f64> {
    wigner_integral_oracle_with(rho, q, p, &QuadratureConfig::default())
}

pub fn wigner_integral_oracle_with(
    rho: &DensityMatrix,
    q: f64,
    p: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let nmax = rho.cutoff();
    let half_width = 2.0 * q.abs() + cfg.margin + 2.0 * (2.0 * nmax as f64 + 1.0).sqrt();
    let nodes = (half_width / cfg.step).ceil() as i64;
    let m = rho.elements();
    let mut fine = Complex64::new(0.0, 0.0);
    let mut coarse = Complex64::new(0.0, 0.0);
    for k in -nodes..=nodes {
        let y = k as f64 * cfg.step;
        let left = quadrature_wavefunctions(q - y / 2.0, nmax)?;
        let right = quadrature_wavefunctions(q + y / 2.0, nmax)?;
        let mut kernel = Complex64::new(0.0, 0.0);
        for (n, l) in left.iter().enumerate() {
            if *l == 0.0 {
                continue;
            }
            for (np, r) in right.iter().enumerate() {
                kernel += m[(n, np)] * (l * r);
            }
        }
        let term = Complex64::from_polar(1.0, y * p) * kernel;
        fine += term;
        if k % 2 == 0 {
            coarse += term;
        }
    }
    let fine = fine * cfg.step / (2.0 * PI);
    let coarse = coarse * 2.0 * cfg.step / (2.0 * PI);
    let residual = (fine - coarse).norm();
    if residual > cfg.tolerance || !fine.re.is_finite() {
        return Err(Error::Quadrature { residual });
    }
    Ok(fine.re)
}

/// Parity route: `W(α) = ⟨Π⟩` of `D(−α) ρ D(−α)†`.
pub fn parity_wigner(
    rho: &DensityMatrix,
    point: ComplexAmplitude,
    working_cutoff: usize,
    convention: WignerConvention,
) -> Result<f64> {
    let shifted = displace(rho, -point, working_cutoff)?;
    Ok(convention.from_parity(parity(&shifted.photon_distribution())))
}

/// s-ordered quasiprobability of the coherent state `|α₀⟩` at `α`,
/// normalized over `dq dp` like [`wigner_integral_oracle`]:
/// `W(α; s) = exp(−2|α − α₀|²/(1 − s)) / (π (1 − s))`.
pub fn s_ordered_coherent(
    alpha: ComplexAmplitude,
    alpha0: ComplexAmplitude,
    s: f64,
) -> Result<f64> {
    if !(s < 1.0) {
        return Err(Error::Domain {
            quantity: "ordering parameter s",
            value: s,
            domain: "(-∞, 1)",
        });
    }
    let d2 = (alpha - alpha0).norm_sqr();
    Ok((-2.0 * d2 / (1.0 - s)).exp() / (PI * (1.0 - s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::coherent_state;

    #[test]
    fn overlap_reference_values() {
        assert!(quadrature_fock_overlap(0.0, 1).unwrap().abs() < 1e-16);
        assert!((quadrature_fock_overlap(0.0, 0).unwrap() - 0.751_125_544_464_942_5).abs() < 1e-15);
        assert!(matches!(
            quadrature_fock_overlap(0.0, 201),
            Err(Error::HermiteOrder { order: 201, .. })
        ));
    }

    #[test]
    fn overlap_matches_explicit_hermite() {
        // H_3(q) = 8q³ − 12q
        let q: f64 = 0.7;
        let h3 = 8.0 * q.powi(3) - 12.0 * q;
        let expected = PI.powf(-0.25) / (8.0f64 * 6.0).sqrt() * (-q * q / 2.0).exp() * h3;
        assert!((quadrature_fock_overlap(q, 3).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn orthonormality_by_quadrature() {
        let h = 0.01;
        let mut s02 = 0.0;
        let mut s22 = 0.0;
        for k in -2000..=2000 {
            let w = quadrature_wavefunctions(k as f64 * h, 2).unwrap();
            s02 += w[0] * w[2] * h;
            s22 += w[2] * w[2] * h;
        }
        assert!(s02.abs() < 1e-12);
        assert!((s22 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn high_orders_stay_finite() {
        let w = quadrature_wavefunctions(3.0, 200).unwrap();
        assert!(w.iter().all(|x| x.is_finite() && x.abs() < 1.0));
    }

    #[test]
    fn oracle_reference_values() {
        let vac = DensityMatrix::vacuum(3);
        assert!((wigner_integral_oracle(&vac, 0.0, 0.0).unwrap() - 1.0 / PI).abs() < 1e-10);

        let one = DensityMatrix::fock(1, 3);
        assert!((wigner_integral_oracle(&one, 0.0, 0.0).unwrap() + 1.0 / PI).abs() < 1e-10);

        let a0 = ComplexAmplitude::from_polar(0.9, 0.6);
        let rho = coherent_state(a0, 30).unwrap();
        let at_peak = wigner_integral_oracle(&rho, a0.q, a0.p).unwrap();
        // Truncation at 30 is far beyond the state support.
        assert!((at_peak - 1.0 / PI).abs() < 1e-9, "{at_peak}");
    }

    #[test]
    fn s_ordered_matches_wigner_at_s_zero() {
        let a0 = ComplexAmplitude::from_polar(0.7, -0.4);
        let rho = coherent_state(a0, 30).unwrap();
        for &(q, p) in &[(0.0, 0.0), (0.5, -0.3), (1.2, 0.4)] {
            let pt = ComplexAmplitude::from_quadratures(q, p);
            let s0 = s_ordered_coherent(pt, a0, 0.0).unwrap();
            let w = wigner_integral_oracle(&rho, q, p).unwrap();
            assert!((s0 - w).abs() < 1e-6);
        }
        assert!(s_ordered_coherent(a0, a0, 1.0).is_err());
        let left = s_ordered_coherent(ComplexAmplitude::ZERO, a0, -1e-9).unwrap();
        let at = s_ordered_coherent(ComplexAmplitude::ZERO, a0, 0.0).unwrap();
        assert!((left - at).abs() < 1e-8);
    }

    #[test]
    fn s_ordered_equals_gaussian_smoothed_wigner() {
        // Independent route: convolve the vacuum Wigner function with a
        // Gaussian of variance |s|/2 per quadrature on a 2-D grid.
        let s: f64 = -0.2;
        let var = s.abs() / 2.0;
        let h = 0.02;
        let mut acc = 0.0;
        for i in -400..=400 {
            for j in -400..=400 {
                let (x, y) = (i as f64 * h, j as f64 * h);
                let w = (-(x * x + y * y)).exp() / PI;
                let g = (-(x * x + y * y) / (2.0 * var)).exp() / (2.0 * PI * var);
                acc += w * g * h * h;
            }
        }
        let closed = s_ordered_coherent(ComplexAmplitude::ZERO, ComplexAmplitude::ZERO, s).unwrap();
        assert!((acc - 0.265_258_238_486_492).abs() < 1e-9, "{acc}");
        assert!((closed - acc).abs() < 1e-9);
    }
}
