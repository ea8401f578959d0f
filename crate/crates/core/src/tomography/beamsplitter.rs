use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fockspace::{s_ordered_coherent, ComplexAmplitude};

/// Comparison of the exact origin parity behind a beamsplitter of amplitude
/// reflectivity `r` with a rescaled s-ordered function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamsplitterReport {
    pub r: f64,
    pub t: f64,
    pub s_expected: f64,
    /// Ordering that makes the relation exact, `−r²/t²`.
    pub s_exact: f64,
    /// Least-squares prefactor against the peak-one s-ordered values.
    pub prefactor: f64,
    /// `1/t²`, the prefactor of the exact relation.
    pub prefactor_exact: f64,
    /// Largest `|parity − prefactor · W_s|` over the probe set.
    pub residual: f64,
    pub n_probes: usize,
}

/// Output mode `t a − r b` with signal `|α₀⟩` in `a` and a coherent probe
/// `|γ⟩` in `b`. Its origin parity `exp(−2|tα₀ − rγ|²)` is compared with
/// `c · π W((r/t)γ; s)` over a 9 × 9 patch of probes centred on the signal,
/// fitting the single prefactor `c`.
pub fn beamsplitter_finite_r_check(
    alpha0: ComplexAmplitude,
    r: f64,
    s_expected: f64,
) -> Result<BeamsplitterReport> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain {
            quantity: "beamsplitter reflectivity r",
            value: r,
            domain: "(0, 1)",
        });
    }
    let t = (1.0 - r * r).sqrt();
    let a0 = alpha0.alpha();
    let mut exact = Vec::new();
    let mut ordered = Vec::new();
    for i in -4..=4 {
        for j in -4..=4 {
            // Scaled probe (r/t)γ on a grid around α₀.
            let scaled = a0 + Complex64::new(0.3 * i as f64, 0.3 * j as f64);
            let gamma = scaled * (t / r);
            exact.push((-2.0 * (t * a0 - r * gamma).norm_sqr()).exp());
            ordered.push(
                PI * s_ordered_coherent(ComplexAmplitude::from_alpha(scaled), alpha0, s_expected)?,
            );
        }
    }
    let num: f64 = exact.iter().zip(&ordered).map(|(p, s)| p * s).sum();
    let den: f64 = ordered.iter().map(|s| s * s).sum();
    let prefactor = num / den;
    let residual = exact
        .iter()
        .zip(&ordered)
        .map(|(p, s)| (p - prefactor * s).abs())
        .fold(0.0, f64::max);
    Ok(BeamsplitterReport {
        r,
        t,
        s_expected,
        s_exact: -(r * r) / (t * t),
        prefactor,
        prefactor_exact: 1.0 / (t * t),
        residual,
        n_probes: exact.len(),
    })
}
