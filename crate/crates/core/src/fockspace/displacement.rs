use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{hermitize, ComplexAmplitude, DensityMatrix};
use crate::error::{Error, Result};

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Generalized Laguerre polynomials `L_k^{(a)}(x)` for `k = 0..=kmax`.
fn laguerre_column(kmax: usize, a: f64, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(1.0);
    if kmax >= 1 {
        out.push(1.0 + a - x);
    }
    for k in 1..kmax {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * out[k] - (kf + a) * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// `⟨m|D(α)|n⟩` for `m, n ≤ cutoff` from the associated-Laguerre closed form.
///
/// Every element is exact; only the columns lose norm, by the amplitude the
/// displaced basis state puts above the cutoff.
pub fn displacement_matrix(alpha: ComplexAmplitude, cutoff: usize) -> DMatrix<Complex64> {
    let dim = cutoff + 1;
    let a = alpha.alpha();
    let x = a.norm_sqr();
    if x == 0.0 {
        return DMatrix::identity(dim, dim);
    }
    let lnf = ln_factorials(cutoff);
    let ln_abs = x.sqrt().ln();
    let phase = a.arg();
    let mut d = DMatrix::zeros(dim, dim);
    // For a fixed offset k = |m − n| the Laguerre order runs over min(m, n).
    for k in 0..dim {
        let lag = laguerre_column(cutoff - k, k as f64, x);
        for (low, &l) in lag.iter().enumerate() {
            let high = low + k;
            let mag = (0.5 * (lnf[low] - lnf[high]) + k as f64 * ln_abs - 0.5 * x).exp() * l;
            // m ≥ n: α^k ; m < n: (−α*)^k
            let below = Complex64::from_polar(mag, k as f64 * phase);
            d[(high, low)] = below;
            if k > 0 {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                d[(low, high)] = Complex64::from_polar(sign * mag, -(k as f64) * phase);
            }
        }
    }
    d
}

/// `D(α) ρ D(α)†` computed in a working space of `working_cutoff`.
///
/// Probability pushed above the working cutoff is added to the tail mass.
pub fn displace(
    rho: &DensityMatrix,
    alpha: ComplexAmplitude,
    working_cutoff: usize,
) -> Result<DensityMatrix> {
    if working_cutoff < rho.cutoff() {
        return Err(Error::InvalidArgument(format!(
            "working cutoff {working_cutoff} is below the state cutoff {}",
            rho.cutoff()
        )));
    }
    let embedded = rho.embed(working_cutoff);
    let d = displacement_matrix(alpha, working_cutoff);
    let mut out = &d * embedded.elements() * d.adjoint();
    hermitize(&mut out);
    let tail = (1.0 - out.trace().re).max(0.0);
    Ok(DensityMatrix::from_parts_unchecked(out, tail))
}
