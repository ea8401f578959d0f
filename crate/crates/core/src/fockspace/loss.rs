use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{hermitize, DensityMatrix, PhotonDistribution};
use crate::error::{Error, Result};

fn check_efficiency(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain {
            quantity: "efficiency",
            value: eta,
            domain: "[0, 1]",
        });
    }
    Ok(())
}

/// `C(n, m) ηᵐ (1−η)^{n−m}` for all `m ≤ n ≤ nmax`, row-major by `n`.
fn binomial_table(nmax: usize, eta: f64) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(nmax + 1);
    rows.push(vec![1.0]);
    for n in 1..=nmax {
        let prev = &rows[n - 1];
        let mut row = vec![0.0; n + 1];
        for (m, slot) in row.iter_mut().enumerate() {
            let keep = if m > 0 { prev[m - 1] * eta } else { 0.0 };
            let lose = if m < n { prev[m] * (1.0 - eta) } else { 0.0 };
            *slot = keep + lose;
        }
        rows.push(row);
    }
    rows
}

/// Binomial thinning `p′(m) = Σ_{n≥m} p(n) C(n,m) ηᵐ (1−η)^{n−m}`.
///
/// Mass above the input cutoff is unknown, so it stays in the tail.
pub fn apply_loss(dist: &PhotonDistribution, eta: f64) -> Result<PhotonDistribution> {
    check_efficiency(eta)?;
    let table = binomial_table(dist.cutoff(), eta);
    let mut out = vec![0.0; dist.cutoff() + 1];
    for (n, &p) in dist.probs().iter().enumerate() {
        for (m, &b) in table[n].iter().enumerate() {
            out[m] += p * b;
        }
    }
    PhotonDistribution::with_tail(out, dist.tail_mass())
}

/// Kraus branches of a loss channel of transmission `eta`: entry `k` is
/// `K_k ρ K_k†`, the (unnormalized) state conditioned on losing `k` photons.
pub fn loss_kraus_branches(rho: &DensityMatrix, eta: f64) -> Result<Vec<DMatrix<Complex64>>> {
    check_efficiency(eta)?;
    let n = rho.cutoff();
    let table = binomial_table(n, eta);
    let m = rho.elements();
    let dim = n + 1;
    let mut branches = Vec::with_capacity(dim);
    for k in 0..dim {
        let mut out = DMatrix::<Complex64>::zeros(dim, dim);
        // K_k |a⟩ = √(C(a,k) η^{a−k} (1−η)^k) |a−k⟩
        for a in k..dim {
            let wa = table[a][a - k].sqrt();
            if wa == 0.0 {
                continue;
            }
            for b in k..dim {
                let wb = table[b][b - k].sqrt();
                out[(a - k, b - k)] += m[(a, b)] * (wa * wb);
            }
        }
        branches.push(out);
    }
    Ok(branches)
}

/// Full density-matrix loss channel.
pub fn loss_channel(rho: &DensityMatrix, eta: f64) -> Result<DensityMatrix> {
    let branches = loss_kraus_branches(rho, eta)?;
    let dim = rho.dim();
    let mut out = DMatrix::<Complex64>::zeros(dim, dim);
    for b in branches {
        out += b;
    }
    hermitize(&mut out);
    Ok(DensityMatrix::from_parts_unchecked(out, rho.tail_mass()))
}
