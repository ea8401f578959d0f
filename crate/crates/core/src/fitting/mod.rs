//! Gaussian surface fits of measured Wigner grids.
//!
//! The model is `W(q, p) = a + b exp(−m[(q − q₀)² + (p − p₀)²])` over the
//! grid coordinates `q = Re β`, `p = Im β`. Parameters are found by
//! Levenberg–Marquardt with the analytic Jacobian; standard errors come from
//! `(JᵀJ)⁻¹` scaled by the reduced chi-square.

use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fockspace::ComplexAmplitude;
use crate::fsutil::atomic_write;
use crate::tomography::{ExperimentModel, GridPoint, WignerGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub q0: f64,
    pub p0: f64,
}

impl GaussianModel {
    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            a: v[0],
            b: v[1],
            m: v[2],
            q0: v[3],
            p0: v[4],
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.a, self.b, self.m, self.q0, self.p0]
    }

    /// Closed-form surface of a coherent source: `a = 0`, `m = 2`, peak and
    /// centre from the loss/visibility model.
    pub fn from_theory(alpha0: ComplexAmplitude, model: &ExperimentModel) -> Self {
        let c = alpha0.alpha() * model.centre_factor();
        Self {
            a: 0.0,
            b: (-2.0 * model.background_factor() * alpha0.norm_sqr()).exp(),
            m: 2.0,
            q0: c.re,
            p0: c.im,
        }
    }

    pub fn eval(&self, q: f64, p: f64) -> f64 {
        let d2 = (q - self.q0).powi(2) + (p - self.p0).powi(2);
        self.a + self.b * (-self.m * d2).exp()
    }

    /// `∂W/∂(a, b, m, q₀, p₀)`.
    pub fn gradient(&self, q: f64, p: f64) -> [f64; 5] {
        let dq = q - self.q0;
        let dp = p - self.p0;
        let d2 = dq * dq + dp * dp;
        let e = (-self.m * d2).exp();
        let be = self.b * e;
        [
            1.0,
            e,
            -be * d2,
            2.0 * be * self.m * dq,
            2.0 * be * self.m * dp,
        ]
    }

    pub fn amplitude_invariant(&self) -> f64 {
        amplitude_invariant(self)
    }

    /// Centre phase `arctan(p₀/q₀)`; irrelevant for the invariant fit.
    pub fn centre_phase(&self) -> f64 {
        self.p0.atan2(self.q0)
    }
}

/// `|β₀| = √(q₀² + p₀²)`.
pub fn amplitude_invariant(model: &GaussianModel) -> f64 {
    model.q0.hypot(model.p0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Starting point; estimated from the grid if absent.
    pub init: Option<GaussianModel>,
    /// Weight points by `bins / (1 − W²)`.
    pub weighted: bool,
    pub max_iterations: usize,
    /// Relative cost change that ends the iteration.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            init: None,
            weighted: false,
            max_iterations: 200,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub q0: f64,
    pub p0: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub amp_index: usize,
    pub phase_index: usize,
    pub q: f64,
    pub p: f64,
    pub w: f64,
    pub model: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: GaussianModel,
    pub errors: StandardErrors,
    pub r_squared: f64,
    pub residuals: Vec<Residual>,
    pub residual_mean: f64,
    /// `½ Σ wᵢ rᵢ²` at the optimum.
    pub cost: f64,
    pub reduced_chi2: f64,
    pub iterations: usize,
    pub n_points: usize,
    pub weighted: bool,
}

impl FitResult {
    pub fn amplitude(&self) -> f64 {
        self.model.amplitude_invariant()
    }

    pub fn residuals_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.residuals {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn write_residuals(&self, path: &Path) -> Result<()> {
        Ok(atomic_write(path, &self.residuals_csv()?)?)
    }
}

struct Data {
    q: Vec<f64>,
    p: Vec<f64>,
    w: Vec<f64>,
    weight: Vec<f64>,
    points: Vec<GridPoint>,
}

fn collect(grid: &WignerGrid, weighted: bool) -> Result<Data> {
    let points: Vec<GridPoint> = grid.usable().copied().collect();
    if points.len() < 6 {
        return Err(Error::InvalidArgument(format!(
            "{} usable grid points, at least 6 needed",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|p| !p.w.is_finite() || !p.q().is_finite() || !p.p().is_finite())
    {
        return Err(Error::InvalidArgument(
            "grid holds non-finite values".into(),
        ));
    }
    let weight = if weighted {
        points
            .iter()
            .map(|p| {
                if p.n_bins == 0 {
                    return Err(Error::InvalidArgument(
                        "weighted fit needs sampled grid points".into(),
                    ));
                }
                let bins = p.n_bins as f64 * (1.0 - p.overflow_fraction);
                // Floor the variance at one count so exact ±1 points stay finite.
                Ok(bins / (1.0 - p.w * p.w).max(1.0 / bins))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![1.0; points.len()]
    };
    Ok(Data {
        q: points.iter().map(|p| p.q()).collect(),
        p: points.iter().map(|p| p.p()).collect(),
        w: points.iter().map(|p| p.w).collect(),
        weight,
        points,
    })
}

/// Offset from the lowest decile, centre from the excess-weighted centroid
/// of the upper half, width from its second moment.
fn auto_init(d: &Data) -> GaussianModel {
    let mut sorted = d.w.clone();
    sorted.sort_by(f64::total_cmp);
    let low = &sorted[..(sorted.len() / 10).max(1)];
    let a = low.iter().sum::<f64>() / low.len() as f64;
    let peak = sorted[sorted.len() - 1];
    let b = peak - a;
    let half = a + 0.5 * b;
    let (mut sw, mut sq, mut sp) = (0.0, 0.0, 0.0);
    for i in 0..d.w.len() {
        if d.w[i] >= half {
            let x = d.w[i] - a;
            sw += x;
            sq += x * d.q[i];
            sp += x * d.p[i];
        }
    }
    let (q0, p0) = (sq / sw, sp / sw);
    let mut s2 = 0.0;
    for i in 0..d.w.len() {
        if d.w[i] >= half {
            s2 += (d.w[i] - a) * ((d.q[i] - q0).powi(2) + (d.p[i] - p0).powi(2));
        }
    }
    // For samples spread evenly in area, the height-weighted mean squared
    // radius above half maximum of exp(−m r²) is (1 − ln 2)/m.
    let r2 = (s2 / sw).max(1e-6);
    GaussianModel {
        a,
        b,
        m: (1.0 - std::f64::consts::LN_2) / r2,
        q0,
        p0,
    }
}

fn cost_and_residuals(d: &Data, g: &GaussianModel) -> (f64, Vec<f64>) {
    let r: Vec<f64> = (0..d.w.len())
        .map(|i| g.eval(d.q[i], d.p[i]) - d.w[i])
        .collect();
    let c = 0.5 * r.iter().zip(&d.weight).map(|(r, w)| w * r * r).sum::<f64>();
    (c, r)
}

fn normal_equations(d: &Data, g: &GaussianModel, r: &[f64]) -> (Matrix5<f64>, Vector5<f64>) {
    let mut jtj = Matrix5::zeros();
    let mut jtr = Vector5::zeros();
    for i in 0..r.len() {
        let j = Vector5::from(g.gradient(d.q[i], d.p[i]));
        jtj += d.weight[i] * j * j.transpose();
        jtr += d.weight[i] * r[i] * j;
    }
    (jtj, jtr)
}

pub fn fit_gaussian(grid: &WignerGrid, init: Option<GaussianModel>) -> Result<FitResult> {
    fit_gaussian_with(
        grid,
        &FitOptions {
            init,
            ..FitOptions::default()
        },
    )
}

/// Least-squares fit of the Gaussian model to the unflagged grid points.
pub fn fit_gaussian_with(grid: &WignerGrid, opts: &FitOptions) -> Result<FitResult> {
    let d = collect(grid, opts.weighted)?;
    let mean = d.w.iter().sum::<f64>() / d.w.len() as f64;
    let spread = d.w.iter().map(|w| (w - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-14 * mean.abs().max(1.0) {
        return Err(Error::Degenerate("grid values are constant".into()));
    }
    let mut g = opts.init.unwrap_or_else(|| auto_init(&d));
    let (mut cost, mut r) = cost_and_residuals(&d, &g);
    let mut mu = 1e-3;
    let mut trace = vec![g.to_array()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&d, &g, &r);
        let mut stepped = false;
        for _ in 0..40 {
            let mut a = jtj;
            for k in 0..5 {
                a[(k, k)] += mu * jtj[(k, k)].max(1e-12);
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&-jtr)) else {
                mu *= 10.0;
                continue;
            };
            let theta = Vector5::from(g.to_array()) + delta;
            let cand = GaussianModel::from_array(theta.into());
            let (c_new, r_new) = cost_and_residuals(&d, &cand);
            if c_new.is_finite() && c_new <= cost {
                let rel = (cost - c_new) / cost.max(f64::MIN_POSITIVE);
                let small_step = delta.norm() <= 1e-15 * (theta.norm() + 1e-15);
                g = cand;
                cost = c_new;
                r = r_new;
                mu = (mu * 0.3).max(1e-15);
                stepped = true;
                trace.push(g.to_array());
                if rel < opts.tolerance || cost < 1e-30 || small_step {
                    converged = true;
                }
                break;
            }
            mu *= 10.0;
        }
        if converged {
            break;
        }
        if !stepped {
            // No downhill step at any damping: stationary to precision.
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::FitNonConvergence {
            iterations,
            cost,
            trace,
        });
    }
    if !(g.m > 0.0) {
        return Err(Error::Degenerate(format!(
            "fit converged to a non-positive width parameter m = {}",
            g.m
        )));
    }

    let n = d.w.len();
    let dof = n.saturating_sub(5).max(1) as f64;
    let reduced_chi2 = 2.0 * cost / dof;
    let (jtj, _) = normal_equations(&d, &g, &r);
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular normal matrix at the optimum".into()))?
        * reduced_chi2;
    let se = |k: usize| cov[(k, k)].max(0.0).sqrt();
    let amp = amplitude_invariant(&g);
    let amp_var = if amp > 0.0 {
        let gr = [g.q0 / amp, g.p0 / amp];
        gr[0] * gr[0] * cov[(3, 3)]
            + 2.0 * gr[0] * gr[1] * cov[(3, 4)]
            + gr[1] * gr[1] * cov[(4, 4)]
    } else {
        (cov[(3, 3)] + cov[(4, 4)]) / 2.0
    };
    let residuals: Vec<Residual> = d
        .points
        .iter()
        .zip(&r)
        .map(|(pt, &res)| Residual {
            amp_index: pt.amp_index,
            phase_index: pt.phase_index,
            q: pt.q(),
            p: pt.p(),
            w: pt.w,
            model: pt.w + res,
            residual: -res,
        })
        .collect();
    let residual_mean = residuals.iter().map(|x| x.residual).sum::<f64>() / n as f64;
    Ok(FitResult {
        model: g,
        errors: StandardErrors {
            a: se(0),
            b: se(1),
            m: se(2),
            q0: se(3),
            p0: se(4),
            amplitude: amp_var.max(0.0).sqrt(),
        },
        r_squared: r_squared(grid, &g)?,
        residuals,
        residual_mean,
        cost,
        reduced_chi2,
        iterations,
        n_points: n,
        weighted: opts.weighted,
    })
}

/// `1 − SS_res/SS_tot` over the unflagged points.
pub fn r_squared(grid: &WignerGrid, model: &GaussianModel) -> Result<f64> {
    let pts: Vec<&GridPoint> = grid.usable().collect();
    if pts.is_empty() {
        return Err(Error::InvalidArgument("no usable grid points".into()));
    }
    let mean = pts.iter().map(|p| p.w).sum::<f64>() / pts.len() as f64;
    let ss_tot: f64 = pts.iter().map(|p| (p.w - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("zero total variance".into()));
    }
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.w - model.eval(p.q(), p.p())).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// `R²` expected when the residuals are pure counting noise,
/// `1 − Σ (1 − Wᵢ²)/binsᵢ / SS_tot`.
pub fn predicted_r_squared(grid: &WignerGrid) -> Result<f64> {
    let pts: Vec<&GridPoint> = grid.usable().collect();
    if pts.is_empty() {
        return Err(Error::InvalidArgument("no usable grid points".into()));
    }
    let mean = pts.iter().map(|p| p.w).sum::<f64>() / pts.len() as f64;
    let ss_tot: f64 = pts.iter().map(|p| (p.w - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("zero total variance".into()));
    }
    let mut noise = 0.0;
    for p in &pts {
        noise += p
            .sigma()
            .ok_or_else(|| Error::InvalidArgument("predicted R² needs sampled grid points".into()))?
            .powi(2);
    }
    Ok(1.0 - noise / ss_tot)
}

/// One row of the parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub parameter: String,
    pub fit: f64,
    pub fit_error: f64,
    pub theory: Option<f64>,
}

/// Rows `a, b, m, p₀, q₀, |β₀|` with the closed-form column when given.
pub fn parameter_table(fit: &FitResult, theory: Option<&GaussianModel>) -> Vec<TableRow> {
    let f = &fit.model;
    let e = &fit.errors;
    let row = |name: &str, v: f64, err: f64, th: Option<f64>| TableRow {
        parameter: name.into(),
        fit: v,
        fit_error: err,
        theory: th,
    };
    vec![
        row("a", f.a, e.a, theory.map(|t| t.a)),
        row("b", f.b, e.b, theory.map(|t| t.b)),
        row("m", f.m, e.m, theory.map(|t| t.m)),
        row("p0", f.p0, e.p0, theory.map(|t| t.p0)),
        row("q0", f.q0, e.q0, theory.map(|t| t.q0)),
        row(
            "beta0",
            f.amplitude_invariant(),
            e.amplitude,
            theory.map(|t| t.amplitude_invariant()),
        ),
    ]
}
