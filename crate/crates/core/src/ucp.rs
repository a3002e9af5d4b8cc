//! Empirical unique-continuation constants and the eigenvalue-lifting check.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::breather::{increment_centers, shift_all, w_indicator, Model, OmegaSample};
use crate::eigen::{eigen_lowest, Dense, EIGEN_TOL};
use crate::error::{Error, Result};
use crate::grid::HamiltonianMatrix;

/// Fitted `(κ, M)` with `c(r) ≥ κ·r^{1/M}` on every input sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UcpConstants {
    pub kappa: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub fit_window: Vec<f64>,
    pub residual: f64,
    pub b: f64,
}

/// Upper end of the fitted `M`; a flat or decreasing `c(r)` saturates here.
pub const M_MAX: f64 = 1000.0;

impl UcpConstants {
    /// Constants supplied by hand rather than fitted.
    pub fn given(kappa: f64, m: f64, b: f64) -> Result<Self> {
        let c = UcpConstants { kappa, m, fit_window: Vec::new(), residual: 0.0, b };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::invalid(format!("need 0 < κ ≤ 1, got {}", self.kappa)));
        }
        if !(self.m >= 1.0 && self.m.is_finite()) {
            return Err(Error::invalid(format!("need M ≥ 1, got {}", self.m)));
        }
        Ok(())
    }

    /// `κ·r^{1/M}`.
    pub fn lower_envelope(&self, r: f64) -> f64 {
        self.kappa * r.powf(1.0 / self.m)
    }
}

fn gram_min<T: nalgebra::ComplexField<RealField = f64> + Copy>(q: &DMatrix<T>, w: &[f64]) -> f64 {
    let k = q.ncols();
    let mut g = DMatrix::<T>::zeros(k, k);
    for (p, &wp) in w.iter().enumerate() {
        if wp == 0.0 {
            continue;
        }
        let row = q.row(p);
        for m in 0..k {
            let a = row[m].conjugate().scale(wp);
            for n in 0..k {
                g[(m, n)] += a * row[n];
            }
        }
    }
    SymmetricEigen::new(g).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue of `G_mn = ⟨q_m, W q_n⟩` over eigenvectors with `λ ≤ b`;
/// `None` when there are none.
///
/// The eigenvectors are Euclidean-orthonormal, which is the same as
/// `h^d`-weighted normalization against an `h^d`-weighted Gram matrix.
pub fn ucp_constant(h: &HamiltonianMatrix, b: f64, w: &[f64]) -> Result<Option<f64>> {
    if w.len() != h.dim() {
        return Err(Error::invalid("indicator length differs from the matrix dimension"));
    }
    if w.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid("indicator values must be 0 or 1"));
    }
    let spec = eigen_lowest(h, b)?;
    if spec.eigenvalues.is_empty() {
        return Ok(None);
    }
    Ok(Some(match spec.eigenvectors.as_ref().expect("eigen_lowest returns vectors") {
        Dense::Real(q) => gram_min(q, w),
        Dense::Complex(q) => gram_min(q, w),
    }))
}

/// One `(r, c)` sample: `c` for `H_ω` and the ball union of radius `r = δ/2`
/// placed in the increment annuli of `ω → ω + δ`.
pub fn ucp_sample(model: &Model, omega: &OmegaSample, delta: f64, b: f64) -> Result<Option<(f64, f64)>> {
    let centers = increment_centers(omega, delta)?;
    let w = w_indicator(&centers, &model.grid);
    let h = model.hamiltonian(omega)?;
    Ok(ucp_constant(&h, b, &w)?.map(|c| (centers.radius, c)))
}

/// Least-squares fit of `log c = log κ + (1/M) log r` on the per-`r` minima,
/// clamped to `M ∈ [1, M_MAX]`, then `κ` shrunk to a lower envelope of every
/// sample and capped at 1.
pub fn fit_ucp_exponents(samples: &[(f64, f64)], b: f64) -> Result<UcpConstants> {
    if let Some(&(r, c)) = samples.iter().find(|&&(r, c)| !(c > 0.0) || !(r > 0.0)) {
        return Err(Error::invalid(format!("UCP samples need positive values, got ({r}, {c})")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut minima: Vec<(f64, f64)> = Vec::new();
    for (r, c) in sorted {
        match minima.last() {
            Some(&(lr, _)) if lr == r => {}
            _ => minima.push((r, c)),
        }
    }
    if minima.len() < 3 {
        return Err(Error::invalid(format!("UCP fit needs at least 3 distinct δ, got {}", minima.len())));
    }
    let xs: Vec<f64> = minima.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = minima.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / n).sqrt();

    let s = slope.clamp(1.0 / M_MAX, 1.0);
    let mut log_kappa = my - s * mx;
    for &(r, c) in samples {
        log_kappa = log_kappa.min(c.ln() - s * r.ln());
    }
    let kappa = log_kappa.exp().min(1.0);
    Ok(UcpConstants { kappa, m: 1.0 / s, fit_window: minima.iter().map(|p| p.0).collect(), residual, b })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftingEntry {
    /// 1-based eigenvalue index.
    pub index: usize,
    pub lambda: f64,
    pub lambda_shifted: f64,
    /// `λ_i(ω+δ) − λ_i(ω) − κ(δ/2)^{1/M}`.
    pub lifting_margin: f64,
    /// `λ_i(ω+δ) − λ_i(ω)`.
    pub monotonicity_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftingReport {
    pub delta: f64,
    /// One entry per eigenvalue of `H_ω` at or below `b − 1`.
    pub entries: Vec<LiftingEntry>,
}

impl LiftingReport {
    pub fn min_monotonicity(&self) -> f64 {
        self.entries.iter().map(|e| e.monotonicity_margin).fold(f64::INFINITY, f64::min)
    }
}

/// Compares `λ_i(ω + δ)` with `λ_i(ω) + κ(δ/2)^{1/M}` for `λ_i(ω) ≤ b − 1`.
pub fn lifting_check(model: &Model, omega: &OmegaSample, delta: f64, constants: &UcpConstants, b: f64) -> Result<LiftingReport> {
    let shifted = shift_all(omega, delta)?;
    let low = eigen_lowest(&model.hamiltonian(omega)?, b - 1.0)?;
    let k = low.eigenvalues.len();
    let h1 = model.hamiltonian(&shifted)?;
    let mut top = b;
    let high = loop {
        let s = eigen_lowest(&h1, top)?;
        if s.eigenvalues.len() >= k || s.is_complete() {
            break s;
        }
        top += (top.abs() + 1.0).max(b - low.eigenvalues[0]);
    };
    if high.eigenvalues.len() < k {
        return Err(Error::NotConverged { wanted: k, found: high.eigenvalues.len(), cutoff: top });
    }
    let gain = if delta == 0.0 { 0.0 } else { constants.kappa * (0.5 * delta).powf(1.0 / constants.m) };
    let entries = (0..k)
        .map(|i| {
            let (l0, l1) = (low.eigenvalues[i], high.eigenvalues[i]);
            LiftingEntry {
                index: i + 1,
                lambda: l0,
                lambda_shifted: l1,
                lifting_margin: l1 - l0 - gain,
                monotonicity_margin: l1 - l0,
            }
        })
        .collect();
    Ok(LiftingReport { delta, entries })
}

/// Tolerance for "nonnegative" margins: ten solver tolerances at `b`.
pub fn margin_tolerance(b: f64) -> f64 {
    10.0 * EIGEN_TOL * (1.0 + b.abs())
}

/// `ucp_sample` over every `(ω, δ)` pair in parallel; order follows the input.
pub fn ucp_population(model: &Model, omegas: &[OmegaSample], deltas: &[f64], b: f64) -> Result<Vec<(f64, f64)>> {
    let jobs: Vec<(usize, f64)> = (0..omegas.len()).flat_map(|i| deltas.iter().map(move |&d| (i, d))).collect();
    let out: Vec<Option<(f64, f64)>> =
        jobs.par_iter().map(|&(i, d)| ucp_sample(model, &omegas[i], d, b)).collect::<Result<_>>()?;
    Ok(out.into_iter().flatten().collect())
}
