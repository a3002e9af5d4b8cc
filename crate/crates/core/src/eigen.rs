//! Spectral computations on [`HamiltonianMatrix`].

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{Complex64, HamiltonianMatrix, Scalar, SparseHermitian};
use crate::lanczos;
use crate::ldl::{bunch_kaufman_inertia, BandedLdl};
use crate::with_entries;

/// Relative nudge of the shift in [`count_below`].
pub const COUNT_NUDGE: f64 = 1e-12;
const COUNT_RETRIES: usize = 3;
/// Matrices up to this size are diagonalized densely.
pub const DENSE_LIMIT: usize = 2000;
/// Size guard for [`semigroup`].
pub const SEMIGROUP_LIMIT: usize = 4000;
/// Relative residual accepted for an eigenpair.
pub const EIGEN_TOL: f64 = 1e-8;

/// Dense real or complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Dense {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

impl Dense {
    pub fn nrows(&self) -> usize {
        match self {
            Dense::Real(m) => m.nrows(),
            Dense::Complex(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Dense::Real(m) => m.ncols(),
            Dense::Complex(m) => m.ncols(),
        }
    }

    pub fn to_complex(&self) -> DMatrix<Complex64> {
        match self {
            Dense::Real(m) => m.map(|v| Complex64::new(v, 0.0)),
            Dense::Complex(m) => m.clone(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match self {
            Dense::Real(m) => Complex64::new(m[(i, j)], 0.0),
            Dense::Complex(m) => m[(i, j)],
        }
    }

    /// Column `j` as a complex vector.
    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.nrows()).map(|i| self.get(i, j)).collect()
    }
}

/// Sorted eigenvalues, complete at and below `cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns matching `eigenvalues`, when requested.
    pub eigenvectors: Option<Dense>,
    /// Every eigenvalue `≤ cutoff` is present; `+∞` for a full spectrum.
    pub cutoff: f64,
    /// Dimension of the underlying matrix.
    pub dim: usize,
}

impl Spectrum {
    /// Full spectrum of a `values.len()`-dimensional operator.
    pub fn complete(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Spectrum { dim: values.len(), eigenvalues: values, eigenvectors: None, cutoff: f64::INFINITY }
    }

    /// Partial list: all eigenvalues `≤ cutoff` of a `dim`-dimensional operator.
    pub fn partial(mut values: Vec<f64>, dim: usize, cutoff: f64) -> Result<Self> {
        values.sort_by(f64::total_cmp);
        if values.len() > dim {
            return Err(Error::invalid("more eigenvalues than the dimension"));
        }
        if cutoff.is_infinite() && values.len() != dim {
            return Err(Error::invalid("an unbounded cutoff needs the full spectrum"));
        }
        Ok(Spectrum { eigenvalues: values, eigenvectors: None, cutoff, dim })
    }

    pub fn is_complete(&self) -> bool {
        self.eigenvalues.len() == self.dim
    }

    fn effective_cutoff(&self) -> f64 {
        if self.is_complete() {
            f64::INFINITY
        } else {
            self.cutoff
        }
    }

    fn ensure(&self, lambda: f64) -> Result<()> {
        if lambda > self.effective_cutoff() {
            return Err(Error::IncompleteSpectrum { requested: lambda, cutoff: self.cutoff });
        }
        Ok(())
    }

    /// `#{λ_i ≤ λ}`.
    pub fn count_le(&self, lambda: f64) -> Result<usize> {
        self.ensure(lambda)?;
        Ok(self.eigenvalues.partition_point(|&l| l <= lambda))
    }

    /// `#{λ_i < λ}`.
    pub fn count_lt(&self, lambda: f64) -> Result<usize> {
        self.ensure(lambda)?;
        Ok(self.eigenvalues.partition_point(|&l| l < lambda))
    }

    /// `#{λ_i ∈ [lo, hi]}`.
    pub fn count_in(&self, lo: f64, hi: f64) -> Result<usize> {
        Ok(self.count_le(hi)?.saturating_sub(self.count_lt(lo)?))
    }

    /// Eigenvalues trusted as continuum approximations on `grid`.
    pub fn converged(&self, cutoff: f64) -> &[f64] {
        let k = self.eigenvalues.partition_point(|&l| l <= cutoff);
        &self.eigenvalues[..k]
    }

    /// Columns `index, eigenvalue`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "eigenvalue"])?;
        for (i, l) in self.eigenvalues.iter().enumerate() {
            out.write_record([(i + 1).to_string(), format!("{l:.17e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn negatives_at(h: &HamiltonianMatrix, shift: f64) -> Option<usize> {
    with_entries!(h, m => negatives_typed(m, shift))
}

fn negatives_typed<T: Scalar>(m: &SparseHermitian<T>, shift: f64) -> Option<usize> {
    if m.dim() <= DENSE_LIMIT {
        let mut d = m.to_dense();
        for i in 0..d.nrows() {
            d[(i, i)] -= T::from_real(shift);
        }
        let inertia = bunch_kaufman_inertia(d);
        (inertia.zero == 0).then_some(inertia.negative)
    } else {
        BandedLdl::factor(m, shift).map(|f| f.inertia().negative)
    }
}

fn inertia_count(h: &HamiltonianMatrix, sigma: f64, side: f64) -> Result<usize> {
    if !sigma.is_finite() {
        return Err(Error::invalid(format!("shift must be finite, got {sigma}")));
    }
    let mut eta = COUNT_NUDGE;
    for _ in 0..=COUNT_RETRIES {
        let shift = sigma + side * eta * (1.0 + sigma.abs());
        if let Some(n) = negatives_at(h, shift) {
            return Ok(n);
        }
        eta *= 2.0;
    }
    Err(Error::Factorization { shift: sigma, attempts: COUNT_RETRIES + 1 })
}

/// `#{λ_i ≤ σ}` from the inertia of `H - σ'I`, `σ' = σ + η(1 + |σ|)`.
pub fn count_below(h: &HamiltonianMatrix, sigma: f64) -> Result<usize> {
    inertia_count(h, sigma, 1.0)
}

/// `#{λ_i < σ}`, the same factorization nudged to the other side.
pub fn count_strictly_below(h: &HamiltonianMatrix, sigma: f64) -> Result<usize> {
    inertia_count(h, sigma, -1.0)
}

/// `Tr χ_[E-ε, E+ε](H)`, closed interval.
pub fn trace_spectral_projector(h: &HamiltonianMatrix, energy: f64, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::invalid("ε must be positive"));
    }
    let hi = count_below(h, energy + eps)?;
    let lo = count_strictly_below(h, energy - eps)?;
    Ok(hi.saturating_sub(lo))
}

fn dense_eigen<T: Scalar>(m: &SparseHermitian<T>) -> (Vec<f64>, DMatrix<T>) {
    let eig = SymmetricEigen::new(m.to_dense());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(m.dim(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

fn wrap<T: Scalar>(m: DMatrix<T>) -> Dense {
    // both instantiations go through Complex64 conversion only when needed
    let any: &dyn std::any::Any = &m;
    if let Some(r) = any.downcast_ref::<DMatrix<f64>>() {
        Dense::Real(r.clone())
    } else {
        Dense::Complex(m.map(|v| v.to_complex()))
    }
}

/// Full spectrum (and eigenvectors) by dense diagonalization.
pub fn dense_spectrum(h: &HamiltonianMatrix, with_vectors: bool) -> Result<Spectrum> {
    let dim = h.dim();
    if dim > SEMIGROUP_LIMIT {
        return Err(Error::TooLarge { dim, limit: SEMIGROUP_LIMIT });
    }
    let (values, vectors) = with_entries!(h, m => {
        let (v, q) = dense_eigen(m);
        (v, wrap(q))
    });
    Ok(Spectrum {
        eigenvalues: values,
        eigenvectors: with_vectors.then_some(vectors),
        cutoff: f64::INFINITY,
        dim,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Use dense diagonalization up to this dimension.
    pub dense_limit: usize,
    /// Lanczos passes before giving up.
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { dense_limit: DENSE_LIMIT, max_restarts: 60, seed: 0x5eed }
    }
}

/// All eigenpairs with `λ ≤ b`, certified complete by [`count_below`].
pub fn eigen_lowest(h: &HamiltonianMatrix, b: f64) -> Result<Spectrum> {
    eigen_lowest_with(h, b, &EigenOptions::default())
}

pub fn eigen_lowest_with(h: &HamiltonianMatrix, b: f64, opts: &EigenOptions) -> Result<Spectrum> {
    let dim = h.dim();
    let wanted = count_below(h, b)?;
    let slack = EIGEN_TOL * (1.0 + b.abs());
    let (values, vectors) = if dim <= opts.dense_limit {
        with_entries!(h, m => {
            let (v, q) = dense_eigen(m);
            let q = q.columns(0, wanted).into_owned();
            (v[..wanted].to_vec(), wrap(q))
        })
    } else {
        with_entries!(h, m => {
            let (v, q) = lanczos::lowest(m, b, wanted, opts)?;
            (v, wrap(q))
        })
    };
    let consistent = values.last().is_none_or(|&l| l <= b + slack)
        && (wanted == dim || dim <= opts.dense_limit || values.len() == wanted);
    if !consistent || values.len() != wanted {
        return Err(Error::NotConverged { wanted, found: values.len(), cutoff: b });
    }
    Ok(Spectrum { eigenvalues: values, eigenvectors: Some(vectors), cutoff: b, dim })
}

/// `e^{-tH}` through the full eigendecomposition.
pub fn semigroup(h: &HamiltonianMatrix, t: f64) -> Result<Dense> {
    let dim = h.dim();
    if dim > SEMIGROUP_LIMIT {
        return Err(Error::TooLarge { dim, limit: SEMIGROUP_LIMIT });
    }
    if !(t > 0.0) {
        return Err(Error::invalid("semigroup time must be positive"));
    }
    Ok(with_entries!(h, m => wrap(semigroup_typed(m, t))))
}

fn semigroup_typed<T: Scalar>(m: &SparseHermitian<T>, t: f64) -> DMatrix<T> {
    let (v, q) = dense_eigen(m);
    let mut scaled = q.clone();
    for (j, l) in v.iter().enumerate() {
        let f = (-t * l).exp();
        scaled.column_mut(j).iter_mut().for_each(|x| *x = x.scale(f));
    }
    &scaled * q.adjoint()
}

/// Cubic smoothstep `ρ`: `-1` below `-ε`, `0` above `ε`, slope at most `3/(4ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothSwitch {
    pub epsilon: f64,
}

impl SmoothSwitch {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid("switch width ε must be positive"));
        }
        Ok(SmoothSwitch { epsilon })
    }

    fn u(&self, x: f64) -> f64 {
        ((x + self.epsilon) / (2.0 * self.epsilon)).clamp(0.0, 1.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = self.u(x);
        -1.0 + u * u * (3.0 - 2.0 * u)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let u = self.u(x);
        3.0 * u * (1.0 - u) / self.epsilon
    }

    /// `sup ρ' = 3/(4ε)`.
    pub fn max_slope(&self) -> f64 {
        0.75 / self.epsilon
    }
}

/// `Σ_i ρ(λ_i - E - offset)`; needs the spectrum up to `E + offset + ε`.
pub fn trace_rho(spec: &Spectrum, energy: f64, eps: f64, offset: f64) -> Result<f64> {
    let rho = SmoothSwitch::new(eps)?;
    let top = energy + offset + eps;
    spec.ensure(top)?;
    Ok(spec
        .eigenvalues
        .iter()
        .take_while(|&&l| l < top)
        .map(|&l| rho.eval(l - energy - offset))
        .sum())
}
