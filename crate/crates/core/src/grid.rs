//! Box discretization and the finite-difference Hamiltonian.
//!
//! Points are the interior nodes of a uniform mesh with spacing `h = 1/n_h`
//! on `Λ_L = (-L/2, L/2)^d`; node `i ∈ 1..=L·n_h-1` on an axis sits at
//! `-L/2 + i·h`. Flat indices are lexicographic with axis 0 varying slowest.

use nalgebra::{ComplexField, DMatrix};
use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;

use crate::error::{Error, Result};

pub type Complex64 = Complex<f64>;

/// Field types the solvers are generic over: `f64` and `Complex64`.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Debug + Send + Sync + 'static {
    fn from_complex(z: Complex64) -> Self;
    fn to_complex(self) -> Complex64;
}

impl Scalar for f64 {
    fn from_complex(z: Complex64) -> Self {
        z.re
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Scalar for Complex64 {
    fn from_complex(z: Complex64) -> Self {
        z
    }
    fn to_complex(self) -> Complex64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub box_side: usize,
    pub mesh_per_unit: usize,
}

impl GridSpec {
    pub fn new(dim: usize, box_side: usize, mesh_per_unit: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::invalid(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if box_side == 0 || box_side % 2 == 0 {
            return Err(Error::invalid(format!("box side L must be odd and positive, got {box_side}")));
        }
        if mesh_per_unit == 0 {
            return Err(Error::invalid("mesh_per_unit must be positive"));
        }
        if box_side * mesh_per_unit < 2 {
            return Err(Error::invalid("grid has no interior points (need L·n_h ≥ 2)"));
        }
        Ok(GridSpec { dim, box_side, mesh_per_unit })
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.mesh_per_unit as f64
    }

    /// Interior nodes per axis, `L·n_h - 1`.
    pub fn points_per_axis(&self) -> usize {
        self.box_side * self.mesh_per_unit - 1
    }

    pub fn num_points(&self) -> usize {
        self.points_per_axis().pow(self.dim as u32)
    }

    /// `|Λ_L| = L^d`.
    pub fn volume(&self) -> f64 {
        (self.box_side as f64).powi(self.dim as i32)
    }

    /// Cell volume `h^d` of the discrete inner product.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Axis indices (1-based, as in the coordinate formula) of a flat index.
    pub fn axis_indices(&self, flat: usize) -> Vec<usize> {
        let n = self.points_per_axis();
        let mut out = vec![0; self.dim];
        let mut rem = flat;
        for a in (0..self.dim).rev() {
            out[a] = rem % n + 1;
            rem /= n;
        }
        out
    }

    /// Doubled scaled coordinates `2·n_h·x`, exact integers.
    pub fn scaled_coords(&self, flat: usize) -> Vec<i64> {
        let ln = (self.box_side * self.mesh_per_unit) as i64;
        self.axis_indices(flat).into_iter().map(|i| 2 * i as i64 - ln).collect()
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let s = 2.0 * self.mesh_per_unit as f64;
        self.scaled_coords(flat).into_iter().map(|m| m as f64 / s).collect()
    }

    fn stride(&self, axis: usize) -> usize {
        self.points_per_axis().pow((self.dim - 1 - axis) as u32)
    }

    /// Eigenvalues at or below this value are trusted as continuum
    /// approximations (`c_fid / h²` with `c_fid = 0.1`).
    pub fn converged_cutoff(&self) -> f64 {
        CONVERGED_FIDELITY / (self.spacing() * self.spacing())
    }
}

pub const CONVERGED_FIDELITY: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MagneticKind {
    #[default]
    None,
    ConstantField,
}

/// Constant magnetic field realized by Peierls phases in Landau gauge.
///
/// `strength` is the field `B`, i.e. the flux through one unit lattice cell.
/// In d = 1 every edge carries the constant phase `B·h`, which is a pure
/// gauge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MagneticSpec {
    #[serde(default)]
    pub kind: MagneticKind,
    #[serde(default)]
    pub strength: f64,
}

impl MagneticSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn constant(strength: f64) -> Self {
        MagneticSpec { kind: MagneticKind::ConstantField, strength }
    }

    /// Phase of the edge from `from` in direction `+axis`.
    fn edge_phase(&self, grid: &GridSpec, axis: usize, from: usize) -> f64 {
        if self.kind == MagneticKind::None || axis != 0 {
            return 0.0;
        }
        let h = grid.spacing();
        if grid.dim == 1 {
            return self.strength * h;
        }
        let y = grid.coords(from)[1];
        -self.strength * y * h
    }
}

/// Compressed sparse rows of a Hermitian matrix; both triangles are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHermitian<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Scalar> SparseHermitian<T> {
    fn from_rows(rows: Vec<Vec<(usize, T)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseHermitian { n, row_ptr, cols, vals }
    }

    pub fn from_dense(m: &DMatrix<T>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter(|&j| m[(i, j)] != T::zero())
                    .map(|j| (j, m[(i, j)]))
                    .collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            *yi = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n).flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j))).max().unwrap_or(0)
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Entries {
    Real(SparseHermitian<f64>),
    Complex(SparseHermitian<Complex64>),
}

/// The Dirichlet Hamiltonian `H_ω,L` (or any Hermitian matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    /// `None` for matrices that were not assembled on a grid.
    pub grid: Option<GridSpec>,
    pub entries: Entries,
}

/// Runs `$body` with `$m` bound to the typed sparse matrix.
#[macro_export]
macro_rules! with_entries {
    ($h:expr, $m:ident => $body:expr) => {
        match &$h.entries {
            $crate::grid::Entries::Real($m) => $body,
            $crate::grid::Entries::Complex($m) => $body,
        }
    };
}

impl HamiltonianMatrix {
    pub fn dim(&self) -> usize {
        with_entries!(self, m => m.dim())
    }

    pub fn is_real(&self) -> bool {
        matches!(self.entries, Entries::Real(_))
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        with_entries!(self, m => m.get(i, j).to_complex())
    }

    /// Wraps a dense real symmetric matrix; the upper triangle is mirrored.
    pub fn from_dense_real(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid("matrix must be square"));
        }
        let sym = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| if i <= j { m[(i, j)] } else { m[(j, i)] });
        Ok(HamiltonianMatrix { grid: None, entries: Entries::Real(SparseHermitian::from_dense(&sym)) })
    }

    pub fn from_dense_complex(m: &DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid("matrix must be square"));
        }
        let herm = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            if i < j {
                m[(i, j)]
            } else if i == j {
                Complex64::new(m[(i, i)].re, 0.0)
            } else {
                m[(j, i)].conj()
            }
        });
        Ok(HamiltonianMatrix { grid: None, entries: Entries::Complex(SparseHermitian::from_dense(&herm)) })
    }

    pub fn to_dense_complex(&self) -> DMatrix<Complex64> {
        with_entries!(self, m => m.to_dense().map(|v| v.to_complex()))
    }

    pub fn max_abs(&self) -> f64 {
        with_entries!(self, m => m.max_abs())
    }
}

/// `H = h⁻²(2d·I − Σ_axis shifts with Peierls phases) + diag(V)`.
pub fn assemble_hamiltonian(grid: &GridSpec, potential: &[f64], magnetic: &MagneticSpec) -> Result<HamiltonianMatrix> {
    let n = grid.num_points();
    if potential.len() != n {
        return Err(Error::invalid(format!("potential has {} values, grid has {n} points", potential.len())));
    }
    if let Some((i, v)) = potential.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("potential must be finite and nonnegative, got {v} at point {i}")));
    }
    if !magnetic.strength.is_finite() {
        return Err(Error::invalid("magnetic strength must be finite"));
    }
    let entries = match magnetic.kind {
        MagneticKind::None => Entries::Real(build_rows(grid, potential, magnetic)),
        MagneticKind::ConstantField => Entries::Complex(build_rows(grid, potential, magnetic)),
    };
    Ok(HamiltonianMatrix { grid: Some(*grid), entries })
}

fn build_rows<T: Scalar>(grid: &GridSpec, potential: &[f64], magnetic: &MagneticSpec) -> SparseHermitian<T> {
    let n = grid.num_points();
    let per_axis = grid.points_per_axis();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let diag = 2.0 * grid.dim as f64 * inv_h2;
    let mut rows: Vec<Vec<(usize, T)>> = (0..n)
        .map(|p| vec![(p, T::from_real(diag + potential[p]))])
        .collect();
    for p in 0..n {
        let idx = grid.axis_indices(p);
        for axis in 0..grid.dim {
            if idx[axis] == per_axis {
                continue;
            }
            let q = p + grid.stride(axis);
            let theta = magnetic.edge_phase(grid, axis, p);
            let z = Complex64::from_polar(inv_h2, theta);
            rows[p].push((q, T::from_complex(-z)));
            rows[q].push((p, T::from_complex(-z.conj())));
        }
    }
    SparseHermitian::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = GridSpec::new(1, 1, 2).unwrap();
        assert_eq!(g.num_points(), 1);
        assert_eq!(g.coords(0), vec![0.0]);
        assert_eq!(g.spacing(), 0.5);

        let g = GridSpec::new(1, 3, 1).unwrap();
        assert_eq!(g.num_points(), 2);
        assert_eq!(g.coords(0), vec![-0.5]);
        assert_eq!(g.coords(1), vec![0.5]);

        let g = GridSpec::new(2, 3, 4).unwrap();
        assert_eq!(g.num_points(), 121);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(GridSpec::new(1, 2, 4).is_err());
        assert!(GridSpec::new(1, 0, 4).is_err());
        assert!(GridSpec::new(4, 3, 4).is_err());
        assert!(GridSpec::new(0, 3, 4).is_err());
        assert!(GridSpec::new(1, 1, 1).is_err());
    }

    #[test]
    fn coordinates_are_strictly_inside_and_lexicographic() {
        let g = GridSpec::new(2, 3, 2).unwrap();
        let n = g.points_per_axis();
        for p in 0..g.num_points() {
            for x in g.coords(p) {
                assert!(x > -1.5 && x < 1.5);
            }
        }
        assert_eq!(g.coords(0), vec![-1.0, -1.0]);
        assert_eq!(g.coords(1), vec![-1.0, -0.5]);
        assert_eq!(g.coords(n), vec![-0.5, -1.0]);
    }

    #[test]
    fn assembly_examples() {
        let g = GridSpec::new(1, 1, 2).unwrap();
        let h = assemble_hamiltonian(&g, &[0.0], &MagneticSpec::none()).unwrap();
        assert_eq!(h.entry(0, 0).re, 8.0);
        let h = assemble_hamiltonian(&g, &[1.0], &MagneticSpec::none()).unwrap();
        assert_eq!(h.entry(0, 0).re, 9.0);

        let g = GridSpec::new(1, 3, 1).unwrap();
        let h = assemble_hamiltonian(&g, &[0.0, 0.0], &MagneticSpec::none()).unwrap();
        assert!(h.is_real());
        let d = h.to_dense_complex().map(|z| z.re);
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
    }

    #[test]
    fn assembly_rejects_bad_potential() {
        let g = GridSpec::new(1, 3, 1).unwrap();
        assert!(assemble_hamiltonian(&g, &[0.0], &MagneticSpec::none()).is_err());
        assert!(assemble_hamiltonian(&g, &[0.0, -1.0], &MagneticSpec::none()).is_err());
        assert!(assemble_hamiltonian(&g, &[0.0, f64::NAN], &MagneticSpec::none()).is_err());
    }

    #[test]
    fn free_stencil_structure() {
        let g = GridSpec::new(2, 3, 2).unwrap();
        let h = assemble_hamiltonian(&g, &vec![0.0; g.num_points()], &MagneticSpec::none()).unwrap();
        let inv_h2 = 4.0;
        for p in 0..g.num_points() {
            assert_eq!(h.entry(p, p).re, 4.0 * inv_h2);
            for q in 0..g.num_points() {
                if p == q {
                    continue;
                }
                let dist: i64 = g
                    .scaled_coords(p)
                    .iter()
                    .zip(g.scaled_coords(q))
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                let expected = if dist == 2 { -inv_h2 } else { 0.0 };
                assert_eq!(h.entry(p, q).re, expected, "p={p} q={q}");
            }
        }
    }

    #[test]
    fn magnetic_matrix_is_hermitian_with_unit_phases() {
        let g = GridSpec::new(2, 3, 3).unwrap();
        let h = assemble_hamiltonian(&g, &vec![0.5; g.num_points()], &MagneticSpec::constant(0.7)).unwrap();
        assert!(!h.is_real());
        let inv_h2 = 9.0;
        for p in 0..g.num_points() {
            for q in 0..g.num_points() {
                let a = h.entry(p, q);
                let b = h.entry(q, p);
                assert_eq!(a, b.conj());
                if p != q && a.norm() > 0.0 {
                    assert!((a.norm() - inv_h2).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn plaquette_flux_equals_field_times_area() {
        let g = GridSpec::new(2, 1, 4).unwrap();
        let b = 0.9;
        let h = assemble_hamiltonian(&g, &vec![0.0; g.num_points()], &MagneticSpec::constant(b)).unwrap();
        let n = g.points_per_axis();
        // corners of the plaquette at (0,0),(1,0),(1,1),(0,1) in axis indices
        let p00 = 0;
        let p10 = n;
        let p11 = n + 1;
        let p01 = 1;
        let hop = |p: usize, q: usize| -h.entry(p, q);
        let loop_ = hop(p00, p10) * hop(p10, p11) * hop(p11, p01) * hop(p01, p00);
        let flux = loop_.arg();
        let area = g.spacing() * g.spacing();
        assert!((flux.abs() - b * area).abs() < 1e-12);
    }
}
