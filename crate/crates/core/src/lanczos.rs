//! Shift-invert Lanczos for the lowest eigenpairs of a sparse Hermitian matrix.
//!
//! Uses `(H - σI)⁻¹` with `σ` below the Gershgorin lower bound, so the banded
//! unpivoted factorization sees a positive definite matrix. Converged pairs
//! are locked; degenerate eigenspaces are completed by restarting with fresh
//! random directions orthogonal to everything locked.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::eigen::{EigenOptions, EIGEN_TOL};
use crate::error::{Error, Result};
use crate::grid::{Scalar, SparseHermitian};
use crate::ldl::BandedLdl;
use crate::rng::stream;

fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (a, b)| acc + a.conjugate() * *b)
}

fn norm<T: Scalar>(x: &[T]) -> f64 {
    x.iter().map(|v| v.modulus_squared()).sum::<f64>().sqrt()
}

fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi -= a * *xi;
    }
}

fn orthogonalize<T: Scalar>(w: &mut [T], basis: &[Vec<T>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            axpy(c, q, w);
        }
    }
}

fn gershgorin_lower<T: Scalar>(m: &SparseHermitian<T>) -> f64 {
    (0..m.dim())
        .map(|i| {
            let mut diag = 0.0;
            let mut off = 0.0;
            for (j, v) in m.row(i) {
                if j == i {
                    diag = v.real();
                } else {
                    off += v.modulus();
                }
            }
            diag - off
        })
        .fold(f64::INFINITY, f64::min)
}

fn random_vector<T: Scalar>(rng: &mut impl Rng, n: usize) -> Vec<T> {
    (0..n).map(|_| T::from_real(rng.random_range(-1.0..1.0))).collect()
}

struct Locked<T> {
    values: Vec<f64>,
    vectors: Vec<Vec<T>>,
}

fn residual<T: Scalar>(m: &SparseHermitian<T>, x: &[T]) -> (f64, f64) {
    let mut hx = vec![T::zero(); x.len()];
    m.mul_vec(x, &mut hx);
    let lambda = dot(x, &hx).real();
    axpy(T::from_real(lambda), x, &mut hx);
    (lambda, norm(&hx))
}

/// The `wanted` lowest eigenpairs, all expected at or below `b`.
pub(crate) fn lowest<T: Scalar>(
    m: &SparseHermitian<T>,
    b: f64,
    wanted: usize,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, DMatrix<T>)> {
    let n = m.dim();
    if wanted == 0 {
        return Ok((Vec::new(), DMatrix::zeros(n, 0)));
    }
    let sigma = gershgorin_lower(m).min(0.0) - 1.0;
    let fact = BandedLdl::factor(m, sigma).ok_or(Error::Factorization { shift: sigma, attempts: 1 })?;
    let apply = |x: &[T]| {
        let mut y = x.to_vec();
        fact.solve_in_place(&mut y);
        y
    };
    let slack = EIGEN_TOL * (1.0 + b.abs());
    let mut rng = stream(opts.seed, n as u64);
    let mut locked = Locked { values: Vec::new(), vectors: Vec::new() };
    let mut krylov = (2 * wanted + 20).min(n);
    let mut carry: Option<Vec<T>> = None;

    for _ in 0..opts.max_restarts {
        let below = locked.values.iter().filter(|&&l| l <= b + slack).count();
        if below >= wanted {
            break;
        }
        let room = n - locked.vectors.len();
        if room == 0 {
            break;
        }
        let k = krylov.min(room);

        let mut v0: Vec<T> = random_vector(&mut rng, n);
        if let Some(c) = carry.take() {
            let (cn, vn) = (norm(&c), norm(&v0));
            for (a, ci) in v0.iter_mut().zip(&c) {
                *a = a.scale(0.1 * cn / vn) + *ci;
            }
        }
        orthogonalize(&mut v0, &locked.vectors);
        let n0 = norm(&v0);
        if n0 == 0.0 {
            continue;
        }
        v0.iter_mut().for_each(|x| *x = x.scale(1.0 / n0));

        let mut basis: Vec<Vec<T>> = vec![v0];
        let mut alpha = Vec::with_capacity(k);
        let mut beta: Vec<f64> = Vec::with_capacity(k);
        for j in 0..k {
            let mut w = apply(&basis[j]);
            let a = dot(&basis[j], &w).real();
            alpha.push(a);
            orthogonalize(&mut w, &locked.vectors);
            orthogonalize(&mut w, &basis);
            let bn = norm(&w);
            if j + 1 == k || bn <= 1e-13 * a.abs().max(f64::MIN_POSITIVE) {
                break;
            }
            beta.push(bn);
            w.iter_mut().for_each(|x| *x = x.scale(1.0 / bn));
            basis.push(w);
        }

        // The projected operator is tridiagonal only in exact arithmetic;
        // form it explicitly so reorthogonalization errors do not leak in.
        let dim = basis.len();
        let proj = DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                alpha[i]
            } else if i.abs_diff(j) == 1 {
                beta[i.min(j)]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(proj);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));

        let mut pending: Vec<T> = vec![T::zero(); n];
        let mut progress = false;
        for &r in &order {
            let theta = eig.eigenvalues[r];
            if theta <= 0.0 {
                continue;
            }
            if sigma + 1.0 / theta > b + 10.0 * (1.0 + b.abs()) && progress {
                break;
            }
            let mut x = vec![T::zero(); n];
            for (c, q) in basis.iter().enumerate() {
                let y = T::from_real(eig.eigenvectors[(c, r)]);
                for (xi, qi) in x.iter_mut().zip(q) {
                    *xi += y * *qi;
                }
            }
            orthogonalize(&mut x, &locked.vectors);
            let xn = norm(&x);
            if xn < 0.5 {
                continue;
            }
            x.iter_mut().for_each(|v| *v = v.scale(1.0 / xn));
            let (lambda, res) = residual(m, &x);
            if res <= 0.1 * EIGEN_TOL * (1.0 + lambda.abs()) {
                locked.values.push(lambda);
                locked.vectors.push(x);
                progress = true;
            } else if lambda <= b + slack {
                for (p, xi) in pending.iter_mut().zip(&x) {
                    *p += *xi;
                }
            }
        }
        if norm(&pending) > 0.0 {
            carry = Some(pending);
        }
        if !progress {
            krylov = (krylov * 3 / 2 + 10).min(n);
        }
    }

    rayleigh_ritz(m, locked, b, slack, wanted)
}

fn rayleigh_ritz<T: Scalar>(
    m: &SparseHermitian<T>,
    locked: Locked<T>,
    b: f64,
    slack: f64,
    wanted: usize,
) -> Result<(Vec<f64>, DMatrix<T>)> {
    let n = m.dim();
    let k = locked.vectors.len();
    let q = DMatrix::from_fn(n, k, |i, j| locked.vectors[j][i]);
    let mut hq = DMatrix::zeros(n, k);
    let mut col = vec![T::zero(); n];
    for j in 0..k {
        m.mul_vec(&locked.vectors[j], &mut col);
        hq.column_mut(j).iter_mut().zip(&col).for_each(|(a, b)| *a = *b);
    }
    let small = q.adjoint() * &hq;
    let small = (&small + small.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(small);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let keep: Vec<usize> = order.into_iter().filter(|&r| eig.eigenvalues[r] <= b + slack).collect();
    let values: Vec<f64> = keep.iter().map(|&r| eig.eigenvalues[r]).collect();
    let rot = DMatrix::from_fn(k, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])]);
    let vectors = &q * rot;
    if values.len() != wanted {
        return Err(Error::NotConverged { wanted, found: values.len(), cutoff: b });
    }
    Ok((values, vectors))
}
