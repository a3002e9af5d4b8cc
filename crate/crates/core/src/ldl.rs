//! Symmetric-indefinite factorizations used for exact eigenvalue counting.
//!
//! By Sylvester's law of inertia, `A = P L D Lᴴ Pᵀ` has as many negative
//! eigenvalues as `D`. [`bunch_kaufman_inertia`] handles dense matrices with
//! the diagonal pivoting strategy of Bunch and Kaufman (1×1 and 2×2 blocks);
//! [`BandedLdl`] is the unpivoted variant that keeps the band structure of
//! the grid Hamiltonian and additionally solves linear systems.

use nalgebra::DMatrix;

use crate::grid::{Scalar, SparseHermitian};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

/// Pivots with modulus at or below `ZERO_PIVOT · max|A|` count as zero.
const ZERO_PIVOT: f64 = 1e-14;

fn bk_alpha() -> f64 {
    (1.0 + 17f64.sqrt()) / 8.0
}

fn classify(inertia: &mut Inertia, d: f64, tiny: f64) {
    if d.abs() <= tiny {
        inertia.zero += 1;
    } else if d < 0.0 {
        inertia.negative += 1;
    } else {
        inertia.positive += 1;
    }
}

/// Inertia of a dense Hermitian matrix via Bunch–Kaufman pivoting.
///
/// Only the lower triangle of `a` is read.
pub fn bunch_kaufman_inertia<T: Scalar>(mut a: DMatrix<T>) -> Inertia {
    let n = a.nrows();
    // mirror the lower triangle so swaps can work on full rows
    for j in 0..n {
        a[(j, j)] = T::from_real(a[(j, j)].real());
        for i in j + 1..n {
            a[(j, i)] = a[(i, j)].conjugate();
        }
    }
    let scale = a.iter().map(|v| v.modulus()).fold(0.0, f64::max);
    let tiny = ZERO_PIVOT * scale.max(f64::MIN_POSITIVE);
    let alpha = bk_alpha();
    let mut inertia = Inertia::default();
    let mut k = 0;
    while k < n {
        let absakk = a[(k, k)].real().abs();
        let (imax, colmax) = (k + 1..n)
            .map(|i| (i, a[(i, k)].modulus()))
            .fold((k, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });

        let (kp, kstep) = if absakk.max(colmax) <= tiny {
            (k, 1)
        } else if absakk >= alpha * colmax {
            (k, 1)
        } else {
            let rowmax = (k..n)
                .filter(|&j| j != imax)
                .map(|j| a[(imax, j)].modulus())
                .fold(0.0, f64::max);
            if absakk * rowmax >= alpha * colmax * colmax {
                (k, 1)
            } else if a[(imax, imax)].real().abs() >= alpha * rowmax {
                (imax, 1)
            } else {
                (imax, 2)
            }
        };

        let kk = k + kstep - 1;
        if kp != kk {
            a.swap_rows(kk, kp);
            a.swap_columns(kk, kp);
        }

        if kstep == 1 {
            let d = a[(k, k)].real();
            classify(&mut inertia, d, tiny);
            if d.abs() > tiny {
                for j in k + 1..n {
                    let f = a[(j, k)].conjugate().scale(1.0 / d);
                    if f == T::zero() {
                        continue;
                    }
                    for i in k + 1..n {
                        let aik = a[(i, k)];
                        a[(i, j)] -= aik * f;
                    }
                }
            }
        } else {
            let p = a[(k, k)].real();
            let b = a[(k + 1, k)];
            let c = a[(k + 1, k + 1)].real();
            let det = p * c - b.modulus_squared();
            // eigenvalues of the 2×2 block
            let mean = 0.5 * (p + c);
            let rad = (0.25 * (p - c) * (p - c) + b.modulus_squared()).sqrt();
            classify(&mut inertia, mean - rad, tiny);
            classify(&mut inertia, mean + rad, tiny);
            if det.abs() > tiny * tiny {
                let inv = 1.0 / det;
                // z_i = w_i D⁻¹ for the trailing rows; A_ij -= z_i w_jᴴ
                let z: Vec<(T, T)> = (k + 2..n)
                    .map(|i| {
                        let (v0, v1) = (a[(i, k)], a[(i, k + 1)]);
                        ((v0.scale(c) - v1 * b).scale(inv), (v1.scale(p) - v0 * b.conjugate()).scale(inv))
                    })
                    .collect();
                for j in k + 2..n {
                    let (c0, c1) = (a[(j, k)].conjugate(), a[(j, k + 1)].conjugate());
                    for i in k + 2..n {
                        let (zi0, zi1) = z[i - k - 2];
                        a[(i, j)] -= zi0 * c0 + zi1 * c1;
                    }
                }
            }
        }
        k += kstep;
    }
    inertia
}

/// Unpivoted `L D Lᴴ` in band storage.
///
/// Succeeds only when every pivot is safely away from zero; callers treat a
/// failure as a shift that collides with an eigenvalue and retry.
#[derive(Debug, Clone)]
pub struct BandedLdl<T> {
    n: usize,
    bw: usize,
    // row i holds L[i, i-bw..i] in positions 0..bw (entry (i, j) at j + bw - i)
    lower: Vec<T>,
    diag: Vec<f64>,
}

impl<T: Scalar> BandedLdl<T> {
    /// Factorizes `A - shift·I`.
    pub fn factor(a: &SparseHermitian<T>, shift: f64) -> Option<Self> {
        let n = a.dim();
        let bw = a.bandwidth();
        let width = bw.max(1);
        let mut band = vec![T::zero(); n * width];
        let mut diag = vec![0.0; n];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j < i {
                    band[i * width + (j + width - i)] = v;
                } else if j == i {
                    diag[i] = v.real() - shift;
                }
            }
        }
        let scale = a.max_abs().max(shift.abs()).max(f64::MIN_POSITIVE);
        let tiny = ZERO_PIVOT * scale;
        // Column-oriented LDLᴴ: for each i, L[i,j] = (A[i,j] - Σ_k L[i,k] d_k conj(L[j,k])) / d_j
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..i {
                let mut s = band[i * width + (j + width - i)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    let lik = band[i * width + (k + width - i)];
                    let ljk = band[j * width + (k + width - j)];
                    s -= lik * ljk.conjugate().scale(diag[k]);
                }
                band[i * width + (j + width - i)] = s.scale(1.0 / diag[j]);
            }
            let mut d = diag[i];
            for k in lo..i {
                let lik = band[i * width + (k + width - i)];
                d -= lik.modulus_squared() * diag[k];
            }
            if !(d.abs() > tiny) {
                return None;
            }
            diag[i] = d;
        }
        Some(BandedLdl { n, bw: width, lower: band, diag })
    }

    pub fn inertia(&self) -> Inertia {
        let mut out = Inertia::default();
        for &d in &self.diag {
            classify(&mut out, d, 0.0);
        }
        out
    }

    fn l(&self, i: usize, j: usize) -> T {
        self.lower[i * self.bw + (j + self.bw - i)]
    }

    /// Solves `(A - shift·I) x = b` in place.
    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = self.n;
        for i in 0..n {
            let lo = i.saturating_sub(self.bw);
            let mut s = x[i];
            for k in lo..i {
                s -= self.l(i, k) * x[k];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] = x[i].scale(1.0 / self.diag[i]);
        }
        for i in (0..n).rev() {
            let hi = (i + self.bw + 1).min(n);
            let mut s = x[i];
            for k in i + 1..hi {
                s -= self.l(k, i).conjugate() * x[k];
            }
            x[i] = s;
        }
    }
}
