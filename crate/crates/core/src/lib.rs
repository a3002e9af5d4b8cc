//! Numerical laboratory for the standard random breather Schrödinger operator.
//!
//! The crate discretizes `H = (-i∇ - A)² + V_ω` on a box `Λ_L = (-L/2, L/2)^d`
//! with Dirichlet boundary conditions, where `V_ω` is a sum of indicator
//! functions of balls (or cubes) of random radius `ω_j` centered at the
//! integer lattice sites. On top of the operator it provides exact eigenvalue
//! counting via matrix inertia, spectral shift function tools, an empirical
//! probe of the scale-free unique continuation constants and Monte Carlo
//! estimates of `E[Tr χ_[E-ε,E+ε](H_ω,L)]` together with the closed-form
//! Wegner right-hand side.
//!
//! Module map:
//!
//! * [`grid`]: box geometry, Peierls phases and the sparse Hamiltonian.
//! * [`breather`]: probability measure, samples `ω`, the breather potential
//!   and the equidistributed indicator `W`.
//! * [`eigen`]: counting, lowest eigenpairs, semigroups and the smooth switch.
//! * [`ucp`]: unique continuation constants and the eigenvalue lifting check.
//! * [`ssf`]: spectral shift function, Krein identity and the `F_t` machinery.
//! * [`wegner`]: telescoping, averaging and the Monte Carlo Wegner estimate.
//! * [`config`] and [`runner`]: TOML experiments and on-disk artifacts.

pub mod breather;
pub mod config;
pub mod eigen;
pub mod error;
pub mod grid;
pub mod ldl;
pub mod quad;
pub mod rng;
pub mod runner;
pub mod ssf;
pub mod ucp;
pub mod wegner;

mod lanczos;

pub use error::{Error, Result};
