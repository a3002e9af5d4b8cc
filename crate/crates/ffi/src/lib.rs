//! C ABI over `breather_lab`.
//!
//! Every fallible call returns a `BlStatus`; on failure the message is kept
//! per thread and read back with `bl_last_error_message`. Hamiltonians are
//! opaque handles released with `bl_hamiltonian_free`. Panics never cross
//! the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use breather_lab::breather::{sample_omega, MeasureSpec, Model, OmegaSample, SingleSiteShape};
use breather_lab::config::ExperimentConfig;
use breather_lab::eigen::{count_below, eigen_lowest, trace_spectral_projector};
use breather_lab::grid::{GridSpec, HamiltonianMatrix, MagneticSpec};
use breather_lab::rng::derive_seed;
use breather_lab::runner::{run_experiment, RunOptions};
use breather_lab::ucp::UcpConstants;
use breather_lab::wegner::{epsilon_max, wegner_constant};
use breather_lab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlStatus {
    Ok = 0,
    InvalidArgument = 1,
    Config = 2,
    Numerical = 3,
    Io = 4,
    NullPointer = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Single-site shapes for the `shape` arguments.
pub const BL_SHAPE_BALL: u32 = 0;
pub const BL_SHAPE_CUBE: u32 = 1;

/// Opaque finite-box Hamiltonian.
pub struct BlHamiltonian {
    matrix: HamiltonianMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> BlStatus {
    match e {
        Error::InvalidArgument(_) => BlStatus::InvalidArgument,
        Error::Config { .. } => BlStatus::Config,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => BlStatus::Io,
        _ => BlStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (BlStatus, String)>) -> BlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BlStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BlStatus::Panic
        }
    }
}

fn lib<T>(r: breather_lab::Result<T>) -> Result<T, (BlStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (BlStatus, String) {
    (BlStatus::NullPointer, format!("{what} is null"))
}

fn shape_of(s: u32) -> Result<SingleSiteShape, (BlStatus, String)> {
    match s {
        BL_SHAPE_BALL => Ok(SingleSiteShape::Ball),
        BL_SHAPE_CUBE => Ok(SingleSiteShape::Cube),
        _ => Err((BlStatus::InvalidArgument, format!("unknown shape {s}"))),
    }
}

fn model(dim: u32, box_side: u32, mesh_per_unit: u32, shape: u32, magnetic_strength: f64) -> Result<Model, (BlStatus, String)> {
    let grid = lib(GridSpec::new(dim as usize, box_side as usize, mesh_per_unit as usize))?;
    let magnetic = if magnetic_strength == 0.0 { MagneticSpec::none() } else { MagneticSpec::constant(magnetic_strength) };
    Ok(Model::new(grid, shape_of(shape)?, magnetic))
}

fn store(out: *mut *mut BlHamiltonian, matrix: HamiltonianMatrix) {
    // SAFETY: callers checked `out` for null.
    unsafe { *out = Box::into_raw(Box::new(BlHamiltonian { matrix })) };
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn bl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn bl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Per-sample seed derived from `(parent, index)`.
#[no_mangle]
pub extern "C" fn bl_derive_seed(parent: u64, index: u64) -> u64 {
    derive_seed(parent, index)
}

/// Builds `H_ω,L` from explicit radii, one per lattice site in lexicographic
/// order (`L^d` values).
///
/// # Safety
/// `omega` must point to `omega_len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_hamiltonian_new(
    dim: u32,
    box_side: u32,
    mesh_per_unit: u32,
    shape: u32,
    magnetic_strength: f64,
    omega: *const f64,
    omega_len: usize,
    out: *mut *mut BlHamiltonian,
) -> BlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if omega.is_null() && omega_len > 0 {
            return Err(null("omega"));
        }
        let m = model(dim, box_side, mesh_per_unit, shape, magnetic_strength)?;
        let values = if omega_len == 0 { Vec::new() } else { std::slice::from_raw_parts(omega, omega_len).to_vec() };
        let w = lib(OmegaSample::new(dim as usize, box_side as usize, values))?;
        store(out, lib(m.hamiltonian(&w))?);
        Ok(())
    })
}

/// Builds `H_ω,L` with ω drawn i.i.d. uniform on `[omega_minus, omega_plus]`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_hamiltonian_sample(
    dim: u32,
    box_side: u32,
    mesh_per_unit: u32,
    shape: u32,
    omega_minus: f64,
    omega_plus: f64,
    seed: u64,
    out: *mut *mut BlHamiltonian,
) -> BlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = model(dim, box_side, mesh_per_unit, shape, 0.0)?;
        let measure = lib(MeasureSpec::uniform(omega_minus, omega_plus))?;
        let w = lib(sample_omega(&measure, dim as usize, box_side as usize, seed))?;
        store(out, lib(m.hamiltonian(&w))?);
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `h` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bl_hamiltonian_free(h: *mut BlHamiltonian) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Matrix dimension, 0 for null.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bl_hamiltonian_dim(h: *const BlHamiltonian) -> usize {
    h.as_ref().map_or(0, |h| h.matrix.dim())
}

/// `#{λ ≤ sigma}` by inertia.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bl_count_below(h: *const BlHamiltonian, sigma: f64, out: *mut usize) -> BlStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lib(count_below(&h.matrix, sigma))?;
        Ok(())
    })
}

/// `Tr χ_[E−ε, E+ε](H)`, closed interval.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bl_trace_projector(h: *const BlHamiltonian, energy: f64, eps: f64, out: *mut usize) -> BlStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lib(trace_spectral_projector(&h.matrix, energy, eps))?;
        Ok(())
    })
}

/// All eigenvalues `≤ b`, ascending. `*count` receives how many there are;
/// if that exceeds `capacity` nothing is written and `BufferTooSmall` is
/// returned, so a first call with `capacity = 0` sizes the buffer.
///
/// # Safety
/// `values` must hold `capacity` doubles (may be null when 0) and `count`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_eigen_lowest(
    h: *const BlHamiltonian,
    b: f64,
    values: *mut f64,
    capacity: usize,
    count: *mut usize,
) -> BlStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        if count.is_null() {
            return Err(null("count"));
        }
        let spec = lib(eigen_lowest(&h.matrix, b))?;
        let n = spec.eigenvalues.len();
        *count = n;
        if n > capacity {
            return Err((BlStatus::BufferTooSmall, format!("{n} eigenvalues, capacity {capacity}")));
        }
        if n > 0 {
            if values.is_null() {
                return Err(null("values"));
            }
            std::slice::from_raw_parts_mut(values, n).copy_from_slice(&spec.eigenvalues);
        }
        Ok(())
    })
}

/// `C = 2·32^d·(2e^b(d+1)! + 2^d)`.
#[no_mangle]
pub extern "C" fn bl_wegner_constant(dim: u32, b: f64) -> f64 {
    wegner_constant(dim as usize, b)
}

/// `ε_max = (κ/4)((1/2 − ω₊)/2)^M`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_epsilon_max(kappa: f64, m: f64, omega_plus: f64, out: *mut f64) -> BlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let c = lib(UcpConstants::given(kappa, m, 0.0))?;
        *out = lib(epsilon_max(&c, omega_plus))?;
        Ok(())
    })
}

/// Runs an experiment from TOML text, writing into `out_dir` (or the
/// config's `run.out_dir` when null). `threads = 0` lets the pool decide.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out_dir` null or one.
#[no_mangle]
pub unsafe extern "C" fn bl_run_experiment(config_toml: *const c_char, out_dir: *const c_char, threads: u32) -> BlStatus {
    guard(|| {
        if config_toml.is_null() {
            return Err(null("config_toml"));
        }
        let text = CStr::from_ptr(config_toml)
            .to_str()
            .map_err(|_| (BlStatus::InvalidArgument, "config is not UTF-8".to_string()))?;
        let cfg = lib(ExperimentConfig::from_toml(text))?;
        let dir = if out_dir.is_null() {
            PathBuf::from(&cfg.run.out_dir)
        } else {
            PathBuf::from(
                CStr::from_ptr(out_dir)
                    .to_str()
                    .map_err(|_| (BlStatus::InvalidArgument, "out_dir is not UTF-8".to_string()))?,
            )
        };
        lib(run_experiment(&cfg, &RunOptions { out_dir: dir, threads: threads as usize }))?;
        Ok(())
    })
}
