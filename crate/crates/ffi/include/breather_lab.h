#ifndef BREATHER_LAB_H
#define BREATHER_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Single-site shapes for the `shape` arguments.
 */
#define BL_SHAPE_BALL 0

#define BL_SHAPE_CUBE 1

typedef enum BlStatus {
  BL_STATUS_OK = 0,
  BL_STATUS_INVALID_ARGUMENT = 1,
  BL_STATUS_CONFIG = 2,
  BL_STATUS_NUMERICAL = 3,
  BL_STATUS_IO = 4,
  BL_STATUS_NULL_POINTER = 5,
  BL_STATUS_BUFFER_TOO_SMALL = 6,
  BL_STATUS_PANIC = 7,
} BlStatus;

/**
 * Opaque finite-box Hamiltonian.
 */
typedef struct BlHamiltonian BlHamiltonian;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into this library from the same thread.
 */
const char *bl_last_error_message(void);

/**
 * Library version, static storage.
 */
const char *bl_version(void);

/**
 * Per-sample seed derived from `(parent, index)`.
 */
uint64_t bl_derive_seed(uint64_t parent, uint64_t index);

/**
 * Builds `H_ω,L` from explicit radii, one per lattice site in lexicographic
 * order (`L^d` values).
 *
 * # Safety
 * `omega` must point to `omega_len` doubles and `out` must be writable.
 */
enum BlStatus bl_hamiltonian_new(uint32_t dim,
                                 uint32_t box_side,
                                 uint32_t mesh_per_unit,
                                 uint32_t shape,
                                 double magnetic_strength,
                                 const double *omega,
                                 size_t omega_len,
                                 struct BlHamiltonian **out);

/**
 * Builds `H_ω,L` with ω drawn i.i.d. uniform on `[omega_minus, omega_plus]`.
 *
 * # Safety
 * `out` must be writable.
 */
enum BlStatus bl_hamiltonian_sample(uint32_t dim,
                                    uint32_t box_side,
                                    uint32_t mesh_per_unit,
                                    uint32_t shape,
                                    double omega_minus,
                                    double omega_plus,
                                    uint64_t seed,
                                    struct BlHamiltonian **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `h` must come from this library and not be used afterwards.
 */
void bl_hamiltonian_free(struct BlHamiltonian *h);

/**
 * Matrix dimension, 0 for null.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t bl_hamiltonian_dim(const struct BlHamiltonian *h);

/**
 * `#{λ ≤ sigma}` by inertia.
 *
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
enum BlStatus bl_count_below(const struct BlHamiltonian *h, double sigma, size_t *out);

/**
 * `Tr χ_[E−ε, E+ε](H)`, closed interval.
 *
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
enum BlStatus bl_trace_projector(const struct BlHamiltonian *h,
                                 double energy,
                                 double eps,
                                 size_t *out);

/**
 * All eigenvalues `≤ b`, ascending. `*count` receives how many there are;
 * if that exceeds `capacity` nothing is written and `BufferTooSmall` is
 * returned, so a first call with `capacity = 0` sizes the buffer.
 *
 * # Safety
 * `values` must hold `capacity` doubles (may be null when 0) and `count`
 * must be writable.
 */
enum BlStatus bl_eigen_lowest(const struct BlHamiltonian *h,
                              double b,
                              double *values,
                              size_t capacity,
                              size_t *count);

/**
 * `C = 2·32^d·(2e^b(d+1)! + 2^d)`.
 */
double bl_wegner_constant(uint32_t dim, double b);

/**
 * `ε_max = (κ/4)((1/2 − ω₊)/2)^M`.
 *
 * # Safety
 * `out` must be writable.
 */
enum BlStatus bl_epsilon_max(double kappa, double m, double omega_plus, double *out);

/**
 * Runs an experiment from TOML text, writing into `out_dir` (or the
 * config's `run.out_dir` when null). `threads = 0` lets the pool decide.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string; `out_dir` null or one.
 */
enum BlStatus bl_run_experiment(const char *config_toml, const char *out_dir, uint32_t threads);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BREATHER_LAB_H */
