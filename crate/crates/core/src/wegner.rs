//! The Wegner-estimate pipeline: closed-form constants, Monte Carlo trace
//! estimates, and the intermediate inequalities of the proof as checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::breather::{sample_omega, shift_all, MeasureSpec, Model, OmegaSample};
use crate::eigen::{count_below, eigen_lowest, trace_rho, trace_spectral_projector, Spectrum, EIGEN_TOL};
use crate::error::{Error, Result};
use crate::quad;
use crate::rng::derive_seed;
use crate::ssf::{k1, k2};
use crate::ucp::UcpConstants;

/// Share of failed samples above which an estimate is rejected.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// `ε_max = (κ/4)·((1/2 − ω₊)/2)^M`.
pub fn epsilon_max(constants: &UcpConstants, omega_plus: f64) -> Result<f64> {
    constants.validate()?;
    if !(omega_plus < 0.5) {
        return Err(Error::invalid("need ω₊ < 1/2"));
    }
    Ok(0.25 * constants.kappa * ((0.5 - omega_plus) / 2.0).powf(constants.m))
}

/// `δ = 2·(4ε/κ)^M`.
pub fn delta_from_epsilon(eps: f64, constants: &UcpConstants) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::invalid("ε must be positive"));
    }
    constants.validate()?;
    Ok(2.0 * (4.0 * eps / constants.kappa).powf(constants.m))
}

/// `C = 2·32^d·(2e^b(d+1)! + 2^d)`.
pub fn wegner_constant(dim: usize, b: f64) -> f64 {
    let fact: f64 = (1..=dim + 1).map(|k| k as f64).product();
    2.0 * 32f64.powi(dim as i32) * (2.0 * b.exp() * fact + 2f64.powi(dim as i32))
}

/// `C·(4/κ)^{1/M}·‖ν‖_∞·ε^{1/M}·|ln ε|^d·L^d`.
///
/// The caller is responsible for `ε ≤ ε_max`; only `0 < ε < 1` is checked here.
pub fn wegner_rhs(eps: f64, box_side: usize, dim: usize, b: f64, constants: &UcpConstants, density_sup: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("need 0 < ε < 1, got {eps}")));
    }
    constants.validate()?;
    let inv_m = 1.0 / constants.m;
    Ok(wegner_constant(dim, b)
        * (4.0 / constants.kappa).powf(inv_m)
        * density_sup
        * eps.powf(inv_m)
        * eps.ln().abs().powi(dim as i32)
        * (box_side as f64).powi(dim as i32))
}

/// `(K₁e^b + 2^d K₂)·|ln ε|^d`, the admissible spread of each `Θ_n`.
pub fn theta_spread_bound(eps: f64, dim: usize, b: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::invalid(format!("need 0 < ε ≤ 1/2, got {eps}")));
    }
    Ok((k1(dim) * b.exp() + 2f64.powi(dim as i32) * k2(dim)) * eps.ln().abs().powi(dim as i32))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WegnerParams {
    pub model: Model,
    pub measure: MeasureSpec,
    pub energy: f64,
    pub epsilon: f64,
    pub b: f64,
    /// Without constants the estimate runs but carries no bound.
    pub constants: Option<UcpConstants>,
    pub n_samples: usize,
    pub master_seed: u64,
}

impl WegnerParams {
    pub fn validate(&self) -> Result<()> {
        self.measure.validate()?;
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("ε must be positive"));
        }
        if self.energy + self.epsilon > self.b - 1.0 {
            return Err(Error::invalid(format!(
                "[E−ε, E+ε] = [{}, {}] must lie in (−∞, b−1] with b = {}",
                self.energy - self.epsilon,
                self.energy + self.epsilon,
                self.b
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples must be positive"));
        }
        if let Some(c) = &self.constants {
            let emax = epsilon_max(c, self.measure.omega_plus)?;
            if self.epsilon > emax {
                return Err(Error::invalid(format!("ε = {} exceeds ε_max = {emax}", self.epsilon)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCount {
    pub sample_index: u64,
    pub seed_derived: u64,
    /// `None` when the sample failed and was excluded.
    pub trace_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WegnerReport {
    pub d: usize,
    #[serde(rename = "L")]
    pub box_side: usize,
    pub mesh_per_unit: usize,
    pub energy: f64,
    pub epsilon: f64,
    pub b: f64,
    pub omega_minus: f64,
    pub omega_plus: f64,
    pub density_sup: f64,
    pub kappa: Option<f64>,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub n_samples: usize,
    pub master_seed: u64,
    pub mean: f64,
    pub stderr: f64,
    pub rhs_bound: Option<f64>,
    pub excluded: usize,
    /// Boundary eigenvalues count: the window is the closed interval.
    pub interval: String,
    #[serde(skip)]
    pub samples: Vec<SampleCount>,
}

impl WegnerReport {
    /// `mean / L^d` and its standard error.
    pub fn per_volume(&self) -> (f64, f64) {
        let v = (self.box_side as f64).powi(self.d as i32);
        (self.mean / v, self.stderr / v)
    }

    /// Columns `sample_index, seed_derived, trace_count` (empty when excluded).
    pub fn write_samples_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["sample_index", "seed_derived", "trace_count"])?;
        for s in &self.samples {
            out.write_record([
                s.sample_index.to_string(),
                s.seed_derived.to_string(),
                s.trace_count.map(|c| c.to_string()).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Mean and standard error (sample standard deviation over `√n`).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `f` on a pool with `threads` workers (0 = rayon's default).
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Seeds of samples `1..=n` under `master`.
pub fn sample_seeds(master: u64, n: usize) -> Vec<(u64, u64)> {
    (1..=n as u64).map(|s| (s, derive_seed(master, s))).collect()
}

/// `E[Tr χ_[E−ε,E+ε](H_ω,L)]` by Monte Carlo over independently seeded ω.
///
/// Every count depends only on `(master_seed, sample_index)`, so the result
/// does not depend on `threads`.
pub fn wegner_expectation(params: &WegnerParams, threads: usize) -> Result<WegnerReport> {
    params.validate()?;
    let grid = params.model.grid;
    let seeds = sample_seeds(params.master_seed, params.n_samples);
    let samples: Vec<SampleCount> = with_pool(threads, || {
        seeds
            .par_iter()
            .map(|&(index, seed)| {
                let count = sample_omega(&params.measure, grid.dim, grid.box_side, seed)
                    .and_then(|w| params.model.hamiltonian(&w))
                    .and_then(|h| trace_spectral_projector(&h, params.energy, params.epsilon))
                    .ok();
                SampleCount { sample_index: index, seed_derived: seed, trace_count: count }
            })
            .collect()
    })?;
    let counts: Vec<f64> = samples.iter().filter_map(|s| s.trace_count.map(|c| c as f64)).collect();
    let excluded = samples.len() - counts.len();
    if excluded as f64 > MAX_FAILURE_RATE * samples.len() as f64 {
        return Err(Error::TooManyFailures { failed: excluded, total: samples.len() });
    }
    let (mean, stderr) = mean_stderr(&counts);
    let density_sup = params.measure.density_sup();
    let rhs_bound = params
        .constants
        .as_ref()
        .map(|c| wegner_rhs(params.epsilon, grid.box_side, grid.dim, params.b, c, density_sup))
        .transpose()?;
    Ok(WegnerReport {
        d: grid.dim,
        box_side: grid.box_side,
        mesh_per_unit: grid.mesh_per_unit,
        energy: params.energy,
        epsilon: params.epsilon,
        b: params.b,
        omega_minus: params.measure.omega_minus,
        omega_plus: params.measure.omega_plus,
        density_sup,
        kappa: params.constants.as_ref().map(|c| c.kappa),
        m: params.constants.as_ref().map(|c| c.m),
        n_samples: params.n_samples,
        master_seed: params.master_seed,
        mean,
        stderr,
        rhs_bound,
        excluded,
        interval: "closed".into(),
        samples,
    })
}

/// `(Tr χ_[E−ε,E+ε](H), Tr[ρ(H − E + 2ε) − ρ(H − E − 2ε)])`.
pub fn sandwich_check(spec: &Spectrum, energy: f64, eps: f64) -> Result<(usize, f64)> {
    let lhs = spec.count_in(energy - eps, energy + eps)?;
    let rhs = trace_rho(spec, energy, eps, -2.0 * eps)? - trace_rho(spec, energy, eps, 2.0 * eps)?;
    Ok((lhs, rhs))
}

fn theta(model: &Model, omega: &OmegaSample, energy: f64, eps: f64) -> Result<f64> {
    let spec = eigen_lowest(&model.hamiltonian(omega)?, energy + 3.0 * eps)?;
    trace_rho(&spec, energy, eps, 2.0 * eps)
}

/// `(Tr ρ(H_ω − E + 2ε), Tr ρ(H_ω+δ − E − 2ε))`; the first is at most the
/// second once every contributing eigenvalue is lifted by `4ε`.
pub fn trace_monotonicity_check(model: &Model, omega: &OmegaSample, energy: f64, eps: f64, delta: f64) -> Result<(f64, f64)> {
    let lo = eigen_lowest(&model.hamiltonian(omega)?, energy - eps)?;
    let lhs = trace_rho(&lo, energy, eps, -2.0 * eps)?;
    Ok((lhs, theta(model, &shift_all(omega, delta)?, energy, eps)?))
}

/// `ω̃^{(n,δ)}(t)`: sites before `k(n)` raised by δ, site `k(n)` set to `t`,
/// the rest untouched. `n` is 1-based.
pub fn telescope_config(omega: &OmegaSample, delta: f64, n: usize, t: f64) -> Result<OmegaSample> {
    if n == 0 || n > omega.num_sites() {
        return Err(Error::invalid(format!("telescope index {n} outside 1..={}", omega.num_sites())));
    }
    let mut w = omega.clone();
    for k in 0..n - 1 {
        w = w.with_value(k, omega.values()[k] + delta)?;
    }
    w.with_value(n - 1, t)
}

/// `Θ_n(t) = Tr ρ(H_{ω̃^{(n,δ)}(t)} − E − 2ε)`.
pub fn theta_n(model: &Model, omega: &OmegaSample, delta: f64, n: usize, t: f64, energy: f64, eps: f64) -> Result<f64> {
    theta(model, &telescope_config(omega, delta, n, t)?, energy, eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelescopeState {
    /// Site `k(n)` for `n = 1..N`, lexicographic.
    pub sites: Vec<Vec<i64>>,
    /// `Θ_n(ω_k(n))`.
    pub theta_at_omega: Vec<f64>,
    /// `Θ_n(ω_k(n) + δ)`.
    pub theta_at_shift: Vec<f64>,
    /// `Tr ρ(H_ω − E − 2ε)` and `Tr ρ(H_ω+δ − E − 2ε)` computed directly.
    pub endpoint_omega: f64,
    pub endpoint_shifted: f64,
    /// Largest violation of `Θ_n(ω_k(n)) = Θ_{n−1}(ω_k(n−1) + δ)`.
    pub chaining_error: f64,
    /// Largest violation of the two endpoint identities.
    pub endpoint_error: f64,
    /// `|Θ_N(· + δ) − Θ_1(·) − Σ_n [Θ_n(· + δ) − Θ_n(·)]|`.
    pub sum_error: f64,
}

impl TelescopeState {
    pub fn max_error(&self) -> f64 {
        self.chaining_error.max(self.endpoint_error).max(self.sum_error)
    }
}

/// Evaluates every `Θ_n` at `ω_k(n)` and `ω_k(n) + δ` and checks the identities.
pub fn telescope(model: &Model, omega: &OmegaSample, delta: f64, energy: f64, eps: f64) -> Result<TelescopeState> {
    shift_all(omega, delta)?;
    let n_sites = omega.num_sites();
    let evals: Vec<(f64, f64)> = (1..=n_sites)
        .into_par_iter()
        .map(|n| {
            let w = omega.values()[n - 1];
            Ok((
                theta_n(model, omega, delta, n, w, energy, eps)?,
                theta_n(model, omega, delta, n, w + delta, energy, eps)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (at_omega, at_shift): (Vec<f64>, Vec<f64>) = evals.into_iter().unzip();
    let endpoint_omega = theta(model, omega, energy, eps)?;
    let endpoint_shifted = theta(model, &shift_all(omega, delta)?, energy, eps)?;
    let chaining_error = (1..n_sites).map(|n| (at_omega[n] - at_shift[n - 1]).abs()).fold(0.0, f64::max);
    let endpoint_error = (at_omega[0] - endpoint_omega).abs().max((at_shift[n_sites - 1] - endpoint_shifted).abs());
    let total: f64 = at_omega.iter().zip(&at_shift).map(|(a, b)| b - a).sum();
    let sum_error = (at_shift[n_sites - 1] - at_omega[0] - total).abs();
    Ok(TelescopeState {
        sites: (0..n_sites).map(|k| omega.site(k)).collect(),
        theta_at_omega: at_omega,
        theta_at_shift: at_shift,
        endpoint_omega,
        endpoint_shifted,
        chaining_error,
        endpoint_error,
        sum_error,
    })
}

/// `Θ_n` on a grid of `t` values.
pub fn theta_table(model: &Model, omega: &OmegaSample, delta: f64, n: usize, ts: &[f64], energy: f64, eps: f64) -> Result<Vec<(f64, f64)>> {
    ts.par_iter().map(|&t| Ok((t, theta_n(model, omega, delta, n, t, energy, eps)?))).collect()
}

/// Tolerance for identities between traces computed from separate solves.
pub fn identity_tolerance(b: f64) -> f64 {
    10.0 * EIGEN_TOL * (1.0 + b.abs())
}

fn interpolate(table: &[(f64, f64)], x: f64) -> f64 {
    let k = table.partition_point(|p| p.0 <= x);
    if k == 0 {
        return table[0].1;
    }
    if k == table.len() {
        return table[k - 1].1;
    }
    let ((x0, y0), (x1, y1)) = (table[k - 1], table[k]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// `(∫[Θ(λ+δ) − Θ(λ)] dμ(λ), ‖ν‖_∞·δ·[Θ(ω₊+δ) − Θ(ω₋)])` for `Θ` given as a
/// table, linearly interpolated.
pub fn averaging_lemma_check(table: &[(f64, f64)], measure: &MeasureSpec, delta: f64) -> Result<(f64, f64)> {
    measure.validate()?;
    if table.len() < 2 || table.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::invalid("Θ table needs at least two strictly increasing abscissae"));
    }
    if table.windows(2).any(|w| w[1].1 < w[0].1) {
        return Err(Error::invalid("Θ table is not nondecreasing"));
    }
    let (lo, hi) = (measure.omega_minus, measure.omega_plus);
    if table[0].0 > lo || table[table.len() - 1].0 < hi + delta {
        return Err(Error::invalid("Θ table must cover [ω₋, ω₊ + δ]"));
    }
    let mut nodes = vec![lo, hi];
    for &(t, _) in table {
        for x in [t, t - delta] {
            if x > lo && x < hi {
                nodes.push(x);
            }
        }
    }
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let f = |l: f64| (interpolate(table, l + delta) - interpolate(table, l)) * measure.pdf(l);
    let lhs = quad::integrate_pieces(f, &nodes, 1e-12);
    let rhs = measure.density_sup() * delta * (interpolate(table, hi + delta) - interpolate(table, lo));
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsRow {
    #[serde(rename = "L")]
    pub box_side: usize,
    pub energy: f64,
    pub mean_count: f64,
    pub stderr_count: f64,
    pub ids: f64,
    pub ids_stderr: f64,
}

/// `N_L(E) = E[#{λ ≤ E}]/L^d` for one box size; samples use the same
/// `(master_seed, s)` seeds for every `L`.
pub fn ids_estimate(model: &Model, measure: &MeasureSpec, energies: &[f64], n_samples: usize, master_seed: u64, threads: usize) -> Result<Vec<IdsRow>> {
    let grid = model.grid;
    let seeds = sample_seeds(master_seed, n_samples);
    let counts: Vec<Option<Vec<usize>>> = with_pool(threads, || {
        seeds
            .par_iter()
            .map(|&(_, seed)| {
                let h = sample_omega(measure, grid.dim, grid.box_side, seed).and_then(|w| model.hamiltonian(&w)).ok()?;
                energies.iter().map(|&e| count_below(&h, e).ok()).collect()
            })
            .collect()
    })?;
    let ok: Vec<Vec<usize>> = counts.into_iter().flatten().collect();
    let failed = n_samples - ok.len();
    if failed as f64 > MAX_FAILURE_RATE * n_samples as f64 {
        return Err(Error::TooManyFailures { failed, total: n_samples });
    }
    let vol = (grid.box_side as f64).powi(grid.dim as i32);
    Ok(energies
        .iter()
        .enumerate()
        .map(|(i, &energy)| {
            let v: Vec<f64> = ok.iter().map(|c| c[i] as f64).collect();
            let (mean, se) = mean_stderr(&v);
            IdsRow { box_side: grid.box_side, energy, mean_count: mean, stderr_count: se, ids: mean / vol, ids_stderr: se / vol }
        })
        .collect())
}

/// Slope of `log(N(E₀+ε) − N(E₀−ε))` against `log ε`, from `(ε, increment)` pairs.
pub fn hoelder_fit(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("Hölder fit needs at least two ε values"));
    }
    if points.iter().any(|&(_, inc)| !(inc > 0.0)) {
        return Err(Error::BelowResolution("IDS increment is zero for some ε; Monte Carlo mass too small".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("Hölder fit needs distinct ε values"));
    }
    Ok(xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx)
}

/// IDS increments `N(E₀+ε) − N(E₀−ε)` for each ε, from one Monte Carlo run.
pub fn ids_increments(model: &Model, measure: &MeasureSpec, e0: f64, eps_list: &[f64], n_samples: usize, master_seed: u64, threads: usize) -> Result<Vec<(f64, f64)>> {
    let energies: Vec<f64> = eps_list.iter().flat_map(|&e| [e0 - e, e0 + e]).collect();
    let rows = ids_estimate(model, measure, &energies, n_samples, master_seed, threads)?;
    Ok(eps_list.iter().enumerate().map(|(i, &e)| (e, rows[2 * i + 1].ids - rows[2 * i].ids)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::breather::SingleSiteShape;
    use crate::eigen::{dense_spectrum, SmoothSwitch};
    use crate::grid::{GridSpec, MagneticSpec};
    use rand::{Rng, SeedableRng};

    fn model(l: usize, nh: usize) -> Model {
        Model::new(GridSpec::new(1, l, nh).unwrap(), SingleSiteShape::Ball, MagneticSpec::none())
    }

    fn consts(kappa: f64, m: f64) -> UcpConstants {
        UcpConstants::given(kappa, m, 20.0).unwrap()
    }

    #[test]
    fn delta_examples() {
        assert!((delta_from_epsilon(0.01, &consts(1.0, 1.0)).unwrap() - 0.08).abs() < 1e-15);
        assert!((delta_from_epsilon(0.005, &consts(0.5, 2.0)).unwrap() - 0.0032).abs() < 1e-15);
        let c = consts(0.7, 1.0);
        let e = epsilon_max(&c, 0.3).unwrap();
        assert!((delta_from_epsilon(e, &c).unwrap() - 0.2).abs() < 1e-14);
        for m in [1.0, 1.5, 3.0] {
            let c = consts(0.7, m);
            let e = epsilon_max(&c, 0.3).unwrap();
            assert!(delta_from_epsilon(e, &c).unwrap() <= 0.2 + 1e-14);
        }
    }

    #[test]
    fn epsilon_max_examples() {
        assert!((epsilon_max(&consts(1.0, 2.0), 0.3).unwrap() - 0.0025).abs() < 1e-15);
        assert!((epsilon_max(&consts(1.0, 1.0), 0.25).unwrap() - 0.03125).abs() < 1e-15);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let c = consts(rng.random_range(1e-6..=1.0), rng.random_range(1.0..10.0));
            assert!(epsilon_max(&c, rng.random_range(0.0..0.5)).unwrap() < 0.5);
        }
    }

    #[test]
    fn wegner_rhs_examples() {
        assert_eq!(wegner_constant(1, 0.0), 384.0);
        let v = wegner_rhs(0.01, 3, 1, 0.0, &consts(1.0, 1.0), 4.0).unwrap();
        assert!((v - 384.0 * 4.0 * 4.0 * 0.01 * 100f64.ln() * 3.0).abs() < 1e-9);
        assert!((v - 848.8).abs() < 0.1);
        let a = wegner_rhs(1e-3, 3, 1, 0.0, &consts(1.0, 1.0), 4.0).unwrap();
        let b = wegner_rhs(1e-4, 3, 1, 0.0, &consts(1.0, 1.0), 4.0).unwrap();
        assert!((a / b - 10.0 * (1e-3f64.ln() / 1e-4f64.ln())).abs() < 1e-12);
        assert!(wegner_rhs(1.5, 3, 1, 0.0, &consts(1.0, 1.0), 4.0).is_err());
    }

    #[test]
    fn theta_spread_examples() {
        let v = theta_spread_bound(0.01, 1, 0.0).unwrap();
        assert!((v - 192.0 * 100f64.ln()).abs() < 1e-9);
        assert!((v - 884.2).abs() < 0.1);
        assert!(theta_spread_bound(0.6, 1, 0.0).is_err());
    }

    fn params(energy: f64, eps: f64, omega: (f64, f64), n: usize, seed: u64) -> WegnerParams {
        WegnerParams {
            model: model(3, 16),
            measure: MeasureSpec::uniform(omega.0, omega.1).unwrap(),
            energy,
            epsilon: eps,
            b: 40.0,
            constants: None,
            n_samples: n,
            master_seed: seed,
        }
    }

    #[test]
    fn expectation_below_spectrum_is_zero() {
        let r = wegner_expectation(&params(-2.0, 0.5, (0.1, 0.4), 50, 3), 2).unwrap();
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.stderr, 0.0);
        assert_eq!(r.excluded, 0);
    }

    #[test]
    fn degenerate_measure_has_no_spread() {
        let r = wegner_expectation(&params(30.0, 5.0, (0.2, 0.2 + 1e-15), 40, 3), 2).unwrap();
        assert!(r.stderr < 1e-12);
        assert!(r.mean > 0.0);
    }

    #[test]
    fn expectation_matches_dense_recount() {
        let p = params(5.0, 0.5, (0.1, 0.4), 200, 1);
        let r = wegner_expectation(&p, 4).unwrap();
        let mut total = 0usize;
        for s in &r.samples {
            let w = sample_omega(&p.measure, 1, 3, s.seed_derived).unwrap();
            let spec = dense_spectrum(&p.model.hamiltonian(&w).unwrap(), false).unwrap();
            let c = spec.eigenvalues.iter().filter(|&&l| (4.5..=5.5).contains(&l)).count();
            assert_eq!(Some(c), s.trace_count);
            total += c;
        }
        assert!((r.mean - total as f64 / 200.0).abs() < 1e-12);
    }

    #[test]
    fn expectation_is_thread_independent() {
        let p = params(9.0, 0.2, (0.1, 0.4), 60, 9);
        let a = wegner_expectation(&p, 1).unwrap();
        let b = wegner_expectation(&p, 4).unwrap();
        assert_eq!(a, b);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_samples_csv(&mut x).unwrap();
        b.write_samples_csv(&mut y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn params_validation() {
        let mut p = params(39.5, 0.5, (0.1, 0.4), 10, 0);
        assert!(p.validate().is_err());
        p.energy = 5.0;
        p.constants = Some(consts(1.0, 1.0));
        // ε_max = 0.25·0.05 = 0.0125
        assert!(p.validate().is_err());
        p.epsilon = 0.01;
        p.validate().unwrap();
    }

    #[test]
    fn sandwich_examples() {
        let s = Spectrum::complete(vec![2.0]);
        let (l, r) = sandwich_check(&s, 2.0, 0.1).unwrap();
        assert_eq!(l, 1);
        assert!((r - 1.0).abs() < 1e-15);
        let s = Spectrum::complete(vec![0.0, 5.0]);
        let (l, r) = sandwich_check(&s, 2.0, 0.1).unwrap();
        assert_eq!(l, 0);
        assert!(r.abs() < 1e-15);
    }

    #[test]
    fn scalar_sandwich_on_fine_grid() {
        let (e, eps) = (1.3, 0.07);
        let rho = SmoothSwitch::new(eps).unwrap();
        let mut xs: Vec<f64> = (0..=100_000).map(|i| e - 0.5 + i as f64 * 1e-5).collect();
        xs.extend([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0].map(|k| e + k * eps));
        for x in xs {
            let chi = if (e - eps..=e + eps).contains(&x) { 1.0 } else { 0.0 };
            assert!(chi <= rho.eval(x - e + 2.0 * eps) - rho.eval(x - e - 2.0 * eps) + 1e-15, "x = {x}");
        }
    }

    #[test]
    fn sandwich_on_random_spectra() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let s = Spectrum::complete((0..30).map(|_| rng.random_range(0.0..10.0)).collect());
            let (e, eps) = (rng.random_range(1.0..9.0), rng.random_range(0.01..0.5));
            let (l, r) = sandwich_check(&s, e, eps).unwrap();
            assert!(l as f64 <= r + 1e-9);
        }
    }

    #[test]
    fn telescope_identities() {
        let m = model(3, 16);
        let w = sample_omega(&MeasureSpec::uniform(0.1, 0.4).unwrap(), 1, 3, 11).unwrap();
        let t = telescope(&m, &w, 0.05, 9.0, 0.2).unwrap();
        assert_eq!(t.theta_at_omega.len(), 3);
        assert!(t.max_error() <= 1e-8, "{t:?}");
        let z = telescope(&m, &w, 0.0, 9.0, 0.2).unwrap();
        for (a, b) in z.theta_at_omega.iter().zip(&z.theta_at_shift) {
            assert_eq!(a, b);
        }
        let one = Model::new(GridSpec::new(1, 1, 16).unwrap(), SingleSiteShape::Ball, MagneticSpec::none());
        let w1 = OmegaSample::constant(1, 1, 0.2).unwrap();
        let t1 = telescope(&one, &w1, 0.1, 20.0, 0.5).unwrap();
        assert_eq!(t1.theta_at_omega.len(), 1);
        assert!(t1.max_error() <= 1e-8);
    }

    #[test]
    fn theta_is_nondecreasing_in_t() {
        let m = model(3, 32);
        let w = sample_omega(&MeasureSpec::uniform(0.1, 0.4).unwrap(), 1, 3, 5).unwrap();
        let ts: Vec<f64> = (0..=20).map(|i| 0.1 + 0.35 * i as f64 / 20.0).collect();
        let table = theta_table(&m, &w, 0.05, 2, &ts, 9.0, 0.2).unwrap();
        for p in table.windows(2) {
            assert!(p[1].1 >= p[0].1 - identity_tolerance(10.0));
        }
    }

    #[test]
    fn averaging_examples() {
        let mu = MeasureSpec::uniform(0.0, 0.25).unwrap();
        let table: Vec<(f64, f64)> = (0..=35).map(|i| (i as f64 * 0.01, i as f64 * 0.01)).collect();
        let (l, r) = averaging_lemma_check(&table, &mu, 0.1).unwrap();
        assert!((l - 0.1).abs() < 1e-12);
        assert!((r - 0.14).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = table.iter().map(|&(t, _)| (t, 2.0)).collect();
        assert_eq!(averaging_lemma_check(&flat, &mu, 0.1).unwrap(), (0.0, 0.0));
        let bad: Vec<(f64, f64)> = table.iter().map(|&(t, _)| (t, -t)).collect();
        assert!(averaging_lemma_check(&bad, &mu, 0.1).is_err());
    }

    #[test]
    fn ids_examples() {
        let mu = MeasureSpec::uniform(0.1, 0.4).unwrap();
        let rows = ids_estimate(&model(3, 16), &mu, &[-1.0, 30.0], 20, 0, 2).unwrap();
        assert_eq!(rows[0].ids, 0.0);
        assert!(rows[1].ids > 0.0);
    }

    #[test]
    fn free_ids_follows_weyl() {
        // N(E)/L → √E/π for the free Laplacian; compare on the converged range
        let mu = MeasureSpec::uniform(0.1, 0.4).unwrap();
        let mut prev = f64::INFINITY;
        for l in [5usize, 11, 21] {
            let m = Model::free(GridSpec::new(1, l, 16).unwrap(), MagneticSpec::none());
            let rows = ids_estimate(&m, &mu, &[10.0], 2, 0, 1).unwrap();
            let weyl = 10f64.sqrt() / std::f64::consts::PI;
            let err = (rows[0].ids - weyl).abs();
            assert!(err <= 1.0 / l as f64 + 1e-12);
            assert!(err <= prev + 1e-12);
            prev = err;
        }
    }

    #[test]
    fn hoelder_examples() {
        let pts: Vec<(f64, f64)> = [0.01, 0.03, 0.1].iter().map(|&e| (e, 2.0 * e)).collect();
        assert!((hoelder_fit(&pts).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(hoelder_fit(&[(0.1, 0.0), (0.2, 0.1)]), Err(Error::BelowResolution(_))));
    }
}
