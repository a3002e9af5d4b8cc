//! Finite-volume spectral shift function and the bounds built on it.

use nalgebra::SymmetricEigen;
use std::io::Write;

use crate::eigen::{semigroup, Dense, Spectrum};
use crate::error::{Error, Result};
use crate::grid::HamiltonianMatrix;
use crate::quad;

/// `(2πd/e)·(n/|Λ|)^{2/d}`, a lower bound for the n-th Dirichlet eigenvalue.
pub fn weyl_lower_bound(n: usize, volume: f64, dim: usize) -> Result<f64> {
    if n == 0 || !(volume > 0.0) || dim == 0 {
        return Err(Error::invalid("weyl_lower_bound needs n ≥ 1, |Λ| > 0, d ≥ 1"));
    }
    let d = dim as f64;
    Ok(2.0 * std::f64::consts::PI * d / std::f64::consts::E * (n as f64 / volume).powf(2.0 / d))
}

/// `|U|·(eE/(2πd))^{d/2}`, the counting bound equivalent to [`weyl_lower_bound`].
pub fn counting_upper_bound(energy: f64, volume: f64, dim: usize) -> f64 {
    if energy <= 0.0 {
        return 0.0;
    }
    let d = dim as f64;
    volume * (std::f64::consts::E * energy / (2.0 * std::f64::consts::PI * d)).powf(d / 2.0)
}

/// Integer step function, right-continuous: `values[i]` holds on
/// `[breakpoints[i], breakpoints[i+1])`, zero left of the first breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    pub breakpoints: Vec<f64>,
    pub values: Vec<i64>,
    /// Evaluation is valid up to here.
    pub cutoff: f64,
}

impl StepFunction {
    pub fn eval(&self, lambda: f64) -> Result<i64> {
        if lambda > self.cutoff {
            return Err(Error::IncompleteSpectrum { requested: lambda, cutoff: self.cutoff });
        }
        let k = self.breakpoints.partition_point(|&b| b <= lambda);
        Ok(if k == 0 { 0 } else { self.values[k - 1] })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    /// Pieces `(lo, hi, value)` with nonzero value, clipped at `top`.
    pub fn pieces(&self, top: f64) -> impl Iterator<Item = (f64, f64, i64)> + '_ {
        (0..self.breakpoints.len()).filter_map(move |i| {
            let lo = self.breakpoints[i];
            let hi = self.breakpoints.get(i + 1).copied().unwrap_or(f64::INFINITY).min(top);
            (self.values[i] != 0 && hi > lo).then_some((lo, hi, self.values[i]))
        })
    }

    /// Columns `breakpoint, value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["breakpoint", "value"])?;
        for (b, v) in self.breakpoints.iter().zip(&self.values) {
            out.write_record([format!("{b:.17e}"), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn common_cutoff(spec0: &Spectrum, spec1: &Spectrum) -> Result<f64> {
    if spec0.dim != spec1.dim {
        return Err(Error::invalid("spectral shift needs operators of equal dimension"));
    }
    let c = |s: &Spectrum| if s.is_complete() { f64::INFINITY } else { s.cutoff };
    Ok(c(spec0).min(c(spec1)))
}

/// `ξ(λ; H₁, H₀) = N₀(λ) − N₁(λ)` with `N_j(λ) = #{eigenvalues of H_j ≤ λ}`.
pub fn spectral_shift(spec0: &Spectrum, spec1: &Spectrum) -> Result<StepFunction> {
    let cutoff = common_cutoff(spec0, spec1)?;
    let mut points: Vec<f64> = spec0
        .eigenvalues
        .iter()
        .chain(&spec1.eigenvalues)
        .copied()
        .filter(|&l| l <= cutoff)
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut breakpoints = Vec::new();
    let mut values = Vec::new();
    let mut last = 0i64;
    for p in points {
        let v = spec0.count_le(p)? as i64 - spec1.count_le(p)? as i64;
        if v != last {
            breakpoints.push(p);
            values.push(v);
            last = v;
        }
    }
    Ok(StepFunction { breakpoints, values, cutoff })
}

/// Function `g` with `g'` vanishing above `flat_above`.
pub struct TestFunction {
    pub value: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub deriv: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub flat_above: f64,
    /// Points where `g'` is not smooth, used as quadrature nodes.
    pub kinks: Vec<f64>,
}

impl TestFunction {
    /// `g(λ) = ρ(λ − shift)` for the cubic switch of width ε.
    pub fn switch(eps: f64, shift: f64) -> Result<Self> {
        let rho = crate::eigen::SmoothSwitch::new(eps)?;
        Ok(TestFunction {
            value: Box::new(move |x| rho.eval(x - shift)),
            deriv: Box::new(move |x| rho.deriv(x - shift)),
            flat_above: shift + eps,
            kinks: vec![shift - eps, shift + eps],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KreinCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// `Tr[g(H₁) − g(H₀)]` against `∫ ξ g'`.
pub fn krein_check(spec0: &Spectrum, spec1: &Spectrum, g: &TestFunction) -> Result<KreinCheck> {
    let b = g.flat_above;
    let cutoff = common_cutoff(spec0, spec1)?;
    if b > cutoff {
        return Err(Error::IncompleteSpectrum { requested: b, cutoff });
    }
    let trace = |s: &Spectrum| {
        let known: f64 = s.eigenvalues.iter().map(|&l| (g.value)(l.min(b))).sum();
        known + (s.dim - s.eigenvalues.len()) as f64 * (g.value)(b)
    };
    let lhs = trace(spec1) - trace(spec0);
    let xi = spectral_shift(spec0, spec1)?;
    let mut rhs = 0.0;
    for (lo, hi, v) in xi.pieces(b) {
        let mut nodes = vec![lo, hi];
        nodes.extend(g.kinks.iter().copied().filter(|&k| k > lo && k < hi));
        nodes.sort_by(f64::total_cmp);
        rhs += v as f64 * quad::integrate_pieces(&g.deriv, &nodes, 1e-13);
    }
    Ok(KreinCheck { lhs, rhs, gap: (lhs - rhs).abs() })
}

fn exponentiated(spec: &Spectrum) -> Result<Spectrum> {
    if !spec.is_complete() {
        return Err(Error::IncompleteSpectrum { requested: f64::INFINITY, cutoff: spec.cutoff });
    }
    Ok(Spectrum::complete(spec.eigenvalues.iter().map(|l| (-l).exp()).collect()))
}

/// `(ξ(λ; H₁, H₀), −ξ(e^{−λ}; e^{−H₁}, e^{−H₀}))`, the second side computed
/// from the exponentiated eigenvalue lists.
pub fn invariance_check(spec0: &Spectrum, spec1: &Spectrum, lambda: f64) -> Result<(i64, i64)> {
    let collides = |s: &Spectrum| s.eigenvalues.iter().any(|&l| (l - lambda).abs() <= 1e-12 * (1.0 + l.abs()));
    if collides(spec0) || collides(spec1) {
        return Err(Error::invalid(format!("λ = {lambda} is an eigenvalue")));
    }
    let lhs = spectral_shift(spec0, spec1)?.eval(lambda)?;
    let rhs = -spectral_shift(&exponentiated(spec0)?, &exponentiated(spec1)?)?.eval((-lambda).exp())?;
    Ok((lhs, rhs))
}

/// Singular values of `e^{−tH₁} − e^{−tH₀}`, descending.
pub fn veff_singular_values(h0: &HamiltonianMatrix, h1: &HamiltonianMatrix, t: f64) -> Result<Vec<f64>> {
    if h0.dim() != h1.dim() {
        return Err(Error::invalid("V_eff needs operators of equal dimension"));
    }
    let (a, b) = (semigroup(h0, t)?, semigroup(h1, t)?);
    // the difference is Hermitian, so its singular values are |eigenvalues|
    let mut mu: Vec<f64> = match (&a, &b) {
        (Dense::Real(a), Dense::Real(b)) => SymmetricEigen::new(b - a).eigenvalues.iter().map(|v| v.abs()).collect(),
        _ => SymmetricEigen::new(b.to_complex() - a.to_complex()).eigenvalues.iter().map(|v| v.abs()).collect(),
    };
    mu.sort_by(|x, y| y.total_cmp(x));
    Ok(mu)
}

/// Columns `n, mu_n` (1-based).
pub fn write_singular_csv<W: Write>(mu: &[f64], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n", "mu_n"])?;
    for (i, m) in mu.iter().enumerate() {
        out.write_record([(i + 1).to_string(), format!("{m:.17e}")])?;
    }
    out.flush()?;
    Ok(())
}

/// `((2d)^{1/4} + 1)·exp(−n^{1/d}/16)`, asserted only for `n > 4^d`.
pub fn singular_bound(n: usize, dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(Error::invalid("d must be positive"));
    }
    let threshold = 4usize.saturating_pow(dim as u32);
    if n <= threshold {
        return Err(Error::invalid(format!("singular-value bound needs n > 4^d = {threshold}")));
    }
    let d = dim as f64;
    Ok(((2.0 * d).powf(0.25) + 1.0) * (-(n as f64).powf(1.0 / d) / 16.0).exp())
}

/// `F_t'(x) = exp(t·x^{1/d}) − 1`.
pub fn ft_deriv(t: f64, dim: usize, x: f64) -> f64 {
    (t * x.powf(1.0 / dim as f64)).exp_m1()
}

/// `F_t(x) = ∫_0^x (exp(t·y^{1/d}) − 1) dy`.
pub fn ft_eval(t: f64, dim: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if dim == 1 {
        return (t * x).exp_m1() / t - x;
    }
    // y = s^d removes the root singularity at 0
    let d = dim as f64;
    let top = x.powf(1.0 / d);
    let f = |s: f64| d * s.powf(d - 1.0) * (t * s).exp_m1();
    let scale = f(top) * top;
    quad::integrate(f, 0.0, top, 1e-10f64.max(1e-14 * scale))
}

/// Legendre transform `G_t(y) = sup_{x ≥ 0} (xy − F_t(x))`, by a grid scan
/// refined with golden-section search.
pub fn gt_legendre(t: f64, dim: usize, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    // beyond x_max the objective decreases since F_t' ≥ y there
    let mut x_max = 1.0;
    while ft_deriv(t, dim, x_max) < y {
        x_max *= 2.0;
    }
    let obj = |x: f64| x * y - ft_eval(t, dim, x);
    let n = 64;
    let step = x_max / n as f64;
    let best = (0..=n).max_by(|&a, &b| obj(a as f64 * step).total_cmp(&obj(b as f64 * step))).unwrap_or(0);
    let (mut lo, mut hi) = ((best as f64 - 1.0).max(0.0) * step, ((best + 1) as f64 * step).min(x_max));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (obj(a), obj(b));
    for _ in 0..200 {
        if hi - lo <= 1e-13 * (1.0 + hi) {
            break;
        }
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = obj(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = obj(a);
        }
    }
    obj(0.5 * (lo + hi)).max(obj(best as f64 * step)).max(0.0)
}

fn ft_integral_pieces(xi: &StepFunction, top: f64, t: f64, dim: usize) -> f64 {
    xi.pieces(top).map(|(lo, hi, v)| ft_eval(t, dim, v.unsigned_abs() as f64) * (hi - lo)).sum()
}

/// `∫_{−∞}^T F_t(|ξ(λ)|) dλ`, exact over the pieces.
pub fn ssf_ft_integral(xi: &StepFunction, top: f64, t: f64, dim: usize) -> Result<f64> {
    if top > xi.cutoff {
        return Err(Error::IncompleteSpectrum { requested: top, cutoff: xi.cutoff });
    }
    Ok(ft_integral_pieces(xi, top, t, dim))
}

/// `∫ F_t(|ξ(s; e^{−H₁}, e^{−H₀})|) ds` against `Σ_n μ_n (F_t(n) − F_t(n−1))`.
pub fn hs_majorization(spec0: &Spectrum, spec1: &Spectrum, mu: &[f64], t: f64, dim: usize) -> Result<(f64, f64)> {
    let xi = spectral_shift(&exponentiated(spec0)?, &exponentiated(spec1)?)?;
    let lhs = ft_integral_pieces(&xi, f64::INFINITY, t, dim);
    let rhs = mu
        .iter()
        .enumerate()
        .map(|(i, m)| m * (ft_eval(t, dim, (i + 1) as f64) - ft_eval(t, dim, i as f64)))
        .sum();
    Ok((lhs, rhs))
}

/// `K₁ = 2·32^d·(d+1)!`.
pub fn k1(dim: usize) -> f64 {
    2.0 * 32f64.powi(dim as i32) * (1..=dim + 1).map(|k| k as f64).product::<f64>()
}

/// `K₂ = 32^d`.
pub fn k2(dim: usize) -> f64 {
    32f64.powi(dim as i32)
}

/// `K₁·e^b + K₂·(ln(1 + sup|g'|))^d·‖g'‖₁`.
pub fn trace_diff_bound(b: f64, sup_gprime: f64, l1_gprime: f64, dim: usize) -> f64 {
    k1(dim) * b.exp() + k2(dim) * sup_gprime.ln_1p().powi(dim as i32) * l1_gprime
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::dense_spectrum;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn diag(v: &[f64]) -> HamiltonianMatrix {
        HamiltonianMatrix::from_dense_real(&DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))).unwrap()
    }

    #[test]
    fn weyl_examples() {
        assert!((weyl_lower_bound(1, 1.0, 1).unwrap() - 2.0 * std::f64::consts::PI / std::f64::consts::E).abs() < 1e-12);
        assert!((weyl_lower_bound(1, 1.0, 2).unwrap() - 4.0 * std::f64::consts::PI / std::f64::consts::E).abs() < 1e-12);
        assert!(std::f64::consts::PI.powi(2) >= weyl_lower_bound(1, 1.0, 1).unwrap());
        assert!(weyl_lower_bound(0, 1.0, 1).is_err());
        // E_n ≥ bound ⇔ N(E) ≤ counting bound, at E = bound(n) the count is n
        let e = weyl_lower_bound(7, 3.0, 2).unwrap();
        assert!((counting_upper_bound(e, 3.0, 2) - 7.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_shift_examples() {
        let s0 = Spectrum::complete(vec![1.0, 2.0, 3.0]);
        let s1 = Spectrum::complete(vec![1.5, 2.0, 4.0]);
        let xi = spectral_shift(&s0, &s1).unwrap();
        assert_eq!(xi.eval(1.2).unwrap(), 1);
        assert_eq!(xi.eval(2.5).unwrap(), 0);
        assert_eq!(xi.eval(3.5).unwrap(), 1);
        assert_eq!(xi.eval(0.0).unwrap(), 0);
        assert_eq!(xi.eval(10.0).unwrap(), 0);
        assert!(spectral_shift(&s0, &s0).unwrap().is_zero());
        let mut buf = Vec::new();
        xi.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("breakpoint,value\n"));
    }

    #[test]
    fn spectral_shift_respects_cutoff() {
        let s0 = Spectrum::partial(vec![1.0], 5, 2.0).unwrap();
        let s1 = Spectrum::partial(vec![1.5], 5, 3.0).unwrap();
        let xi = spectral_shift(&s0, &s1).unwrap();
        assert_eq!(xi.eval(1.7).unwrap(), 0);
        assert!(xi.eval(2.5).is_err());
    }

    #[test]
    fn rank_one_perturbation_interlaces() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = 15;
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a = &a + a.transpose();
            let v = nalgebra::DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let b = &a + &v * v.transpose();
            let s0 = dense_spectrum(&HamiltonianMatrix::from_dense_real(&a).unwrap(), false).unwrap();
            let s1 = dense_spectrum(&HamiltonianMatrix::from_dense_real(&b).unwrap(), false).unwrap();
            let xi = spectral_shift(&s0, &s1).unwrap();
            assert!(xi.values.iter().all(|&v| (0..=1).contains(&v)));
        }
    }

    #[test]
    fn krein_examples() {
        let s0 = Spectrum::complete(vec![1.0]);
        let s1 = Spectrum::complete(vec![2.0]);
        let g = TestFunction::switch(2.0, 3.0).unwrap();
        let k = krein_check(&s0, &s1, &g).unwrap();
        assert!(((g.value)(2.0) - (g.value)(1.0) - k.lhs).abs() < 1e-15);
        assert!(k.gap < 1e-12);
        let c = TestFunction { value: Box::new(|_| 3.0), deriv: Box::new(|_| 0.0), flat_above: 0.0, kinks: vec![] };
        let k = krein_check(&s0, &s1, &c).unwrap();
        assert_eq!((k.lhs, k.rhs), (0.0, 0.0));
    }

    #[test]
    fn krein_random_pairs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
        for _ in 0..5 {
            let n = 50;
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a = &a + a.transpose();
            let v = DMatrix::from_fn(n, n, |i, j| if i == j { rng.random_range(0.0..2.0) } else { 0.0 });
            let s0 = dense_spectrum(&HamiltonianMatrix::from_dense_real(&a).unwrap(), false).unwrap();
            let s1 = dense_spectrum(&HamiltonianMatrix::from_dense_real(&(&a + v)).unwrap(), false).unwrap();
            let g = TestFunction::switch(0.7, rng.random_range(-3.0..3.0)).unwrap();
            let k = krein_check(&s0, &s1, &g).unwrap();
            assert!(k.gap <= 1e-8 * (1.0 + k.lhs.abs()), "{k:?}");
        }
    }

    #[test]
    fn invariance_examples() {
        let s0 = Spectrum::complete(vec![1.0, 3.0]);
        let s1 = Spectrum::complete(vec![2.0, 4.0]);
        assert_eq!(invariance_check(&s0, &s1, 2.5).unwrap(), (0, 0));
        assert_eq!(invariance_check(&s0, &s1, 3.5).unwrap(), (1, 1));
        assert_eq!(invariance_check(&s0, &s1, 1.5).unwrap(), (1, 1));
        assert_eq!(invariance_check(&s0, &s0, 1.5).unwrap(), (0, 0));
        assert!(invariance_check(&s0, &s1, 3.0).is_err());
    }

    #[test]
    fn veff_examples() {
        let mu = veff_singular_values(&diag(&[1.0]), &diag(&[2.0]), 1.0).unwrap();
        assert!((mu[0] - ((-1f64).exp() - (-2f64).exp())).abs() < 1e-15);
        assert!((mu[0] - 0.23254).abs() < 1e-5);
        let mu = veff_singular_values(&diag(&[1.0, 2.0]), &diag(&[1.0, 2.0]), 1.0).unwrap();
        assert!(mu.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn singular_bound_examples() {
        let v = singular_bound(5, 1).unwrap();
        assert!((v - (2f64.powf(0.25) + 1.0) * (-5.0f64 / 16.0).exp()).abs() < 1e-15);
        assert!((v - 1.6016).abs() < 1e-3);
        let v = singular_bound(17, 2).unwrap();
        assert!((v - (2f64.sqrt() + 1.0) * (-(17f64).sqrt() / 16.0).exp()).abs() < 1e-14);
        assert!(singular_bound(4, 1).is_err());
        assert!(singular_bound(16, 2).is_err());
    }

    fn ft_series(t: f64, dim: usize, x: f64) -> (f64, f64) {
        // Σ_k d t^k X^{k+d} / (k!(k+d)), X = x^{1/d}; the tail after K terms is
        // bounded by the next term times a geometric factor
        let d = dim as f64;
        let big_x = x.powf(1.0 / d);
        let mut sum = 0.0;
        let mut term_factor = 1.0; // t^k X^k / k!
        let mut last = 0.0;
        for k in 1..60 {
            term_factor *= t * big_x / k as f64;
            last = d * term_factor * big_x.powf(d) / (k as f64 + d);
            sum += last;
        }
        (sum, last * 2.0)
    }

    #[test]
    fn ft_examples() {
        let t = 1.0 / 32.0;
        assert!((ft_eval(t, 1, 32.0) - 32.0 * (std::f64::consts::E - 2.0)).abs() < 1e-12);
        assert!((ft_eval(t, 1, 32.0) - 22.985).abs() < 1e-3);
        for d in 1..=3 {
            assert_eq!(ft_eval(0.7, d, 0.0), 0.0);
        }
        let (s, tail) = ft_series(t, 2, 4.0);
        assert!((ft_eval(t, 2, 4.0) - s).abs() < 1e-10 + tail);
        for (d, x) in [(2, 100.0), (3, 7.5), (2, 0.01)] {
            let (s, tail) = ft_series(t, d, x);
            assert!((ft_eval(t, d, x) - s).abs() < 1e-10 + tail + 1e-13 * s, "d={d} x={x}");
        }
        // d = 1 quadrature path agrees with the closed form
        let f = |s: f64| (t * s).exp_m1();
        assert!((quad::integrate(f, 0.0, 3.0, 1e-13) - ft_eval(t, 1, 3.0)).abs() < 1e-12);
    }

    #[test]
    fn gt_matches_stationary_point() {
        let t = 1.0 / 32.0;
        for d in 1..=3 {
            for y in [0.01f64, 0.5, 3.0, 40.0] {
                let x_star = (y.ln_1p() / t).powi(d as i32);
                let exact = x_star * y - ft_eval(t, d, x_star);
                let g = gt_legendre(t, d, y);
                assert!((g - exact).abs() <= 1e-8 * (1.0 + exact), "d={d} y={y}: {g} vs {exact}");
                assert!(g <= y * x_star + 1e-8);
            }
        }
    }

    #[test]
    fn ssf_ft_examples() {
        let zero = StepFunction { breakpoints: vec![], values: vec![], cutoff: f64::INFINITY };
        assert_eq!(ssf_ft_integral(&zero, 5.0, 1.0 / 32.0, 1).unwrap(), 0.0);
        let xi = StepFunction { breakpoints: vec![0.0, 2.0], values: vec![1, 0], cutoff: f64::INFINITY };
        let v = ssf_ft_integral(&xi, 2.0, 1.0 / 32.0, 1).unwrap();
        let exact = 2.0 * (32.0 * ((1.0f64 / 32.0).exp() - 1.0) - 1.0);
        assert!((v - exact).abs() < 1e-14);
        assert!((v - 0.0316).abs() < 1e-4);
        let clipped = StepFunction { cutoff: 1.0, ..xi };
        assert!(ssf_ft_integral(&clipped, 2.0, 1.0 / 32.0, 1).is_err());
    }

    #[test]
    fn constants_examples() {
        assert_eq!(k1(1), 128.0);
        assert_eq!(k2(1), 32.0);
        assert_eq!(k1(2), 2.0 * 1024.0 * 6.0);
        let v = trace_diff_bound(0.0, 100.0, 1.0, 1);
        assert!((v - (128.0 + 32.0 * 101f64.ln())).abs() < 1e-12);
        assert!((v - 275.67).abs() < 0.02);
        assert!((trace_diff_bound(0.0, 1e-300, 0.0, 1) - 128.0).abs() < 1e-12);
    }

    #[test]
    fn singular_csv() {
        let mut buf = Vec::new();
        write_singular_csv(&[0.5, 0.25], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("n,mu_n\n1,5"));
    }
}
