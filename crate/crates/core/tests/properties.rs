use breather_lab::breather::{sample_omega, shift_all, shift_one, MeasureSpec, Model, OmegaSample, SingleSiteShape};
use breather_lab::config::ExperimentConfig;
use breather_lab::eigen::{count_below, count_strictly_below, dense_spectrum, semigroup, trace_spectral_projector, SmoothSwitch};
use breather_lab::grid::{GridSpec, MagneticSpec};
use breather_lab::rng::derive_seed;
use breather_lab::ssf::{invariance_check, krein_check, spectral_shift, weyl_lower_bound, TestFunction};
use proptest::prelude::*;

fn model(d: usize, l: usize, nh: usize, cube: bool) -> Model {
    let shape = if cube { SingleSiteShape::Cube } else { SingleSiteShape::Ball };
    Model::new(GridSpec::new(d, l, nh).unwrap(), shape, MagneticSpec::none())
}

fn omega(d: usize, l: usize, seed: u64) -> OmegaSample {
    sample_omega(&MeasureSpec::uniform(0.1, 0.4).unwrap(), d, l, seed).unwrap()
}

fn odd() -> impl Strategy<Value = usize> {
    prop_oneof![Just(1usize), Just(3), Just(5)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inertia_count_matches_dense(seed in 0u64..1000, l in odd(), nh in 4usize..12, sigma in -5.0f64..300.0, cube in any::<bool>()) {
        let m = model(1, l, nh, cube);
        let h = m.hamiltonian(&omega(1, l, seed)).unwrap();
        let spec = dense_spectrum(&h, false).unwrap();
        prop_assert_eq!(count_below(&h, sigma).unwrap(), spec.count_le(sigma).unwrap());
        prop_assert_eq!(count_strictly_below(&h, sigma).unwrap(), spec.count_lt(sigma).unwrap());
    }

    #[test]
    fn closed_window_trace_matches_dense(seed in 0u64..1000, e in 0.0f64..200.0, eps in 0.01f64..5.0) {
        let m = model(2, 1, 6, false);
        let h = m.hamiltonian(&omega(2, 1, seed)).unwrap();
        let spec = dense_spectrum(&h, false).unwrap();
        prop_assert_eq!(trace_spectral_projector(&h, e, eps).unwrap(), spec.count_in(e - eps, e + eps).unwrap());
    }

    #[test]
    fn eigenvalues_are_monotone_in_omega(seed in 0u64..1000, l in odd(), delta in 0.0f64..0.1, cube in any::<bool>()) {
        let m = model(1, l, 10, cube);
        let w = omega(1, l, seed);
        let s0 = dense_spectrum(&m.hamiltonian(&w).unwrap(), false).unwrap();
        let s1 = dense_spectrum(&m.hamiltonian(&shift_all(&w, delta).unwrap()).unwrap(), false).unwrap();
        for (a, b) in s0.eigenvalues.iter().zip(&s1.eigenvalues) {
            prop_assert!(*b >= *a - 1e-8);
        }
    }

    #[test]
    fn single_site_shift_is_monotone(seed in 0u64..1000, site in -1i64..=1, delta in 0.0f64..0.1) {
        let m = model(1, 3, 10, false);
        let w = omega(1, 3, seed);
        let s0 = dense_spectrum(&m.hamiltonian(&w).unwrap(), false).unwrap();
        let s1 = dense_spectrum(&m.hamiltonian(&shift_one(&w, &[site], delta).unwrap()).unwrap(), false).unwrap();
        for (a, b) in s0.eigenvalues.iter().zip(&s1.eigenvalues) {
            prop_assert!(*b >= *a - 1e-8);
        }
    }

    #[test]
    fn weyl_bound_holds(seed in 0u64..1000, l in odd(), nh in 4usize..16) {
        let m = model(1, l, nh, false);
        let spec = dense_spectrum(&m.hamiltonian(&omega(1, l, seed)).unwrap(), false).unwrap();
        for (i, e) in spec.eigenvalues.iter().enumerate() {
            prop_assert!(*e >= weyl_lower_bound(i + 1, m.grid.volume(), 1).unwrap());
        }
    }

    #[test]
    fn ssf_invariance_and_krein(seed in 0u64..1000, delta in 0.0f64..0.1, lambda in -1.0f64..150.0, e in 5.0f64..60.0) {
        let m = model(1, 3, 6, false);
        let w = omega(1, 3, seed);
        let s0 = dense_spectrum(&m.hamiltonian(&w).unwrap(), false).unwrap();
        let s1 = dense_spectrum(&m.hamiltonian(&shift_all(&w, delta).unwrap()).unwrap(), false).unwrap();
        let hit = s0.eigenvalues.iter().chain(&s1.eigenvalues).any(|x| (x - lambda).abs() < 1e-9);
        prop_assume!(!hit);
        let (lhs, rhs) = invariance_check(&s0, &s1, lambda).unwrap();
        prop_assert_eq!(lhs, rhs);
        let xi = spectral_shift(&s0, &s1).unwrap();
        prop_assert!(xi.eval(lambda).unwrap() >= 0);
        let k = krein_check(&s0, &s1, &TestFunction::switch(0.5, e).unwrap()).unwrap();
        prop_assert!(k.gap <= 1e-8 * (1.0 + k.lhs.abs()));
    }

    #[test]
    fn switch_is_monotone_and_bounded(eps in 1e-3f64..1.0, x in -3.0f64..3.0, dx in 0.0f64..1.0) {
        let s = SmoothSwitch::new(eps).unwrap();
        let (a, b) = (s.eval(x), s.eval(x + dx));
        prop_assert!((-1.0..=0.0).contains(&a));
        prop_assert!(b >= a);
        prop_assert!(s.deriv(x) <= s.max_slope() + 1e-12);
    }

    #[test]
    fn seeds_are_deterministic(master in any::<u64>(), i in any::<u64>(), j in any::<u64>()) {
        prop_assert_eq!(derive_seed(master, i), derive_seed(master, i));
        if i != j {
            prop_assert_ne!(derive_seed(master, i), derive_seed(master, j));
        }
    }

    #[test]
    fn config_round_trip(d in 1usize..=3, l in odd(), nh in 2usize..64, lo in 0.0f64..0.2, hi in 0.21f64..0.49, seed in 0..=i64::MAX as u64, n in 1usize..1000) {
        let text = format!(
            "[model]\ndim = {d}\nomega_minus = {lo}\nomega_plus = {hi}\n[grid]\nL = {l}\nmesh_per_unit = {nh}\n\
             [experiment]\nkind = \"wegner\"\nE = 3.0\neps = 0.1\nb = 20.0\nn_samples = {n}\n[run]\nmaster_seed = {seed}\n"
        );
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(cfg, again);
    }
}

// Tr e^{−tH} for the free box rises toward the continuum heat trace as the mesh is refined.
#[test]
fn heat_trace_converges_under_refinement() {
    let t = 0.01;
    let continuum: f64 = (1..2000).map(|k| (-t * (std::f64::consts::PI * k as f64).powi(2)).exp()).sum();
    let mut last_err = f64::INFINITY;
    for nh in [8, 16, 32, 64] {
        let m = Model::free(GridSpec::new(1, 1, nh).unwrap(), MagneticSpec::none());
        let h = m.hamiltonian(&OmegaSample::constant(1, 1, 0.2).unwrap()).unwrap();
        let e = semigroup(&h, t).unwrap();
        let trace: f64 = (0..e.nrows()).map(|i| e.get(i, i).re).sum();
        let err = (trace - continuum).abs();
        assert!(err < last_err, "nh = {nh}: {err} !< {last_err}");
        last_err = err;
    }
    assert!(last_err < 0.05);
}
