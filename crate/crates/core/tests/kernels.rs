use gpmro::kernels::{bessel_k, matern, matern_general, KernelSpec, JITTER};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `K_ν(x) = √π (x/2)^ν / Γ(ν + ½) ∫_1^∞ e^{-xt} (t² - 1)^{ν - ½} dt`,
/// integrated with composite Simpson after `t = 1 + v⁶`, which smooths the
/// endpoint singularity. A different representation from the one the library
/// uses.
fn bessel_k_oracle(nu: f64, x: f64, gamma_nu_half: f64) -> f64 {
    let f = |v: f64| {
        let u = v.powi(6);
        (-x * (1.0 + u)).exp() * (u * (u + 2.0)).powf(nu - 0.5) * 6.0 * v.powi(5)
    };
    let upper = (60.0 / x).powf(1.0 / 6.0);
    let n = 200_000;
    let h = upper / n as f64;
    let mut s = f(0.0) + f(upper);
    for k in 1..n {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    let integral = s * h / 3.0;
    std::f64::consts::PI.sqrt() * (x / 2.0).powf(nu) / gamma_nu_half * integral
}

#[test]
fn matern_three_halves_at_unit_distance_matches_integral_oracle() {
    // ν = 3/2, l = 1, r = 1: s = √3, prefactor 2^{-1/2} / Γ(3/2), Γ(2) = 1.
    let nu = 1.5;
    let s = 3f64.sqrt();
    let gamma_three_halves = std::f64::consts::PI.sqrt() / 2.0;
    let expected = 2f64.powf(1.0 - nu) / gamma_three_halves * s.powf(nu) * bessel_k_oracle(nu, s, 1.0);

    let k = KernelSpec::matern(1.5, 1.0, 0..1).unwrap();
    assert!((k.eval(&[0.0], &[1.0]).unwrap() - expected).abs() < 1e-9);
    assert!((matern_general(1.5, 1.0) - expected).abs() < 1e-9);
}

#[test]
fn bessel_k_matches_integral_oracle_off_half_integers() {
    // Γ(ν + ½) for ν = 0.8, 2.2 (values of Γ(1.3), Γ(2.7)).
    for (nu, g) in [(0.8, 0.897_470_696_306_277_2), (2.2, 1.544_685_845_850_594)] {
        for x in [0.3, 1.0, 4.0] {
            let oracle = bessel_k_oracle(nu, x, g);
            assert!((bessel_k(nu, x) - oracle).abs() < 1e-9 * oracle.max(1.0), "nu {nu} x {x}");
        }
    }
}

#[test]
fn general_matern_agrees_with_closed_forms() {
    for nu in [0.5, 1.5, 2.5] {
        for d in [0.01, 0.3, 1.0, 2.5, 6.0] {
            assert!((matern(nu, d) - matern_general(nu, d)).abs() < 1e-10);
        }
    }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
}

fn specs() -> Vec<KernelSpec> {
    vec![
        KernelSpec::squared_exponential(0.5, 0..3).unwrap(),
        KernelSpec::matern(2.5, 0.7, 0..3).unwrap(),
        KernelSpec::matern(0.9, 1.3, 0..3).unwrap(),
        KernelSpec::linear(0..3).unwrap(),
        KernelSpec::sum(KernelSpec::linear(0..1).unwrap(), KernelSpec::squared_exponential(0.3, 1..3).unwrap()),
        KernelSpec::product(KernelSpec::matern(1.5, 1.0, 0..2).unwrap(), KernelSpec::squared_exponential(0.4, 2..3).unwrap()),
    ]
}

#[test]
fn gram_matrices_are_positive_semidefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for spec in specs() {
        for _ in 0..5 {
            let pts = random_points(&mut rng, 20, 3);
            let g = spec.gram(&pts).unwrap() + DMatrix::identity(20, 20) * JITTER;
            let min = SymmetricEigen::new(g).eigenvalues.min();
            assert!(min >= -1e-8, "{spec:?}: {min}");
        }
    }
}

#[test]
fn gram_is_exactly_symmetric_and_matches_eval() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for spec in specs() {
        let pts = random_points(&mut rng, 12, 3);
        let g = spec.gram(&pts).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(g[(i, j)], g[(j, i)]);
                assert_eq!(g[(i, j)], spec.eval(&pts[i], &pts[j]).unwrap());
            }
        }
    }
}

#[test]
fn composites_combine_children_on_their_slices() {
    let a = KernelSpec::matern(2.5, 0.8, 0..2).unwrap();
    let b = KernelSpec::squared_exponential(0.6, 2..4).unwrap();
    let z = [0.1, -0.4, 0.9, 0.3];
    let w = [0.5, 0.2, -0.1, 0.0];
    let (ka, kb) = (a.eval(&z, &w).unwrap(), b.eval(&z, &w).unwrap());
    assert_eq!(KernelSpec::sum(a.clone(), b.clone()).eval(&z, &w).unwrap(), 0.5 * (ka + kb));
    assert_eq!(KernelSpec::product(a, b).eval(&z, &w).unwrap(), ka * kb);
}

proptest! {
    #[test]
    fn stationary_kernels_have_unit_diagonal(l in 0.05f64..5.0, nu in 0.2f64..4.0,
                                             z in prop::collection::vec(-3.0f64..3.0, 2)) {
        prop_assert_eq!(KernelSpec::squared_exponential(l, 0..2).unwrap().eval(&z, &z).unwrap(), 1.0);
        prop_assert_eq!(KernelSpec::matern(nu, l, 0..2).unwrap().eval(&z, &z).unwrap(), 1.0);
    }

    #[test]
    fn random_gram_matrices_are_psd(seed in 0u64..1000, l in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = random_points(&mut rng, 20, 2);
        let spec = KernelSpec::product(KernelSpec::linear(0..1).unwrap(), KernelSpec::matern(2.5, l, 0..2).unwrap());
        let g = spec.gram(&pts).unwrap() + DMatrix::identity(20, 20) * JITTER;
        prop_assert!(SymmetricEigen::new(g).eigenvalues.min() >= -1e-8);
    }
}
