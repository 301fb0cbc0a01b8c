mod common;

use common::cases::{check_mod1, check_mod3, check_surgery_locality, cov_case, k_spec, mod1_cases, mod3_case, COV_CONSTANT};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rfxy::grid::Grid;
use rfxy::surgery::{
    assemble_elliptic, cov_decomposition, cov_forward, cov_inverse, cov_inverse_scalar, elliptic_residual,
    harmonic_start, k_energy, k_gradient, k_hessian, maximize_k, maximize_k_from, WINDOW,
};

fn dense_hessian(phi: &[f64], spec: &rfxy::surgery::KSpec) -> DMatrix<f64> {
    let n = phi.len();
    let mut h = DMatrix::zeros(n, n);
    for (i, j, v) in k_hessian(phi, spec) {
        h[(i, j)] += v;
    }
    h
}

#[test]
fn gradient_and_hessian_match_finite_differences() {
    let spec = k_spec(3, 4, 0.5, 0.3);
    let phi: Vec<f64> = (0..spec.len()).map(|i| 0.4 * ((i as f64) * 0.7).sin()).collect();
    let g = k_gradient(&phi, &spec);
    let h = dense_hessian(&phi, &spec);
    let d = 1e-6;
    for i in 0..spec.len() {
        let mut p = phi.clone();
        let mut m = phi.clone();
        p[i] += d;
        m[i] -= d;
        let fd = (k_energy(&p, &spec) - k_energy(&m, &spec)) / (2.0 * d);
        assert!((fd - g[i]).abs() < 1e-8, "gradient {i}: {fd} vs {}", g[i]);
        let (gp, gm) = (k_gradient(&p, &spec), k_gradient(&m, &spec));
        for j in 0..spec.len() {
            // Hessian of 𝒦 = −∂(gradient of −𝒦).
            let fd = -(gp[j] - gm[j]) / (2.0 * d);
            assert!((fd - h[(j, i)]).abs() < 1e-6, "hessian ({j},{i}): {fd} vs {}", h[(j, i)]);
        }
    }
}

#[test]
fn maximizer_is_stationary_bounded_and_unique() {
    for seed in 0..6 {
        let spec = k_spec(seed, 8, WINDOW, 0.2);
        let sol = maximize_k(&spec).unwrap();
        assert!(sol.grad_norm <= 1e-8, "seed {seed}: {}", sol.grad_norm);
        let sup = sol.nu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup <= spec.boundary_sup() + 1e-12);
        let op = assemble_elliptic(&sol.nu, &spec).unwrap();
        assert!(elliptic_residual(&sol.nu, &spec, &op) <= 1e-8);
        let eig = SymmetricEigen::new(dense_hessian(&sol.nu, &spec)).eigenvalues.min();
        assert!(eig >= -1e-10, "seed {seed}: {eig}");
        let inits = [vec![0.0; spec.len()], vec![WINDOW; spec.len()], vec![-WINDOW; spec.len()]];
        for init in inits {
            let other = maximize_k_from(&spec, &init).unwrap();
            let diff = other.nu.iter().zip(&sol.nu).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(diff <= 1e-6, "seed {seed}: {diff}");
        }
    }
}

#[test]
fn harmonic_start_respects_the_window() {
    let spec = k_spec(9, 6, WINDOW, 0.0);
    assert!(harmonic_start(&spec).iter().all(|v| v.abs() <= WINDOW));
    let big = k_spec(9, 6, 1.0, 0.0);
    assert!(maximize_k(&big).is_err());
}

#[test]
fn mod1_never_decreases_minus_h() {
    let (mut n, mut changed) = (0, 0);
    for seed in 0..60 {
        for case in mod1_cases(seed) {
            changed += usize::from(check_mod1(&case).unwrap_or_else(|e| panic!("seed {seed}: {e}")));
            n += 1;
        }
    }
    eprintln!("{n} instances, {changed} with flips");
    assert!(n >= 50, "only {n} instances");
    assert!(changed >= 10, "only {changed} instances flip a spin");
}

#[test]
fn mod3_step_satisfies_the_energy_inequality() {
    let mut n = 0;
    for seed in 0..300 {
        let Some(case) = mod3_case(seed) else { continue };
        check_mod3(case).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        n += 1;
    }
    assert!(n >= 100, "only {n} clean boxes");
}

#[test]
fn surgery_changes_spins_only_near_the_contour() {
    for seed in [1u64, 2] {
        check_surgery_locality(seed).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

#[test]
fn change_of_variables_error_is_small_against_its_scale() {
    for seed in 0..40 {
        let c = cov_case(seed);
        let d = cov_decomposition(&c.theta, &c.tau, &c.g, &c.alpha, c.epsilon, c.lambda).unwrap();
        assert!((d.minus_h - (d.minus_k + d.boundary_term + d.error)).abs() < 1e-12 * (1.0 + d.minus_h.abs()));
        assert!(d.error.abs() <= COV_CONSTANT * d.scale, "seed {seed}: {} vs {}", d.error, d.scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn change_of_variables_round_trips(t in -3.2f64..3.2, g in -0.5f64..0.5) {
        let phi = t - t.cos() * g;
        prop_assert!((cov_inverse_scalar(phi, g) - t).abs() <= 1e-12);
    }

    #[test]
    fn grid_change_of_variables_round_trips(seed in any::<u64>()) {
        let a = rfxy::field::AlphaSource::new(seed).grid((3, -2), 5, 4);
        let b = rfxy::field::AlphaSource::new(seed ^ 1).grid((3, -2), 5, 4);
        let theta = Grid { origin: a.origin, data: a.data.mapv(|v| 1.5 * v.tanh()) };
        let g = Grid { origin: b.origin, data: b.data.mapv(|v| 0.5 * v.tanh()) };
        let back = cov_inverse(&cov_forward(&theta, &g).unwrap(), &g).unwrap();
        prop_assert!((&back.data - &theta.data).iter().all(|v| v.abs() <= 1e-12));
    }
}
