mod common;

use common::oracles::{dense_operator, zeta_bar_sq_midpoint};
use nalgebra::{DVector, SymmetricEigen};
use proptest::prelude::*;
use rfxy::field::{
    apply_operator, field_energy, local_mass, resolvent_apply, sample_alpha, zeta_bar_sq, zeta_of, AlphaSource, Bc,
    ResolventSpec, Spectral,
};
use rfxy::grid::Grid;

#[test]
fn spectral_solve_matches_dense_lu() {
    for l in [4, 8, 16] {
        for bc in [Bc::D, Bc::N] {
            let (lam, eps) = (0.03, 0.2);
            let lu = dense_operator(l, bc, lam).lu();
            let sp = Spectral::new(ResolventSpec::new(bc, l, lam, eps).unwrap()).unwrap();
            for seed in 0..5 {
                let a = AlphaSource::new(seed).grid((0, 0), l, l);
                let rhs = DVector::from_fn(l * l, |i, _| eps * a.data[[i / l, i % l]]);
                let x = lu.solve(&rhs).unwrap();
                let g = sp.solve(&a).unwrap();
                let err = (0..l * l).map(|i| (g.data[[i / l, i % l]] - x[i]).powi(2)).sum::<f64>().sqrt();
                assert!(err <= 1e-9 * x.norm(), "l={l} {bc:?} seed {seed}: {err:e}");
            }
        }
    }
}

#[test]
fn exact_annulus_variances_sum_to_dense_diagonal() {
    let (l, lam) = (16, 0.05);
    for bc in [Bc::D, Bc::N] {
        let inv = dense_operator(l, bc, lam).try_inverse().unwrap();
        let sq = &inv * &inv;
        let sp = Spectral::new(ResolventSpec::new(bc, l, lam, 1.0).unwrap()).unwrap();
        for x in [(0, 0), (3, 11), (8, 8)] {
            let total: f64 = (0..=sp.spec.max_shell()).map(|s| sp.annulus_variance(s, x)).sum();
            let i = x.0 as usize * l + x.1 as usize;
            assert!((total - sq[(i, i)]).abs() <= 1e-10 * sq[(i, i)], "{bc:?} {x:?}");
        }
    }
}

#[test]
fn spectrum_matches_dense_eigenvalues() {
    for bc in [Bc::D, Bc::N] {
        let l = 8;
        let mut dense: Vec<f64> = SymmetricEigen::new(dense_operator(l, bc, 0.0)).eigenvalues.iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        let sp = Spectral::new(ResolventSpec::new(bc, l, 1.0, 1.0).unwrap()).unwrap();
        let mut ours: Vec<f64> = sp.eigen_pairs().iter().map(|e| e.zeta).collect();
        ours.sort_by(f64::total_cmp);
        for (a, b) in dense.iter().zip(&ours) {
            assert!((a - b).abs() < 1e-10, "{bc:?}: {a} vs {b}");
        }
    }
}

#[test]
fn eigen_residuals_vanish_at_side_16() {
    for bc in [Bc::D, Bc::N] {
        let sp = Spectral::new(ResolventSpec::new(bc, 16, 1.0, 1.0).unwrap()).unwrap();
        for e in sp.eigen_pairs() {
            let r = apply_operator(&e.vector, bc, 0.0) - &e.vector * e.zeta;
            let res = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(res <= 1e-10, "{bc:?} {:?}: {res:e}", e.index);
            assert!((e.zeta - zeta_of(e.k)).abs() < 1e-13);
        }
    }
    let half = std::f64::consts::FRAC_PI_2;
    assert_eq!(zeta_of((half, half)), 4.0);
}

#[test]
fn zeta_bar_matches_graded_midpoint() {
    for lam in [1.0, 1e-2, 1e-4] {
        let q = zeta_bar_sq(lam).unwrap();
        let m = zeta_bar_sq_midpoint(lam);
        assert!((q - m).abs() <= 1e-6 * m, "λ={lam}: {q} vs {m}");
    }
}

#[test]
fn lambda_times_zeta_bar_stays_bounded() {
    for k in 0..=8 {
        let lam = 10f64.powf(-6.0 + 0.5 * k as f64);
        let v = lam * zeta_bar_sq(lam).unwrap();
        assert!((0.5..=1.0).contains(&v), "λ={lam}: {v}");
    }
}

#[test]
fn local_mass_sums_to_twice_the_energy() {
    let sp = Spectral::new(ResolventSpec::new(Bc::N, 16, 0.1, 0.3).unwrap()).unwrap();
    let g = sp.solve(&AlphaSource::new(4).grid((0, 0), 16, 16)).unwrap();
    let m = local_mass(&g, Bc::N);
    assert!((m.data.sum() - 2.0 * field_energy(&g.data, Bc::N)).abs() < 1e-12);
    let boundary: f64 = g.domain().iter().map(|(x, y)| {
        let open = [x == 0, x == 15, y == 0, y == 15].iter().filter(|&&b| b).count();
        open as f64 * g.at((x, y)).powi(2)
    }).sum();
    let md = local_mass(&g, Bc::D);
    assert!((md.data.sum() - (2.0 * field_energy(&g.data, Bc::D) - boundary)).abs() < 1e-12);
}

#[test]
fn resolvent_apply_reports_small_residual() {
    let f = resolvent_apply(ResolventSpec::new(Bc::D, 32, 0.01, 0.1).unwrap(), &sample_alpha(7, 32)).unwrap();
    assert!(f.residual <= 1e-12);
    assert_eq!(f.seed, Some(7));
}

#[test]
fn side_must_be_a_power_of_two() {
    assert!(ResolventSpec::new(Bc::D, 24, 0.1, 0.1).is_err());
    assert!(ResolventSpec::new(Bc::D, 16, 0.0, 0.1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn alpha_is_keyed_by_site(seed in any::<u64>(), x in -50i64..50, y in -50i64..50, w in 1usize..6, h in 1usize..6) {
        let src = AlphaSource::new(seed);
        let big = src.grid((x - 3, y - 2), w + 6, h + 6);
        let small = src.grid((x, y), w, h);
        for s in small.domain().iter() {
            prop_assert_eq!(big.at(s), small.at(s));
        }
    }

    #[test]
    fn transform_round_trips(seed in any::<u64>(), d in any::<bool>()) {
        let bc = if d { Bc::D } else { Bc::N };
        let sp = Spectral::new(ResolventSpec::new(bc, 16, 1.0, 1.0).unwrap()).unwrap();
        let a = AlphaSource::new(seed).grid((0, 0), 16, 16);
        let back = sp.inverse(&sp.forward(&a.data));
        let err = (&back - &a.data).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn solve_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), c in -3.0f64..3.0) {
        let sp = Spectral::new(ResolventSpec::new(Bc::D, 8, 0.2, 0.5).unwrap()).unwrap();
        let a = AlphaSource::new(s1).grid((0, 0), 8, 8);
        let b = AlphaSource::new(s2).grid((0, 0), 8, 8);
        let mix = Grid { origin: (0, 0), data: &a.data + &(&b.data * c) };
        let lhs = sp.solve(&mix).unwrap().data;
        let rhs = sp.solve(&a).unwrap().data + sp.solve(&b).unwrap().data * c;
        prop_assert!((&lhs - &rhs).iter().all(|v| v.abs() < 1e-12));
    }
}
