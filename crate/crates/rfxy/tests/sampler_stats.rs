use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfxy::grid::Grid;
use rfxy::sampler::{
    batch_means, integrated_autocorrelation, run_and_measure, ChainBoundary, ChainState, GibbsParams, HeatBathTables,
    Start, Update,
};

const BINS: usize = 32;

/// Bin probabilities of a density on `(−π, π]` by the midpoint rule.
fn bin_probabilities(f: impl Fn(f64) -> f64) -> Vec<f64> {
    let per = 400;
    let h = 2.0 * PI / (BINS * per) as f64;
    let mut p: Vec<f64> = (0..BINS)
        .map(|b| (0..per).map(|i| f(-PI + ((b * per + i) as f64 + 0.5) * h)).sum::<f64>() * h)
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

fn bin_of(u: f64) -> usize {
    (((u + PI) / (2.0 * PI) * BINS as f64).floor() as usize).min(BINS - 1)
}

/// Pearson statistic, merging bins whose expected count is below 5.
fn chi_square(counts: &[usize], p: &[f64]) -> (f64, usize) {
    let n: usize = counts.iter().sum();
    let (mut chi, mut dof, mut c_acc, mut e_acc) = (0.0, 0usize, 0.0, 0.0);
    for (c, q) in counts.iter().zip(p) {
        c_acc += *c as f64;
        e_acc += q * n as f64;
        if e_acc >= 5.0 {
            chi += (c_acc - e_acc).powi(2) / e_acc;
            dof += 1;
            c_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 {
        chi += (c_acc - e_acc).powi(2) / e_acc;
        dof += 1;
    }
    (chi, dof.saturating_sub(1))
}

/// Loose upper quantile of χ² with `dof` degrees of freedom (about 4.5σ).
fn chi_limit(dof: usize) -> f64 {
    dof as f64 + 4.5 * (2.0 * dof as f64).sqrt() + 10.0
}

#[test]
fn heat_bath_draws_follow_the_von_mises_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tables = HeatBathTables::default();
    for kappa in [0.0, 0.005, 0.5, 3.0, 20.0, 300.0] {
        let mut counts = vec![0usize; BINS];
        for _ in 0..100_000 {
            let u = tables.sample(kappa, &mut rng);
            assert!(u > -PI - 1e-12 && u <= PI + 1e-12);
            counts[bin_of(u)] += 1;
        }
        let p = bin_probabilities(|u| (kappa * (u.cos() - 1.0)).exp());
        let (chi, dof) = chi_square(&counts, &p);
        assert!(chi <= chi_limit(dof), "κ={kappa}: χ²={chi:.1} on {dof} dof");
    }
}

/// Single site with `σ⁰ = e₁` on its four outer neighbours: the stationary
/// law is `∝ exp(β(4 cos θ + εα sin θ))`.
#[test]
fn single_site_chains_reach_the_exact_conditional() {
    let (beta, eps, alpha) = (0.7, 0.9, -1.3);
    let p = bin_probabilities(|t| (beta * (4.0 * (t.cos() - 1.0) + eps * alpha * t.sin())).exp());
    for update in [Update::Metropolis, Update::HeatBath] {
        let params = GibbsParams {
            beta,
            epsilon: eps,
            side: 1,
            boundary: ChainBoundary::E1,
            update,
            start: Start::Random,
            burn_in: 200,
            chain_seed: 5,
            ..GibbsParams::default()
        };
        let mut st = ChainState::new(&params, Grid::from_fn((0, 0), 1, 1, |_| alpha)).unwrap();
        st.burn_in(&params);
        let mut counts = vec![0usize; BINS];
        // Metropolis samples are correlated; thin them.
        let thin = if update == Update::Metropolis { 5 } else { 1 };
        for i in 0..200_000 {
            st.sweep_once(&params);
            if i % thin == 0 {
                counts[bin_of(rfxy::spin::wrap_angle(st.sigma.grid().data[[0, 0]]))] += 1;
            }
        }
        let (chi, dof) = chi_square(&counts, &p);
        assert!(chi <= chi_limit(dof), "{update:?}: χ²={chi:.1} on {dof} dof");
    }
}

/// `I_n(β)` by its power series.
fn bessel_i(n: u32, beta: f64) -> f64 {
    let mut term = (beta / 2.0).powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
    let mut s = term;
    for k in 1..200 {
        term *= (beta / 2.0).powi(2) / (k as f64 * (k + n) as f64);
        s += term;
        if term < 1e-18 * s {
            break;
        }
    }
    s
}

/// Free 2×2 lattice without field is the 4-cycle, whose partition function is
/// `(2π)⁴ Σ_n I_n(β)⁴`; the mean bond energy follows by differentiation.
fn four_cycle_energy(beta: f64) -> f64 {
    let (mut z, mut dz) = (0.0, 0.0);
    for n in -30i32..=30 {
        let m = n.unsigned_abs();
        let i = bessel_i(m, beta);
        // I_n' = ½(I_{n−1} + I_{n+1}) and I_{−1} = I_1.
        let lower = if m == 0 { 1 } else { m - 1 };
        let di = 0.5 * (bessel_i(lower, beta) + bessel_i(m + 1, beta));
        z += i.powi(4);
        dz += 4.0 * i.powi(3) * di;
    }
    // E = Σ_bonds (1 − cos) and ∂_β ln Z = ⟨Σ cos⟩.
    4.0 - dz / z
}

#[test]
fn four_cycle_energy_matches_the_bessel_series() {
    for beta in [0.3, 1.5] {
        let exact = four_cycle_energy(beta);
        for update in [Update::Metropolis, Update::HeatBath] {
            let params = GibbsParams {
                beta,
                epsilon: 0.0,
                side: 2,
                boundary: ChainBoundary::Free,
                update,
                burn_in: 500,
                sweeps: 64_000,
                chain_seed: 3,
                ..GibbsParams::default()
            };
            let (_, sum) = run_and_measure(&params, &[1], None, 1).unwrap();
            let e = &sum.replicas[0].energy;
            assert!((e.mean - exact).abs() <= 5.0 * e.err, "β={beta} {update:?}: {} ± {} vs {exact}", e.mean, e.err);
        }
    }
}

#[test]
fn infinite_temperature_is_uniform() {
    for update in [Update::Metropolis, Update::HeatBath] {
        let params = GibbsParams { beta: 0.0, epsilon: 0.5, side: 4, update, burn_in: 10, sweeps: 4000, ..GibbsParams::default() };
        let (_, sum) = run_and_measure(&params, &[2], None, 1).unwrap();
        let r = &sum.replicas[0];
        assert_eq!(r.acceptance, 1.0);
        for m in [&r.mx, &r.my] {
            assert!(m.mean.abs() <= 5.0 * m.err, "{update:?}: {} ± {}", m.mean, m.err);
        }
    }
}

/// Negating the field is the same as reflecting `θ ↦ −θ`, which maps `m₂` to `−m₂`.
#[test]
fn negated_field_mirrors_the_transverse_magnetization() {
    let params = GibbsParams { beta: 1.2, epsilon: 0.8, side: 6, burn_in: 200, sweeps: 20_000, ..GibbsParams::default() };
    let alpha = rfxy::field::AlphaSource::new(9).grid((0, 0), 6, 6);
    let neg = Grid { origin: alpha.origin, data: alpha.data.mapv(|v| -v) };
    let my = |a: Grid, seed: u64| {
        let mut st = ChainState::new(&GibbsParams { chain_seed: seed, ..params.clone() }, a).unwrap();
        st.burn_in(&params);
        let xs: Vec<f64> = (0..params.sweeps).map(|_| {
            st.sweep_once(&params);
            st.magnetization()[1]
        }).collect();
        batch_means(&xs)
    };
    let (a, b) = (my(alpha, 1), my(neg, 2));
    assert!(a.mean.abs() > 5.0 * a.err, "field should tilt the spins: {} ± {}", a.mean, a.err);
    let tol = 5.0 * a.err.hypot(b.err);
    assert!((a.mean + b.mean).abs() <= tol, "{} vs {}", a.mean, b.mean);
}

#[test]
fn replicas_do_not_depend_on_worker_count() {
    let params = GibbsParams { side: 8, burn_in: 20, sweeps: 64, update: Update::Metropolis, ..GibbsParams::default() };
    let one = run_and_measure(&params, &[4, 5, 6], None, 1).unwrap();
    let three = run_and_measure(&params, &[4, 5, 6], None, 3).unwrap();
    assert_eq!(one, three);
}

#[test]
fn batch_means_and_autocorrelation_match_known_processes() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 64_000;
    let iid: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let est = batch_means(&iid);
    let want = (1.0 / 12.0 / n as f64).sqrt();
    assert!((est.err / want - 1.0).abs() < 0.4, "{} vs {want}", est.err);
    assert!((est.tau_int - 0.5).abs() < 0.1, "{}", est.tau_int);
    // AR(1) with ρ = 0.8 has τ_int = ½(1 + ρ)/(1 − ρ) = 4.5.
    let rho = 0.8;
    let mut x = 0.0;
    let ar: Vec<f64> = (0..n).map(|_| {
        x = rho * x + rng.random::<f64>() - 0.5;
        x
    }).collect();
    let tau = integrated_autocorrelation(&ar);
    assert!((tau - 4.5).abs() < 0.6, "{tau}");
}
