//! Samples α, solves `g = ε(−Δ^{bc}+λ)⁻¹α` on both boundary conditions and
//! prints the exact per-annulus variances next to a small Monte Carlo.
//!
//! `cargo run --release --example resolvent_field -- [side] [samples]`

use rfxy::field::{resolvent_apply, sample_alpha, zeta_bar_sq, AlphaSource, Bc, ResolventSpec, Spectral};
use rfxy::spin::ModelParams;

fn main() -> rfxy::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let l: usize = args.get(1).map_or(64, |s| s.parse().expect("side"));
    let n: u64 = args.get(2).map_or(2000, |s| s.parse().expect("samples"));
    let p = ModelParams::with_epsilon(0.1);
    let lam = p.lambda();
    println!("side {l}  epsilon {}  lambda {lam:.5}  zeta_bar_2 {:.4}", p.epsilon, zeta_bar_sq(lam)?.sqrt());
    for bc in [Bc::D, Bc::N] {
        let f = resolvent_apply(ResolventSpec::new(bc, l, lam, p.epsilon)?, &sample_alpha(7, l))?;
        println!("{bc:?}: sup g {:.4}  sup m {:.4}  residual {:.2e}", f.g.sup_norm(), f.m.sup_norm(), f.residual);
    }
    let sp = Spectral::new(ResolventSpec::new(Bc::D, l, lam, p.epsilon)?)?;
    let x = ((l / 2) as i64, (l / 2) as i64);
    println!("{:>3} {:>14} {:>14}", "s", "exact var", "mc var");
    for s in 0..=sp.spec.max_shell() {
        if !sp.shell.iter().any(|&v| v == s) {
            continue;
        }
        let mut acc = 0.0;
        for seed in 0..n {
            let v = sp.annulus_project(&AlphaSource::new(seed).grid((0, 0), l, l), s)?.at(x);
            acc += v * v;
        }
        println!("{s:>3} {:>14.6e} {:>14.6e}", sp.annulus_variance(s, x), acc / n as f64);
    }
    Ok(())
}
