//! Compares the maximum of `−ℋ_Q` near a constant angle ψ with the
//! quadratic prediction `½ε²cos²ψ⟨α̂,(−Δ^N)⁻¹α̂⟩`.
//!
//! `cargo run --release --example variational_probe -- [epsilon] [draws]`

use std::f64::consts::PI;

use rfxy::field::AlphaSource;
use rfxy::spin::ModelParams;
use rfxy::surgery::variational_probe;

fn main() -> rfxy::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let eps: f64 = args.get(1).map_or(0.02, |s| s.parse().expect("epsilon"));
    let draws: u64 = args.get(2).map_or(5, |s| s.parse().expect("draws"));
    let l = ModelParams::with_epsilon(eps).ell() as usize;
    println!("box side {l}");
    for seed in 0..draws {
        let a = AlphaSource::new(seed).grid((0, 0), l, l);
        print!("draw {seed}:");
        for k in 0..=4 {
            let psi = k as f64 * PI / 8.0;
            let r = variational_probe(&a, psi, eps, true)?;
            print!("  psi {:.2}: {:.5} ({:.5})", psi, r.numeric_max, r.quadratic_prediction);
        }
        println!();
    }
    Ok(())
}
