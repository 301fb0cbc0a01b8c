//! Heat-bath chains: the uniform control at β = 0, the pure model at ε = 0
//! and the ordering of the magnetization along e₁ under an e₂ random field.
//!
//! `cargo run --release --example gibbs_sampler -- [side] [sweeps]`

use rfxy::harness::workers_from_env;
use rfxy::sampler::{run_and_measure, ChainBoundary, GibbsParams};

fn main() -> rfxy::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let side: usize = args.get(1).map_or(32, |s| s.parse().expect("side"));
    let sweeps: usize = args.get(2).map_or(1000, |s| s.parse().expect("sweeps"));
    let base = GibbsParams { side, sweeps, burn_in: sweeps / 4, ..Default::default() };
    let runs = [
        ("beta 0, free", GibbsParams { beta: 0.0, boundary: ChainBoundary::Free, ..base.clone() }),
        ("epsilon 0, beta 40", GibbsParams { beta: 40.0, epsilon: 0.0, ..base.clone() }),
        ("epsilon 0.3, beta 40", GibbsParams { beta: 40.0, epsilon: 0.3, ..base.clone() }),
    ];
    for (name, gp) in runs {
        let (_, s) = run_and_measure(&gp, &[0, 1, 2], None, workers_from_env())?;
        println!("{name}:");
        for r in &s.replicas {
            println!(
                "  field {}: Mx {:+.4} ± {:.4}  My {:+.4} ± {:.4}  tau {:.1}",
                r.field_seed, r.mx.mean, r.mx.err, r.my.mean, r.my.err, r.mx.tau_int
            );
        }
    }
    Ok(())
}
