//! Builds a droplet, coarse-grains it and prints the phase labels and the
//! contours it produces.
//!
//! `cargo run --release --example contours -- [epsilon] [side] [radius]`

use rfxy::coarse::{contours_of, CoarseParams};
use rfxy::spin::ModelParams;
use rfxy::surgery::droplet;

fn main() -> rfxy::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let eps: f64 = args.get(1).map_or(0.1, |s| s.parse().expect("epsilon"));
    let n: usize = args.get(2).map_or(128, |s| s.parse().expect("side"));
    let r: f64 = args.get(3).map_or(24.0, |s| s.parse().expect("radius"));
    let p = ModelParams::with_epsilon(eps);
    let cp = CoarseParams::from_model(&p)?;
    let c = n as f64 / 2.0 - 0.5;
    let sigma = droplet(n, (c, c), r, 2.0, 0.0, 0);
    let cs = contours_of(&sigma, &cp)?;
    println!("ell {}  L {}  threshold {:.4}", cp.ell, cp.big_l, cp.energy_threshold);
    println!("Psi per L-block (rows from the top):");
    let b = cp.big_l as usize;
    for y in (0..n / b).rev() {
        let row: String = (0..n / b)
            .map(|x| match cs.phase.big_psi[[x * b, y * b]] {
                1 => '+',
                -1 => '-',
                _ => '0',
            })
            .collect();
        println!("  {row}");
    }
    for (i, k) in cs.contours.iter().enumerate() {
        println!("contour {i}: {} blocks, |sp| = {}, sign {:?}, touches boundary {}", k.support.len(), k.size(), k.sign, k.touches_boundary);
    }
    Ok(())
}
