//! Full surgery on a droplet contour: every modification, the audit trace
//! and the energy gap.
//!
//! `cargo run --release --example surgery_droplet -- [seed] [epsilon] [side]`

use rfxy::classify::{CleanConstants, FieldProvider};
use rfxy::coarse::{contours_of, CoarseParams, ContourSign};
use rfxy::harness::droplet_instance;
use rfxy::spin::ModelParams;
use rfxy::surgery::{energy_gap, surgery, SurgeryConfig};

fn main() -> rfxy::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map_or(0, |s| s.parse().expect("seed"));
    let eps: f64 = args.get(2).map_or(0.1, |s| s.parse().expect("epsilon"));
    let n: usize = args.get(3).map_or(128, |s| s.parse().expect("side"));
    let p = ModelParams::with_epsilon(eps);
    let (radius, _, sigma) = droplet_instance(n, seed);
    let cs = contours_of(&sigma, &CoarseParams::from_model(&p)?)?;
    let Some(c) = cs.contours.iter().filter(|c| c.sign == ContourSign::Plus).max_by_key(|c| c.size()) else {
        println!("no +contour for radius {radius:.1}");
        return Ok(());
    };
    let mut fp = FieldProvider::new(seed, &p);
    let cfg = SurgeryConfig::default();
    let out = surgery(&sigma, c, &cs.phase, &mut fp, &CleanConstants::default(), &p, cfg)?;
    let t = &out.trace;
    println!("radius {radius:.1}  |sp| {}  reflected components {}", t.support_size, out.reflected.len());
    for (stage, h) in &t.stage_minus_h {
        println!("  -H after {stage:<5} {h:>12.5}");
    }
    println!("  {} Modification-3 squares, {} assertions, {} failed", t.mod3_steps.len(), t.assertions.len(), t.failed().len());
    for (k, v) in &t.implied_constants {
        println!("  implied constant {k}: {v:.4}");
    }
    let g = energy_gap(&out, &sigma, &fp, &p, cfg)?;
    println!("gap {:.4}  normalized {:.3}", g.gap, g.normalized_gap);
    Ok(())
}
