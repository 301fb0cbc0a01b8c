//! Calibrates the clean-box constants: prints the normalized statistic
//! quantiles of (C2)–(C6) over independent `ℓ`-boxes and the clean
//! fraction under the current defaults.
//!
//! `cargo run --release --example calibrate_clean -- [epsilon] [boxes]`

use rfxy::classify::{classify_box, CleanConstants, FieldProvider};
use rfxy::spin::ModelParams;

fn quantiles(mut v: Vec<f64>) -> String {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
    format!("min {:.4}  q01 {:.4}  q50 {:.4}  q99 {:.4}  max {:.4}", q(0.0), q(0.01), q(0.5), q(0.99), q(1.0))
}

fn main() -> rfxy::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let eps: f64 = args.get(1).map_or(0.05, |s| s.parse().expect("epsilon"));
    let boxes: u64 = args.get(2).map_or(1000, |s| s.parse().expect("boxes"));
    let p = ModelParams::with_epsilon(eps);
    let c = CleanConstants::default();
    let side = p.ell() as usize;
    let le = p.log_eps();
    let lam = p.lambda();
    println!("epsilon {eps}  ell {side}  L {}  lambda {lam:.6}", p.big_l());
    let (mut s2, mut s3, mut s4lo, mut s4hi, mut s5, mut s6) = (vec![], vec![], vec![], vec![], vec![], vec![]);
    let mut clean = 0;
    for seed in 0..boxes {
        let mut fp = FieldProvider::new(seed, &p);
        let r = classify_box(&mut fp, (0, 0), side, &c, &p)?;
        s2.push(r.max_sup_g / (eps * lam.powf(-0.5) * le.powf(c.eta)));
        s3.push(r.max_grad_sup / (eps * le));
        s4lo.push(r.min_grad_density / (eps * eps * le));
        s4hi.push(r.max_grad_density / (eps * eps * le));
        s5.push(r.max_sup_alpha / le);
        s6.push(r.max_dn_ratio);
        clean += r.xi as u64;
    }
    println!("C2 sup g / (eps lambda^-1/2 |log eps|^eta):  {}", quantiles(s2));
    println!("C3 sup grad g / (eps |log eps|):            {}", quantiles(s3));
    println!("C4 min density / (eps^2 |log eps|):         {}", quantiles(s4lo));
    println!("C4 max density / (eps^2 |log eps|):         {}", quantiles(s4hi));
    println!("C5 sup alpha / |log eps|:                   {}", quantiles(s5));
    println!("C6 |E_N - E_D| (ln L0)^1/4 / E_N:           {}", quantiles(s6));
    let mut margins = Vec::new();
    for seed in 0..boxes.min(200) {
        let mut fp = FieldProvider::new(seed, &p);
        margins.push(fp.stats((0, 0), 16)?.a_margin.expect("side 16"));
    }
    println!("C1 largest A on side-16 squares:            {}", quantiles(margins));
    println!("clean fraction with defaults: {:.4}", clean as f64 / boxes as f64);
    Ok(())
}
