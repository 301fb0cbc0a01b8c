//! Change of variables around a clean-box field and the maximizer of the
//! transformed functional: stationarity, the maximum principle, the
//! elliptic residual and the decay of the maximizer away from the boundary.
//!
//! `cargo run --release --example maximizer`

use std::collections::BTreeMap;

use rfxy::classify::FieldProvider;
use rfxy::field::Bc;
use rfxy::lattice::{boundary, Region, Side};
use rfxy::spin::ModelParams;
use rfxy::surgery::{assemble_elliptic, cov_decomposition, cov_forward, cov_inverse, elliptic_residual, maximize_k, KSpec};

fn main() -> rfxy::Result<()> {
    let p = ModelParams::with_epsilon(0.05);
    let mut fp = FieldProvider::new(3, &p);
    let side = p.ell() as usize;
    let f = fp.sample((0, 0), side, Bc::D)?;
    let theta = f.g.clone();
    let phi = cov_forward(&theta, &f.g)?;
    let back = cov_inverse(&phi, &f.g)?;
    let err = theta.data.iter().zip(back.data.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    println!("round trip on a side-{side} box: {err:.2e}");

    let q = f.g.domain();
    let tau: BTreeMap<_, _> = boundary(&q, Side::Outer).iter().map(|s| (s, 0.1 * ((s.0 + s.1) as f64).cos())).collect();
    let dec = cov_decomposition(&theta, &tau, &f.g, &fp.source.grid((0, 0), side, side), p.epsilon, p.lambda())?;
    println!("-H = {:.6}  -K + boundary = {:.6}  error {:.2e}  scale {:.2e}", dec.minus_h, dec.minus_k + dec.boundary_term, dec.error, dec.scale);

    for s in [8usize, 16, 32, 64] {
        let mut fp = FieldProvider::new(11, &p);
        let f = fp.sample((0, 0), s, Bc::D)?;
        let r = Region::square((0, 0), s as i64);
        let tau: BTreeMap<_, _> = boundary(&r, Side::Outer).iter().map(|x| (x, 0.2)).collect();
        let spec = KSpec::new(&r, |x| f.m.at(x), tau)?;
        let sol = maximize_k(&spec)?;
        let op = assemble_elliptic(&sol.nu, &spec)?;
        let c = spec.sites.iter().position(|&x| x == ((s / 2) as i64, (s / 2) as i64)).expect("centre");
        println!(
            "side {s:>3}: iterations {:>2}  |grad| {:.1e}  sup nu {:.4}  centre nu {:.5}  elliptic residual {:.1e}",
            sol.iterations,
            sol.grad_norm,
            sol.nu.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            sol.nu[c],
            elliptic_residual(&sol.nu, &spec, &op)
        );
    }
    Ok(())
}
