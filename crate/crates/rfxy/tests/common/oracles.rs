//! Dense and quadrature references for the spectral field code.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rfxy::field::Bc;

/// `−Δ^{bc} + λ` on an `l × l` square, sites in row-major `(x, y) ↦ x·l + y`.
pub fn dense_operator(l: usize, bc: Bc, lambda: f64) -> DMatrix<f64> {
    let n = l * l;
    let mut a = DMatrix::zeros(n, n);
    for x in 0..l {
        for y in 0..l {
            let i = x * l + y;
            a[(i, i)] += lambda;
            for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let (u, v) = (x as i64 + dx, y as i64 + dy);
                if u >= 0 && v >= 0 && (u as usize) < l && (v as usize) < l {
                    a[(i, i)] += 1.0;
                    a[(i, u as usize * l + v as usize)] -= 1.0;
                } else if bc == Bc::D {
                    a[(i, i)] += 1.0;
                }
            }
        }
    }
    a
}

/// Midpoint nodes and weights on `[0, π]`, graded geometrically towards 0
/// from panel width `h0`, `per_panel` points per panel.
pub fn graded_midpoint(h0: f64, per_panel: usize) -> Vec<(f64, f64)> {
    let pi = std::f64::consts::PI;
    let mut edges = vec![0.0, h0];
    while *edges.last().unwrap() < pi {
        let w = edges[edges.len() - 1] - edges[edges.len() - 2];
        edges.push((edges.last().unwrap() + 1.5 * w).min(pi));
    }
    let mut out = Vec::new();
    for w in edges.windows(2) {
        let h = (w[1] - w[0]) / per_panel as f64;
        for i in 0..per_panel {
            out.push((w[0] + (i as f64 + 0.5) * h, h));
        }
    }
    out
}

/// `∫_{[0,π]²} (‖k‖² + λ)⁻² d²k` by the tensor midpoint rule on graded nodes.
pub fn zeta_bar_sq_midpoint(lambda: f64) -> f64 {
    let nodes = graded_midpoint(lambda.sqrt() / 32.0, 300);
    let mut s = 0.0;
    for &(a, wa) in &nodes {
        let mut inner = 0.0;
        for &(b, wb) in &nodes {
            inner += wb / (a * a + b * b + lambda).powi(2);
        }
        s += wa * inner;
    }
    s
}
