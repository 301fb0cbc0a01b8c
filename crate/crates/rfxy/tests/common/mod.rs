//! Definitional scans used as oracles by several integration tests.
#![allow(dead_code)]

pub mod cases;
pub mod oracles;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfxy::coarse::{Contour, ContourSet, ContourSign, CoarseParams};
use rfxy::lattice::Site;
use rfxy::spin::SpinConfig;

/// `ψ⁰`, `ψ¹`, `ψ`, `Ψ` and contours computed straight from the definitions.
pub struct BruteForce {
    pub psi0: Vec<Vec<i8>>,
    pub psi1: Vec<Vec<i8>>,
    pub psi: Vec<Vec<i8>>,
    pub big_psi: Vec<Vec<i8>>,
    pub contours: Vec<BruteContour>,
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BruteContour {
    pub support: BTreeSet<Site>,
    pub labels: BTreeMap<Site, i8>,
    pub sign: ContourSign,
}

fn square_stats(th: &[Vec<f64>], x0: usize, y0: usize, l: usize) -> (f64, f64) {
    let mut e = 0.0;
    let mut c = 0.0;
    for x in x0..x0 + l {
        for y in y0..y0 + l {
            c += th[x][y].cos();
            if x + 1 < x0 + l {
                e += 2.0 - 2.0 * (th[x][y] - th[x + 1][y]).cos();
            }
            if y + 1 < y0 + l {
                e += 2.0 - 2.0 * (th[x][y] - th[x][y + 1]).cos();
            }
        }
    }
    (e, c / (l * l) as f64)
}

pub fn brute_force(sigma: &SpinConfig, cp: &CoarseParams) -> BruteForce {
    let g = sigma.grid();
    let n = g.width();
    let th: Vec<Vec<f64>> = (0..n).map(|x| (0..n).map(|y| g.data[[x, y]]).collect()).collect();
    let (ell, big_l) = (cp.ell as usize, cp.big_l as usize);
    let half = ell / 2;
    let mut squares = Vec::new();
    let mut a = 0;
    while a + ell <= n {
        let mut b = 0;
        while b + ell <= n {
            let (e, m) = square_stats(&th, a, b, ell);
            squares.push(((a as i64, b as i64), e, m));
            b += half;
        }
        a += half;
    }
    let mut psi0 = vec![vec![0i8; n]; n];
    let mut psi1 = vec![vec![0i8; n]; n];
    let mut psi = vec![vec![0i8; n]; n];
    let reach = 2 * cp.ell;
    for x in 0..n {
        for y in 0..n {
            let near: Vec<_> = squares
                .iter()
                .filter(|((ax, ay), _, _)| {
                    let (dx, dy) = (x as i64 - ax, y as i64 - ay);
                    dx * dx + dy * dy <= reach * reach
                })
                .collect();
            let low = near.iter().all(|(_, e, _)| *e <= cp.energy_threshold);
            let plus = near.iter().all(|(_, _, m)| (1.0 - cp.xi..=1.0).contains(m));
            let minus = near.iter().all(|(_, _, m)| (-1.0..=-1.0 + cp.xi).contains(m));
            psi0[x][y] = low as i8;
            psi1[x][y] = if plus { 1 } else if minus { -1 } else { 0 };
            psi[x][y] = psi0[x][y] * psi1[x][y];
        }
    }
    let nb = (n / big_l) as i64;
    let mut big_psi = vec![vec![0i8; n]; n];
    for i in 0..nb {
        for j in 0..nb {
            let mut vals = BTreeSet::new();
            for a in 0..nb {
                for b in 0..nb {
                    if (a - i).pow(2) + (b - j).pow(2) <= 4 {
                        for x in a as usize * big_l..(a as usize + 1) * big_l {
                            for y in b as usize * big_l..(b as usize + 1) * big_l {
                                vals.insert(psi[x][y]);
                            }
                        }
                    }
                }
            }
            let v = if vals.len() == 1 { *vals.iter().next().unwrap() } else { 0 };
            for x in i as usize * big_l..(i as usize + 1) * big_l {
                for y in j as usize * big_l..(j as usize + 1) * big_l {
                    big_psi[x][y] = v;
                }
            }
        }
    }
    let contours = brute_contours(&psi, &big_psi, cp.big_l);
    BruteForce { psi0, psi1, psi, big_psi, contours }
}

fn brute_contours(psi: &[Vec<i8>], big_psi: &[Vec<i8>], big_l: i64) -> Vec<BruteContour> {
    let n = psi.len() as i64;
    let inside = |(x, y): Site| x >= 0 && y >= 0 && x < n && y < n;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for x in 0..n {
        for y in 0..n {
            if big_psi[x as usize][y as usize] != 0 || seen.contains(&(x, y)) {
                continue;
            }
            let mut support = BTreeSet::new();
            let mut queue = VecDeque::from([(x, y)]);
            seen.insert((x, y));
            while let Some((a, b)) = queue.pop_front() {
                support.insert((a, b));
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        let s = (a + dx, b + dy);
                        if inside(s) && big_psi[s.0 as usize][s.1 as usize] == 0 && seen.insert(s) {
                            queue.push_back(s);
                        }
                    }
                }
            }
            // Window large enough to hold the whole thickening plus a frame.
            let (lo, hi) = (-big_l - 2, n + big_l + 1);
            let dist = |s: Site| support.iter().map(|t| (s.0 - t.0).abs().max((s.1 - t.1).abs())).min().unwrap();
            let mut thick = BTreeSet::new();
            for a in lo..=hi {
                for b in lo..=hi {
                    if dist((a, b)) <= big_l {
                        thick.insert((a, b));
                    }
                }
            }
            let mut ext = BTreeSet::from([(lo, lo)]);
            let mut queue = VecDeque::from([(lo, lo)]);
            while let Some((a, b)) = queue.pop_front() {
                for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    let s = (a + dx, b + dy);
                    if s.0 >= lo && s.1 >= lo && s.0 <= hi && s.1 <= hi && !support.contains(&s) && ext.insert(s) {
                        queue.push_back(s);
                    }
                }
            }
            let labels: BTreeMap<Site, i8> =
                thick.iter().filter(|&&s| inside(s)).map(|&s| (s, psi[s.0 as usize][s.1 as usize])).collect();
            let ext_vals: Vec<i8> = thick
                .iter()
                .filter(|s| inside(**s) && !support.contains(s) && ext.contains(s))
                .map(|s| psi[s.0 as usize][s.1 as usize])
                .collect();
            let sign = if !ext_vals.is_empty() && ext_vals.iter().all(|&v| v == 1) {
                ContourSign::Plus
            } else if !ext_vals.is_empty() && ext_vals.iter().all(|&v| v == -1) {
                ContourSign::Minus
            } else {
                ContourSign::Mixed
            };
            out.push(BruteContour { support, labels, sign });
        }
    }
    out.sort();
    out
}

pub fn as_brute(c: &Contour) -> BruteContour {
    BruteContour {
        support: c.support_region().iter().collect(),
        labels: c.labels_iter().collect(),
        sign: c.sign,
    }
}

/// First mismatch between the pipeline and the brute-force scan, if any.
pub fn compare(cs: &ContourSet, bf: &BruteForce) -> Option<String> {
    let ph = &cs.phase;
    let n = ph.side;
    for x in 0..n {
        for y in 0..n {
            let pairs = [
                ("psi0", ph.psi0[[x, y]], bf.psi0[x][y]),
                ("psi1", ph.psi1[[x, y]], bf.psi1[x][y]),
                ("psi", ph.psi[[x, y]], bf.psi[x][y]),
                ("Psi", ph.big_psi[[x, y]], bf.big_psi[x][y]),
            ];
            for (name, a, b) in pairs {
                if a != b {
                    return Some(format!("{name} differs at ({x},{y}): pipeline {a}, scan {b}"));
                }
            }
        }
    }
    let mut got: Vec<BruteContour> = cs.contours.iter().map(as_brute).collect();
    got.sort();
    if got.len() != bf.contours.len() {
        return Some(format!("{} contours, scan found {}", got.len(), bf.contours.len()));
    }
    for (a, b) in got.iter().zip(&bf.contours) {
        if a != b {
            return Some(format!("contour at {:?} differs", a.support.first()));
        }
    }
    None
}

/// Sign-flipped smooth domains plus noise: `θ = π·step(w(x, y)) + noise`,
/// with `w` a random sum of three plane waves.
pub fn random_domains(n: usize, seed: u64) -> SpinConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| (rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(0.0..6.3), rng.random_range(0.2..1.0)))
        .collect();
    let bias = rng.random_range(-1.0..1.0);
    let noise = rng.random_range(0.0..0.6);
    let sharp = rng.random_range(1.0..6.0);
    let mut r2 = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    SpinConfig::from_fn((0, 0), n, n, |(x, y)| {
        let w: f64 = bias + waves.iter().map(|&(kx, ky, p, a)| a * (kx * x as f64 + ky * y as f64 + p).sin()).sum::<f64>();
        let step = 0.5 * (1.0 + (sharp * w).tanh());
        std::f64::consts::PI * step + noise * r2.random_range(-1.0..1.0)
    })
}

/// Hand-built configurations covering the corner cases of the labels.
pub fn constructed(n: usize) -> Vec<(&'static str, SpinConfig)> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let c = |t: f64| SpinConfig::constant((0, 0), n, n, t);
    let f = |g: &dyn Fn(i64, i64) -> f64| SpinConfig::from_fn((0, 0), n, n, |(x, y)| g(x, y));
    let m = n as i64;
    let mut edge = c(0.0);
    edge.set((m / 2, m / 2), 2.0).unwrap();
    vec![
        ("aligned", c(0.0)),
        ("anti-aligned", c(PI)),
        ("perpendicular", c(FRAC_PI_2)),
        ("half-plane", f(&|x, _| if x < m / 2 { 0.0 } else { PI })),
        ("flipped block", f(&|x, y| if (8..16).contains(&x) && (8..16).contains(&y) { PI } else { 0.0 })),
        ("two droplets", f(&|x, y| if (x - 6).abs() < 3 && (y - 6).abs() < 3 || (x - 25).abs() < 3 && (y - 25).abs() < 3 { PI } else { 0.0 })),
        ("single bad spin", edge),
        ("checkerboard", f(&|x, y| if (x + y) % 2 == 0 { 0.0 } else { PI })),
        ("stripe", f(&|x, _| if (12..20).contains(&x) { PI } else { 0.0 })),
        ("ring", f(&|x, y| {
            let r = (((x - m / 2) as f64).powi(2) + ((y - m / 2) as f64).powi(2)).sqrt();
            if (6.0..10.0).contains(&r) { PI } else { 0.0 }
        })),
    ]
}
