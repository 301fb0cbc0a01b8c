//! Gaussian random fields `α`, massive resolvent fields
//! `g = ε(−Δ^{bc} + λ)⁻¹α` on squares, their spectral decomposition into
//! momentum annuli, local masses and the scalar quantities derived from them.

use std::f64::consts::PI;
use std::fmt::Write as _;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grid::Grid;
use crate::lattice::{Site, NN4};

/// Boundary condition of the lattice Laplacian on a square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bc {
    /// Zero extension outside the square.
    D,
    /// Edges leaving the square are dropped.
    N,
}

/// Reproducible i.i.d. standard normals indexed by site.
///
/// The value at `(x, y)` depends only on `(seed, x, y)`: row `x` is ChaCha8
/// stream `x` under key `seed`, and site `y` owns words `4(y + 2⁴⁰)..+4`,
/// consumed as two uniforms by a Box-Muller step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphaSource {
    pub seed: u64,
}

pub const GENERATOR_ID: &str = "chacha8-row-stream-box-muller-v1";

const Y_SHIFT: i64 = 1 << 40;

impl AlphaSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Fills `origin + [0,w) × [0,h)`.
    pub fn grid(&self, origin: Site, w: usize, h: usize) -> Grid {
        let mut g = Grid::zeros(origin, w, h);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for i in 0..w {
            let x = origin.0 + i as i64;
            rng.set_stream(x as u64);
            rng.set_word_pos(4 * (origin.1 + Y_SHIFT) as u128);
            for j in 0..h {
                g.data[[i, j]] = box_muller(&mut rng);
            }
        }
        g
    }

    pub fn value(&self, s: Site) -> f64 {
        self.grid(s, 1, 1).data[[0, 0]]
    }
}

fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// A realization of `α` on `Q_l = [0, l)²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomField {
    pub alpha: Grid,
    pub seed: u64,
    pub generator: String,
}

/// `l × l` standard normals keyed by `(seed, site)`.
pub fn sample_alpha(seed: u64, l: usize) -> RandomField {
    RandomField { alpha: AlphaSource::new(seed).grid((0, 0), l, l), seed, generator: GENERATOR_ID.into() }
}

/// Boundary condition, side, mass and strength of a resolvent field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventSpec {
    pub bc: Bc,
    pub l: usize,
    pub lambda: f64,
    pub epsilon: f64,
}

impl ResolventSpec {
    pub fn new(bc: Bc, l: usize, lambda: f64, epsilon: f64) -> Result<Self> {
        let s = Self { bc, l, lambda, epsilon };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        if !self.l.is_power_of_two() {
            return param(format!("side {} is not a power of two", self.l));
        }
        if !(self.lambda > 0.0) {
            return param(format!("mass {} must be positive", self.lambda));
        }
        if !(self.epsilon > 0.0) {
            return param(format!("epsilon {} must be positive", self.epsilon));
        }
        Ok(())
    }

    /// Number of the outermost annulus, `⌈log₂(l+1)⌉`.
    pub fn max_shell(&self) -> usize {
        (usize::BITS - self.l.leading_zeros()) as usize
    }
}

/// Orthonormal separable eigenbasis of `−Δ^{bc}` on `Q_l` and the
/// annulus index of every mode. Build once per `ResolventSpec` and share.
#[derive(Clone, Debug)]
pub struct Spectral {
    pub spec: ResolventSpec,
    /// `phi[[j, x]]`: 1D eigenvector `j` at site `x`.
    pub phi: Array2<f64>,
    /// 1D frequencies `k_j`.
    pub k: Vec<f64>,
    /// 1D eigenvalues `4 sin²(k_j/2)`.
    pub mu: Vec<f64>,
    /// `shell[[j1, j2]]`: annulus of mode `(j1, j2)`.
    pub shell: Array2<usize>,
}

impl Spectral {
    pub fn new(spec: ResolventSpec) -> Result<Self> {
        spec.check()?;
        let l = spec.l;
        let (phi, k, c) = match spec.bc {
            Bc::D => {
                let norm = (2.0 / (l as f64 + 1.0)).sqrt();
                let k: Vec<f64> = (1..=l).map(|j| PI * j as f64 / (l as f64 + 1.0)).collect();
                let phi = Array2::from_shape_fn((l, l), |(j, x)| norm * (k[j] * (x as f64 + 1.0)).sin());
                (phi, k, l as u64 + 1)
            }
            Bc::N => {
                let k: Vec<f64> = (0..l).map(|j| PI * j as f64 / l as f64).collect();
                let phi = Array2::from_shape_fn((l, l), |(j, x)| {
                    let norm = if j == 0 { (1.0 / l as f64).sqrt() } else { (2.0 / l as f64).sqrt() };
                    norm * (k[j] * (x as f64 + 0.5)).cos()
                });
                (phi, k, l as u64)
            }
        };
        let mu = k.iter().map(|&kj| 4.0 * (kj / 2.0).sin().powi(2)).collect();
        // Integer index of k_j in units of π/c.
        let idx = |j: usize| match spec.bc {
            Bc::D => j as u64 + 1,
            Bc::N => j as u64,
        };
        let top = spec.max_shell();
        let shell = Array2::from_shape_fn((l, l), |(a, b)| {
            let n = idx(a).pow(2) + idx(b).pow(2);
            shell_of(n, c, top)
        });
        Ok(Self { spec, phi, k, mu, shell })
    }

    pub fn zeta(&self, j1: usize, j2: usize) -> f64 {
        self.mu[j1] + self.mu[j2]
    }

    /// `α̂ = Φ α Φᵀ`.
    pub fn forward(&self, a: &Array2<f64>) -> Array2<f64> {
        self.phi.dot(a).dot(&self.phi.t())
    }

    /// `Φᵀ â Φ`.
    pub fn inverse(&self, a: &Array2<f64>) -> Array2<f64> {
        self.phi.t().dot(a).dot(&self.phi)
    }

    fn check_shape(&self, a: &Grid) -> Result<()> {
        if a.width() != self.spec.l || a.height() != self.spec.l {
            return Err(Error::Domain(format!(
                "field of shape {}x{} does not match side {}",
                a.width(),
                a.height(),
                self.spec.l
            )));
        }
        Ok(())
    }

    /// `g = ε(−Δ^{bc} + λ)⁻¹α`, located at the origin of `alpha`.
    pub fn solve(&self, alpha: &Grid) -> Result<Grid> {
        self.check_shape(alpha)?;
        let mut h = self.forward(&alpha.data);
        let lam = self.spec.lambda;
        h.indexed_iter_mut().for_each(|((a, b), v)| *v /= self.zeta(a, b) + lam);
        let mut g = self.inverse(&h);
        g.mapv_inplace(|v| v * self.spec.epsilon);
        Ok(Grid { origin: alpha.origin, data: g })
    }

    /// `ḡ_{A_s} = Σ_{k∈A_s} φ_k α̂_k / (ζ_k + λ)`, without the factor `ε`.
    pub fn annulus_project(&self, alpha: &Grid, s: usize) -> Result<Grid> {
        self.check_shape(alpha)?;
        if s > self.spec.max_shell() {
            return Err(Error::Domain(format!("annulus {s} out of range")));
        }
        let mut h = self.forward(&alpha.data);
        let lam = self.spec.lambda;
        h.indexed_iter_mut().for_each(|((a, b), v)| {
            *v = if self.shell[[a, b]] == s { *v / (self.zeta(a, b) + lam) } else { 0.0 };
        });
        Ok(Grid { origin: alpha.origin, data: self.inverse(&h) })
    }

    /// `Σ_{k∈A_s} φ_k(x)² / (ζ_k + λ)²`.
    pub fn annulus_variance(&self, s: usize, x: Site) -> f64 {
        let (i, j) = (x.0 as usize, x.1 as usize);
        let lam = self.spec.lambda;
        let mut v = 0.0;
        for ((a, b), &sh) in self.shell.indexed_iter() {
            if sh == s {
                let e = self.phi[[a, i]] * self.phi[[b, j]];
                v += e * e / (self.zeta(a, b) + lam).powi(2);
            }
        }
        v
    }

    /// `Σ_{k∈A_s} (φ_k(x) − φ_k(y))² / (ζ_k + λ)²`.
    pub fn pair_increment_variance(&self, s: usize, x: Site, y: Site) -> f64 {
        let lam = self.spec.lambda;
        let mut v = 0.0;
        for ((a, b), &sh) in self.shell.indexed_iter() {
            if sh == s {
                let ex = self.phi[[a, x.0 as usize]] * self.phi[[b, x.1 as usize]];
                let ey = self.phi[[a, y.0 as usize]] * self.phi[[b, y.1 as usize]];
                v += (ex - ey).powi(2) / (self.zeta(a, b) + lam).powi(2);
            }
        }
        v
    }

    /// All modes in order `(j1, j2)`.
    pub fn eigen_pairs(&self) -> Vec<EigenPair> {
        let l = self.spec.l;
        let mut out = Vec::with_capacity(l * l);
        for a in 0..l {
            for b in 0..l {
                let v = Array2::from_shape_fn((l, l), |(x, y)| self.phi[[a, x]] * self.phi[[b, y]]);
                out.push(EigenPair { index: (a, b), k: (self.k[a], self.k[b]), zeta: self.zeta(a, b), vector: v });
            }
        }
        out
    }
}

/// Annulus of a mode with `‖k‖ = (π/c)√n`: the `s` with `π/2^{s+1} ≤ ‖k‖ < π/2ˢ`,
/// where `s = 0` also takes everything above `π` and `k = 0` goes to `top`.
fn shell_of(n: u64, c: u64, top: usize) -> usize {
    if n == 0 {
        return top;
    }
    let c2 = (c as u128).pow(2);
    let mut s = 0usize;
    // ‖k‖ < π/2^{s+1}  ⇔  4^{s+1}·n < c²
    while s < top && (4u128.pow(s as u32 + 1)) * (n as u128) < c2 {
        s += 1;
    }
    s
}

/// One eigenmode of `−Δ^{bc}`; `vector[[x, y]]` has unit ℓ² norm.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub index: (usize, usize),
    pub k: (f64, f64),
    pub zeta: f64,
    pub vector: Array2<f64>,
}

pub fn eigen_pairs(spec: ResolventSpec) -> Result<Vec<EigenPair>> {
    Ok(Spectral::new(spec)?.eigen_pairs())
}

/// `4 Σ sin²(k_i/2)`, evaluated as `2((2 − cos k₁) − cos k₂)`; this order
/// rounds to exactly 4 at `(π/2, π/2)` and to 0 at the origin.
pub fn zeta_of(k: (f64, f64)) -> f64 {
    2.0 * ((2.0 - k.0.cos()) - k.1.cos())
}

/// Applies `−Δ^{bc} + λ` to a grid on a square.
pub fn apply_operator(g: &Array2<f64>, bc: Bc, lambda: f64) -> Array2<f64> {
    let (w, h) = g.dim();
    Array2::from_shape_fn((w, h), |(i, j)| {
        let c = g[[i, j]];
        let mut v = lambda * c;
        for (dx, dy) in NN4 {
            let (a, b) = (i as i64 + dx, j as i64 + dy);
            if a >= 0 && b >= 0 && (a as usize) < w && (b as usize) < h {
                v += c - g[[a as usize, b as usize]];
            } else if bc == Bc::D {
                v += c;
            }
        }
        v
    })
}

/// `m_x = Σ_{y∼x} (g_x − g_y)²`: zero extension for `D`, internal neighbours for `N`.
pub fn local_mass(g: &Grid, bc: Bc) -> Grid {
    let (w, h) = g.data.dim();
    let data = Array2::from_shape_fn((w, h), |(i, j)| {
        let c = g.data[[i, j]];
        let mut m = 0.0;
        for (dx, dy) in NN4 {
            let (a, b) = (i as i64 + dx, j as i64 + dy);
            if a >= 0 && b >= 0 && (a as usize) < w && (b as usize) < h {
                m += (c - g.data[[a as usize, b as usize]]).powi(2);
            } else if bc == Bc::D {
                m += c * c;
            }
        }
        m
    });
    Grid { origin: g.origin, data }
}

/// Dirichlet energy of a real field on its square: `ℰ_Q(g|0)` for `D`,
/// internal edges only for `N`.
pub fn field_energy(g: &Array2<f64>, bc: Bc) -> f64 {
    let (w, h) = g.dim();
    let mut e = 0.0;
    for i in 0..w {
        for j in 0..h {
            let c = g[[i, j]];
            if i + 1 < w {
                e += (c - g[[i + 1, j]]).powi(2);
            }
            if j + 1 < h {
                e += (c - g[[i, j + 1]]).powi(2);
            }
            if bc == Bc::D {
                let open = (i == 0) as u32 + (i + 1 == w) as u32 + (j == 0) as u32 + (j + 1 == h) as u32;
                e += open as f64 * c * c;
            }
        }
    }
    e
}

/// Largest `|g_x − g_y|` over internal edges.
pub fn gradient_sup(g: &Array2<f64>) -> f64 {
    let (w, h) = g.dim();
    let mut m = 0.0f64;
    for i in 0..w {
        for j in 0..h {
            if i + 1 < w {
                m = m.max((g[[i, j]] - g[[i + 1, j]]).abs());
            }
            if j + 1 < h {
                m = m.max((g[[i, j]] - g[[i, j + 1]]).abs());
            }
        }
    }
    m
}

/// A resolvent field with its local masses and generation metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub spec: ResolventSpec,
    pub g: Grid,
    pub m: Grid,
    pub seed: Option<u64>,
    pub generator: String,
    /// `‖(−Δ^{bc}+λ)g − εα‖∞`.
    pub residual: f64,
}

impl FieldSample {
    /// Writes `<stem>.g.bin`, `<stem>.m.bin` and `<stem>.json` into `dir`.
    pub fn export(&self, dir: &std::path::Path, stem: &str) -> Result<()> {
        let mut g = self.g.clone();
        let mut m = self.m.clone();
        g.origin = (0, 0);
        m.origin = (0, 0);
        g.write_binary(std::fs::File::create(dir.join(format!("{stem}.g.bin")))?)?;
        m.write_binary(std::fs::File::create(dir.join(format!("{stem}.m.bin")))?)?;
        let meta = serde_json::json!({
            "spec": self.spec,
            "origin": [self.g.origin.0, self.g.origin.1],
            "seed": self.seed,
            "generator": self.generator,
            "residual": self.residual,
            "sup_g": self.g.sup_norm(),
        });
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}

/// Solves for `g`, checks the residual and attaches the local masses.
pub fn resolvent_apply_with(sp: &Spectral, alpha: &RandomField) -> Result<FieldSample> {
    let g = sp.solve(&alpha.alpha)?;
    let spec = sp.spec;
    let lhs = apply_operator(&g.data, spec.bc, spec.lambda);
    let residual = lhs
        .iter()
        .zip(alpha.alpha.data.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - spec.epsilon * b).abs()));
    let tol = 1e-10 * spec.epsilon * alpha.alpha.sup_norm().max(f64::MIN_POSITIVE);
    if residual > tol {
        return Err(Error::Numerical(format!("resolvent residual {residual:e} above {tol:e}")));
    }
    let m = local_mass(&g, spec.bc);
    Ok(FieldSample { spec, g, m, seed: Some(alpha.seed), generator: alpha.generator.clone(), residual })
}

pub fn resolvent_apply(spec: ResolventSpec, alpha: &RandomField) -> Result<FieldSample> {
    resolvent_apply_with(&Spectral::new(spec)?, alpha)
}

pub fn annulus_project(spec: ResolventSpec, alpha: &Grid, s: usize) -> Result<Grid> {
    Spectral::new(spec)?.annulus_project(alpha, s)
}

pub fn exact_annulus_variance(spec: ResolventSpec, s: usize, x: Site) -> Result<f64> {
    Ok(Spectral::new(spec)?.annulus_variance(s, x))
}

pub fn pair_increment_variance(spec: ResolventSpec, s: usize, x: Site, y: Site) -> Result<f64> {
    Ok(Spectral::new(spec)?.pair_increment_variance(s, x, y))
}

/// `ℰ(g^D | 0) − ℰ(g^N)` for fields generated from the same `α`.
pub fn energy_diff_dn(alpha: &Grid, d: &Spectral, n: &Spectral) -> Result<f64> {
    let gd = d.solve(alpha)?;
    let gn = n.solve(alpha)?;
    Ok(field_energy(&gd.data, Bc::D) - field_energy(&gn.data, Bc::N))
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let d = h * XGK[i];
        let s = f(c - d) + f(c + d);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss-Kronrod quadrature to relative tolerance `rel`.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, rel: f64) -> Result<f64> {
    let mut parts = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    for _ in 0..10_000 {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= rel * total.abs() {
            return Ok(total);
        }
        let worst = (0..parts.len()).max_by(|&i, &j| parts[i].3.total_cmp(&parts[j].3)).unwrap();
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
    Err(Error::Numerical("adaptive quadrature did not converge".into()))
}

/// `ζ̄₂² = ∫_{[0,π]²} (‖k‖² + λ)⁻² d²k` by iterated adaptive quadrature.
pub fn zeta_bar_sq(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return param(format!("mass {lambda} must be positive"));
    }
    let mut inner_err = None;
    let v = integrate(
        |k1| {
            let a = k1 * k1 + lambda;
            match integrate(|k2| (a + k2 * k2).powi(-2), 0.0, PI, 1e-11) {
                Ok(v) => v,
                Err(e) => {
                    inner_err = Some(e);
                    0.0
                }
            }
        },
        0.0,
        PI,
        1e-10,
    )?;
    match inner_err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// One row of a tail table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub m: f64,
    pub count: u64,
    pub total: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Wilson score interval at `z`.
pub fn wilson(count: u64, total: u64, z: f64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let n = total as f64;
    let p = count as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Empirical `P(‖g‖∞ ≥ M ε ζ̄₂)` over `samples` fields with seeds `seed0..`.
pub fn sup_tail_experiment(spec: ResolventSpec, ms: &[f64], samples: u64, seed0: u64) -> Result<Vec<TailRow>> {
    if samples < 1000 {
        return param("tail experiments need at least 1000 samples");
    }
    let sp = Spectral::new(spec)?;
    let zb = zeta_bar_sq(spec.lambda)?.sqrt();
    let mut counts = vec![0u64; ms.len()];
    for i in 0..samples {
        let a = AlphaSource::new(seed0.wrapping_add(i)).grid((0, 0), spec.l, spec.l);
        let sup = sp.solve(&a)?.sup_norm();
        for (c, &m) in counts.iter_mut().zip(ms) {
            if sup >= m * spec.epsilon * zb {
                *c += 1;
            }
        }
    }
    Ok(ms
        .iter()
        .zip(counts)
        .map(|(&m, count)| {
            let (ci_lo, ci_hi) = wilson(count, samples, 1.96);
            TailRow { m, count, total: samples, p_hat: count as f64 / samples as f64, ci_lo, ci_hi }
        })
        .collect())
}

/// CSV with header `M,count,total,p_hat,ci_lo,ci_hi`.
pub fn tail_csv(rows: &[TailRow]) -> String {
    let mut s = String::from("M,count,total,p_hat,ci_lo,ci_hi\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            crate::harness::fmt17(r.m),
            r.count,
            r.total,
            crate::harness::fmt17(r.p_hat),
            crate::harness::fmt17(r.ci_lo),
            crate::harness::fmt17(r.ci_hi)
        );
    }
    s
}
