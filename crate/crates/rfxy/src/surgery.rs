//! Boundary surgery on a contour: the change of variables around the
//! resolvent field, the transformed functional `𝒦` and its maximizer, the
//! reference configuration `σ̄`, Modifications 1–4, the gluing map `S^±_Γ`
//! and the energy gap it produces.
//!
//! Angles are stored as `Grid`s over `Λ_N`. Sites outside `Λ_N` carry the
//! ambient angle of [`SurgeryConfig::outside_angle`] (0, i.e. `e₁`, unless a
//! test reflects the whole problem).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::classify::{classify_box, CleanConstants, FieldProvider};
use crate::coarse::{contour_regions, linf_distance, surgery_block_side, Contour, ContourRegions, ContourSign, PhaseField};
use crate::error::{domain, Error, Result};
use crate::field::{field_energy, local_mass, Bc, ResolventSpec, Spectral};
use crate::grid::Grid;
use crate::lattice::{
    boundary, decompose_complement, site_components, Ambient, BlockGrid, LatticeGeom, Region, Side, Site, NN4,
};
use crate::spin::{wrap_angle, ModelParams, SpinConfig};

/// Half-width of the window in which `𝒦` is convex.
pub const WINDOW: f64 = PI / 5.0;

/// `θ ↦ π − θ`: reflection across the `e₂` axis.
pub fn reflect(theta: f64) -> f64 {
    wrap_angle(PI - theta)
}

fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        let u2 = u * u;
        1.0 - u2 / 6.0 + u2 * u2 / 120.0
    } else {
        u.sin() / u
    }
}

fn neighbours((x, y): Site) -> [Site; 4] {
    NN4.map(|(dx, dy)| (x + dx, y + dy))
}

// ---------------------------------------------------------------------------
// Change of variables

/// `φ_x = θ_x − cos(θ_x) g_x` on the domain of `g`.
pub fn cov_forward(theta: &Grid, g: &Grid) -> Result<Grid> {
    let mut out = g.clone();
    for s in g.domain().iter() {
        let t = theta.get(s).ok_or_else(|| Error::Domain(format!("angle missing at {s:?}")))?;
        out.set(s, t - t.cos() * g.at(s));
    }
    Ok(out)
}

/// Solves `θ − cos(θ) g = φ` for one site; needs `|g| < 1`.
pub fn cov_inverse_scalar(phi: f64, g: f64) -> f64 {
    // The root lies in [φ − |g|, φ + |g|] and the map is increasing there.
    let (mut lo, mut hi) = (phi - g.abs(), phi + g.abs());
    let f = |t: f64| t - t.cos() * g - phi;
    let mut t = phi + g * phi.cos();
    for _ in 0..100 {
        let r = f(t);
        if r.abs() <= 1e-15 * (1.0 + phi.abs()) {
            break;
        }
        if r > 0.0 {
            hi = hi.min(t);
        } else {
            lo = lo.max(t);
        }
        let next = t - r / (1.0 + t.sin() * g);
        t = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    t
}

/// Inverse of [`cov_forward`] by safeguarded Newton per site.
pub fn cov_inverse(phi: &Grid, g: &Grid) -> Result<Grid> {
    let sup = g.sup_norm();
    if sup >= 1.0 {
        return domain(format!("change of variables needs ‖g‖∞ < 1, got {sup}"));
    }
    let mut out = g.clone();
    for s in g.domain().iter() {
        let p = phi.get(s).ok_or_else(|| Error::Domain(format!("angle missing at {s:?}")))?;
        out.set(s, cov_inverse_scalar(p, g.at(s)));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// The functional 𝒦

#[derive(Clone, Copy, Debug, PartialEq)]
enum Nb {
    In(usize),
    Out(f64),
}

/// Region, masses and boundary angles of `−𝒦_R(·|τ)`.
#[derive(Clone, Debug)]
pub struct KSpec {
    pub sites: Vec<Site>,
    pub mass: Vec<f64>,
    /// `τ` on `∂ᵒR`; sites without an entry are free.
    pub boundary: BTreeMap<Site, f64>,
    nbrs: Vec<Vec<Nb>>,
}

impl KSpec {
    pub fn new(region: &Region, mass: impl Fn(Site) -> f64, boundary: BTreeMap<Site, f64>) -> Result<Self> {
        let sites: Vec<Site> = region.iter().collect();
        let index: HashMap<Site, usize> = sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut masses = Vec::with_capacity(sites.len());
        let mut nbrs = Vec::with_capacity(sites.len());
        for &s in &sites {
            let m = mass(s);
            if !(m >= 0.0 && m.is_finite()) {
                return domain(format!("mass {m} at {s:?}"));
            }
            masses.push(m);
            let mut v = Vec::with_capacity(4);
            for n in neighbours(s) {
                if let Some(&j) = index.get(&n) {
                    v.push(Nb::In(j));
                } else if let Some(&t) = boundary.get(&n) {
                    if !t.is_finite() {
                        return domain(format!("boundary angle {t} at {n:?}"));
                    }
                    v.push(Nb::Out(t));
                }
            }
            nbrs.push(v);
        }
        Ok(Self { sites, mass: masses, boundary, nbrs })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn boundary_sup(&self) -> f64 {
        self.boundary.values().fold(0.0f64, |m, t| m.max(t.abs()))
    }

    fn nb_angle(&self, phi: &[f64], nb: Nb) -> f64 {
        match nb {
            Nb::In(j) => phi[j],
            Nb::Out(t) => t,
        }
    }
}

/// `−𝒦_R(φ|τ) = Σ_{e∩R≠∅}[cos(∇_e φ) − 1] + ¼Σ_{x∈R} m_x cos²(φ_x)`.
pub fn k_energy(phi: &[f64], spec: &KSpec) -> f64 {
    let mut e = 0.0;
    for (i, nb) in spec.nbrs.iter().enumerate() {
        for &n in nb {
            match n {
                Nb::In(j) if j > i => e += (phi[i] - phi[j]).cos() - 1.0,
                Nb::In(_) => {}
                Nb::Out(t) => e += (phi[i] - t).cos() - 1.0,
            }
        }
        e += 0.25 * spec.mass[i] * phi[i].cos().powi(2);
    }
    e
}

/// Gradient of `−𝒦`: `−Σ_y sin(φ_x − φ_y) − ½ m_x sin φ_x cos φ_x`.
pub fn k_gradient(phi: &[f64], spec: &KSpec) -> Vec<f64> {
    (0..spec.len())
        .map(|i| {
            let s: f64 = spec.nbrs[i].iter().map(|&n| (phi[i] - spec.nb_angle(phi, n)).sin()).sum();
            -s - 0.5 * spec.mass[i] * phi[i].sin() * phi[i].cos()
        })
        .collect()
}

/// Hessian of `𝒦` as `(i, j, value)` triplets, diagonal included.
pub fn k_hessian(phi: &[f64], spec: &KSpec) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..spec.len() {
        let mut d = 0.5 * spec.mass[i] * (2.0 * phi[i]).cos();
        for &n in &spec.nbrs[i] {
            let c = (phi[i] - spec.nb_angle(phi, n)).cos();
            d += c;
            if let Nb::In(j) = n {
                out.push((i, j, -c));
            }
        }
        out.push((i, i, d));
    }
    out
}

fn hess_apply(phi: &[f64], spec: &KSpec, v: &[f64], out: &mut [f64]) {
    for i in 0..spec.len() {
        let mut acc = 0.5 * spec.mass[i] * (2.0 * phi[i]).cos() * v[i];
        for &n in &spec.nbrs[i] {
            let c = (phi[i] - spec.nb_angle(phi, n)).cos();
            acc += c * v[i];
            if let Nb::In(j) = n {
                acc -= c * v[j];
            }
        }
        out[i] = acc;
    }
}

/// Jacobi-preconditioned conjugate gradients for `H d = b`.
fn cg(phi: &[f64], spec: &KSpec, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let diag: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = 0.5 * spec.mass[i] * (2.0 * phi[i]).cos()
                + spec.nbrs[i].iter().map(|&m| (phi[i] - spec.nb_angle(phi, m)).cos()).sum::<f64>();
            if d > 1e-14 { d } else { 1.0 }
        })
        .collect();
    let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return x;
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut hp = vec![0.0; n];
    for _ in 0..(10 * n + 100) {
        hess_apply(phi, spec, &p, &mut hp);
        let php: f64 = p.iter().zip(&hp).map(|(a, b)| a * b).sum();
        if php <= 0.0 {
            break;
        }
        let a = rz / php;
        for i in 0..n {
            x[i] += a * p[i];
            r[i] -= a * hp[i];
        }
        if r.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= 1e-13 * bn {
            break;
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Result of [`maximize_k`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMax {
    pub nu: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Harmonic extension of the boundary angles by Gauss-Seidel, clamped to the window.
pub fn harmonic_start(spec: &KSpec) -> Vec<f64> {
    let mut phi = vec![0.0; spec.len()];
    for _ in 0..2000 {
        let mut change = 0.0f64;
        for i in 0..spec.len() {
            if spec.nbrs[i].is_empty() {
                continue;
            }
            let m: f64 = spec.nbrs[i].iter().map(|&n| spec.nb_angle(&phi, n)).sum::<f64>() / spec.nbrs[i].len() as f64;
            change = change.max((m - phi[i]).abs());
            phi[i] = m;
        }
        if change < 1e-12 {
            break;
        }
    }
    phi.iter().map(|v| v.clamp(-WINDOW, WINDOW)).collect()
}

/// The unique maximizer of `−𝒦_R(·|τ)` for `‖τ‖∞ ≤ π/5`, from the clamped
/// harmonic extension.
pub fn maximize_k(spec: &KSpec) -> Result<KMax> {
    maximize_k_from(spec, &harmonic_start(spec))
}

/// Projected damped Newton inside `[−π/5, π/5]^R`, where `𝒦` is convex.
pub fn maximize_k_from(spec: &KSpec, init: &[f64]) -> Result<KMax> {
    let tb = spec.boundary_sup();
    if tb > WINDOW + 1e-12 {
        return domain(format!("boundary angle {tb} exceeds π/5"));
    }
    if init.len() != spec.len() {
        return domain("initial angles do not match the region");
    }
    let scale = 1.0 + spec.mass.iter().sum::<f64>();
    let tol = 1e-10 * scale;
    let mut phi: Vec<f64> = init.iter().map(|v| v.clamp(-WINDOW, WINDOW)).collect();
    let mut f = k_energy(&phi, spec);
    let mut g = k_gradient(&phi, spec);
    for it in 0..500 {
        let gn = sup(&g);
        if gn <= tol {
            return Ok(KMax { nu: phi, value: f, grad_norm: gn, iterations: it });
        }
        let d = cg(&phi, spec, &g);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let trial: Vec<f64> = phi.iter().zip(&d).map(|(p, s)| (p + t * s).clamp(-WINDOW, WINDOW)).collect();
            let ft = k_energy(&trial, spec);
            let gain: f64 = trial.iter().zip(&phi).zip(&g).map(|((a, b), gg)| (a - b) * gg).sum();
            let gt = k_gradient(&trial, spec);
            if ft >= f + 1e-4 * gain || (t == 1.0 && sup(&gt) < gn) {
                phi = trial;
                f = ft;
                g = gt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // Projected gradient step as a fallback.
            let step = 1.0 / (4.0 + spec.mass.iter().fold(0.0f64, |m, v| m.max(*v)));
            phi = phi.iter().zip(&g).map(|(p, gg)| (p + step * gg).clamp(-WINDOW, WINDOW)).collect();
            f = k_energy(&phi, spec);
            g = k_gradient(&phi, spec);
        }
    }
    Err(Error::Numerical(format!(
        "maximize_k: no convergence after 500 iterations, |grad| = {:e}, tol = {tol:e}, {} sites",
        sup(&g),
        spec.len()
    )))
}

// ---------------------------------------------------------------------------
// Elliptic operator

/// Conductances `C_xy` per edge meeting `R` and potentials `V_x`.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipticOp {
    /// `(i, neighbour, C)`; internal edges appear from both endpoints.
    pub edges: Vec<(usize, Option<usize>, f64)>,
    pub potential: Vec<f64>,
}

/// `C_xy = sin(ν_x − ν_y)/(ν_x − ν_y)`, `V_x = sin ν_x cos ν_x m_x/(2ν_x)`.
pub fn assemble_elliptic(nu: &[f64], spec: &KSpec) -> Result<EllipticOp> {
    if sup(nu) > WINDOW + 1e-12 {
        return domain("ν outside the ellipticity window");
    }
    let mut edges = Vec::new();
    for i in 0..spec.len() {
        for &n in &spec.nbrs[i] {
            let c = sinc(nu[i] - spec.nb_angle(nu, n));
            edges.push((i, if let Nb::In(j) = n { Some(j) } else { None }, c));
        }
    }
    let potential = (0..spec.len()).map(|i| 0.5 * spec.mass[i] * sinc(2.0 * nu[i])).collect();
    Ok(EllipticOp { edges, potential })
}

/// `‖Σ_y C_xy(ν_x − ν_y) + V_x ν_x‖∞`, boundary `ν_y = τ_y`.
pub fn elliptic_residual(nu: &[f64], spec: &KSpec, op: &EllipticOp) -> f64 {
    let mut r: Vec<f64> = (0..spec.len()).map(|i| op.potential[i] * nu[i]).collect();
    let mut k = 0;
    for i in 0..spec.len() {
        for &n in &spec.nbrs[i] {
            let (_, _, c) = op.edges[k];
            r[i] += c * (nu[i] - spec.nb_angle(nu, n));
            k += 1;
        }
    }
    sup(&r)
}

// ---------------------------------------------------------------------------
// Hamiltonian on angle grids

/// `−ℋ_R(θ|τ)` with `τ` read from `theta` inside its domain and equal to
/// `outside` beyond it; `None` drops those edges.
pub fn minus_h(theta: &Grid, region: &Region, alpha: &Grid, epsilon: f64, outside: Option<f64>) -> Result<f64> {
    let mut e = 0.0;
    for s in region.iter() {
        let t = theta.get(s).ok_or_else(|| Error::Domain(format!("angle missing at {s:?}")))?;
        for n in neighbours(s) {
            if region.contains(n) {
                if n > s {
                    e += (t - theta.at(n)).cos() - 1.0;
                }
            } else if let Some(u) = theta.get(n).or(outside) {
                e += (t - u).cos() - 1.0;
            }
        }
        let a = alpha.get(s).ok_or_else(|| Error::Domain(format!("alpha missing at {s:?}")))?;
        e += epsilon * a * t.sin();
    }
    Ok(e)
}

/// `ℰ_R(θ|τ)`: `‖σ_x − σ_y‖²` over edges meeting `R`, same boundary rule as [`minus_h`].
pub fn energy_meeting(theta: &Grid, region: &Region, outside: Option<f64>) -> f64 {
    let mut e = 0.0;
    for s in region.iter() {
        let t = theta.at(s);
        for n in neighbours(s) {
            if region.contains(n) {
                if n > s {
                    e += 2.0 - 2.0 * (t - theta.at(n)).cos();
                }
            } else if let Some(u) = theta.get(n).or(outside) {
                e += 2.0 - 2.0 * (t - u).cos();
            }
        }
    }
    e
}

/// The terms of the change-of-variables identity on a square `Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovDecomposition {
    /// `−ℋ_Q(σ|τ)`.
    pub minus_h: f64,
    /// `−𝒦_Q(θ′|τ)`.
    pub minus_k: f64,
    /// `½ Σ_{x∈∂ⁱQ, y∈∂ᵒQ} (g_x − g_y) e₂·τ_y` with `g_y = 0`.
    pub boundary_term: f64,
    /// `−ℋ − (−𝒦 + boundary term)`.
    pub error: f64,
    /// `‖g‖∞(ℰ_Q(σ|τ) + ℰ_Q(g|0) + λ|Q|)`.
    pub scale: f64,
}

/// `theta` on `Q` (the domain of `g`), `tau` on `∂ᵒQ`, `g = g^D_Q`.
pub fn cov_decomposition(
    theta: &Grid,
    tau: &BTreeMap<Site, f64>,
    g: &Grid,
    alpha: &Grid,
    epsilon: f64,
    lambda: f64,
) -> Result<CovDecomposition> {
    let q = g.domain();
    let mut ext = Grid::zeros((g.origin.0 - 1, g.origin.1 - 1), g.width() + 2, g.height() + 2);
    for s in ext.domain().iter() {
        let v = if q.contains(s) {
            theta.get(s).ok_or_else(|| Error::Domain(format!("angle missing at {s:?}")))?
        } else {
            tau.get(&s).copied().unwrap_or(f64::NAN)
        };
        ext.set(s, v);
    }
    let mut h = 0.0;
    for s in q.iter() {
        let t = ext.at(s);
        for n in neighbours(s) {
            let u = ext.at(n);
            if q.contains(n) {
                if n > s {
                    h += (t - u).cos() - 1.0;
                }
            } else if u.is_finite() {
                h += (t - u).cos() - 1.0;
            }
        }
        h += epsilon * alpha.at(s) * t.sin();
    }
    let phi = cov_forward(theta, g)?;
    let m = local_mass(g, Bc::D);
    let spec = KSpec::new(&q, |s| m.at(s), tau.clone())?;
    let phis: Vec<f64> = spec.sites.iter().map(|&s| phi.at(s)).collect();
    let k = k_energy(&phis, &spec);
    let mut bt = 0.0;
    for s in q.iter() {
        for n in neighbours(s) {
            if !q.contains(n) {
                if let Some(t) = tau.get(&n) {
                    bt += 0.5 * g.at(s) * t.sin();
                }
            }
        }
    }
    let mut es = 0.0;
    for s in q.iter() {
        for n in neighbours(s) {
            let u = ext.at(n);
            if q.contains(n) && n > s || !q.contains(n) && u.is_finite() {
                es += 2.0 - 2.0 * (ext.at(s) - u).cos();
            }
        }
    }
    let scale = g.sup_norm() * (es + field_energy(&g.data, Bc::D) + lambda * q.len() as f64);
    Ok(CovDecomposition { minus_h: h, minus_k: k, boundary_term: bt, error: h - (k + bt), scale })
}

// ---------------------------------------------------------------------------
// Reference configuration

/// `σ̄` on the boxes meeting a region: `θ = g^D_Q` on clean boxes, `0` on
/// dirty ones, reflected for a minus orientation.
#[derive(Clone, Debug)]
pub struct ReferenceConfig {
    pub theta: Grid,
    pub region: Region,
    pub box_side: usize,
    pub clean_boxes: usize,
    pub dirty_boxes: usize,
}

/// Side of the boxes carrying the reference configuration: `ℓ/2`, at least 2.
pub fn reference_box_side(params: &ModelParams) -> usize {
    (params.ell() / 2).max(2) as usize
}

pub fn reference_config(
    region: &Region,
    sign: i8,
    geom: &LatticeGeom,
    provider: &mut FieldProvider,
    consts: &CleanConstants,
    params: &ModelParams,
) -> Result<ReferenceConfig> {
    let side = reference_box_side(params);
    let grid = BlockGrid::new(side as i64)?;
    let n = geom.side();
    let base = if sign >= 0 { 0.0 } else { PI };
    let mut theta = Grid::from_fn((0, 0), n, n, |_| base);
    let mut covered = Region::new();
    let (mut clean, mut dirty) = (0, 0);
    let sp = Spectral::new(ResolventSpec::new(Bc::D, side, params.lambda(), params.epsilon)?)?;
    for idx in grid.cover(region).idx {
        let a = grid.anchor(idx);
        let rep = classify_box(provider, a, side, consts, params)?;
        let g = if rep.xi == 1 {
            clean += 1;
            Some(sp.solve(&provider.source.grid(a, side, side))?)
        } else {
            dirty += 1;
            None
        };
        for s in grid.block(idx).iter().filter(|&s| geom.contains(s)) {
            let t = g.as_ref().map_or(0.0, |g| g.at(s));
            theta.set(s, if sign >= 0 { t } else { reflect(t) });
            covered.insert(s);
        }
    }
    Ok(ReferenceConfig { theta, region: covered, box_side: side, clean_boxes: clean, dirty_boxes: dirty })
}

// ---------------------------------------------------------------------------
// Defect hull and Modification 1

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectHull {
    pub region: Region,
    /// `𝔄 ∪ ∂ᵒ𝔄 ⊆ {dist(·, R) ≤ 3ℓ}` (ℓ∞ distance).
    pub within_bound: bool,
}

fn e1_component(theta: &Grid, s: Site, outside: f64) -> f64 {
    theta.get(s).unwrap_or(outside).cos()
}

/// Smallest superset of `r` whose outer boundary has `sign·(σ·e₁) ≥ 9/10`.
///
/// Every boundary site violating the condition must belong to any valid
/// superset, so adding violators until none remain yields the minimum.
pub fn defect_hull(r: &Region, theta: &Grid, sign: i8, outside: f64, ell: i64) -> Result<DefectHull> {
    let dom = theta.domain();
    let mut hull = r.clone();
    loop {
        let bad: Vec<Site> = boundary(&hull, Side::Outer)
            .iter()
            .filter(|&s| sign as f64 * e1_component(theta, s, outside) < 0.9)
            .collect();
        if bad.is_empty() {
            break;
        }
        for s in bad {
            if !dom.contains(s) {
                return Err(Error::Domain(format!("defect hull needs the ambient site {s:?}")));
            }
            hull.insert(s);
        }
    }
    let shell = hull.union(&boundary(&hull, Side::Outer));
    let dist = linf_distance(r, &shell);
    let within_bound = dist.values().all(|&d| d <= 3 * ell);
    Ok(DefectHull { region: hull, within_bound })
}

/// Reflects spins with the wrong `e₁` sign on `a_plus` and `a_minus`.
pub fn mod1_flip(theta: &Grid, a_plus: &Region, a_minus: &Region) -> Grid {
    let mut out = theta.clone();
    for s in a_plus.iter() {
        if let Some(t) = theta.get(s) {
            if t.cos() < 0.0 {
                out.set(s, reflect(t));
            }
        }
    }
    for s in a_minus.iter().filter(|&s| !a_plus.contains(s)) {
        if let Some(t) = theta.get(s) {
            if t.cos() > 0.0 {
                out.set(s, reflect(t));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Modification 2

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mod2Sets {
    pub dirty: Region,
    pub dirty_plus: Region,
    pub dirty_minus: Region,
    pub nbhd_plus: Region,
    pub nbhd_minus: Region,
}

/// `τ(x) = dist(x, D)/b ∧ 1`.
fn taper(dist: i64, b: i64) -> f64 {
    (dist as f64 / b as f64).min(1.0)
}

/// Tapers angles towards `±e₁` near dirty boxes. Fails when a tapered
/// angle lies outside `[−π/3, π/3]` (plus side) or `[2π/3, 4π/3]` (minus).
pub fn mod2_taper(theta: &Grid, sets: &Mod2Sets, b: i64) -> Result<Grid> {
    let mut out = theta.clone();
    let dom = theta.domain();
    for (d, nbhd, plus) in [(&sets.dirty_plus, &sets.nbhd_plus, true), (&sets.dirty_minus, &sets.nbhd_minus, false)] {
        if d.is_empty() {
            continue;
        }
        let dist = linf_distance(d, &nbhd.intersection(&dom));
        for (s, dd) in dist {
            if plus && sets.nbhd_minus.contains(s) && !sets.nbhd_plus.contains(s) {
                continue;
            }
            let tau = taper(dd, b);
            if tau >= 1.0 {
                continue;
            }
            let t = theta.at(s);
            let rep = if plus { wrap_angle(t) } else { wrap_angle(t - PI) };
            if tau > 0.0 && rep.abs() > PI / 3.0 + 1e-12 {
                return Err(Error::Domain(format!("angle {t} at {s:?} outside the taper window")));
            }
            out.set(s, if plus { tau * rep } else { tau * rep + PI });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Modification 3

/// One relaxation step on a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mod3Step {
    pub anchor: Site,
    pub side: usize,
    pub sign: i8,
    pub relaxed_sites: usize,
    /// `ℰ_Q(σ̄⁽ⁱ⁾|σ̄⁽ⁱ⁻¹⁾)`.
    pub energy_after: f64,
    /// `ℰ_Q(σ̄⁽ⁱ⁻¹⁾|σ̄⁽ⁱ⁻¹⁾)`.
    pub energy_before: f64,
    /// `ℰ_Q(g^D|0)`.
    pub field_energy: f64,
    pub inequality_holds: bool,
    /// Change of `−ℋ_{Λ_N}`.
    pub delta_minus_h: f64,
    pub k_grad_norm: f64,
    pub elliptic_residual: f64,
}

/// Change of variables, maximization of `−𝒦` on the admissible part of
/// the box, inverse transform. `theta` is updated in place.
pub fn mod3_step(
    theta: &mut Grid,
    anchor: Site,
    side: usize,
    sign: i8,
    provider: &mut FieldProvider,
    alpha: &Grid,
    epsilon: f64,
    outside: f64,
) -> Result<Mod3Step> {
    let q = Region::square(anchor, side as i64);
    let dom = theta.domain();
    if !q.is_subset(&dom) {
        return domain(format!("box at {anchor:?} leaves the lattice"));
    }
    let sample = provider.sample(anchor, side, Bc::D)?;
    let g = sample.g;
    if g.sup_norm() >= 1.0 {
        return domain(format!("‖g‖∞ ≥ 1 on box {anchor:?}"));
    }
    let frame = |t: f64| if sign >= 0 { wrap_angle(t) } else { reflect(t) };
    let ring = boundary(&q, Side::Outer);
    let angle = |s: Site| theta.get(s).unwrap_or(outside);
    let mut local: BTreeMap<Site, f64> = BTreeMap::new();
    for s in q.iter().chain(ring.iter()) {
        local.insert(s, frame(angle(s)));
    }
    let mut phi = local.clone();
    for s in q.iter() {
        let t = local[&s];
        phi.insert(s, t - t.cos() * g.at(s));
    }
    let mut r = q.clone();
    loop {
        let bad: Vec<Site> =
            boundary(&r, Side::Outer).iter().filter(|s| phi.get(s).is_some_and(|p| p.abs() > WINDOW)).collect();
        if bad.is_empty() {
            break;
        }
        for b in bad {
            for n in neighbours(b) {
                r.remove(n);
            }
        }
    }
    let before_h = minus_h(theta, &dom, alpha, epsilon, Some(outside))?;
    let e_before = energy_meeting(theta, &q, Some(outside));
    let mut grad_norm = 0.0;
    let mut resid = 0.0;
    if !r.is_empty() {
        let bnd: BTreeMap<Site, f64> = boundary(&r, Side::Outer).iter().map(|s| (s, phi[&s])).collect();
        let spec = KSpec::new(&r, |s| sample.m.at(s), bnd)?;
        let sol = maximize_k(&spec)?;
        grad_norm = sol.grad_norm;
        resid = elliptic_residual(&sol.nu, &spec, &assemble_elliptic(&sol.nu, &spec)?);
        for (s, v) in spec.sites.iter().zip(&sol.nu) {
            phi.insert(*s, *v);
        }
        for s in q.iter() {
            let t = cov_inverse_scalar(phi[&s], g.at(s));
            theta.set(s, if sign >= 0 { t } else { reflect(t) });
        }
    }
    let e_after = energy_meeting(theta, &q, Some(outside));
    let fe = field_energy(&g.data, Bc::D);
    let after_h = minus_h(theta, &dom, alpha, epsilon, Some(outside))?;
    Ok(Mod3Step {
        anchor,
        side,
        sign,
        relaxed_sites: r.len(),
        energy_after: e_after,
        energy_before: e_before,
        field_energy: fe,
        inequality_holds: e_after <= 2.0 * (e_before + fe) + 1e-12 * (1.0 + e_before + fe),
        delta_minus_h: after_h - before_h,
        k_grad_norm: grad_norm,
        elliptic_residual: resid,
    })
}

/// Squares of `𝒬*_b` inside `g`, row-major by anchor.
fn half_shift_boxes(g: &Region, b: i64) -> Vec<Site> {
    let h = (b / 2).max(1);
    let Some(((x0, y0), (x1, y1))) = g.bbox() else { return vec![] };
    let mut out = Vec::new();
    let (ax0, ay0) = (x0.div_euclid(h) * h, y0.div_euclid(h) * h);
    let mut y = ay0;
    while y <= y1 {
        let mut x = ax0;
        while x <= x1 {
            if g.contains_square((x, y), b) {
                out.push((x, y));
            }
            x += h;
        }
        y += h;
    }
    out
}

// ---------------------------------------------------------------------------
// Modification 4

/// Layer decomposition of the middle strip and the selected layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layers {
    pub layers: Vec<Region>,
    pub energies: Vec<f64>,
    pub selected: usize,
    pub mid: Region,
    /// `ℰ_𝔐(σ⁽³⁾)/|𝔐|` in units of `ε²|log ε|^{1+χ}`.
    pub implied_constant: f64,
}

/// Concentric distance bands of `middle` (distance to `∂ⁱsp`), at least
/// `max(2, ⌈|log ε|^{1/2}⌉)` of them when the band is wide enough.
pub fn layer_bands(middle: &Region, dist: &BTreeMap<Site, i64>, params: &ModelParams) -> Vec<Region> {
    let vals: BTreeSet<i64> = middle.iter().filter_map(|s| dist.get(&s).copied()).collect();
    let vals: Vec<i64> = vals.into_iter().collect();
    if vals.is_empty() {
        return vec![];
    }
    let want = 2usize.max(params.log_eps().sqrt().ceil() as usize);
    let j = want.min(vals.len());
    let (q, rem) = (vals.len() / j, vals.len() % j);
    let mut groups = Vec::with_capacity(j);
    let mut k = 0;
    for g in 0..j {
        let n = q + usize::from(g < rem);
        groups.push(vals[k..k + n].to_vec());
        k += n;
    }
    groups
        .iter()
        .map(|grp| middle.iter().filter(|s| dist.get(s).is_some_and(|d| grp.contains(d))).collect())
        .collect()
}

/// Picks the first layer with `ℰ_{𝓛_j} ≤ 4 (ℰ_𝔐/|𝔐|) |𝓛_j|`; one exists
/// because every edge meets at most two layers.
pub fn select_layer(
    theta3: &Grid,
    middle: &Region,
    layers: Vec<Region>,
    params: &ModelParams,
    outside: f64,
) -> Result<Layers> {
    let em = energy_meeting(theta3, middle, Some(outside));
    let rho = if middle.is_empty() { 0.0 } else { em / middle.len() as f64 };
    let energies: Vec<f64> = layers.iter().map(|l| energy_meeting(theta3, l, Some(outside))).collect();
    let selected = energies
        .iter()
        .zip(&layers)
        .position(|(e, l)| *e <= 4.0 * rho * l.len() as f64 * (1.0 + 1e-12) + 1e-300)
        .ok_or_else(|| Error::Numerical("no good layer in the middle strip".into()))?;
    let l0 = &layers[selected];
    let le = params.log_eps();
    let t = params.big_l() as f64 / (128.0 * le.sqrt()) - 100.0;
    let inner = boundary(&Region::new().union(l0), Side::Inner);
    let d = linf_distance(&inner, l0);
    let mid: Region = l0.iter().filter(|s| d.get(s).is_some_and(|&v| v as f64 >= t)).collect();
    let implied_constant = rho / (params.epsilon.powi(2) * le.powf(1.0 + params.chi));
    Ok(Layers { layers, energies, selected, mid, implied_constant })
}

/// Tapers `theta` on the layer towards `target(x)·e₁`, with `τ = 0` on the
/// middle part and rising to 1 over `L/(128|log ε|^{1/2})` sites.
fn layer_taper(theta: &Grid, layer: &Region, mid: &Region, target: impl Fn(Site) -> Option<i8>, params: &ModelParams) -> Grid {
    let mut out = theta.clone();
    let rate = 128.0 * params.log_eps().sqrt() / params.big_l() as f64;
    let d = linf_distance(mid, layer);
    for (s, dd) in d {
        let tau = (rate * dd as f64).min(1.0);
        let Some(sgn) = target(s) else { continue };
        let t = theta.at(s);
        let v = if sgn > 0 { tau * wrap_angle(t) } else { tau * wrap_angle(t - PI) + PI };
        out.set(s, v);
    }
    out
}

// ---------------------------------------------------------------------------
// Full pipeline

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurgeryConfig {
    /// Angle of the spins outside `Λ_N`.
    pub outside_angle: f64,
}

impl Default for SurgeryConfig {
    fn default() -> Self {
        Self { outside_angle: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssertionRecord {
    pub name: String,
    pub ok: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// Audit log of one surgery run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurgeryTrace {
    pub sign: i8,
    pub support_size: usize,
    pub stage_minus_h: BTreeMap<String, f64>,
    pub mod3_steps: Vec<Mod3Step>,
    pub assertions: Vec<AssertionRecord>,
    /// Measured constants of the `ε²|log ε|^{5/8}|Γ|` bounds.
    pub implied_constants: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl SurgeryTrace {
    pub fn failed(&self) -> Vec<&AssertionRecord> {
        self.assertions.iter().filter(|a| !a.ok).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Every configuration produced along the way.
#[derive(Clone, Debug)]
pub struct SurgeryOutcome {
    pub regions: ContourRegions,
    pub hull_plus: DefectHull,
    pub hull_minus: DefectHull,
    pub mod2: Mod2Sets,
    pub sigma1: Grid,
    pub sigma2: Grid,
    pub sigma3: Grid,
    pub sigma_c: Grid,
    pub reference: ReferenceConfig,
    pub sigma_bar_c: Grid,
    pub layers: Layers,
    pub gamma_tilde: Region,
    pub reflected: Vec<Region>,
    pub s: SpinConfig,
    pub trace: SurgeryTrace,
}

fn check(trace: &mut SurgeryTrace, name: &str, lhs: f64, rhs: f64) {
    let ok = lhs <= rhs + 1e-9 * (1.0 + lhs.abs().max(rhs.abs()));
    trace.assertions.push(AssertionRecord { name: name.into(), ok, lhs, rhs });
}

fn contour_sign(c: &Contour) -> Result<i8> {
    match c.sign {
        ContourSign::Plus => Ok(1),
        ContourSign::Minus => Ok(-1),
        ContourSign::Mixed => Err(Error::Domain("surgery needs a signed contour".into())),
    }
}

/// `S^±_Γ(σ)` with every intermediate configuration and the audit trace.
/// Fails with [`Error::Assertion`] when an exact inequality is violated.
pub fn surgery(
    sigma: &SpinConfig,
    c: &Contour,
    phase: &PhaseField,
    provider: &mut FieldProvider,
    consts: &CleanConstants,
    params: &ModelParams,
    cfg: SurgeryConfig,
) -> Result<SurgeryOutcome> {
    let sign = contour_sign(c)?;
    let geom = phase.geom();
    let n = geom.side();
    let out = cfg.outside_angle;
    let lam_n = geom.region();
    let alpha = provider.source.grid((0, 0), n, n);
    let eps = params.epsilon;
    let le = params.log_eps();
    let sp = c.support_region();
    let budget = eps * eps * le.powf(5.0 / 8.0) * sp.len() as f64;
    let theta0 = sigma.grid().clone();
    if theta0.origin != (0, 0) || theta0.width() != n || theta0.height() != n {
        return domain("configuration must cover Λ_N");
    }
    let mut trace = SurgeryTrace { sign, support_size: sp.len(), ..Default::default() };
    let h = |t: &Grid| minus_h(t, &lam_n, &alpha, eps, Some(out));
    let h0 = h(&theta0)?;
    trace.stage_minus_h.insert("sigma".into(), h0);

    let regions = contour_regions(c, phase)?;

    // Modification 1.
    let ell = params.ell();
    let hull_plus = defect_hull(&regions.middle_plus, &theta0, 1, out, ell)?;
    let hull_minus = defect_hull(&regions.middle_minus, &theta0, -1, out, ell)?;
    if !(hull_plus.within_bound && hull_minus.within_bound) {
        trace.notes.push("defect hull reaches beyond 3ℓ".into());
    }
    let sigma1 = mod1_flip(&theta0, &hull_plus.region, &hull_minus.region);
    let h1 = h(&sigma1)?;
    trace.stage_minus_h.insert("mod1".into(), h1);
    check(&mut trace, "mod1: -H does not decrease", h0, h1);
    check(&mut trace, "mod1: Dirichlet energy does not increase", energy_meeting(&sigma1, &lam_n, Some(out)), energy_meeting(&theta0, &lam_n, Some(out)));

    // Modification 2.
    let b = surgery_block_side(params.big_l());
    let bgrid = BlockGrid::new(b)?;
    let mut dirty = Region::new();
    for idx in bgrid.cover(&regions.m_blocks).idx {
        let a = bgrid.anchor(idx);
        if classify_box(provider, a, b as usize, consts, params)?.xi == 0 {
            dirty.extend_from(&bgrid.block(idx));
        }
    }
    let dirty = dirty.intersection(&regions.m_blocks);
    let dirty_plus = dirty.intersection(&regions.collar_plus);
    let dirty_minus = dirty.intersection(&regions.collar_minus);
    let nbhd = |d: &Region| -> Region {
        if d.is_empty() {
            return Region::new();
        }
        linf_distance(d, &lam_n).into_iter().filter(|&(_, v)| v <= b).map(|(s, _)| s).collect()
    };
    let mod2 = Mod2Sets { nbhd_plus: nbhd(&dirty_plus), nbhd_minus: nbhd(&dirty_minus), dirty, dirty_plus, dirty_minus };
    let sigma2 = mod2_taper(&sigma1, &mod2, b)?;
    let h2 = h(&sigma2)?;
    trace.stage_minus_h.insert("mod2".into(), h2);
    trace.implied_constants.insert("mod2".into(), (h2 - h1).abs() / budget);

    // Modification 3.
    let mut sigma3 = sigma2.clone();
    let good_plus = regions.m_plus.difference(&mod2.dirty_plus);
    let good_minus = regions.m_minus.difference(&mod2.dirty_minus);
    for (g, sg) in [(&good_plus, 1i8), (&good_minus, -1i8)] {
        for a in half_shift_boxes(g, b) {
            let step = mod3_step(&mut sigma3, a, b as usize, sg, provider, &alpha, eps, out)?;
            check(
                &mut trace,
                &format!("mod3 box {a:?}: E(new|old) <= 2[E(old|old) + E(g|0)]"),
                step.energy_after,
                2.0 * (step.energy_before + step.field_energy),
            );
            trace.mod3_steps.push(step);
        }
    }
    let h3 = h(&sigma3)?;
    trace.stage_minus_h.insert("mod3".into(), h3);
    trace.implied_constants.insert("mod3".into(), (h2 - h3).max(0.0) / budget);
    let flat = regions.middle.iter().map(|s| sigma3.at(s).sin().abs()).fold(0.0f64, f64::max);
    trace.implied_constants.insert("mod3 flatness |e2.sigma| |log eps|^1/2".into(), flat * le.sqrt());

    // Modification 4.
    let dist = linf_distance(&boundary(&sp, Side::Inner), &regions.middle);
    let bands = layer_bands(&regions.middle, &dist, params);
    let layers = if bands.is_empty() {
        Layers { layers: vec![], energies: vec![], selected: 0, mid: Region::new(), implied_constant: 0.0 }
    } else {
        select_layer(&sigma3, &regions.middle, bands, params, out)?
    };
    let l0 = layers.layers.get(layers.selected).cloned().unwrap_or_default();
    let psi_sign = |s: Site| phase.big_psi_at(s).filter(|&v| v != 0);
    let sigma_c = layer_taper(&sigma3, &l0, &layers.mid, psi_sign, params);
    let hc = h(&sigma_c)?;
    trace.stage_minus_h.insert("mod4".into(), hc);
    trace.implied_constants.insert("mod4 sigma".into(), (h3 - hc).abs() / budget);
    trace.implied_constants.insert("good layer".into(), layers.implied_constant);

    let thick = c.thickening().clip(&geom);
    let reference = reference_config(&thick, sign, &geom, provider, consts, params)?;
    let sigma_bar_c = layer_taper(&reference.theta, &l0, &layers.mid, |_| Some(sign), params);
    let dbar = &regions.delta_bar;
    let hb = minus_h(&reference.theta, dbar, &alpha, eps, Some(out))?;
    let hbc = minus_h(&sigma_bar_c, dbar, &alpha, eps, Some(out))?;
    trace.implied_constants.insert("mod4 sigma_bar".into(), (hb - hbc).abs() / budget);

    // Gluing.
    let rest = thick.difference(&layers.mid);
    let mut gamma_tilde = layers.mid.clone();
    gamma_tilde.extend_from(&sp.clip(&geom));
    for comp in site_components(&rest) {
        if !comp.is_disjoint(&sp) || comp.iter().any(|s| neighbours(s).iter().any(|&n| sp.contains(n))) {
            gamma_tilde.extend_from(&comp);
        }
    }
    let complement = decompose_complement(&gamma_tilde, Ambient::Finite(geom));
    let mut s_theta = sigma_c.clone();
    let mut reflected = Vec::new();
    for comp in complement.interiors {
        let label = comp
            .iter()
            .find_map(|s| c.label(s))
            .or_else(|| comp.iter().find_map(|s| phase.psi_at(s).filter(|&v| v != 0)));
        if label == Some(-sign) {
            for s in comp.iter() {
                s_theta.set(s, reflect(sigma_c.at(s)));
            }
            reflected.push(comp);
        }
    }
    for s in gamma_tilde.iter() {
        s_theta.set(s, sigma_bar_c.at(s));
    }
    let hs = h(&s_theta)?;
    trace.stage_minus_h.insert("S".into(), hs);
    Ok(SurgeryOutcome {
        regions,
        hull_plus,
        hull_minus,
        mod2,
        sigma1,
        sigma2,
        sigma3,
        sigma_c,
        reference,
        sigma_bar_c,
        layers,
        gamma_tilde,
        reflected,
        s: SpinConfig::from_grid(s_theta),
        trace,
    })
    .and_then(|o| {
        let bad = o.trace.failed();
        if bad.is_empty() {
            Ok(o)
        } else {
            Err(Error::Assertion(format!("surgery: {} failed: {}", bad.len(), bad[0].name)))
        }
    })
}

/// A `−e₁` disk in an `e₁` sea on `Λ_N`, with a tanh profile of the given
/// width and i.i.d. uniform angle noise of half-width `noise`.
pub fn droplet(n: usize, centre: (f64, f64), radius: f64, width: f64, noise: f64, seed: u64) -> SpinConfig {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    SpinConfig::from_fn((0, 0), n, n, |(x, y)| {
        let d = ((x as f64 - centre.0).hypot(y as f64 - centre.1) - radius) / width;
        PI * 0.5 * (1.0 - d.tanh()) + noise * (2.0 * rng.random::<f64>() - 1.0)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub gap: f64,
    pub normalized_gap: f64,
    pub support_size: usize,
}

/// `−ℋ_{Λ_N}(S^±_Γ(σ)|e₁) + ℋ_{Λ_N}(σ|e₁)` and its ratio to
/// `ξ²ε²|log ε|^{1−4s}|Γ|`.
pub fn energy_gap(outcome: &SurgeryOutcome, sigma: &SpinConfig, provider: &FieldProvider, params: &ModelParams, cfg: SurgeryConfig) -> Result<GapRecord> {
    let n = sigma.grid().width();
    let lam_n = Region::rect(0, 0, n as i64, n as i64);
    let alpha = provider.source.grid((0, 0), n, n);
    let eps = params.epsilon;
    let after = minus_h(outcome.s.grid(), &lam_n, &alpha, eps, Some(cfg.outside_angle))?;
    let before = minus_h(sigma.grid(), &lam_n, &alpha, eps, Some(cfg.outside_angle))?;
    let gap = after - before;
    let size = outcome.trace.support_size;
    let unit = params.xi.powi(2) * eps * eps * params.log_eps().powf(1.0 - 4.0 * params.s) * size as f64;
    Ok(GapRecord { gap, normalized_gap: gap / unit, support_size: size })
}

// ---------------------------------------------------------------------------
// Variational probe

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub psi: f64,
    pub quadratic_prediction: f64,
    pub numeric_max: f64,
    pub difference: f64,
}

/// `α − mean(α)`.
pub fn centered_field(alpha: &Grid) -> Grid {
    let mut out = alpha.clone();
    let m = alpha.data.mean().unwrap_or(0.0);
    out.data.mapv_inplace(|v| v - m);
    out
}

/// `⟨α̂, (−Δ^N)⁻¹α̂⟩` over the mean-zero part of `alpha`.
pub fn neumann_quadratic_form(alpha: &Grid) -> Result<f64> {
    let l = alpha.width();
    let sp = Spectral::new(ResolventSpec::new(Bc::N, l, 1.0, 1.0)?)?;
    let a = sp.forward(&alpha.data);
    let mut s = 0.0;
    for ((j1, j2), v) in a.indexed_iter() {
        if (j1, j2) != (0, 0) {
            s += v * v / sp.zeta(j1, j2);
        }
    }
    Ok(s)
}

/// Per-site ascent of `−ℋ_Q` with free boundary, `θ_x ∈ [lo_x, hi_x]`
/// when `bounds` is given. Each update maximizes `A cos θ + B sin θ` exactly
/// on the allowed arc.
pub fn coordinate_ascent(theta: &mut Grid, alpha: &Grid, epsilon: f64, bounds: Option<(&Grid, f64)>, max_sweeps: usize) -> f64 {
    let q = theta.domain();
    let sites: Vec<Site> = q.iter().collect();
    for _ in 0..max_sweeps {
        let mut change = 0.0f64;
        for &s in &sites {
            let (mut a, mut b) = (0.0, epsilon * alpha.at(s));
            for n in neighbours(s) {
                if let Some(t) = theta.get(n) {
                    a += t.cos();
                    b += t.sin();
                }
            }
            let mut t = b.atan2(a);
            if let Some((centre, w)) = bounds {
                let c = centre.at(s);
                t = c + wrap_angle(t - c).clamp(-w, w);
            }
            let old = theta.at(s);
            change = change.max(wrap_angle(t - old).abs());
            theta.set(s, t);
        }
        // Exact maximization over a uniform rotation: only the field term
        // depends on it, as ε(S cos δ + C sin δ).
        let (mut sn, mut cs) = (0.0, 0.0);
        let (mut lo, mut hi) = (-PI, PI);
        for &s in &sites {
            let t = theta.at(s);
            sn += alpha.at(s) * t.sin();
            cs += alpha.at(s) * t.cos();
            if let Some((centre, w)) = bounds {
                let d = t - centre.at(s);
                lo = lo.max(-w - d);
                hi = hi.min(w - d);
            }
        }
        let f = |d: f64| sn * d.cos() + cs * d.sin();
        let free = cs.atan2(sn);
        let delta = if free >= lo && free <= hi {
            free
        } else if f(lo) >= f(hi) {
            lo
        } else {
            hi
        };
        if f(delta) > f(0.0) {
            for &s in &sites {
                theta.set(s, theta.at(s) + delta);
            }
            change = change.max(delta.abs());
        }
        if change <= 1e-11 {
            break;
        }
    }
    minus_h(theta, &q, alpha, epsilon, None).unwrap_or(f64::NAN)
}

/// The quadratic prediction `½ε²cos²ψ⟨α̂,(−Δ^N)⁻¹α̂⟩` and the numeric
/// maximum of `−ℋ_Q` over `θ = ψ + θ̂`, `‖θ̂‖∞ ≤ 0.3`. With `centered` the
/// maximum is taken for the mean-zero field `α̂`, which removes the
/// `ε sin ψ Σα` contribution.
pub fn variational_probe(alpha: &Grid, psi: f64, epsilon: f64, centered: bool) -> Result<ProbeRecord> {
    let alpha = &if centered { centered_field(alpha) } else { alpha.clone() };
    let quad = neumann_quadratic_form(alpha)?;
    let pred = 0.5 * epsilon * epsilon * psi.cos().powi(2) * quad;
    let l = alpha.width();
    // Start from the predicted deviation cos ψ g^N.
    let sp = Spectral::new(ResolventSpec::new(Bc::N, l, 1.0, 1.0)?)?;
    let mut h = sp.forward(&alpha.data);
    h.indexed_iter_mut().for_each(|((a, b), v)| *v = if (a, b) == (0, 0) { 0.0 } else { *v / sp.zeta(a, b) });
    let gn = sp.inverse(&h);
    let centre = Grid::from_fn(alpha.origin, l, l, |_| psi);
    // ψ = π/2 is a saddle of the centred problem, so uniform tilts are tried too.
    let starts = [
        Grid::from_fn(alpha.origin, l, l, |s| {
            let (i, j) = ((s.0 - alpha.origin.0) as usize, (s.1 - alpha.origin.1) as usize);
            psi + (epsilon * psi.cos() * gn[[i, j]]).clamp(-0.3, 0.3)
        }),
        Grid::from_fn(alpha.origin, l, l, |_| psi + 0.3),
        Grid::from_fn(alpha.origin, l, l, |_| psi - 0.3),
    ];
    let val = starts
        .into_iter()
        .map(|mut theta| coordinate_ascent(&mut theta, alpha, epsilon, Some((&centre, 0.3)), 200_000))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ProbeRecord { psi, quadratic_prediction: pred, numeric_max: val, difference: val - pred })
}

/// `Max_Q(ℋ, ∅)`, free boundary, by coordinate ascent from `g^N`.
pub fn free_box_maximum(alpha: &Grid, epsilon: f64) -> Result<f64> {
    let l = alpha.width();
    let sp = Spectral::new(ResolventSpec::new(Bc::N, l, 1e-12, epsilon)?)?;
    let mut theta = sp.solve(&alpha.clone())?;
    theta.data.mapv_inplace(|v| v.clamp(-FRAC_PI_2, FRAC_PI_2));
    Ok(coordinate_ascent(&mut theta, alpha, epsilon, None, 200_000))
}
