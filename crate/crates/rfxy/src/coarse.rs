//! Coarse-graining of a spin configuration on `Λ_N`: the scale-`ℓ` phase
//! labels `ψ⁰`, `ψ¹`, `ψ`, the scale-`L` labels `Ψ`, contour extraction and
//! the regions surrounding a contour.
//!
//! Quantifiers over squares and blocks range only over those contained in
//! `Λ_N`.

use std::collections::{BTreeMap, VecDeque};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Result};
use crate::lattice::{
    boundary, connected_components, decompose_complement, thicken_on, Ambient, BlockGrid, BlockSet, LatticeGeom,
    Region, Side, Site, NN8,
};
use crate::spin::{pair_energy, ModelParams, SpinConfig};

/// Scales and thresholds of the coarse-graining.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseParams {
    pub ell: i64,
    pub big_l: i64,
    /// `ε²|log ε|^{1+χ}ℓ²`.
    pub energy_threshold: f64,
    pub xi: f64,
}

impl CoarseParams {
    pub fn from_model(p: &ModelParams) -> Result<Self> {
        Self::with_scales(p, p.ell(), p.big_l())
    }

    /// Explicit `ℓ` and `L`; the energy threshold follows `ℓ`.
    pub fn with_scales(p: &ModelParams, ell: i64, big_l: i64) -> Result<Self> {
        if ell < 2 || ell % 2 != 0 {
            return param(format!("ell = {ell} must be even and at least 2"));
        }
        if big_l < ell || big_l % ell != 0 {
            return param(format!("L = {big_l} must be a multiple of ell = {ell}"));
        }
        if !(p.xi > 0.0 && p.xi < 1.0) {
            return param(format!("xi = {} not in (0, 1)", p.xi));
        }
        let energy_threshold = p.epsilon.powi(2) * p.log_eps().powf(1.0 + p.chi) * (ell * ell) as f64;
        Ok(Self { ell, big_l, energy_threshold, xi: p.xi })
    }
}

/// Per-site labels on `Λ_N`. `psi0 ∈ {0,1}`, the others in `{−1,0,1}`;
/// `big_psi` is constant on `L`-blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseField {
    pub side: usize,
    pub params: CoarseParams,
    pub psi0: Array2<i8>,
    pub psi1: Array2<i8>,
    pub psi: Array2<i8>,
    pub big_psi: Array2<i8>,
}

impl PhaseField {
    pub fn psi_at(&self, s: Site) -> Option<i8> {
        self.get(&self.psi, s)
    }

    pub fn big_psi_at(&self, s: Site) -> Option<i8> {
        self.get(&self.big_psi, s)
    }

    fn get(&self, a: &Array2<i8>, (x, y): Site) -> Option<i8> {
        let n = self.side as i64;
        if (0..n).contains(&x) && (0..n).contains(&y) {
            Some(a[[x as usize, y as usize]])
        } else {
            None
        }
    }

    pub fn geom(&self) -> LatticeGeom {
        LatticeGeom::new(self.side).expect("side checked at construction")
    }

    /// `R⁰`, `R⁺`, `R⁻` as `L`-block sets.
    pub fn regions(&self) -> [BlockSet; 3] {
        let grid = BlockGrid::new(self.params.big_l).expect("positive L");
        let mut out = [BlockSet::new(grid), BlockSet::new(grid), BlockSet::new(grid)];
        for i in grid.blocks_inside(&self.geom()) {
            let a = grid.anchor(i);
            let v = self.big_psi[[a.0 as usize, a.1 as usize]];
            out[match v {
                0 => 0,
                1 => 1,
                _ => 2,
            }]
            .idx
            .insert(i);
        }
        out
    }

    /// Rows of `big_psi` as CSV, `y` descending.
    pub fn big_psi_csv(&self) -> String {
        grid_csv(&self.big_psi)
    }
}

pub fn grid_csv(a: &Array2<i8>) -> String {
    let (w, h) = a.dim();
    let mut s = String::new();
    for y in (0..h).rev() {
        let row: Vec<String> = (0..w).map(|x| a[[x, y]].to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// 2D inclusive prefix sums with a zero border: `p[[i, j]] = Σ_{x<i, y<j}`.
struct Prefix(Array2<f64>);

impl Prefix {
    fn new(a: &Array2<f64>) -> Self {
        let (w, h) = a.dim();
        let mut p = Array2::zeros((w + 1, h + 1));
        for i in 0..w {
            for j in 0..h {
                p[[i + 1, j + 1]] = a[[i, j]] + p[[i, j + 1]] + p[[i + 1, j]] - p[[i, j]];
            }
        }
        Prefix(p)
    }

    /// Sum over `[x0, x1) × [y0, y1)`, empty when a range is empty.
    fn rect(&self, x0: usize, x1: usize, y0: usize, y1: usize) -> f64 {
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        let p = &self.0;
        p[[x1, y1]] - p[[x0, y1]] - p[[x1, y0]] + p[[x0, y0]]
    }
}

fn check_domain(sigma: &SpinConfig, cp: &CoarseParams) -> Result<usize> {
    let g = sigma.grid();
    let n = g.width();
    if g.origin != (0, 0) || g.height() != n {
        return domain("coarse-graining needs a square configuration anchored at the origin");
    }
    if (n as i64) % cp.big_l != 0 {
        return domain(format!("side {n} is not a multiple of L = {}", cp.big_l));
    }
    Ok(n)
}

/// Energies and `e₁`-averages of every `ℓ`-square with anchor in `(ℓ/2)ℤ²` inside `Λ_N`.
struct SquareStats {
    half: i64,
    count: i64,
    energy: Array2<f64>,
    mean_e1: Array2<f64>,
}

impl SquareStats {
    fn new(sigma: &SpinConfig, cp: &CoarseParams, n: usize) -> Self {
        let th = &sigma.grid().data;
        let hor = Array2::from_shape_fn((n, n), |(x, y)| if x + 1 < n { pair_energy(th[[x, y]], th[[x + 1, y]]) } else { 0.0 });
        let ver = Array2::from_shape_fn((n, n), |(x, y)| if y + 1 < n { pair_energy(th[[x, y]], th[[x, y + 1]]) } else { 0.0 });
        let cos = th.mapv(f64::cos);
        let (ph, pv, pc) = (Prefix::new(&hor), Prefix::new(&ver), Prefix::new(&cos));
        let half = cp.ell / 2;
        let l = cp.ell as usize;
        let count = (n as i64 - cp.ell) / half + 1;
        let dim = count.max(0) as usize;
        let mut energy = Array2::zeros((dim, dim));
        let mut mean_e1 = Array2::zeros((dim, dim));
        for a in 0..dim {
            for b in 0..dim {
                let (x, y) = (a * half as usize, b * half as usize);
                energy[[a, b]] = ph.rect(x, x + l - 1, y, y + l) + pv.rect(x, x + l, y, y + l - 1);
                mean_e1[[a, b]] = pc.rect(x, x + l, y, y + l) / (l * l) as f64;
            }
        }
        Self { half, count, energy, mean_e1 }
    }

    /// Anchor indices `(a, b)` with `‖z − (ℓ/2)(a, b)‖₂ ≤ 2ℓ` and the square inside `Λ_N`.
    fn near(&self, z: Site, ell: i64) -> impl Iterator<Item = (usize, usize)> + '_ {
        let h = self.half;
        let reach = 2 * ell;
        let lo = |c: i64| ((c - reach) as f64 / h as f64).ceil().max(0.0) as i64;
        let hi = |c: i64| ((c + reach).div_euclid(h)).min(self.count - 1);
        let (a0, a1, b0, b1) = (lo(z.0), hi(z.0), lo(z.1), hi(z.1));
        (a0..=a1).flat_map(move |a| (b0..=b1).map(move |b| (a, b))).filter_map(move |(a, b)| {
            let (dx, dy) = (z.0 - a * h, z.1 - b * h);
            (dx * dx + dy * dy <= reach * reach).then_some((a as usize, b as usize))
        })
    }
}

/// `ψ⁰`, `ψ¹` and `ψ = ψ⁰ψ¹` in one pass.
pub fn compute_psi(sigma: &SpinConfig, cp: &CoarseParams) -> Result<(Array2<i8>, Array2<i8>, Array2<i8>)> {
    let n = check_domain(sigma, cp)?;
    let st = SquareStats::new(sigma, cp, n);
    let mut psi0 = Array2::zeros((n, n));
    let mut psi1 = Array2::zeros((n, n));
    for x in 0..n {
        for y in 0..n {
            let mut low = true;
            let mut plus = true;
            let mut minus = true;
            for (a, b) in st.near((x as i64, y as i64), cp.ell) {
                low &= st.energy[[a, b]] <= cp.energy_threshold;
                let m = st.mean_e1[[a, b]];
                plus &= m >= 1.0 - cp.xi && m <= 1.0;
                minus &= m >= -1.0 && m <= -1.0 + cp.xi;
            }
            psi0[[x, y]] = low as i8;
            psi1[[x, y]] = if plus {
                1
            } else if minus {
                -1
            } else {
                0
            };
        }
    }
    let psi = &psi0 * &psi1;
    Ok((psi0, psi1, psi))
}

pub fn compute_psi0(sigma: &SpinConfig, cp: &CoarseParams) -> Result<Array2<i8>> {
    Ok(compute_psi(sigma, cp)?.0)
}

pub fn compute_psi1(sigma: &SpinConfig, cp: &CoarseParams) -> Result<Array2<i8>> {
    Ok(compute_psi(sigma, cp)?.1)
}

/// Block offsets `(di, dj)` with `‖(di, dj)‖₂ ≤ 2`.
const BLOCK_HALO: [Site; 13] = [
    (0, 0),
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
    (2, 0),
    (-2, 0),
    (0, 2),
    (0, -2),
];

/// `Ψ` from `ψ`: `±1` on an `L`-block iff `ψ ≡ ±1` on every block within `2L`.
pub fn compute_big_psi(psi: &Array2<i8>, big_l: i64) -> Result<Array2<i8>> {
    let (n, h) = psi.dim();
    if n != h || big_l < 1 || (n as i64) % big_l != 0 {
        return domain("psi grid must be square with side a multiple of L");
    }
    let nb = n as i64 / big_l;
    let l = big_l as usize;
    let mut all = Array2::from_elem((nb as usize, nb as usize), 0i8);
    for i in 0..nb as usize {
        for j in 0..nb as usize {
            let block = psi.slice(ndarray::s![i * l..(i + 1) * l, j * l..(j + 1) * l]);
            all[[i, j]] = if block.iter().all(|&v| v == 1) {
                1
            } else if block.iter().all(|&v| v == -1) {
                -1
            } else {
                0
            };
        }
    }
    let mut out = Array2::zeros((n, n));
    for i in 0..nb {
        for j in 0..nb {
            let mut v: Option<i8> = None;
            let mut zero = false;
            for (di, dj) in BLOCK_HALO {
                let (a, b) = (i + di, j + dj);
                if a < 0 || b < 0 || a >= nb || b >= nb {
                    continue;
                }
                let w = all[[a as usize, b as usize]];
                if w == 0 || v.is_some_and(|u| u != w) {
                    zero = true;
                    break;
                }
                v = Some(w);
            }
            let val = if zero { 0 } else { v.unwrap_or(0) };
            out.slice_mut(ndarray::s![i as usize * l..(i as usize + 1) * l, j as usize * l..(j as usize + 1) * l])
                .fill(val);
        }
    }
    Ok(out)
}

pub fn phase_field(sigma: &SpinConfig, cp: &CoarseParams) -> Result<PhaseField> {
    let (psi0, psi1, psi) = compute_psi(sigma, cp)?;
    let big_psi = compute_big_psi(&psi, cp.big_l)?;
    Ok(PhaseField { side: psi.nrows(), params: *cp, psi0, psi1, psi, big_psi })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContourSign {
    Plus,
    Minus,
    /// Exterior labels are not all `+1` nor all `−1`.
    Mixed,
}

/// A maximal 8-connected component of `R⁰` with `ψ` recorded on `δ_L(Γ) ∩ Λ_N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub support: BlockSet,
    pub labels: BTreeMap<String, i8>,
    pub sign: ContourSign,
    /// `δ_L(Γ)` leaves `Λ_N`.
    pub touches_boundary: bool,
}

fn key((x, y): Site) -> String {
    format!("{x},{y}")
}

fn unkey(k: &str) -> Site {
    let (a, b) = k.split_once(',').expect("site key");
    (a.parse().expect("site key"), b.parse().expect("site key"))
}

impl Contour {
    pub fn support_region(&self) -> Region {
        self.support.region()
    }

    /// `|Γ| = |sp(Γ)|`.
    pub fn size(&self) -> usize {
        self.support.len() * (self.support.grid.block_side * self.support.grid.block_side) as usize
    }

    /// `δ_L(Γ)` in ℤ², not clipped.
    pub fn thickening(&self) -> Region {
        let g = self.support.grid;
        thicken_on(&self.support_region(), g, g.block_side).region()
    }

    pub fn label(&self, s: Site) -> Option<i8> {
        self.labels.get(&key(s)).copied()
    }

    pub fn labels_iter(&self) -> impl Iterator<Item = (Site, i8)> + '_ {
        self.labels.iter().map(|(k, &v)| (unkey(k), v))
    }

    /// `δ_L(Γ) ∩ Ext(Γ) ∩ Λ_N`.
    pub fn delta_ext(&self, geom: &LatticeGeom) -> Region {
        let sp = self.support_region();
        let cmp = decompose_complement(&sp, Ambient::Infinite);
        let mut ext = self.thickening().difference(&sp);
        for i in &cmp.interiors {
            ext = ext.difference(i);
        }
        ext.clip(geom)
    }
}

/// Contours of one configuration together with its phase field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourSet {
    pub contours: Vec<Contour>,
    pub phase: PhaseField,
}

impl ContourSet {
    /// Compact JSON: anchors, labels, sign and sizes; no per-site phase grids.
    pub fn to_json(&self) -> serde_json::Value {
        let geom = self.phase.geom();
        serde_json::json!({
            "side": self.phase.side,
            "ell": self.phase.params.ell,
            "L": self.phase.params.big_l,
            "contours": self.contours.iter().map(|c| serde_json::json!({
                "support": c.support,
                "size": c.size(),
                "sign": c.sign,
                "touches_boundary": c.touches_boundary,
                "labels": c.labels,
                "delta_ext_size": c.delta_ext(&geom).len(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Components of `R⁰` with labels and signs.
pub fn extract_contours(phase: &PhaseField) -> ContourSet {
    let geom = phase.geom();
    let [r0, _, _] = phase.regions();
    let mut contours = Vec::new();
    for comp in connected_components(&r0) {
        let mut c = Contour { support: comp, labels: BTreeMap::new(), sign: ContourSign::Mixed, touches_boundary: false };
        let thick = c.thickening();
        c.touches_boundary = thick.iter().any(|s| !geom.contains(s));
        for s in thick.clip(&geom).iter() {
            c.labels.insert(key(s), phase.psi_at(s).expect("clipped to Λ_N"));
        }
        let ext = c.delta_ext(&geom);
        let vals: Vec<i8> = ext.iter().map(|s| phase.psi_at(s).expect("clipped")).collect();
        c.sign = if !vals.is_empty() && vals.iter().all(|&v| v == 1) {
            ContourSign::Plus
        } else if !vals.is_empty() && vals.iter().all(|&v| v == -1) {
            ContourSign::Minus
        } else {
            ContourSign::Mixed
        };
        contours.push(c);
    }
    ContourSet { contours, phase: phase.clone() }
}

pub fn contours_of(sigma: &SpinConfig, cp: &CoarseParams) -> Result<ContourSet> {
    Ok(extract_contours(&phase_field(sigma, cp)?))
}

/// `δ(Γ₁) ∩ sp(Γ₂) = ∅` and equal labels on `δ(Γ₁) ∩ δ(Γ₂)`.
pub fn compatible(c1: &Contour, c2: &Contour) -> bool {
    if !c1.thickening().is_disjoint(&c2.support_region()) {
        return false;
    }
    c1.labels_iter().all(|(s, v)| c2.label(s).is_none_or(|w| w == v))
}

/// `σ ∈ 𝕏(Γ)`: `sp(Γ)` is a component of `R⁰(σ)` and `ψ(σ)` matches the labels.
pub fn is_contour_for(sigma: &SpinConfig, c: &Contour, cp: &CoarseParams) -> Result<bool> {
    let phase = phase_field(sigma, cp)?;
    let [r0, _, _] = phase.regions();
    let is_comp = connected_components(&r0).iter().any(|k| k.idx == c.support.idx);
    Ok(is_comp && c.labels_iter().all(|(s, v)| phase.psi_at(s) == Some(v)))
}

/// The sets surrounding a contour used by the boundary surgery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourRegions {
    /// `𝔠 = δ_L(Γ) ∩ sp(Γ)ᶜ ∩ Λ_N`.
    pub collar: Region,
    pub collar_plus: Region,
    pub collar_minus: Region,
    /// `x ∈ 𝔠` with ℓ∞ distance to `∂ⁱsp(Γ)` in `[L/8, 3L/8]`.
    pub middle: Region,
    pub middle_plus: Region,
    pub middle_minus: Region,
    /// Union of `max(L/16, 2)`-blocks within distance 3 of the middle strip.
    pub m_blocks: Region,
    pub m_plus: Region,
    pub m_minus: Region,
    /// `δ_{L/2}(Γ) ∩ Λ_N`.
    pub delta_bar: Region,
    pub delta_ext: Region,
    pub delta_int_plus: Region,
    pub delta_int_minus: Region,
}

/// ℓ∞ distance from `sources` to every site of `targets` by 8-neighbour BFS.
pub fn linf_distance(sources: &Region, targets: &Region) -> BTreeMap<Site, i64> {
    let mut out = BTreeMap::new();
    let Some(((tx0, ty0), (tx1, ty1))) = targets.bbox() else { return out };
    let Some(((sx0, sy0), (sx1, sy1))) = sources.bbox() else { return out };
    let (x0, y0) = (tx0.min(sx0), ty0.min(sy0));
    let (x1, y1) = (tx1.max(sx1), ty1.max(sy1));
    let (w, h) = ((x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize);
    let mut dist = vec![i64::MAX; w * h];
    let at = |(x, y): Site| (x - x0) as usize * h + (y - y0) as usize;
    let mut q = VecDeque::new();
    for s in sources.iter() {
        dist[at(s)] = 0;
        q.push_back(s);
    }
    while let Some(c) = q.pop_front() {
        let d = dist[at(c)];
        for (dx, dy) in NN8 {
            let n = (c.0 + dx, c.1 + dy);
            if n.0 >= x0 && n.0 <= x1 && n.1 >= y0 && n.1 <= y1 && dist[at(n)] == i64::MAX {
                dist[at(n)] = d + 1;
                q.push_back(n);
            }
        }
    }
    for t in targets.iter() {
        out.insert(t, dist[at(t)]);
    }
    out
}

/// Side of the boxes around the middle strip: `L/16`, at least 2 so that
/// box fields have internal edges.
pub fn surgery_block_side(big_l: i64) -> i64 {
    (big_l / 16).max(2)
}

pub fn contour_regions(c: &Contour, phase: &PhaseField) -> Result<ContourRegions> {
    let geom = phase.geom();
    let l = phase.params.big_l;
    let sp = c.support_region();
    let thick = c.thickening();
    let collar = thick.difference(&sp).clip(&geom);
    let by_psi = |r: &Region, v: i8| -> Region { r.iter().filter(|&s| phase.big_psi_at(s) == Some(v)).collect() };
    let collar_plus = by_psi(&collar, 1);
    let collar_minus = by_psi(&collar, -1);
    let inner = boundary(&sp, Side::Inner);
    let dist = linf_distance(&inner, &collar);
    let (lo, hi) = (l as f64 / 8.0, 3.0 * l as f64 / 8.0);
    let middle: Region = dist.iter().filter(|(_, &d)| d as f64 >= lo && d as f64 <= hi).map(|(&s, _)| s).collect();
    let middle_plus = middle.intersection(&collar_plus);
    let middle_minus = middle.intersection(&collar_minus);
    let small = BlockGrid::new(surgery_block_side(l))?;
    let m_blocks = thicken_on(&middle, small, 4).region();
    let m_plus = m_blocks.intersection(&collar_plus);
    let m_minus = m_blocks.intersection(&collar_minus);
    let half = BlockGrid::new((l / 2).max(1))?;
    let delta_bar = thicken_on(&sp, half, half.block_side).region().clip(&geom);
    let delta_ext = c.delta_ext(&geom);
    let interior = crate::lattice::interior(&sp);
    let int_part = thick.intersection(&interior).clip(&geom);
    let by_label = |v: i8| -> Region { int_part.iter().filter(|&s| phase.psi_at(s) == Some(v)).collect() };
    Ok(ContourRegions {
        delta_int_plus: by_label(1),
        delta_int_minus: by_label(-1),
        collar,
        collar_plus,
        collar_minus,
        middle,
        middle_plus,
        middle_minus,
        m_blocks,
        m_plus,
        m_minus,
        delta_bar,
        delta_ext,
    })
}
