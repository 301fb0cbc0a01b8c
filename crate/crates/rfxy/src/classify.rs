//! Clean and dirty boxes of the quenched field, controlled and regular
//! regions, and the dirty region built from bad components.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Result};
use crate::field::{field_energy, gradient_sup, local_mass, AlphaSource, Bc, FieldSample, ResolventSpec, Spectral};
use crate::grid::Grid;
use crate::lattice::{closed_hull, connected_components, thicken_on, BlockGrid, BlockSet, Region, Site};
use crate::spin::ModelParams;

/// Constants of the clean-box conditions.
///
/// `sup_factor` multiplies the sup-norm bound of (C2) and `dn_factor` the
/// bound of (C6); both equal 1 in the unscaled conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConstants {
    pub a: f64,
    pub c_big: f64,
    pub c_small: f64,
    pub eta: f64,
    pub sup_factor: f64,
    pub dn_factor: f64,
}

impl Default for CleanConstants {
    /// Output of `cargo run --release --example calibrate_clean`.
    fn default() -> Self {
        Self { a: 0.6, c_big: 2.0, c_small: 0.04, eta: 1.0 / 40.0, sup_factor: 6.0, dn_factor: 2.5 }
    }
}

impl CleanConstants {
    pub fn check(&self, p: &ModelParams) -> Result<()> {
        if !(self.a > 0.0 && self.c_small > 0.0 && self.c_small < self.c_big) {
            return param("clean constants need A > 0 and 0 < c < C");
        }
        if !(self.eta > 0.0 && self.eta < p.eta_lambda / 2.0) {
            return param(format!("eta = {} not in (0, eta_lambda/2)", self.eta));
        }
        if !(self.sup_factor > 0.0 && self.dn_factor > 0.0) {
            return param("bound factors must be positive");
        }
        Ok(())
    }
}

/// Minimum side for which the averaging window of the mass event is used.
pub const A_EVENT_MIN_SIDE: usize = 16;

/// Largest `A` for which the mass event holds on the field's square:
/// `min_{x, r} (ε²r² ln r)⁻¹ Σ_{‖y−x‖₂≤r, y∈Q} m_y` over sites `x` with
/// `dist(x, ∂ᵒQ) ≥ L₀^{3/4}` and integers `r ∈ [⌈L₀^{1/2}⌉, ⌊L₀^{3/4}⌋]`.
/// `+∞` when no site qualifies.
pub fn a_event_margin(m: &Grid, epsilon: f64) -> Result<f64> {
    let l0 = m.width();
    if l0 != m.height() {
        return domain("mass event needs a square");
    }
    if l0 < A_EVENT_MIN_SIDE {
        return domain(format!("side {l0} below {A_EVENT_MIN_SIDE}: radius window too small"));
    }
    let lf = l0 as f64;
    let r_lo = lf.sqrt().ceil() as i64;
    let r_hi = lf.powf(0.75).floor() as i64;
    let dmin = lf.powf(0.75);
    // Row prefix sums: rows[x][y+1] = Σ_{y' ≤ y} m[x, y'].
    let n = l0 as i64;
    let mut rows = vec![vec![0.0; l0 + 1]; l0];
    for x in 0..l0 {
        for y in 0..l0 {
            rows[x][y + 1] = rows[x][y] + m.data[[x, y]];
        }
    }
    let mut best = f64::INFINITY;
    for x in 0..n {
        for y in 0..n {
            // Euclidean distance to the outer boundary ring.
            let d = [x + 1, n - x, y + 1, n - y].into_iter().min().unwrap() as f64;
            if d < dmin {
                continue;
            }
            for r in r_lo..=r_hi {
                let mut s = 0.0;
                for dx in -r..=r {
                    let xx = x + dx;
                    if !(0..n).contains(&xx) {
                        continue;
                    }
                    let h = ((r * r - dx * dx) as f64).sqrt().floor() as i64;
                    let (y0, y1) = ((y - h).max(0), (y + h).min(n - 1));
                    s += rows[xx as usize][y1 as usize + 1] - rows[xx as usize][y0 as usize];
                }
                let v = s / (epsilon * epsilon * (r * r) as f64 * (r as f64).ln());
                best = best.min(v);
            }
        }
    }
    Ok(best)
}

/// The mass event on the square of `field` with threshold `a`.
pub fn check_a_event(field: &FieldSample, a: f64) -> Result<bool> {
    Ok(a <= a_event_margin(&field.m, field.spec.epsilon)?)
}

/// Statistics of `g^D`, `g^N` and `α` on one square of side `L₀`.
/// Arrays are indexed `[D, N]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareFieldStats {
    pub anchor: Site,
    pub side: usize,
    pub sup_g: [f64; 2],
    pub grad_sup: [f64; 2],
    /// `‖∇g‖₂²`: zero-extended edges included for `D`.
    pub grad_sq: [f64; 2],
    pub l2_sq: [f64; 2],
    pub sup_alpha: f64,
    /// `None` below [`A_EVENT_MIN_SIDE`].
    pub a_margin: Option<f64>,
}

/// Solves and caches the resolvent fields of every requested square for
/// one realization of `α` on ℤ².
pub struct FieldProvider {
    pub source: AlphaSource,
    pub epsilon: f64,
    pub lambda: f64,
    spectral: HashMap<(Bc, usize), Spectral>,
    cache: HashMap<(Site, usize), SquareFieldStats>,
}

impl FieldProvider {
    pub fn new(seed: u64, params: &ModelParams) -> Self {
        Self {
            source: AlphaSource::new(seed),
            epsilon: params.epsilon,
            lambda: params.lambda(),
            spectral: HashMap::new(),
            cache: HashMap::new(),
        }
    }

    fn spectral(&mut self, bc: Bc, side: usize) -> Result<&Spectral> {
        if !self.spectral.contains_key(&(bc, side)) {
            let sp = Spectral::new(ResolventSpec::new(bc, side, self.lambda, self.epsilon)?)?;
            self.spectral.insert((bc, side), sp);
        }
        Ok(&self.spectral[&(bc, side)])
    }

    /// Field sample of `g^{bc}` on `Q_{side}(anchor)`.
    pub fn sample(&mut self, anchor: Site, side: usize, bc: Bc) -> Result<FieldSample> {
        let alpha = self.source.grid(anchor, side, side);
        let g = self.spectral(bc, side)?.solve(&alpha)?;
        let m = local_mass(&g, bc);
        let spec = ResolventSpec::new(bc, side, self.lambda, self.epsilon)?;
        Ok(FieldSample { spec, g, m, seed: Some(self.source.seed), generator: crate::field::GENERATOR_ID.into(), residual: f64::NAN })
    }

    pub fn stats(&mut self, anchor: Site, side: usize) -> Result<SquareFieldStats> {
        if let Some(s) = self.cache.get(&(anchor, side)) {
            return Ok(s.clone());
        }
        let alpha = self.source.grid(anchor, side, side);
        let gd = self.spectral(Bc::D, side)?.solve(&alpha)?;
        let gn = self.spectral(Bc::N, side)?.solve(&alpha)?;
        let a_margin = if side >= A_EVENT_MIN_SIDE {
            Some(a_event_margin(&local_mass(&gd, Bc::D), self.epsilon)?)
        } else {
            None
        };
        let st = SquareFieldStats {
            anchor,
            side,
            sup_g: [gd.sup_norm(), gn.sup_norm()],
            grad_sup: [gradient_sup(&gd.data), gradient_sup(&gn.data)],
            grad_sq: [field_energy(&gd.data, Bc::D), field_energy(&gn.data, Bc::N)],
            l2_sq: [gd.data.iter().map(|v| v * v).sum(), gn.data.iter().map(|v| v * v).sum()],
            sup_alpha: alpha.sup_norm(),
            a_margin,
        };
        self.cache.insert((anchor, side), st.clone());
        Ok(st)
    }

    /// Squares of `𝒬*_{L₀}` meeting `Q_{L₀}(anchor)`: anchors shifted by
    /// `{−L₀/2, 0, L₀/2}` per axis, or `Q` alone when `L₀ = 1`.
    pub fn overlapping(anchor: Site, side: usize) -> Vec<Site> {
        let h = side as i64 / 2;
        if h == 0 {
            return vec![anchor];
        }
        let mut out = Vec::with_capacity(9);
        for dx in [-h, 0, h] {
            for dy in [-h, 0, h] {
                out.push((anchor.0 + dx, anchor.1 + dy));
            }
        }
        out
    }
}

/// Verdict of the six clean-box conditions on one box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxReport {
    pub anchor: Site,
    pub side: usize,
    pub c1: bool,
    /// The mass event was evaluable at this side.
    pub c1_applicable: bool,
    pub c2: bool,
    pub c3: bool,
    pub c4: bool,
    pub c5: bool,
    pub c6: bool,
    /// `Ξ`: 1 iff clean.
    pub xi: u8,
    pub max_sup_g: f64,
    pub max_grad_sup: f64,
    pub min_grad_density: f64,
    pub max_grad_density: f64,
    pub max_sup_alpha: f64,
    pub max_dn_ratio: f64,
}

/// Evaluates (C1)–(C6) on every overlapping square and conjoins.
pub fn classify_box(
    provider: &mut FieldProvider,
    anchor: Site,
    side: usize,
    consts: &CleanConstants,
    params: &ModelParams,
) -> Result<BoxReport> {
    let le = params.log_eps();
    let eps = params.epsilon;
    let lam = params.lambda();
    let c2_bound = consts.sup_factor * eps * lam.powf(-0.5) * le.powf(consts.eta);
    let c3_bound = consts.c_big * eps * le;
    let c4_lo = consts.c_small * eps * eps * le;
    let c4_hi = consts.c_big * eps * eps * le;
    let c5_bound = consts.c_big * le;
    let log_l0 = (side as f64).ln().powf(0.25);
    let mut r = BoxReport {
        anchor,
        side,
        c1: true,
        c1_applicable: side >= A_EVENT_MIN_SIDE,
        c2: true,
        c3: true,
        c4: true,
        c5: true,
        c6: true,
        xi: 0,
        max_sup_g: 0.0,
        max_grad_sup: 0.0,
        min_grad_density: f64::INFINITY,
        max_grad_density: 0.0,
        max_sup_alpha: 0.0,
        max_dn_ratio: 0.0,
    };
    let area = (side * side) as f64;
    for q in FieldProvider::overlapping(anchor, side) {
        let st = provider.stats(q, side)?;
        if let Some(m) = st.a_margin {
            r.c1 &= consts.a <= m;
        }
        for i in 0..2 {
            r.max_sup_g = r.max_sup_g.max(st.sup_g[i]);
            r.max_grad_sup = r.max_grad_sup.max(st.grad_sup[i]);
            r.min_grad_density = r.min_grad_density.min(st.grad_sq[i] / area);
            r.max_grad_density = r.max_grad_density.max(st.grad_sq[i] / area);
        }
        r.max_sup_alpha = r.max_sup_alpha.max(st.sup_alpha);
        let dn = (st.grad_sq[1] - st.grad_sq[0]).abs();
        // (C6) as a ratio; `ln 1 = 0` makes the bound infinite.
        let ratio = if st.grad_sq[1] > 0.0 { dn * log_l0 / st.grad_sq[1] } else if dn > 0.0 { f64::INFINITY } else { 0.0 };
        r.max_dn_ratio = r.max_dn_ratio.max(ratio);
    }
    r.c2 = r.max_sup_g <= c2_bound;
    r.c3 = r.max_grad_sup <= c3_bound;
    r.c4 = r.min_grad_density >= c4_lo && r.max_grad_density <= c4_hi;
    r.c5 = r.max_sup_alpha <= c5_bound;
    r.c6 = r.max_dn_ratio <= consts.dn_factor;
    r.xi = (r.c1 && r.c2 && r.c3 && r.c4 && r.c5 && r.c6) as u8;
    Ok(r)
}

/// `(F, F∇, F∞)` of one box: maxima over `i ∈ {D, N}` and overlapping squares.
pub fn f_functions(provider: &mut FieldProvider, anchor: Site, side: usize) -> Result<(f64, f64, f64)> {
    let area = (side * side) as f64;
    let mut f = (0.0f64, 0.0f64, 0.0f64);
    for q in FieldProvider::overlapping(anchor, side) {
        let st = provider.stats(q, side)?;
        f.0 = f.0.max(st.l2_sq[0].max(st.l2_sq[1]) / area);
        f.1 = f.1.max(st.grad_sq[0].max(st.grad_sq[1]) / area);
        f.2 = f.2.max(st.sup_alpha);
    }
    Ok(f)
}

/// (R0)–(R3) on one region at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    pub side: usize,
    pub boxes: usize,
    pub dirty: usize,
    pub r0: bool,
    pub r1: bool,
    pub r2: bool,
    pub r3: bool,
    pub controlled: bool,
    pub sums: [f64; 4],
    pub budgets: [f64; 4],
}

/// Evaluates (R0)–(R3) over the `L₀`-boxes contained in `y`.
pub fn controlled(
    y: &Region,
    side: usize,
    provider: &mut FieldProvider,
    consts: &CleanConstants,
    params: &ModelParams,
) -> Result<ControlReport> {
    let grid = BlockGrid::new(side as i64)?;
    if !grid.is_measurable(y) {
        return domain(format!("region is not {side}-measurable"));
    }
    let boxes = grid.cover(y);
    let nb = boxes.len() as f64;
    let le = params.log_eps();
    let eps2 = params.epsilon.powi(2);
    let lam = params.lambda();
    let thr = [eps2 * le.powf(1.0 + params.chi), eps2 / lam * le.powf(params.chi), le.powf(params.chi)];
    let budgets = [
        le.powf(-params.rho) * nb,
        eps2 * le.powf(params.zeta) * nb,
        eps2 / lam * le.powf(params.zeta) * nb,
        le.powf(params.zeta) * nb,
    ];
    let mut sums = [0.0; 4];
    let mut dirty = 0;
    for &i in &boxes.idx {
        let a = grid.anchor(i);
        let rep = classify_box(provider, a, side, consts, params)?;
        if rep.xi == 0 {
            dirty += 1;
            sums[0] += 1.0;
        }
        let (f, fg, fi) = f_functions(provider, a, side)?;
        if fg >= thr[0] {
            sums[1] += fg;
        }
        if f >= thr[1] {
            sums[2] += f;
        }
        if fi >= thr[2] {
            sums[3] += fi;
        }
    }
    let ok: Vec<bool> = (0..4).map(|k| sums[k] <= budgets[k]).collect();
    Ok(ControlReport {
        side,
        boxes: boxes.len(),
        dirty,
        r0: ok[0],
        r1: ok[1],
        r2: ok[2],
        r3: ok[3],
        controlled: ok.iter().all(|&b| b),
        sums,
        budgets,
    })
}

/// The three working scales, each raised to at least 2 so that box fields
/// have internal edges.
pub fn regularity_scales(params: &ModelParams) -> Vec<usize> {
    let mut v: Vec<usize> =
        [params.ell() / 2, params.ell(), params.big_l() / 16].iter().map(|&s| s.max(2) as usize).collect();
    v.sort_unstable();
    v.dedup();
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub scales: Vec<ControlReport>,
    pub regular: bool,
}

/// `δ_L(Y)` controlled at every scale of [`regularity_scales`].
pub fn regular(
    y: &Region,
    provider: &mut FieldProvider,
    consts: &CleanConstants,
    params: &ModelParams,
) -> Result<RegionReport> {
    let l = params.big_l();
    let thick = thicken_on(y, BlockGrid::new(l)?, l).region();
    let mut scales = Vec::new();
    for s in regularity_scales(params) {
        if l % s as i64 != 0 {
            return domain(format!("scale {s} does not divide L = {l}"));
        }
        scales.push(controlled(&thick, s, provider, consts, params)?);
    }
    let regular = scales.iter().all(|r| r.controlled);
    Ok(RegionReport { scales, regular })
}

/// Union of closed hulls of bad `L`-measurable sets found around bad blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirtyRegion {
    pub region: Region,
    pub bad_blocks: BlockSet,
    /// Every bad-block component was within the budget.
    pub complete: bool,
}

/// Single `L`-blocks inside `ambient` that are bad seed the search; their
/// 8-connected components of at most `budget` blocks are tested as a whole.
pub fn dirty_region(
    ambient: &Region,
    provider: &mut FieldProvider,
    consts: &CleanConstants,
    params: &ModelParams,
    budget: usize,
) -> Result<DirtyRegion> {
    let l = params.big_l();
    let grid = BlockGrid::new(l)?;
    let mut bad = BlockSet::new(grid);
    for i in grid.inner(ambient).idx {
        if !regular(&grid.block(i), provider, consts, params)?.regular {
            bad.idx.insert(i);
        }
    }
    let mut region = Region::new();
    let mut complete = true;
    for i in &bad.idx {
        region.extend_from(&closed_hull(&grid.block(*i), l)?);
    }
    for comp in connected_components(&bad) {
        if comp.len() < 2 {
            continue;
        }
        if comp.len() > budget {
            complete = false;
            continue;
        }
        let y = comp.region();
        if !regular(&y, provider, consts, params)?.regular {
            region.extend_from(&closed_hull(&y, l)?);
        }
    }
    Ok(DirtyRegion { region: region.intersection(ambient), bad_blocks: bad, complete })
}

/// `Ξ` of every `L₀`-box of `Λ_N` as CSV rows, `y` descending.
pub fn xi_csv(reports: &[BoxReport], n: usize) -> String {
    let Some(side) = reports.first().map(|r| r.side) else { return String::new() };
    let nb = n / side;
    let mut g = vec![vec![0u8; nb]; nb];
    for r in reports {
        g[(r.anchor.1 as usize) / side][(r.anchor.0 as usize) / side] = r.xi;
    }
    g.iter().rev().map(|row| row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlapping_squares() {
        assert_eq!(FieldProvider::overlapping((8, 8), 8).len(), 9);
        assert_eq!(FieldProvider::overlapping((3, 3), 1), vec![(3, 3)]);
    }

    #[test]
    fn scales_are_at_least_two() {
        let p = ModelParams::with_epsilon(0.05);
        assert_eq!(regularity_scales(&p), vec![2, 4, 8]);
    }
}
