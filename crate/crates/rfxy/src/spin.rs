//! Spin configurations, Dirichlet energies, Hamiltonians and block observables.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::Grid;
use crate::lattice::{LatticeGeom, Region, Site, NN4};

/// Maps an angle to `(−π, π]`.
pub fn wrap_angle(t: f64) -> f64 {
    let mut r = t.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// `‖σ_x − σ_y‖² = 2 − 2cos(θ_x − θ_y)`.
pub fn pair_energy(a: f64, b: f64) -> f64 {
    2.0 - 2.0 * (a - b).cos()
}

/// Angles per site of a rectangle; each angle is kept in `(−π, π]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinConfig {
    grid: Grid,
}

impl SpinConfig {
    pub fn constant(origin: Site, w: usize, h: usize, theta: f64) -> Self {
        let t = wrap_angle(theta);
        Self { grid: Grid::from_fn(origin, w, h, |_| t) }
    }

    pub fn from_fn(origin: Site, w: usize, h: usize, mut f: impl FnMut(Site) -> f64) -> Self {
        Self { grid: Grid::from_fn(origin, w, h, |s| wrap_angle(f(s))) }
    }

    /// All-`e₁` configuration on `Λ_N`.
    pub fn aligned(geom: &LatticeGeom) -> Self {
        Self::constant((0, 0), geom.side(), geom.side(), 0.0)
    }

    pub fn from_grid(grid: Grid) -> Self {
        let mut g = grid;
        g.data.mapv_inplace(wrap_angle);
        Self { grid: g }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn domain(&self) -> Region {
        self.grid.domain()
    }

    pub fn contains(&self, s: Site) -> bool {
        self.grid.contains(s)
    }

    pub fn theta(&self, s: Site) -> Option<f64> {
        self.grid.get(s)
    }

    /// Panics outside the domain.
    pub fn angle(&self, s: Site) -> f64 {
        self.grid.at(s)
    }

    pub fn set(&mut self, s: Site, theta: f64) -> Result<()> {
        if !self.grid.contains(s) {
            return domain(format!("site {s:?} outside configuration"));
        }
        self.grid.set(s, wrap_angle(theta));
        Ok(())
    }

    pub fn spin(&self, s: Site) -> Option<[f64; 2]> {
        self.theta(s).map(|t| [t.cos(), t.sin()])
    }

    fn need(&self, s: Site) -> Result<f64> {
        self.theta(s).ok_or_else(|| Error::Domain(format!("no angle at site {s:?}")))
    }

    /// Same layout as [`Grid::write_binary`].
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        self.grid.write_binary(w)
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        Ok(Self::from_grid(Grid::read_binary(r)?))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = (0..self.grid.height())
            .map(|y| (0..self.grid.width()).map(|x| self.grid.data[[x, y]]).collect())
            .collect();
        serde_json::json!({
            "origin": [self.grid.origin.0, self.grid.origin.1],
            "width": self.grid.width(),
            "height": self.grid.height(),
            "theta_rows": rows,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Repr {
            origin: [i64; 2],
            width: usize,
            height: usize,
            theta_rows: Vec<Vec<f64>>,
        }
        let r: Repr = serde_json::from_value(v.clone())?;
        if r.theta_rows.len() != r.height || r.theta_rows.iter().any(|row| row.len() != r.width) {
            return Err(Error::Format("theta_rows shape mismatch".into()));
        }
        Ok(Self::from_fn((r.origin[0], r.origin[1]), r.width, r.height, |(x, y)| {
            r.theta_rows[(y - r.origin[1]) as usize][(x - r.origin[0]) as usize]
        }))
    }
}

/// Boundary data `τ` on `∂ᵒR`, stored as angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundaryCondition {
    Free,
    ConstantE1,
    /// `e₁` outside `Λ_N`, free inside.
    Ext { side: usize },
    /// Every needed boundary site must be present.
    Explicit { angles: BTreeMap<String, f64> },
}

impl BoundaryCondition {
    pub fn explicit(map: impl IntoIterator<Item = (Site, f64)>) -> Self {
        BoundaryCondition::Explicit {
            angles: map.into_iter().map(|(s, t)| (site_key(s), wrap_angle(t))).collect(),
        }
    }

    /// `τ = σ` on `∂ᵒR ∩ dom σ`.
    pub fn from_config(sigma: &SpinConfig, region: &Region) -> Self {
        let outer = crate::lattice::boundary(region, crate::lattice::Side::Outer);
        Self::explicit(outer.iter().filter_map(|s| sigma.theta(s).map(|t| (s, t))))
    }

    /// `Ok(None)` when the site carries no boundary spin.
    pub fn angle_at(&self, s: Site) -> Result<Option<f64>> {
        match self {
            BoundaryCondition::Free => Ok(None),
            BoundaryCondition::ConstantE1 => Ok(Some(0.0)),
            BoundaryCondition::Ext { side } => {
                let n = *side as i64;
                let inside = (0..n).contains(&s.0) && (0..n).contains(&s.1);
                Ok(if inside { None } else { Some(0.0) })
            }
            BoundaryCondition::Explicit { angles } => match angles.get(&site_key(s)) {
                Some(&t) => Ok(Some(t)),
                None => domain(format!("explicit boundary condition missing at {s:?}")),
            },
        }
    }
}

fn site_key((x, y): Site) -> String {
    format!("{x},{y}")
}

/// Which logarithm `|log ε|` uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

/// Field strength, temperature and the exponent family fixing every scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub epsilon: f64,
    pub beta: f64,
    pub s: f64,
    pub eta_lambda: f64,
    pub eta: f64,
    pub chi: f64,
    pub zeta: f64,
    pub xi: f64,
    pub rho: f64,
    pub log_base: LogBase,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            beta: 10.0,
            s: 1.0 / 64.0,
            eta_lambda: 1.0 / 16.0,
            eta: 1.0 / 40.0,
            chi: 1.0 / 32.0,
            zeta: 1.0 / 32.0,
            xi: 0.1,
            rho: 1.25,
            log_base: LogBase::Natural,
        }
    }
}

impl ModelParams {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self { epsilon, ..Self::default() }
    }

    /// `|log ε|` in the configured base.
    pub fn log_eps(&self) -> f64 {
        match self.log_base {
            LogBase::Natural => self.epsilon.ln().abs(),
            LogBase::Two => self.epsilon.log2().abs(),
        }
    }

    /// `ℓ = 2^⌊log₂(ε⁻¹|log ε|^{−1/2−s})⌋`, at least 1.
    pub fn ell(&self) -> i64 {
        let v = (1.0 / self.epsilon) * self.log_eps().powf(-0.5 - self.s);
        1i64 << v.log2().floor().max(0.0) as u32
    }

    /// `L = 2^⌈log₂(ε⁻¹|log ε|^{−1/2+s})⌉`, at least 1.
    pub fn big_l(&self) -> i64 {
        let v = (1.0 / self.epsilon) * self.log_eps().powf(-0.5 + self.s);
        1i64 << v.log2().ceil().max(0.0) as u32
    }

    /// `λ = ε²|log ε|^{1+η_λ}`.
    pub fn lambda(&self) -> f64 {
        self.epsilon.powi(2) * self.log_eps().powf(1.0 + self.eta_lambda)
    }

    /// Every violated window, empty when the parameters are admissible.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut open = |name: &str, x: f64, lo: f64, hi: f64| {
            if !(x > lo && x < hi) {
                v.push(format!("{name} = {x} not in ({lo}, {hi})"));
            }
        };
        open("epsilon", self.epsilon, 0.0, 1.0);
        open("s", self.s, 0.0, 1.0 / 32.0);
        open("eta_lambda", self.eta_lambda, 2.0 * self.s, 1.0 / 8.0);
        open("eta", self.eta, 0.0, self.eta_lambda / 2.0);
        open("chi", self.chi, 0.0, 1.0 / 16.0);
        open("zeta", self.zeta, 0.0, 1.0 / 16.0);
        open("xi", self.xi, 0.0, 1.0);
        if !(self.beta > 0.0) {
            v.push(format!("beta = {} must be positive", self.beta));
        }
        if self.rho != 1.25 {
            v.push(format!("rho = {} must equal 5/4", self.rho));
        }
        if self.epsilon > 0.0 && self.epsilon < 1.0 && self.ell() >= self.big_l() {
            v.push(format!("ell = {} not below L = {}", self.ell(), self.big_l()));
        }
        v
    }
}

/// `ℰ_R(σ)`: sum over unordered internal nearest-neighbour edges.
pub fn dirichlet_energy(sigma: &SpinConfig, region: &Region) -> Result<f64> {
    let mut e = 0.0;
    for s in region.iter() {
        let a = sigma.need(s)?;
        for (dx, dy) in [(1, 0), (0, 1)] {
            let n = (s.0 + dx, s.1 + dy);
            if region.contains(n) {
                e += pair_energy(a, sigma.need(n)?);
            }
        }
    }
    Ok(e)
}

/// Sum of `‖σ_x − τ_y‖²` over `x ∈ R`, `y ∈ ∂ᵒR` carrying a boundary spin.
pub fn boundary_energy(sigma: &SpinConfig, region: &Region, tau: &BoundaryCondition) -> Result<f64> {
    let mut e = 0.0;
    for s in region.iter() {
        let a = sigma.need(s)?;
        for (dx, dy) in NN4 {
            let n = (s.0 + dx, s.1 + dy);
            if !region.contains(n) {
                if let Some(t) = tau.angle_at(n)? {
                    e += pair_energy(a, t);
                }
            }
        }
    }
    Ok(e)
}

/// `ℰ_R(σ|τ)`: internal edges plus edges to `τ` on `∂ᵒR`.
pub fn dirichlet_energy_bc(sigma: &SpinConfig, region: &Region, tau: &BoundaryCondition) -> Result<f64> {
    Ok(dirichlet_energy(sigma, region)? + boundary_energy(sigma, region, tau)?)
}

/// `−ℋ_R(σ|τ) = −½ℰ_R(σ) − ½Σ‖σ_x − τ_y‖² + εΣ α_x (e₂·σ_x)`.
pub fn hamiltonian(
    sigma: &SpinConfig,
    region: &Region,
    tau: &BoundaryCondition,
    alpha: &Grid,
    params: &ModelParams,
) -> Result<f64> {
    let mut field = 0.0;
    for s in region.iter() {
        let a = alpha.get(s).ok_or_else(|| Error::Domain(format!("alpha undefined at {s:?}")))?;
        field += a * sigma.need(s)?.sin();
    }
    Ok(-0.5 * dirichlet_energy_bc(sigma, region, tau)? + params.epsilon * field)
}

/// `σ(Q) = |Q|⁻¹ Σ_{x∈Q} σ_x`.
pub fn block_average(sigma: &SpinConfig, q: &Region) -> Result<[f64; 2]> {
    if q.is_empty() {
        return domain("block average over an empty set");
    }
    let mut m = [0.0, 0.0];
    for s in q.iter() {
        let t = sigma.need(s)?;
        m[0] += t.cos();
        m[1] += t.sin();
    }
    let n = q.len() as f64;
    Ok([m[0] / n, m[1] / n])
}

/// `M_z = σ(Q_L(z))`.
pub fn block_magnetization(sigma: &SpinConfig, z: Site, l: i64) -> Result<[f64; 2]> {
    if l < 1 {
        return domain("block side must be positive");
    }
    if !(sigma.contains(z) && sigma.contains((z.0 + l - 1, z.1 + l - 1))) {
        return domain(format!("block Q_{l}({z:?}) exits the configuration"));
    }
    block_average(sigma, &Region::square(z, l))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_keeps_pi() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn scales_at_reference_epsilon() {
        let p = ModelParams::with_epsilon(0.05);
        assert_eq!((p.ell(), p.big_l()), (8, 16));
        let p = ModelParams::with_epsilon(0.1);
        assert_eq!((p.ell(), p.big_l()), (4, 8));
    }

    #[test]
    fn explicit_bc_reports_missing_site() {
        let tau = BoundaryCondition::explicit([((1, 0), 0.0)]);
        assert!(tau.angle_at((0, 1)).is_err());
        assert_eq!(tau.angle_at((1, 0)).unwrap(), Some(0.0));
    }
}
