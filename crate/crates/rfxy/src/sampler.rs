//! Single-site Markov chains for the finite-volume Gibbs measure
//! `∝ exp(−βℋ_Λ(σ|σ⁰))` with a quenched Gaussian field along `e₂`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coarse::{contours_of, CoarseParams};
use crate::error::{param, Result};
use crate::field::AlphaSource;
use crate::grid::Grid;
use crate::harness::{fmt17, par_map};
use crate::lattice::NN4;
use crate::spin::{wrap_angle, SpinConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainBoundary {
    Free,
    /// `σ⁰ = e₁` outside `Λ_N`.
    E1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Update {
    Metropolis,
    HeatBath,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Start {
    Aligned,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GibbsParams {
    pub beta: f64,
    pub epsilon: f64,
    pub side: usize,
    pub boundary: ChainBoundary,
    pub update: Update,
    pub start: Start,
    pub burn_in: usize,
    pub sweeps: usize,
    /// Sweeps between recorded measurements.
    pub measure_every: usize,
    /// Sweeps between contour censuses; 0 disables them.
    pub contour_every: usize,
    /// Initial Metropolis proposal half-width.
    pub width: f64,
    pub chain_seed: u64,
}

impl Default for GibbsParams {
    fn default() -> Self {
        Self {
            beta: 10.0,
            epsilon: 0.1,
            side: 16,
            boundary: ChainBoundary::E1,
            update: Update::HeatBath,
            start: Start::Aligned,
            burn_in: 500,
            sweeps: 2000,
            measure_every: 1,
            contour_every: 0,
            width: 1.0,
            chain_seed: 0,
        }
    }
}

impl GibbsParams {
    /// `β ≥ 0` (0 is the uniform control), `width ∈ (0, π]`, at least 32
    /// recorded measurements.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return param(format!("beta = {} must be finite and non-negative", self.beta));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return param(format!("epsilon = {} must be finite and non-negative", self.epsilon));
        }
        if !(self.width > 0.0 && self.width <= PI) {
            return param(format!("width = {} not in (0, π]", self.width));
        }
        if self.side == 0 || self.measure_every == 0 {
            return param("side and measure_every must be positive");
        }
        if self.sweeps / self.measure_every < 32 {
            return param("need at least 32 measurements for batch means");
        }
        Ok(())
    }
}

/// Envelope tables for `exp(κ(cos u − 1))` on a geometric `κ` grid.
/// The density is non-increasing in `κ`, so the table at the largest grid
/// point `≤ κ` dominates it.
#[derive(Clone, Debug, Default)]
pub struct HeatBathTables {
    tables: HashMap<i32, Vec<f64>>,
}

pub const HEAT_BATH_BINS: usize = 4096;
const KAPPA_MIN: f64 = 1e-2;
const KAPPA_RATIO: f64 = 1.05;

impl HeatBathTables {
    fn key(kappa: f64) -> Option<i32> {
        (kappa >= KAPPA_MIN).then(|| ((kappa / KAPPA_MIN).ln() / KAPPA_RATIO.ln()).floor() as i32)
    }

    fn kappa_of(key: Option<i32>) -> f64 {
        key.map_or(0.0, |k| KAPPA_MIN * KAPPA_RATIO.powi(k))
    }

    /// Cumulative envelope mass; bin `b` covers `[−π + bh, −π + (b+1)h)`.
    fn table(&mut self, key: Option<i32>) -> &[f64] {
        let k = key.unwrap_or(i32::MIN);
        self.tables.entry(k).or_insert_with(|| {
            let kappa = Self::kappa_of(key);
            let h = 2.0 * PI / HEAT_BATH_BINS as f64;
            let mut cum = Vec::with_capacity(HEAT_BATH_BINS);
            let mut acc = 0.0;
            for b in 0..HEAT_BATH_BINS {
                let (lo, hi) = (-PI + b as f64 * h, -PI + (b + 1) as f64 * h);
                let nearest = if lo <= 0.0 && hi > 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
                acc += (kappa * (nearest.cos() - 1.0)).exp();
                cum.push(acc);
            }
            cum
        })
    }

    /// Exact draw of `u` with density `∝ exp(κ cos u)` on `(−π, π]`.
    pub fn sample(&mut self, kappa: f64, rng: &mut impl Rng) -> f64 {
        let key = Self::key(kappa);
        let h = 2.0 * PI / HEAT_BATH_BINS as f64;
        loop {
            let cum = self.table(key);
            let total = *cum.last().expect("bins");
            let r = rng.random::<f64>() * total;
            let b = cum.partition_point(|&c| c <= r).min(HEAT_BATH_BINS - 1);
            let env = cum[b] - if b == 0 { 0.0 } else { cum[b - 1] };
            let u = -PI + (b as f64 + rng.random::<f64>()) * h;
            let f = (kappa * (u.cos() - 1.0)).exp();
            if rng.random::<f64>() * env <= f {
                return wrap_angle(u);
            }
        }
    }
}

/// One chain: configuration, quenched field, counters and its own RNG.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub sigma: SpinConfig,
    pub alpha: Grid,
    pub sweep: usize,
    pub width: f64,
    pub accepted: u64,
    pub proposed: u64,
    rng: ChaCha8Rng,
    tables: HeatBathTables,
}

impl ChainState {
    pub fn new(params: &GibbsParams, alpha: Grid) -> Result<Self> {
        params.validate()?;
        let n = params.side;
        if alpha.width() != n || alpha.height() != n || alpha.origin != (0, 0) {
            return param("field must cover Λ_N");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.chain_seed);
        let sigma = match params.start {
            Start::Aligned => SpinConfig::constant((0, 0), n, n, 0.0),
            Start::Random => SpinConfig::from_fn((0, 0), n, n, |_| rng.random::<f64>() * 2.0 * PI),
        };
        Ok(Self { sigma, alpha, sweep: 0, width: params.width, accepted: 0, proposed: 0, rng, tables: HeatBathTables::default() })
    }

    pub fn from_seed(params: &GibbsParams, field_seed: u64) -> Result<Self> {
        Self::new(params, AlphaSource::new(field_seed).grid((0, 0), params.side, params.side))
    }

    /// `(Σ cos θ_y, Σ sin θ_y + εα_x)` so that the local weight is
    /// `exp(β(A cos θ + B sin θ))`.
    fn local_field(&self, x: usize, y: usize, params: &GibbsParams) -> (f64, f64) {
        let n = params.side as i64;
        let g = self.sigma.grid();
        let (mut a, mut b) = (0.0, params.epsilon * self.alpha.data[[x, y]]);
        for (dx, dy) in NN4 {
            let (u, v) = (x as i64 + dx, y as i64 + dy);
            if (0..n).contains(&u) && (0..n).contains(&v) {
                let t = g.data[[u as usize, v as usize]];
                a += t.cos();
                b += t.sin();
            } else if params.boundary == ChainBoundary::E1 {
                a += 1.0;
            }
        }
        (a, b)
    }

    fn set(&mut self, x: usize, y: usize, t: f64) {
        self.sigma.set((x as i64, y as i64), t).expect("site inside Λ_N");
    }

    /// `ℋ_{Λ_N}(σ|σ⁰) = ½Σ‖σ_x − σ_y‖² − εΣα_x e₂·σ_x`.
    pub fn energy(&self, params: &GibbsParams) -> f64 {
        let n = params.side;
        let g = &self.sigma.grid().data;
        let mut e = 0.0;
        for x in 0..n {
            for y in 0..n {
                let t = g[[x, y]];
                if x + 1 < n {
                    e += 1.0 - (t - g[[x + 1, y]]).cos();
                }
                if y + 1 < n {
                    e += 1.0 - (t - g[[x, y + 1]]).cos();
                }
                if params.boundary == ChainBoundary::E1 {
                    let outside = usize::from(x == 0) + usize::from(x + 1 == n) + usize::from(y == 0) + usize::from(y + 1 == n);
                    e += outside as f64 * (1.0 - t.cos());
                }
                e -= params.epsilon * self.alpha.data[[x, y]] * t.sin();
            }
        }
        e
    }

    /// Mean spin over `Λ_N`.
    pub fn magnetization(&self) -> [f64; 2] {
        let g = &self.sigma.grid().data;
        let n = g.len() as f64;
        [g.iter().map(|t| t.cos()).sum::<f64>() / n, g.iter().map(|t| t.sin()).sum::<f64>() / n]
    }

    /// One lexicographic pass of uniform-perturbation Metropolis.
    pub fn metropolis_sweep(&mut self, params: &GibbsParams) {
        let n = params.side;
        for x in 0..n {
            for y in 0..n {
                let (a, b) = self.local_field(x, y, params);
                let t = self.sigma.grid().data[[x, y]];
                let t2 = t + self.width * (2.0 * self.rng.random::<f64>() - 1.0);
                let d = a * (t2.cos() - t.cos()) + b * (t2.sin() - t.sin());
                self.proposed += 1;
                if d >= 0.0 || self.rng.random::<f64>() < (params.beta * d).exp() {
                    self.set(x, y, t2);
                    self.accepted += 1;
                }
            }
        }
        self.sweep += 1;
    }

    /// One lexicographic pass of exact conditional resampling.
    pub fn heatbath_sweep(&mut self, params: &GibbsParams) {
        let n = params.side;
        for x in 0..n {
            for y in 0..n {
                let (a, b) = self.local_field(x, y, params);
                let kappa = params.beta * a.hypot(b);
                let u = self.tables.sample(kappa, &mut self.rng);
                self.set(x, y, b.atan2(a) + u);
                self.proposed += 1;
                self.accepted += 1;
            }
        }
        self.sweep += 1;
    }

    pub fn sweep_once(&mut self, params: &GibbsParams) {
        match params.update {
            Update::Metropolis => self.metropolis_sweep(params),
            Update::HeatBath => self.heatbath_sweep(params),
        }
    }

    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 { 0.0 } else { self.accepted as f64 / self.proposed as f64 }
    }

    /// Burn-in; the Metropolis width is rescaled every 10 sweeps towards
    /// 50% acceptance and frozen afterwards.
    pub fn burn_in(&mut self, params: &GibbsParams) {
        for i in 0..params.burn_in {
            self.sweep_once(params);
            if params.update == Update::Metropolis && (i + 1) % 10 == 0 {
                let acc = self.acceptance();
                if !(0.4..=0.6).contains(&acc) {
                    self.width = (self.width * (acc / 0.5).clamp(0.5, 2.0)).clamp(1e-3, PI);
                }
                self.accepted = 0;
                self.proposed = 0;
            }
        }
        self.accepted = 0;
        self.proposed = 0;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub sweep: usize,
    pub energy: f64,
    pub mx: f64,
    pub my: f64,
    pub acceptance: f64,
}

/// Mean, batch-means standard error and integrated autocorrelation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub err: f64,
    pub tau_int: f64,
}

pub const BATCHES: usize = 32;

/// Batch means over 32 equal batches (a trailing remainder is dropped).
pub fn batch_means(xs: &[f64]) -> Estimate {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n.max(1) as f64;
    let size = n / BATCHES;
    if size == 0 {
        return Estimate { mean, err: f64::NAN, tau_int: f64::NAN };
    }
    let bm: Vec<f64> = (0..BATCHES).map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let m = bm.iter().sum::<f64>() / BATCHES as f64;
    let var = bm.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    Estimate { mean, err: (var / BATCHES as f64).sqrt(), tau_int: integrated_autocorrelation(xs) }
}

/// `½ + Σ_t ρ(t)` with Sokal's window `t ≤ 6τ`.
pub fn integrated_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len();
    let m = xs.iter().sum::<f64>() / n as f64;
    let c0 = xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for t in 1..n / 2 {
        let c = (0..n - t).map(|i| (xs[i] - m) * (xs[i + t] - m)).sum::<f64>() / n as f64;
        tau += c / c0;
        if t as f64 >= 6.0 * tau {
            break;
        }
    }
    tau
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourCensus {
    pub sweep: usize,
    pub contours: usize,
    pub bad_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub field_seed: u64,
    pub chain_seed: u64,
    pub mx: Estimate,
    pub my: Estimate,
    pub energy: Estimate,
    pub acceptance: f64,
    pub width: f64,
    pub census: Vec<ContourCensus>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub params: GibbsParams,
    pub replicas: Vec<ReplicaSummary>,
    /// Average over replicas of the per-replica means.
    pub field_average: [f64; 2],
}

/// Series and summary of one replica.
pub fn run_chain(params: &GibbsParams, field_seed: u64, coarse: Option<&CoarseParams>) -> Result<(Vec<SeriesRow>, ReplicaSummary)> {
    let mut st = ChainState::from_seed(params, field_seed)?;
    st.burn_in(params);
    let mut rows = Vec::new();
    let mut census = Vec::new();
    for i in 1..=params.sweeps {
        st.sweep_once(params);
        if i % params.measure_every == 0 {
            let [mx, my] = st.magnetization();
            rows.push(SeriesRow { sweep: st.sweep, energy: st.energy(params), mx, my, acceptance: st.acceptance() });
        }
        if let Some(cp) = coarse.filter(|_| params.contour_every > 0 && i % params.contour_every == 0) {
            let cs = contours_of(&st.sigma, cp)?;
            let bad = cs.phase.psi.iter().filter(|&&v| v == 0).count() as f64 / cs.phase.psi.len() as f64;
            census.push(ContourCensus { sweep: st.sweep, contours: cs.contours.len(), bad_fraction: bad });
        }
    }
    let col = |f: fn(&SeriesRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let summary = ReplicaSummary {
        field_seed,
        chain_seed: params.chain_seed,
        mx: batch_means(&col(|r| r.mx)),
        my: batch_means(&col(|r| r.my)),
        energy: batch_means(&col(|r| r.energy)),
        acceptance: st.acceptance(),
        width: st.width,
        census,
    };
    Ok((rows, summary))
}

/// One replica per field seed, run on `workers` threads; results are in
/// the order of `field_seeds`.
pub fn run_and_measure(params: &GibbsParams, field_seeds: &[u64], coarse: Option<&CoarseParams>, workers: usize) -> Result<(Vec<Vec<SeriesRow>>, RunSummary)> {
    params.validate()?;
    let runs = par_map(field_seeds.to_vec(), workers, |seed| run_chain(params, seed, coarse));
    let mut series = Vec::with_capacity(runs.len());
    let mut replicas = Vec::with_capacity(runs.len());
    for r in runs {
        let (s, rep) = r?;
        series.push(s);
        replicas.push(rep);
    }
    let k = replicas.len().max(1) as f64;
    let field_average = [replicas.iter().map(|r| r.mx.mean).sum::<f64>() / k, replicas.iter().map(|r| r.my.mean).sum::<f64>() / k];
    Ok((series, RunSummary { params: params.clone(), replicas, field_average }))
}

pub fn series_csv(rows: &[SeriesRow]) -> String {
    let mut s = String::from("sweep,energy,mx,my,acceptance\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.sweep, fmt17(r.energy), fmt17(r.mx), fmt17(r.my), fmt17(r.acceptance));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_zero_accepts_everything() {
        let p = GibbsParams { beta: 0.0, update: Update::Metropolis, side: 4, sweeps: 64, ..Default::default() };
        let mut st = ChainState::from_seed(&p, 1).unwrap();
        for _ in 0..10 {
            st.metropolis_sweep(&p);
        }
        assert_eq!(st.accepted, st.proposed);
    }

    #[test]
    fn batch_means_of_constant() {
        let e = batch_means(&[2.0; 64]);
        assert_eq!((e.mean, e.err), (2.0, 0.0));
    }
}
