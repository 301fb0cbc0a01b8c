//! Experiment manifests, the worker pool, reproducible CSV/JSON
//! outputs and run records.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::classify::{classify_box, regular, CleanConstants, FieldProvider};
use crate::coarse::{contours_of, CoarseParams, ContourSign};
use crate::error::{param, Error, Result};
use crate::field::{energy_diff_dn, sup_tail_experiment, tail_csv, AlphaSource, Bc, ResolventSpec, Spectral};
use crate::grid::Grid;
use crate::sampler::{run_and_measure, series_csv, GibbsParams};
use crate::spin::ModelParams;
use crate::surgery::{droplet, energy_gap, surgery, variational_probe, SurgeryConfig};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "RFXY_WORKERS";

/// `RFXY_WORKERS` if set and positive, else the available parallelism.
pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Maps `f` over `items` on `workers` threads; the output order is the
/// input order whatever the scheduling.
pub fn par_map<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let n = items.len();
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return items.into_iter().map(f).collect();
    }
    let queue: Vec<Mutex<Option<T>>> = items.into_iter().map(|t| Mutex::new(Some(t))).collect();
    let out: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let item = queue[i].lock().expect("queue").take().expect("taken once");
                let r = f(item);
                *out[i].lock().expect("slot") = Some(r);
            });
        }
    });
    out.into_iter().map(|m| m.into_inner().expect("slot").expect("filled")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FieldVariance,
    SupTail,
    DnEnergyDiff,
    DirtyFraction,
    ContourCensus,
    SurgeryGap,
    Magnetization,
    VariationalProbe,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        Self::FieldVariance,
        Self::SupTail,
        Self::DnEnergyDiff,
        Self::DirtyFraction,
        Self::ContourCensus,
        Self::SurgeryGap,
        Self::Magnetization,
        Self::VariationalProbe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::FieldVariance => "field-variance",
            Self::SupTail => "sup-tail",
            Self::DnEnergyDiff => "dn-energy-diff",
            Self::DirtyFraction => "dirty-fraction",
            Self::ContourCensus => "contour-census",
            Self::SurgeryGap => "surgery-gap",
            Self::Magnetization => "magnetization",
            Self::VariationalProbe => "variational-probe",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::Parameter(format!(
                "unknown experiment kind {s:?}; expected one of {}",
                Self::ALL.map(|k| k.name()).join(", ")
            ))
        })
    }
}

/// Everything a run depends on. `output_dir` is excluded from the hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub model: ModelParams,
    pub clean: CleanConstants,
    /// Box or lattice side.
    pub side: usize,
    pub samples: u64,
    pub seed: u64,
    pub bc: Bc,
    /// ε values for the trend experiments.
    pub epsilons: Vec<f64>,
    /// Tail thresholds in units of `ε ζ̄₂`.
    pub ms: Vec<f64>,
    pub betas: Vec<f64>,
    pub sampler: GibbsParams,
    /// Frozen constant of the D/N energy-difference bound.
    pub dn_constant: f64,
    /// Probe on the mean-zero field.
    pub centered: bool,
    pub output_dir: Option<String>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self::default_for(ExperimentKind::FieldVariance)
    }
}

impl ExperimentSpec {
    /// The reference configuration of each kind.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let base = Self {
            kind,
            model: ModelParams::default(),
            clean: CleanConstants::default(),
            side: 64,
            samples: 1000,
            seed: 0,
            bc: Bc::D,
            epsilons: vec![],
            ms: vec![],
            betas: vec![],
            sampler: GibbsParams::default(),
            dn_constant: 10.0,
            centered: true,
            output_dir: None,
        };
        match kind {
            ExperimentKind::FieldVariance => Self { samples: 100_000, ..base },
            ExperimentKind::SupTail => Self {
                model: ModelParams::with_epsilon(0.1),
                side: 128,
                samples: 10_000,
                ms: vec![2.0, 4.0, 6.0],
                ..base
            },
            ExperimentKind::DnEnergyDiff => Self { model: ModelParams::with_epsilon(0.1), ..base },
            ExperimentKind::DirtyFraction => Self { samples: 200, epsilons: vec![0.3, 0.2, 0.1], ..base },
            ExperimentKind::ContourCensus => Self {
                model: ModelParams::with_epsilon(0.1),
                side: 32,
                samples: 4,
                sampler: GibbsParams { beta: 20.0, epsilon: 0.1, side: 32, burn_in: 200, sweeps: 320, ..Default::default() },
                ..base
            },
            ExperimentKind::SurgeryGap => Self { model: ModelParams::with_epsilon(0.1), side: 128, samples: 100, ..base },
            ExperimentKind::Magnetization => Self {
                model: ModelParams::with_epsilon(0.3),
                samples: 10,
                betas: vec![40.0],
                sampler: GibbsParams { epsilon: 0.3, side: 64, burn_in: 500, sweeps: 1600, ..Default::default() },
                ..base
            },
            ExperimentKind::VariationalProbe => {
                Self { model: ModelParams::with_epsilon(0.02), side: 16, samples: 200, ..base }
            }
        }
    }

    /// Hex SHA-256 of the canonical JSON (sorted keys) without `output_dir`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("spec serializes");
        if let Value::Object(m) = &mut v {
            m.remove("output_dir");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Applies `a.b.c=value` overrides; `value` is parsed as JSON and taken
    /// as a string otherwise.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        for o in overrides {
            let (path, raw) = o.split_once('=').ok_or_else(|| Error::Parameter(format!("override {o:?} is not key=value")))?;
            let val: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut v, path, val)?;
        }
        Ok(serde_json::from_value(v)?)
    }
}

fn set_path(v: &mut Value, path: &str, val: Value) -> Result<()> {
    let mut cur = v;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| Error::Parameter(format!("{path}: {p} is not inside an object")))?;
        if i + 1 == parts.len() {
            if !obj.contains_key(*p) {
                return param(format!("unknown field {path}"));
            }
            obj.insert(p.to_string(), val);
            return Ok(());
        }
        cur = obj.get_mut(*p).ok_or_else(|| Error::Parameter(format!("unknown field {path}")))?;
    }
    param("empty override path")
}

/// Every violated parameter window of the experiment.
pub fn validate_params(spec: &ExperimentSpec) -> Vec<String> {
    let mut v: Vec<String> = spec.model.violations().into_iter().map(|s| format!("model: {s}")).collect();
    for &e in &spec.epsilons {
        let m = ModelParams { epsilon: e, ..spec.model.clone() };
        v.extend(m.violations().into_iter().map(|s| format!("epsilons[{e}]: {s}")));
    }
    if let Err(e) = spec.clean.check(&spec.model) {
        v.push(format!("clean: {e}"));
    }
    if spec.samples == 0 {
        v.push("samples must be positive".into());
    }
    let needs_pow2 = matches!(
        spec.kind,
        ExperimentKind::FieldVariance | ExperimentKind::SupTail | ExperimentKind::DnEnergyDiff | ExperimentKind::VariationalProbe
    );
    if needs_pow2 && !spec.side.is_power_of_two() {
        v.push(format!("side {} must be a power of two", spec.side));
    }
    if matches!(spec.kind, ExperimentKind::Magnetization | ExperimentKind::ContourCensus) {
        if let Err(e) = spec.sampler.validate() {
            v.push(format!("sampler: {e}"));
        }
        for &b in &spec.betas {
            if !(b >= 0.0 && b.is_finite()) {
                v.push(format!("beta {b} must be finite and non-negative"));
            }
        }
    }
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub ok: bool,
    /// Hard checks decide the exit status.
    pub hard: bool,
    pub detail: String,
}

/// Result of one experiment. Everything except `wall_clock_s` is a
/// deterministic function of the `ExperimentSpec`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub kind: ExperimentKind,
    pub spec_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub wall_clock_s: f64,
    pub checks: Vec<CheckRecord>,
    /// File name to CSV body.
    pub tables: BTreeMap<String, String>,
    pub summary: Value,
}

impl RunRecord {
    pub fn hard_ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok || !c.hard)
    }

    /// Files with their exact bytes; each starts with `spec_hash` and seed.
    pub fn files(&self) -> BTreeMap<String, String> {
        let head = format!("# spec_hash={} seed={}\n", self.spec_hash, self.seed);
        let mut out: BTreeMap<String, String> =
            self.tables.iter().map(|(k, v)| (k.clone(), format!("{head}{v}"))).collect();
        let summary = serde_json::json!({
            "kind": self.kind,
            "spec_hash": self.spec_hash,
            "seed": self.seed,
            "code_version": self.code_version,
            "checks": self.checks,
            "summary": self.summary,
        });
        out.insert(format!("{}-summary.json", self.kind.name()), serde_json::to_string_pretty(&summary).expect("json") + "\n");
        out
    }

    /// Writes [`RunRecord::files`] plus a `-record.json` carrying the wall clock.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in self.files() {
            std::fs::write(dir.join(name), body)?;
        }
        std::fs::write(dir.join(format!("{}-record.json", self.kind.name())), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

struct Ctx<'a> {
    spec: &'a ExperimentSpec,
    workers: usize,
    checks: Vec<CheckRecord>,
    tables: BTreeMap<String, String>,
    summary: serde_json::Map<String, Value>,
}

impl Ctx<'_> {
    fn check(&mut self, name: &str, ok: bool, hard: bool, detail: String) {
        self.checks.push(CheckRecord { name: name.into(), ok, hard, detail });
    }

    fn table(&mut self, name: &str, body: String) {
        self.tables.insert(format!("{}-{name}.csv", self.spec.kind.name()), body);
    }

    fn put(&mut self, k: &str, v: impl Serialize) {
        self.summary.insert(k.into(), serde_json::to_value(v).expect("json"));
    }
}

/// Validates the `ExperimentSpec` and runs its pipeline. Hard assertion failures inside
/// the pipeline abort with the error; check outcomes are in the record.
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> Result<RunRecord> {
    let v = validate_params(spec);
    if !v.is_empty() {
        return param(format!("invalid spec: {}", v.join("; ")));
    }
    let t0 = Instant::now();
    let mut cx = Ctx { spec, workers, checks: vec![], tables: BTreeMap::new(), summary: serde_json::Map::new() };
    match spec.kind {
        ExperimentKind::FieldVariance => field_variance(&mut cx)?,
        ExperimentKind::SupTail => sup_tail(&mut cx)?,
        ExperimentKind::DnEnergyDiff => dn_energy_diff(&mut cx)?,
        ExperimentKind::DirtyFraction => dirty_fraction(&mut cx)?,
        ExperimentKind::ContourCensus => contour_census(&mut cx)?,
        ExperimentKind::SurgeryGap => surgery_gap(&mut cx)?,
        ExperimentKind::Magnetization => magnetization(&mut cx)?,
        ExperimentKind::VariationalProbe => probe(&mut cx)?,
    }
    let rec = RunRecord {
        kind: spec.kind,
        spec_hash: spec.hash(),
        seed: spec.seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_s: t0.elapsed().as_secs_f64(),
        checks: cx.checks,
        tables: cx.tables,
        summary: Value::Object(cx.summary),
    };
    if let Some(dir) = &spec.output_dir {
        rec.write(Path::new(dir))?;
    }
    Ok(rec)
}

/// Contiguous seed ranges, one per work unit.
fn chunks(n: u64, parts: usize) -> Vec<(u64, u64)> {
    let parts = (parts as u64).clamp(1, n.max(1));
    (0..parts).map(|i| (n * i / parts, n * (i + 1) / parts)).collect()
}

fn field_variance(cx: &mut Ctx) -> Result<()> {
    let spec = cx.spec;
    let l = spec.side;
    let sp = Spectral::new(ResolventSpec::new(spec.bc, l, spec.model.lambda(), spec.model.epsilon)?)?;
    let x = ((l / 2) as i64, (l / 2) as i64);
    let shells: Vec<usize> = (0..=sp.spec.max_shell()).filter(|&s| sp.shell.iter().any(|&v| v == s)).collect();
    // The annulus projection is symmetric, so its value at x is ⟨w_s, α⟩ with w_s = P_s δ_x.
    let mut delta = Grid::zeros((0, 0), l, l);
    delta.set(x, 1.0);
    let weights: Vec<Grid> = shells.iter().map(|&s| sp.annulus_project(&delta, s)).collect::<Result<_>>()?;
    let parts = chunks(spec.samples, cx.workers * 4);
    let sums = par_map(parts, cx.workers, |(a, b)| {
        let mut acc = vec![(0.0f64, 0.0f64); shells.len()];
        for i in a..b {
            let alpha = AlphaSource::new(spec.seed.wrapping_add(i)).grid((0, 0), l, l);
            for (k, w) in weights.iter().enumerate() {
                let v: f64 = w.data.iter().zip(alpha.data.iter()).map(|(p, q)| p * q).sum();
                acc[k].0 += v * v;
                acc[k].1 += v.powi(4);
            }
        }
        acc
    });
    let n = spec.samples as f64;
    let mut csv = String::from("s,exact_var,mc_var,se,z\n");
    let mut worst = 0.0f64;
    for (k, &s) in shells.iter().enumerate() {
        let (m2, m4) = sums.iter().fold((0.0, 0.0), |(p, q), c| (p + c[k].0, q + c[k].1));
        let mc = m2 / n;
        let se = ((m4 / n - mc * mc) / n).sqrt();
        let exact = sp.annulus_variance(s, x);
        let z = if se > 0.0 { (mc - exact) / se } else { 0.0 };
        worst = worst.max(z.abs());
        let _ = writeln!(csv, "{s},{},{},{},{}", fmt17(exact), fmt17(mc), fmt17(se), fmt17(z));
    }
    cx.table("annuli", csv);
    cx.put("max_abs_z", worst);
    cx.check("every annulus within 4 standard errors", worst <= 4.0, true, format!("max |z| = {worst:.3}"));
    Ok(())
}

fn sup_tail(cx: &mut Ctx) -> Result<()> {
    let spec = cx.spec;
    let rs = ResolventSpec::new(spec.bc, spec.side, spec.model.lambda(), spec.model.epsilon)?;
    let parts = chunks(spec.samples, cx.workers * 4);
    let res = par_map(parts, cx.workers, |(a, b)| sup_tail_counts(rs, &spec.ms, spec.seed.wrapping_add(a), b - a));
    let mut counts = vec![0u64; spec.ms.len()];
    for r in res {
        for (c, v) in counts.iter_mut().zip(r?) {
            *c += v;
        }
    }
    let rows: Vec<_> = spec
        .ms
        .iter()
        .zip(&counts)
        .map(|(&m, &count)| {
            let (ci_lo, ci_hi) = crate::field::wilson(count, spec.samples, 1.96);
            crate::field::TailRow { m, count, total: spec.samples, p_hat: count as f64 / spec.samples as f64, ci_lo, ci_hi }
        })
        .collect();
    cx.table("tails", tail_csv(&rows));
    let mut ok = true;
    let mut detail = String::new();
    for w in rows.windows(2) {
        let r = if w[0].p_hat > 0.0 { w[1].p_hat / w[0].p_hat } else { f64::NAN };
        ok &= w[0].p_hat > 0.0 && r <= 0.5;
        let _ = write!(detail, "P(M={})={} P(M={})={}; ", w[0].m, w[0].p_hat, w[1].m, w[1].p_hat);
    }
    cx.check("tail decays by at least half per step", ok, false, detail);
    cx.put("counts", &counts);
    Ok(())
}

fn sup_tail_counts(rs: ResolventSpec, ms: &[f64], seed0: u64, n: u64) -> Result<Vec<u64>> {
    if n >= 1000 {
        return Ok(sup_tail_experiment(rs, ms, n, seed0)?.iter().map(|r| r.count).collect());
    }
    let sp = Spectral::new(rs)?;
    let zb = crate::field::zeta_bar_sq(rs.lambda)?.sqrt();
    let mut counts = vec![0u64; ms.len()];
    for i in 0..n {
        let a = AlphaSource::new(seed0.wrapping_add(i)).grid((0, 0), rs.l, rs.l);
        let sup = sp.solve(&a)?.sup_norm();
        for (c, &m) in counts.iter_mut().zip(ms) {
            if sup >= m * rs.epsilon * zb {
                *c += 1;
            }
        }
    }
    Ok(counts)
}

fn dn_energy_diff(cx: &mut Ctx) -> Result<()> {
    let spec = cx.spec;
    let (l, lam, eps) = (spec.side, spec.model.lambda(), spec.model.epsilon);
    let d = Spectral::new(ResolventSpec::new(Bc::D, l, lam, eps)?)?;
    let n = Spectral::new(ResolventSpec::new(Bc::N, l, lam, eps)?)?;
    let seeds: Vec<u64> = (0..spec.samples).map(|i| spec.seed.wrapping_add(i)).collect();
    let vals = par_map(seeds.clone(), cx.workers, |s| energy_diff_dn(&AlphaSource::new(s).grid((0, 0), l, l), &d, &n));
    let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
    let mut csv = String::from("seed,diff\n");
    for (s, v) in seeds.iter().zip(&vals) {
        let _ = writeln!(csv, "{s},{}", fmt17(*v));
    }
    cx.table("samples", csv);
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0)).sqrt();
    let bound = spec.dn_constant * eps * eps / (lam.sqrt() * l as f64);
    cx.put("mean", mean);
    cx.put("sd", sd);
    cx.put("bound", bound);
    cx.check("|mean D/N energy difference| within the frozen bound", mean.abs() <= bound, false, format!("|mean| = {:.4}, bound = {bound:.4}", mean.abs()));
    Ok(())
}

/// Fraction of dirty `ℓ`-boxes for each ε, on common field seeds.
pub fn dirty_fractions(spec: &ExperimentSpec, workers: usize) -> Result<Vec<(f64, i64, u64, f64)>> {
    let mut out = Vec::new();
    for &e in &spec.epsilons {
        let p = ModelParams { epsilon: e, ..spec.model.clone() };
        let ell = p.ell();
        let seeds: Vec<u64> = (0..spec.samples).map(|i| spec.seed.wrapping_add(i)).collect();
        let xi = par_map(seeds, workers, |s| {
            let mut fp = FieldProvider::new(s, &p);
            classify_box(&mut fp, (0, 0), ell as usize, &spec.clean, &p).map(|r| r.xi)
        });
        let dirty = xi.into_iter().collect::<Result<Vec<u8>>>()?.iter().filter(|&&x| x == 0).count() as u64;
        out.push((e, ell, dirty, dirty as f64 / spec.samples as f64));
    }
    Ok(out)
}

fn dirty_fraction(cx: &mut Ctx) -> Result<()> {
    let rows = dirty_fractions(cx.spec, cx.workers)?;
    let mut csv = String::from("epsilon,ell,boxes,dirty,fraction\n");
    for &(e, ell, d, f) in &rows {
        let _ = writeln!(csv, "{},{ell},{},{d},{}", fmt17(e), cx.spec.samples, fmt17(f));
    }
    cx.table("fractions", csv);
    let ok = rows.windows(2).all(|w| w[1].3 < w[0].3);
    let detail = rows.iter().map(|r| format!("eps {} -> {:.3}", r.0, r.3)).collect::<Vec<_>>().join(", ");
    cx.check("dirty fraction strictly decreases along the epsilon list", ok, false, detail);
    Ok(())
}

fn contour_census(cx: &mut Ctx) -> Result<()> {
    let spec = cx.spec;
    let cp = CoarseParams::from_model(&spec.model)?;
    let mut gp = spec.sampler.clone();
    gp.side = spec.side;
    gp.epsilon = spec.model.epsilon;
    let seeds: Vec<u64> = (0..spec.samples).map(|i| spec.seed.wrapping_add(i)).collect();
    let finals = par_map(seeds.clone(), cx.workers, |s| -> Result<_> {
        let mut st = crate::sampler::ChainState::from_seed(&gp, s)?;
        st.burn_in(&gp);
        for _ in 0..gp.sweeps {
            st.sweep_once(&gp);
        }
        Ok(st.sigma)
    });
    let mut csv = String::from("field_seed,contours,plus,minus,mixed,largest\n");
    for (s, f) in seeds.iter().zip(finals) {
        let sigma = f?;
        let cs = contours_of(&sigma, &cp)?;
        let count = |sg| cs.contours.iter().filter(|c| c.sign == sg).count();
        let largest = cs.contours.iter().map(|c| c.size()).max().unwrap_or(0);
        let _ = writeln!(
            csv,
            "{s},{},{},{},{},{largest}",
            cs.contours.len(),
            count(ContourSign::Plus),
            count(ContourSign::Minus),
            count(ContourSign::Mixed)
        );
        cx.tables.insert(format!("{}-config-{s}.json", spec.kind.name()), serde_json::to_string(&sigma.to_json())?);
        cx.tables.insert(format!("{}-contours-{s}.json", spec.kind.name()), serde_json::to_string(&cs.to_json())?);
    }
    cx.table("census", csv);
    Ok(())
}

/// Droplet radii used by the gap experiment: `side/6 .. side/4`.
pub fn droplet_instance(side: usize, seed: u64) -> (f64, (f64, f64), crate::spin::SpinConfig) {
    let n = side as f64;
    let span = (n / 4.0 - n / 6.0).max(1.0);
    let radius = n / 6.0 + (seed % 13) as f64 / 12.0 * span;
    let centre = (n / 2.0 - 0.5 + (seed % 3) as f64 - 1.0, n / 2.0 - 0.5 + (seed % 5) as f64 / 2.0 - 1.0);
    (radius, centre, droplet(side, centre, radius, 2.0, 0.05, seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub seed: u64,
    pub radius: f64,
    pub support: usize,
    pub regular: bool,
    pub gap: f64,
    pub normalized_gap: f64,
}

/// One droplet surgery; `None` when the droplet produced no +contour.
pub fn gap_instance(spec: &ExperimentSpec, seed: u64) -> Result<Option<GapRow>> {
    let p = &spec.model;
    let cp = CoarseParams::from_model(p)?;
    let (radius, _, sigma) = droplet_instance(spec.side, seed);
    let cs = contours_of(&sigma, &cp)?;
    let Some(c) = cs.contours.iter().filter(|c| c.sign == ContourSign::Plus).max_by_key(|c| c.size()) else {
        return Ok(None);
    };
    let mut fp = FieldProvider::new(seed, p);
    let cfg = SurgeryConfig::default();
    let out = surgery(&sigma, c, &cs.phase, &mut fp, &spec.clean, p, cfg)?;
    let g = energy_gap(&out, &sigma, &fp, p, cfg)?;
    let reg = regular(&c.support_region(), &mut fp, &spec.clean, p)?.regular;
    Ok(Some(GapRow { seed, radius, support: g.support_size, regular: reg, gap: g.gap, normalized_gap: g.normalized_gap }))
}

fn surgery_gap(cx: &mut Ctx) -> Result<()> {
    let spec = cx.spec;
    let seeds: Vec<u64> = (0..spec.samples).map(|i| spec.seed.wrapping_add(i)).collect();
    let rows = par_map(seeds, cx.workers, |s| gap_instance(spec, s));
    let mut csv = String::from("seed,radius,support,regular,gap,normalized_gap\n");
    let (mut pos, mut tot, mut reg) = (0, 0, 0);
    for r in rows {
        let Some(r) = r? else { continue };
        tot += 1;
        pos += usize::from(r.gap > 0.0);
        reg += usize::from(r.regular);
        let _ = writeln!(csv, "{},{},{},{},{},{}", r.seed, fmt17(r.radius), r.support, r.regular, fmt17(r.gap), fmt17(r.normalized_gap));
    }
    cx.table("gaps", csv);
    let frac = pos as f64 / tot.max(1) as f64;
    cx.put("droplets", tot);
    cx.put("positive", pos);
    cx.put("regular", reg);
    cx.check("positive gap on at least 95% of droplets", tot > 0 && frac >= 0.95, false, format!("{pos}/{tot} positive, {reg} regular"));
    Ok(())
}

fn magnetization(cx: &mut Ctx) -> Result<()> {
    let spec = cx.spec;
    let seeds: Vec<u64> = (0..spec.samples).map(|i| spec.seed.wrapping_add(i)).collect();
    let mut csv = String::from("beta,field_seed,mx,mx_err,my,my_err,tau_mx,acceptance\n");
    let mut last_ok = (0, 0);
    for &beta in &spec.betas {
        let gp = GibbsParams { beta, epsilon: spec.model.epsilon, ..spec.sampler.clone() };
        let (series, sum) = run_and_measure(&gp, &seeds, None, cx.workers)?;
        let mut ordered = 0;
        for (r, s) in sum.replicas.iter().zip(&series) {
            ordered += usize::from(r.mx.mean.abs() > 2.0 * r.my.mean.abs());
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                fmt17(beta),
                r.field_seed,
                fmt17(r.mx.mean),
                fmt17(r.mx.err),
                fmt17(r.my.mean),
                fmt17(r.my.err),
                fmt17(r.mx.tau_int),
                fmt17(r.acceptance)
            );
            cx.tables.insert(format!("{}-series-b{beta}-f{}.csv", spec.kind.name(), r.field_seed), series_csv(s));
        }
        last_ok = (ordered, sum.replicas.len());
    }
    cx.table("magnetization", csv);
    let (k, n) = last_ok;
    cx.check("|M.e1| > 2|M.e2| on at least 80% of fields at the last beta", n > 0 && 5 * k >= 4 * n, false, format!("{k}/{n} fields"));
    Ok(())
}

fn probe(cx: &mut Ctx) -> Result<()> {
    let spec = cx.spec;
    let l = spec.side;
    let eps = spec.model.epsilon;
    let seeds: Vec<u64> = (0..spec.samples).map(|i| spec.seed.wrapping_add(i)).collect();
    let res = par_map(seeds.clone(), cx.workers, |s| -> Result<_> {
        let a = AlphaSource::new(s).grid((0, 0), l, l);
        Ok((variational_probe(&a, 0.0, eps, spec.centered)?, variational_probe(&a, std::f64::consts::FRAC_PI_2, eps, spec.centered)?))
    });
    let mut csv = String::from("seed,psi,quadratic_prediction,numeric_max,difference\n");
    let mut wins = 0;
    for (s, r) in seeds.iter().zip(res) {
        let (p0, p1) = r?;
        wins += usize::from(p0.numeric_max > p1.numeric_max);
        for p in [p0, p1] {
            let _ = writeln!(csv, "{s},{},{},{},{}", fmt17(p.psi), fmt17(p.quadratic_prediction), fmt17(p.numeric_max), fmt17(p.difference));
        }
    }
    cx.table("probe", csv);
    let n = seeds.len();
    cx.put("wins", wins);
    cx.check("psi = 0 beats psi = pi/2 on at least 95% of draws", 100 * wins >= 95 * n, false, format!("{wins}/{n}"));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order() {
        let v = par_map((0..100).collect(), 7, |i: i32| i * i);
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn override_sets_nested_leaf() {
        let s = ExperimentSpec::default_for(ExperimentKind::SupTail);
        let t = s.with_overrides(&["model.epsilon=0.2".into(), "samples=5".into()]).unwrap();
        assert_eq!((t.model.epsilon, t.samples), (0.2, 5));
        assert!(s.with_overrides(&["model.nope=1".into()]).is_err());
        assert_ne!(s.hash(), t.hash());
    }

    #[test]
    fn fmt17_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
    }
}
