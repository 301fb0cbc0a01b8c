//! Command-line front end. Every subcommand is a thin wrapper over the
//! library; the worker count comes from `RFXY_WORKERS`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rfxy::classify::{classify_box, xi_csv, CleanConstants, FieldProvider};
use rfxy::coarse::{contours_of, CoarseParams, ContourSign};
use rfxy::field::{resolvent_apply, sample_alpha, Bc, ResolventSpec};
use rfxy::harness::{run_experiment, validate_params, workers_from_env, ExperimentKind, ExperimentSpec};
use rfxy::sampler::{run_and_measure, series_csv, ChainBoundary, GibbsParams, Update};
use rfxy::spin::{ModelParams, SpinConfig};
use rfxy::surgery::{energy_gap, surgery, SurgeryConfig};
use rfxy::{Error, Result};

#[derive(Parser)]
#[command(name = "rfxy", version, about = "Random-field XY model: fields, contours, surgery and sampling")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum BcArg {
    D,
    N,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample α on a square and write g, m and metadata.
    GenField {
        #[arg(long, default_value_t = 64)]
        side: usize,
        #[arg(long, value_enum, default_value_t = BcArg::D)]
        bc: BcArg,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Classify every ℓ-box of an N-lattice and print the Ξ grid.
    Classify {
        #[arg(long, default_value_t = 64)]
        side: usize,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Coarse-grain a configuration (JSON from `sample --dump` or a droplet) and print its contours.
    Contours {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 128)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the surgery on the largest +contour of a droplet and print the trace.
    Surgery {
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 128)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run Gibbs chains and write the time series and summary.
    Sample {
        #[arg(long, default_value_t = 10.0)]
        beta: f64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 32)]
        side: usize,
        #[arg(long, default_value_t = 2000)]
        sweeps: usize,
        #[arg(long, default_value_t = 500)]
        burn_in: usize,
        #[arg(long, default_value_t = 1)]
        fields: u64,
        #[arg(long, default_value_t = 0)]
        field_seed: u64,
        #[arg(long)]
        metropolis: bool,
        #[arg(long)]
        free: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run an experiment from its defaults, a JSON manifest and dotted overrides.
    Experiment {
        kind: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// `path.to.field=value`, repeatable.
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List every violated parameter window.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
}

fn bc(b: BcArg) -> Bc {
    match b {
        BcArg::D => Bc::D,
        BcArg::N => Bc::N,
    }
}

fn load_spec(kind: Option<&str>, config: &Option<PathBuf>, overrides: &[String]) -> Result<ExperimentSpec> {
    let base = match config {
        Some(p) => ExperimentSpec::from_json(&std::fs::read_to_string(p)?)?,
        None => ExperimentSpec::default_for(ExperimentKind::parse(kind.unwrap_or("field-variance"))?),
    };
    let base = match kind {
        Some(k) if config.is_some() => ExperimentSpec { kind: ExperimentKind::parse(k)?, ..base },
        _ => base,
    };
    base.with_overrides(overrides)
}

/// `Ok(true)` when every hard assertion held.
fn run(cmd: Cmd) -> Result<bool> {
    let workers = workers_from_env();
    match cmd {
        Cmd::GenField { side, bc: b, epsilon, seed, out } => {
            let p = ModelParams::with_epsilon(epsilon);
            let f = resolvent_apply(ResolventSpec::new(bc(b), side, p.lambda(), epsilon)?, &sample_alpha(seed, side))?;
            std::fs::create_dir_all(&out)?;
            f.export(&out, &format!("field-{seed}"))?;
            println!("sup g = {:.6e}, residual = {:.3e}", f.g.sup_norm(), f.residual);
            Ok(true)
        }
        Cmd::Classify { side, epsilon, seed } => {
            let p = ModelParams::with_epsilon(epsilon);
            let ell = p.ell();
            let mut fp = FieldProvider::new(seed, &p);
            let consts = CleanConstants::default();
            let mut reports = Vec::new();
            for bx in 0..(side as i64 / ell) {
                for by in 0..(side as i64 / ell) {
                    reports.push(classify_box(&mut fp, (bx * ell, by * ell), ell as usize, &consts, &p)?);
                }
            }
            let clean = reports.iter().filter(|r| r.xi == 1).count();
            print!("{}", xi_csv(&reports, side));
            eprintln!("{clean}/{} boxes clean", reports.len());
            Ok(true)
        }
        Cmd::Contours { config, epsilon, side, seed } => {
            let p = ModelParams::with_epsilon(epsilon);
            let sigma = match config {
                Some(path) => SpinConfig::from_json(&serde_json::from_str(&std::fs::read_to_string(path)?)?)?,
                None => rfxy::harness::droplet_instance(side, seed).2,
            };
            let cs = contours_of(&sigma, &CoarseParams::from_model(&p)?)?;
            println!("{}", serde_json::to_string_pretty(&cs.to_json())?);
            Ok(true)
        }
        Cmd::Surgery { epsilon, side, seed, out } => {
            let p = ModelParams::with_epsilon(epsilon);
            let (_, _, sigma) = rfxy::harness::droplet_instance(side, seed);
            let cs = contours_of(&sigma, &CoarseParams::from_model(&p)?)?;
            let c = cs
                .contours
                .iter()
                .filter(|c| c.sign == ContourSign::Plus)
                .max_by_key(|c| c.size())
                .ok_or_else(|| Error::Domain("droplet has no +contour".into()))?;
            let mut fp = FieldProvider::new(seed, &p);
            let cfg = SurgeryConfig::default();
            match surgery(&sigma, c, &cs.phase, &mut fp, &CleanConstants::default(), &p, cfg) {
                Ok(o) => {
                    let g = energy_gap(&o, &sigma, &fp, &p, cfg)?;
                    let trace = o.trace.to_json()?;
                    if let Some(dir) = out {
                        std::fs::create_dir_all(&dir)?;
                        std::fs::write(dir.join(format!("surgery-{seed}.json")), &trace)?;
                    } else {
                        println!("{trace}");
                    }
                    println!("gap = {:.6e}, normalized = {:.4}, |sp| = {}", g.gap, g.normalized_gap, g.support_size);
                    Ok(true)
                }
                Err(Error::Assertion(m)) => {
                    eprintln!("hard assertion failed: {m}");
                    Ok(false)
                }
                Err(e) => Err(e),
            }
        }
        Cmd::Sample { beta, epsilon, side, sweeps, burn_in, fields, field_seed, metropolis, free, out } => {
            let gp = GibbsParams {
                beta,
                epsilon,
                side,
                sweeps,
                burn_in,
                update: if metropolis { Update::Metropolis } else { Update::HeatBath },
                boundary: if free { ChainBoundary::Free } else { ChainBoundary::E1 },
                ..Default::default()
            };
            let seeds: Vec<u64> = (0..fields).map(|i| field_seed + i).collect();
            let (series, summary) = run_and_measure(&gp, &seeds, None, workers)?;
            std::fs::create_dir_all(&out)?;
            for (s, rows) in seeds.iter().zip(&series) {
                std::fs::write(out.join(format!("series-{s}.csv")), series_csv(rows))?;
            }
            std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
            for r in &summary.replicas {
                println!("field {}: Mx = {:.4} ± {:.4}, My = {:.4} ± {:.4}", r.field_seed, r.mx.mean, r.mx.err, r.my.mean, r.my.err);
            }
            Ok(true)
        }
        Cmd::Experiment { kind, config, overrides, out } => {
            let mut spec = load_spec(Some(&kind), &config, &overrides)?;
            if let Some(dir) = out {
                spec.output_dir = Some(dir.to_string_lossy().into_owned());
            }
            let rec = run_experiment(&spec, workers)?;
            for c in &rec.checks {
                println!("{} [{}] {}: {}", if c.ok { "PASS" } else { "FAIL" }, if c.hard { "hard" } else { "soft" }, c.name, c.detail);
            }
            println!("spec_hash {}, {:.1} s", rec.spec_hash, rec.wall_clock_s);
            Ok(rec.hard_ok())
        }
        Cmd::Validate { config, overrides } => {
            let spec = load_spec(None, &config, &overrides)?;
            let v = validate_params(&spec);
            for line in &v {
                println!("{line}");
            }
            if v.is_empty() {
                println!("ok");
            }
            Ok(v.is_empty())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
