//! Runs an experiment from its default manifest with dotted overrides, writes
//! the artifacts and checks that a second run is byte-identical.
//!
//! `cargo run --release --example experiment_manifest -- [kind] [key=value ...]`

use rfxy::harness::{run_experiment, workers_from_env, ExperimentKind, ExperimentSpec};

fn main() -> rfxy::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind = ExperimentKind::parse(args.first().map_or("dirty-fraction", |s| s.as_str()))?;
    let dir = std::env::temp_dir().join(format!("rfxy-{}", kind.name()));
    let mut spec = ExperimentSpec::default_for(kind).with_overrides(&args[args.len().min(1)..])?;
    spec.output_dir = Some(dir.to_string_lossy().into_owned());
    println!("{}", serde_json::to_string_pretty(&spec)?);
    let a = run_experiment(&spec, workers_from_env())?;
    let b = run_experiment(&spec, workers_from_env())?;
    for c in &a.checks {
        println!("{} {}: {}", if c.ok { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("hash {}  files in {}  identical rerun: {}", a.spec_hash, dir.display(), a.files() == b.files());
    Ok(())
}
