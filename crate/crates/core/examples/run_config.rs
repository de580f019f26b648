//! Run an experiment described by a TOML file, as the `mixlap` binary does.
//!
//! `cargo run --release --example run_config -- examples/configs/sweep.toml /tmp/sweep`

use std::path::PathBuf;

use mixlap::experiments::{run, ExperimentConfig, Overrides};

fn main() -> mixlap::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().unwrap_or_else(|| {
        concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/sweep.toml").into()
    });
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mixlap-sweep"));
    let overrides = Overrides {
        output_dir: Some(out),
        ..Overrides::default()
    };
    let outcome = run(ExperimentConfig::from_file(config.as_ref())?, &overrides)?;
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    println!("required checks passed: {}", outcome.success());
    Ok(())
}
