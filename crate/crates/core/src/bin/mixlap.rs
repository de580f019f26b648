use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mixlap::experiments::{run, ExperimentConfig, ExperimentKind, Overrides};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Certify,
    Sweep,
    Exhaustion,
    Parabolic,
    OracleCompare,
}

impl From<Kind> for ExperimentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Certify => ExperimentKind::Certify,
            Kind::Sweep => ExperimentKind::Sweep,
            Kind::Exhaustion => ExperimentKind::Exhaustion,
            Kind::Parabolic => ExperimentKind::Parabolic,
            Kind::OracleCompare => ExperimentKind::OracleCompare,
        }
    }
}

/// Run a mixed local/nonlocal operator experiment from a TOML configuration.
///
/// Command-line flags take precedence over keys in the file.
#[derive(Debug, Parser)]
#[command(name = "mixlap", version)]
struct Cli {
    #[arg(value_enum)]
    kind: Kind,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        kind: Some(cli.kind.into()),
        output_dir: cli.out,
        seed: cli.seed,
        workers: cli.workers,
    };
    let outcome = ExperimentConfig::from_file(&cli.config).and_then(|cfg| run(cfg, &overrides));
    match outcome {
        Ok(o) => {
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            for msg in &o.required_failures {
                eprintln!("required check failed: {msg}");
            }
            if o.success() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
