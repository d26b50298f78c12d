use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use toda_disc::config::{load_config, parse_config, RunConfig, SchemeSpec};
use toda_disc::runner::{execute, Command as RunCommand, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "toda",
    about = "Numerical laboratory for cyclic Toda-type systems on the unit disc",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

/// Flags shared by all subcommands; every flag overrides the matching
/// configuration key.
#[derive(Args)]
struct Common {
    /// JSON configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// rank r (overrides config)
    #[arg(long)]
    r: Option<usize>,
    /// output directory (overrides config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// random seed (overrides config)
    #[arg(long)]
    seed: Option<u64>,
    /// number of exhaustion stages (overrides config)
    #[arg(long)]
    stages: Option<usize>,
    /// randomized sample count (overrides config)
    #[arg(long)]
    samples: Option<usize>,
    /// solve scheme: newton | monotone (overrides config)
    #[arg(long)]
    scheme: Option<String>,
    /// emit raster heatmaps
    #[arg(long)]
    heatmaps: bool,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Dirichlet solve on the configured lattice
    Solve(Common),
    /// Staged exhaustion run with monotonicity certificates
    Exhaust(Common),
    /// Mollified-weight schedule against the direct singular solve
    Mollify(Common),
    /// Two-seed boundary-data probe
    ProbeUniqueness(Common),
    /// Verification suites
    Verify {
        #[command(flatten)]
        common: Common,
        /// exact | inequalities | lemmas
        #[arg(long, default_value = "exact")]
        suite: String,
    },
    /// Randomized pointwise-inequality suite
    Lemmas(Common),
    /// Re-export a saved state directory as CSV and PNG
    Export {
        #[command(flatten)]
        common: Common,
        /// state directory written by a previous run
        #[arg(long)]
        state: PathBuf,
    },
}

const DEFAULT_CONFIG: &str = r#"{"r": 2, "weight": {"kind": "zero"}}"#;

fn resolve_config(common: &Common) -> Result<RunConfig, toda_disc::TodaError> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => parse_config(DEFAULT_CONFIG)?,
    };
    if let Some(r) = common.r {
        cfg.r = r;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(stages) = common.stages {
        cfg.stages = stages;
    }
    if let Some(samples) = common.samples {
        cfg.samples = samples;
    }
    if let Some(scheme) = &common.scheme {
        cfg.scheme = match scheme.as_str() {
            "newton" => SchemeSpec::Newton,
            "monotone" => SchemeSpec::Monotone,
            other => {
                return Err(toda_disc::TodaError::Config {
                    path: "scheme".into(),
                    message: format!("unknown scheme {other:?}, expected newton | monotone"),
                })
            }
        };
    }
    if common.heatmaps {
        cfg.heatmaps = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, command) = match &cli.command {
        CliCommand::Solve(c) => (c, RunCommand::Solve),
        CliCommand::Exhaust(c) => (c, RunCommand::Exhaust),
        CliCommand::Mollify(c) => (c, RunCommand::Mollify),
        CliCommand::ProbeUniqueness(c) => (c, RunCommand::ProbeUniqueness),
        CliCommand::Verify { common, suite } => {
            (common, RunCommand::Verify { suite: suite.clone() })
        }
        CliCommand::Lemmas(c) => (c, RunCommand::Lemmas),
        CliCommand::Export { common, state } => {
            (common, RunCommand::Export { state_dir: state.clone() })
        }
    };
    let cfg = match resolve_config(common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    ExitCode::from(execute(&command, &cfg) as u8)
}
