use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use resin_core::harness::{self, Experiment, ExperimentConfig, Scale};
use resin_core::Error;

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

/// Run an input-reconstruction experiment and write its CSV tables.
#[derive(Debug, Parser)]
#[command(name = "resin", version)]
struct Cli {
    /// reconstruct | replicate | filter | sweep_relu | sweep_rank | filter_heavytail
    experiment: String,

    /// TOML file overriding the default parameters.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Use seeds 0..N instead of the configured list.
    #[arg(long, value_name = "N")]
    seed_count: Option<usize>,

    /// `small` shrinks network, training length and ensemble size.
    #[arg(long, default_value = "paper", value_name = "small|paper")]
    scale: String,

    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::Numeric(_) | Error::NonFinite { .. } | Error::Domain { .. } => EXIT_NUMERIC,
        Error::Shape { .. } | Error::Io(_) => EXIT_OTHER,
    }
}

fn thread_cap() -> Result<Option<usize>, Error> {
    match std::env::var("RESIN_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("RESIN_THREADS must be a positive integer, got '{v}'"))),
        },
    }
}

fn build_config(cli: &Cli) -> Result<(Experiment, ExperimentConfig), Error> {
    let experiment: Experiment = cli.experiment.parse()?;
    let scale: Scale = cli.scale.parse()?;
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = cli.seed_count {
        if n == 0 {
            return Err(Error::Config("--seed-count must be positive".into()));
        }
        cfg = cfg.with_seed_count(n);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    let cfg = cfg.scaled(scale);
    cfg.validate()?;
    Ok((experiment, cfg))
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, Error> {
    let (experiment, cfg) = build_config(cli)?;
    if let Some(n) = thread_cap()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    harness::run_and_write(experiment, &cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("resin: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
