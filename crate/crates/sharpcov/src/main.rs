//! Command-line experiment runner.
//!
//! `sharpcov run` executes the Monte-Carlo sweep described by a key=value
//! config file and/or CLI flags; `sharpcov verify` runs the fast
//! oracle/property suite and exits nonzero on any failure. Config
//! violations exit with code 2.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use sharpcov::correction::BasisKind;
use sharpcov::harness::{run_experiment, verify_suite, ExperimentConfig};
use sharpcov::spectra::KappaMode;
use sharpcov::Error;

#[derive(Parser)]
#[command(
    name = "sharpcov",
    version,
    about = "Spiked covariance estimation and Monte-Carlo experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run the Monte-Carlo experiment sweep.
    Run(RunArgs),
    /// Run the oracle/property verification suite.
    Verify,
}

#[derive(Args)]
struct RunArgs {
    /// Key=value config file; CLI flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Comma-separated ascending dimensions, e.g. 500,2000,8000.
    #[arg(long, value_delimiter = ',')]
    p_list: Option<Vec<usize>>,

    /// Observations per panel.
    #[arg(long)]
    n: Option<usize>,

    /// Number of spikes.
    #[arg(long)]
    q: Option<usize>,

    /// Monte-Carlo trials.
    #[arg(long)]
    trials: Option<usize>,

    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Mean-centering of the panels: on or off.
    #[arg(long)]
    centering: Option<String>,

    /// Bulk noise estimate: plain or mp.
    #[arg(long)]
    kappa_mode: Option<String>,

    /// Comma-separated subset of pca,flat,sharp.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long)]
    c0: Option<f64>,

    #[arg(long)]
    c1: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(workers) = std::env::var("SHARPCOV_WORKERS") {
        match workers.parse::<usize>() {
            Ok(count) if count >= 1 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(count)
                    .build_global()
                    .ok();
            }
            _ => {
                eprintln!("error: SHARPCOV_WORKERS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }

    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match build_config(&args) {
            Ok(config) => match run_experiment(&config) {
                Ok(summary) => {
                    println!(
                        "wrote {} rows ({} skipped of {} evaluations) to {}",
                        summary.rows.len(),
                        summary.skipped,
                        summary.attempted,
                        config.output_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e @ Error::Config(_)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            },
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Verify => {
            let report = verify_suite();
            print!("{}", report.render());
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::default();
    if let Some(path) = &args.config {
        apply_config_file(&mut config, path)?;
    }
    if let Some(p_list) = &args.p_list {
        config.p_list = p_list.clone();
    }
    if let Some(n) = args.n {
        config.n = n;
    }
    if let Some(q) = args.q {
        config.q = q;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(centering) = &args.centering {
        config.centering = parse_centering(centering)?;
    }
    if let Some(mode) = &args.kappa_mode {
        config.kappa_mode = parse_kappa(mode)?;
    }
    if let Some(estimators) = &args.estimators {
        config.estimators = parse_estimators(estimators)?;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(c0) = args.c0 {
        config.c0 = c0;
    }
    if let Some(c1) = args.c1 {
        config.c1 = c1;
    }
    config.validate()?;
    Ok(config)
}

fn apply_config_file(config: &mut ExperimentConfig, path: &PathBuf) -> Result<(), Error> {
    let text = std::fs::read_to_string(path)?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| Error::Config(format!("line {}: bad {what}: {value}", lineno + 1));
        match key {
            "p_list" => {
                config.p_list = value
                    .split(',')
                    .map(|v| v.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad("p_list"))?;
            }
            "n" => config.n = value.parse().map_err(|_| bad("n"))?,
            "q" => config.q = value.parse().map_err(|_| bad("q"))?,
            "trials" => config.trials = value.parse().map_err(|_| bad("trials"))?,
            "seed" => config.seed = value.parse().map_err(|_| bad("seed"))?,
            "centering" => config.centering = parse_centering(value)?,
            "kappa_mode" => config.kappa_mode = parse_kappa(value)?,
            "estimators" => {
                let names: Vec<String> = value.split(',').map(|v| v.trim().to_string()).collect();
                config.estimators = parse_estimators(&names)?;
            }
            "out" => config.output_dir = PathBuf::from(value),
            "c0" => config.c0 = value.parse().map_err(|_| bad("c0"))?,
            "c1" => config.c1 = value.parse().map_err(|_| bad("c1"))?,
            other => {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{other}`",
                    lineno + 1
                )))
            }
        }
    }
    Ok(())
}

fn parse_centering(value: &str) -> Result<bool, Error> {
    match value {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(Error::Config(format!(
            "centering must be `on` or `off`, got `{other}`"
        ))),
    }
}

fn parse_kappa(value: &str) -> Result<KappaMode, Error> {
    match value {
        "plain" => Ok(KappaMode::Plain),
        "mp" => Ok(KappaMode::Mp),
        other => Err(Error::Config(format!(
            "kappa_mode must be `plain` or `mp`, got `{other}`"
        ))),
    }
}

fn parse_estimators(names: &[String]) -> Result<Vec<BasisKind>, Error> {
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let kind = match name.as_str() {
            "pca" => BasisKind::Pca,
            "flat" => BasisKind::Flat,
            "sharp" => BasisKind::Sharp,
            other => {
                return Err(Error::Config(format!(
                    "unknown estimator `{other}` (expected pca, flat or sharp)"
                )))
            }
        };
        if out.contains(&kind) {
            return Err(Error::Config(format!("estimator `{name}` repeated")));
        }
        out.push(kind);
    }
    Ok(out)
}
