//! `wassrisk`: config-driven estimation of penalized Wasserstein risk.

mod commands;
mod config;
mod failure;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use crate::failure::Failure;

#[derive(Parser)]
#[command(name = "wassrisk", version, about = "Worst-case risk under penalized Wasserstein perturbations")]
struct Cli {
    /// Worker threads for independent rows (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an experiment config and write its CSV/JSON outputs.
    ///
    /// Trailing `--dotted.key value` pairs override config entries;
    /// `--out DIR` sets the output directory.
    Run {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Print the first-order expansion of an experiment config as JSON.
    Expand {
        config: Option<PathBuf>,
        #[arg(long = "config", value_name = "PATH", conflicts_with = "config")]
        config_flag: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Run the invariant checks relevant to a config.
    ///
    /// `--values FILE` also re-parses a values CSV written by `run`.
    Verify {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Martingale price bounds for a bull spread config.
    PriceBounds {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
}

/// Overrides with the command-line-only keys taken out.
struct Args {
    overrides: Vec<(String, String)>,
    out: Option<PathBuf>,
    values: Option<PathBuf>,
    jobs: Option<usize>,
}

fn split_args(raw: &[String]) -> Result<Args, Failure> {
    let mut args = Args { overrides: Vec::new(), out: None, values: None, jobs: None };
    for (key, value) in config::parse_overrides(raw)? {
        match key.as_str() {
            "out" => {
                args.overrides.push(("output.dir".into(), serde_json::Value::String(value.clone()).to_string()));
                args.out = Some(PathBuf::from(value));
            }
            "values" => args.values = Some(PathBuf::from(value)),
            "jobs" => {
                args.jobs =
                    Some(value.parse().map_err(|_| Failure::Config(format!("--jobs: not a thread count: `{value}`")))?)
            }
            _ => args.overrides.push((key, value)),
        }
    }
    Ok(args)
}

fn init_pool(jobs: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::Config("--jobs: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("--jobs: {e}")))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let (path, raw) = match &cli.command {
        Command::Run { config, overrides }
        | Command::Verify { config, overrides }
        | Command::PriceBounds { config, overrides } => (config.clone(), overrides),
        Command::Expand { config, config_flag, overrides } => (
            config
                .clone()
                .or_else(|| config_flag.clone())
                .ok_or_else(|| Failure::Config("expand needs a config path".into()))?,
            overrides,
        ),
    };
    let args = split_args(raw)?;
    init_pool(args.jobs.or(cli.jobs))?;
    let loaded = config::load(&path, &args.overrides)?;
    match cli.command {
        Command::Run { .. } => commands::run(&loaded),
        Command::Expand { .. } => commands::expand(&loaded, args.out.as_deref()),
        Command::Verify { .. } => commands::verify(&loaded, args.values.as_deref()),
        Command::PriceBounds { .. } => commands::price_bounds(&loaded),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wassrisk: {e}");
            e.exit_code()
        }
    }
}
