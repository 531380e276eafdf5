//! `mrisk`: asymptotic risk, thresholds and finite-sample checks from the command line.
//!
//! Exit codes: 0 on success, 2 when the configuration violates an
//! assumption, 3 when a computation fails, 1 on I/O errors.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "mrisk", version, about = "Asymptotic risk and perfect recovery of convex M-estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set engine.mc_samples=100000`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Master seed for the expectation engine and the experiments.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (directory for `figures`); standard output otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    loss: Option<String>,
    #[arg(long, global = true)]
    reg: Option<String>,
    #[arg(long, global = true)]
    noise: Option<String>,
    #[arg(long, global = true)]
    signal: Option<String>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Print the resolved configuration as TOML instead of running.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Perfect-recovery threshold as JSON.
    Threshold,
    /// Solve the limiting system at one delta; JSON.
    Solve,
    /// Limiting error against lambda; CSV.
    RiskCurve,
    /// Predicted threshold and empirical recovery frequency on an (s, delta) grid; CSV.
    PhaseDiagram,
    /// Finite-sample replicates; CSV.
    Simulate,
    /// Monte Carlo statistical dimension of a subdifferential cone; JSON.
    Statdim {
        #[arg(short = 'm')]
        m: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Data (and optionally SVG) for every figure, written to a directory.
    Figures {
        #[arg(long)]
        svg: bool,
    },
}

enum Failure {
    Validation(mrisk::Error),
    Numerical(mrisk::Error),
    Io(String),
}

impl From<mrisk::Error> for Failure {
    fn from(e: mrisk::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e)
        } else {
            Failure::Numerical(e)
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, mrisk::Error> {
    let mut root = match &cli.config {
        Some(path) => config::read_file(path)?,
        None => Value::Object(Default::default()),
    };
    if !root.is_object() {
        return Err(mrisk::Error::InvalidInput("config must be a table".into()));
    }
    let obj = root.as_object_mut().expect("checked");
    for (key, v) in [("loss", &cli.loss), ("reg", &cli.reg), ("noise", &cli.noise), ("signal", &cli.signal)] {
        if let Some(v) = v {
            obj.insert(key.into(), Value::String(v.clone()));
        }
    }
    if let Some(d) = cli.delta {
        obj.insert("delta".into(), d.into());
    }
    if let Some(out) = &cli.out {
        obj.insert("out".into(), Value::String(out.to_string_lossy().into_owned()));
    }
    for s in &cli.sets {
        config::apply_set(&mut root, s)?;
    }
    let mut cfg = RunConfig::from_value(root)?;
    if let Some(seed) = cli.seed {
        cfg.engine.master_seed = seed;
    }
    match cli.command {
        Command::Statdim { m, samples } => {
            if let Some(m) = m {
                cfg.statdim.m = m;
            }
            if let Some(s) = samples {
                cfg.statdim.samples = s;
            }
        }
        Command::Figures { svg: true } => cfg.figures.svg = true,
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = resolve(cli)?;
    if cli.print_config {
        let text = toml::to_string(&cfg).map_err(|e| Failure::Io(e.to_string()))?;
        print!("{text}");
        return Ok(());
    }
    let out = match cli.command {
        Command::Threshold => commands::threshold(&cfg),
        Command::Solve => commands::solve(&cfg),
        Command::RiskCurve => commands::risk_curve_cmd(&cfg),
        Command::PhaseDiagram => commands::phase_diagram(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Statdim { .. } => commands::statdim(&cfg),
        Command::Figures { .. } => commands::figures(&cfg),
    }?;
    let main_path = match cli.command {
        Command::Figures { .. } => None,
        _ => cfg.out.as_deref(),
    };
    commands::write_output(&out, main_path).map_err(|e| Failure::Io(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
