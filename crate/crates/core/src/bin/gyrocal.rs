use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gyrocal::cli::{run, Command, Format, Options};
use gyrocal::io::{RunConfig, Units};
use gyrocal::Solver;

#[derive(Parser)]
#[command(name = "gyrocal", version, about = "Triaxial gyroscope calibration from constant-speed rotations")]
struct Args {
    /// JSON run config (rad/s throughout).
    #[arg(long, global = true, env = "GYROCAL_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed, overriding `sim.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    solver: Option<SolverArg>,
    /// Rate unit of sample logs and protocol sidecars.
    #[arg(long, global = true, value_enum, default_value = "rad")]
    units: UnitsArg,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: FormatArg,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one protocol run into a sample log.
    Simulate,
    /// Estimate calibration parameters from a sample log.
    Calibrate {
        log: PathBuf,
        /// Protocol sidecar; defaults to `<stem>.protocol.json` beside the log.
        #[arg(long)]
        protocol: Option<PathBuf>,
    },
    /// Monte-Carlo campaign over random sensors.
    Montecarlo,
    /// Monte-Carlo campaigns over a grid of speeds.
    Sweep,
    /// Per-parameter differences between two calibration reports.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Exit with status 6 when any delta is flagged.
        #[arg(long)]
        strict: bool,
    },
    /// Trace the iterative solver on high-gain and high-bias sensors.
    Convergence,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Ils,
    Lm,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitsArg {
    Rad,
    Deg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

fn options(args: &Args) -> gyrocal::Result<Options> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.sim.seed = seed;
    }
    if let Some(s) = args.solver {
        config.method = match s {
            SolverArg::Ils => Solver::Ils,
            SolverArg::Lm => Solver::Lm,
        };
    }
    Ok(Options {
        config,
        units: match args.units {
            UnitsArg::Rad => Units::Rad,
            UnitsArg::Deg => Units::Deg,
        },
        format: match args.format {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        },
        out: args.out.clone(),
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = match &args.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Calibrate { log, protocol } => Command::Calibrate {
            log: log.clone(),
            protocol: protocol.clone(),
        },
        Cmd::Montecarlo => Command::Montecarlo,
        Cmd::Sweep => Command::Sweep,
        Cmd::Compare { a, b, strict } => Command::Compare {
            a: a.clone(),
            b: b.clone(),
            strict: *strict,
        },
        Cmd::Convergence => Command::Convergence,
    };
    match options(&args).and_then(|opts| run(&command, &opts)) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("gyrocal: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
