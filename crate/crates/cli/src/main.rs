//! Command-line front end for the quantum-eraser simulator.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eraser_core::config::{OutputFormat, ScenarioConfig};
use eraser_core::scenario::{ErasureMethod, Mode, Target};
use eraser_core::Error;

use crate::output::Output;

#[derive(Parser, Debug)]
#[command(name = "eraser", version, about = "Simulate and analyse a which-path-marker quantum eraser")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalArgs {
    /// Scenario file (TOML). Built-in defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed for Monte Carlo draws.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", env = "ERASER_OUT_DIR")]
    out: Option<PathBuf>,
    /// Output format; repeat for both.
    #[arg(long, global = true, value_enum)]
    format: Vec<FormatArg>,
    /// Include the ideal theory.
    #[arg(long, global = true)]
    ideal: bool,
    /// Include the corrected theory.
    #[arg(long, global = true)]
    corrected: bool,
    /// Include simulated counts and their fits.
    #[arg(long, global = true)]
    montecarlo: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PortArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    BlockArms,
    Polarizer,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TargetArg {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Table1,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Conditional and unconditioned screen patterns with the sum-rule check.
    Pattern {
        #[arg(long, value_enum, default_value = "all")]
        port: PortArg,
    },
    /// Port probabilities and visibilities over HWP1 angles.
    Scan {
        /// Comma-separated HWP1 angles in degrees.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "range")]
        gamma1: Vec<f64>,
        /// START:STOP:STEP in degrees (default 0:45:0.5).
        #[arg(long)]
        range: Option<String>,
    },
    /// HWP1 angle that makes the port-1 marker states orthogonal.
    Discriminate,
    /// Fringe and antifringe patterns for a marker-erasing measurement.
    Erase {
        #[arg(long, value_enum, default_value = "polarizer")]
        method: MethodArg,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        port: u8,
    },
    /// Inner-product reconstruction from both output ports.
    Conserve {
        /// Comma-separated HWP1 angles in degrees.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "20,35,45")]
        gamma1: Vec<f64>,
    },
    /// Regenerate the data behind a bundled figure or table.
    Reproduce {
        #[arg(value_enum)]
        target: TargetArg,
        /// Monte Carlo repetitions for table1 (preset value when omitted).
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

/// Resolved global settings shared by every command.
pub struct Context {
    pub config: ScenarioConfig,
    pub seed_override: Option<u64>,
    pub modes: Vec<Mode>,
    pub explicit_modes: bool,
    out_dir: PathBuf,
    csv: bool,
    json: bool,
}

impl Context {
    fn new(g: &GlobalArgs) -> Result<Self, Error> {
        let mut config = match &g.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(s) = g.seed {
            config.counting.seed = s;
        }
        let formats: Vec<OutputFormat> = if g.format.is_empty() {
            config.outputs.formats.clone()
        } else {
            g.format
                .iter()
                .map(|f| match f {
                    FormatArg::Csv => OutputFormat::Csv,
                    FormatArg::Json => OutputFormat::Json,
                })
                .collect()
        };
        let mut modes = Vec::new();
        for (on, m) in [(g.ideal, Mode::Ideal), (g.corrected, Mode::Corrected), (g.montecarlo, Mode::MonteCarlo)] {
            if on {
                modes.push(m);
            }
        }
        let explicit_modes = !modes.is_empty();
        if !explicit_modes {
            modes = vec![Mode::Ideal, Mode::Corrected];
        }
        Ok(Context {
            out_dir: g.out.clone().unwrap_or_else(|| config.outputs.directory.clone()),
            csv: formats.contains(&OutputFormat::Csv),
            json: formats.contains(&OutputFormat::Json),
            config,
            seed_override: g.seed,
            modes,
            explicit_modes,
        })
    }

    pub fn wants(&self, mode: Mode) -> bool {
        self.modes.contains(&mode)
    }

    pub fn output(&self, name: &str) -> anyhow::Result<Output> {
        Output::new(self.out_dir.join(name), self.csv, self.json)
    }
}

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::InvalidParameter { .. }) => EXIT_CONFIG,
        Some(_) => EXIT_NUMERICAL,
        None => EXIT_OTHER,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = Context::new(&cli.global)?;
    match cli.command {
        Command::Pattern { port } => {
            let ports = match port {
                PortArg::One => vec![1],
                PortArg::Two => vec![2],
                PortArg::All => vec![1, 2],
            };
            commands::pattern(&ctx, &ports)
        }
        Command::Scan { gamma1, range } => {
            let angles = if !gamma1.is_empty() {
                gamma1
            } else {
                commands::parse_range(range.as_deref().unwrap_or("0:45:0.5"))?
            };
            commands::scan(&ctx, &angles)
        }
        Command::Discriminate => commands::discriminate(&ctx),
        Command::Erase { method, port } => {
            let method = match method {
                MethodArg::BlockArms => ErasureMethod::BlockArms,
                MethodArg::Polarizer => ErasureMethod::Polarizer,
            };
            commands::erase(&ctx, method, port)
        }
        Command::Conserve { gamma1 } => commands::conserve(&ctx, &gamma1),
        Command::Reproduce { target, repetitions } => {
            let target = match target {
                TargetArg::Fig2 => Target::Fig2,
                TargetArg::Fig3 => Target::Fig3,
                TargetArg::Fig4 => Target::Fig4,
                TargetArg::Fig5 => Target::Fig5,
                TargetArg::Table1 => Target::Table1,
            };
            commands::reproduce(&ctx, target, repetitions)
        }
        Command::Config => {
            print!("{}", ctx.config.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
