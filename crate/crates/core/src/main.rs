use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use small_obstacle::commands::{self, Report};
use small_obstacle::config::{load, InitialDataConfig, LemmaConfig, ShapeConfig, SweepConfig};
use small_obstacle::Result;

/// Viscous flow past a small obstacle: convergence studies.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep over viscosities against one Euler reference.
    Sweep {
        config: PathBuf,
        /// Overrides `output_dir` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Initial-data error against eps.
    InitialDataRate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corrector estimates against eps.
    LemmaConstants {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scaled Poincare constant. Shape is `disk` or `ellipse:a,b`;
    /// resolutions are like `16x64,32x128`.
    Poincare {
        shape: String,
        resolutions: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Log-log rate and deltaE(t) tables from a sweep directory.
    PlotData { run_dir: PathBuf },
}

fn pick(out: Option<PathBuf>, cfg: &Option<PathBuf>) -> PathBuf {
    out.or_else(|| cfg.clone()).unwrap_or_else(|| PathBuf::from("."))
}

fn run(cmd: Command) -> Result<Report> {
    match cmd {
        Command::Sweep { config, out } => {
            let cfg: SweepConfig = load(&config)?;
            let dir = pick(out, &cfg.output_dir);
            Ok(commands::sweep(&cfg, &dir)?.1)
        }
        Command::InitialDataRate { config, out } => {
            let cfg: InitialDataConfig = load(&config)?;
            commands::initial_data_rate(&cfg, &pick(out, &cfg.output_dir))
        }
        Command::LemmaConstants { config, out } => {
            let cfg: LemmaConfig = load(&config)?;
            commands::lemma_constants(&cfg, &pick(out, &cfg.output_dir))
        }
        Command::Poincare { shape, resolutions, out } => {
            let shape = ShapeConfig::parse(&shape)?;
            commands::poincare(shape, &commands::parse_resolutions(&resolutions)?, &out)
        }
        Command::PlotData { run_dir } => commands::plot_data(Path::new(&run_dir)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(rep) => {
            for l in &rep.lines {
                println!("{l}");
            }
            if rep.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
