use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use penspde_cli::config::ExperimentConfig;
use penspde_cli::output::resolve_dir;
use penspde_cli::{commands, execute, CliError};

/// Penalized solvers for reflected stochastic heat equations on (0, 1).
#[derive(Parser)]
#[command(name = "penspde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths at the finest penalty of the schedule.
    Simulate(Common),
    /// Sweep the penalty schedule and tabulate violation and energy diagnostics.
    Converge(Common),
    /// Check pathwise order between two configs on shared noise.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Config of the problem expected to dominate.
        #[arg(long)]
        against: PathBuf,
    },
    /// Evaluate the energy identity at dt and dt/2 on matched noise.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.paths`.
    #[arg(long)]
    paths: Option<usize>,
    /// Output directory; defaults to `run.output_dir`, then $PENSPDE_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a gnuplot script next to each CSV.
    #[arg(long)]
    emit_plots: bool,
    #[arg(long, env = "PENSPDE_OUT_DIR", hide = true)]
    default_out: Option<PathBuf>,
}

impl Common {
    fn load(&self, path: &Path) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(paths) = self.paths {
            cfg.run.paths = paths;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        resolve_dir(self.out.as_deref(), cfg.run.output_dir.as_deref(), self.default_out.clone())
    }
}

fn run(cli: Cli) -> Result<Option<String>, CliError> {
    let done = match &cli.command {
        Command::Simulate(c) => {
            let cfg = c.load(&c.config)?;
            execute("simulate", &cfg, &c.dir(&cfg), || commands::simulate(&cfg, c.emit_plots))?
        }
        Command::Converge(c) => {
            let cfg = c.load(&c.config)?;
            execute("converge", &cfg, &c.dir(&cfg), || commands::converge(&cfg, c.emit_plots))?
        }
        Command::Verify(c) => {
            let cfg = c.load(&c.config)?;
            execute("verify", &cfg, &c.dir(&cfg), || commands::verify(&cfg, c.emit_plots))?
        }
        Command::Compare { common, against } => {
            let lower = common.load(&common.config)?;
            let upper = common.load(against)?;
            execute("compare", &lower, &common.dir(&lower), || commands::compare(&lower, &upper))?
        }
    };
    Ok(done.violation)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(violation)) => {
            eprintln!("property violation: {violation}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
