use clap::{Parser, Subcommand};
use heleshaw::io::{self, RunConfig, RunSummary};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Hele-Shaw flow with linear drift: simulation and property checks.
///
/// Exit status: 0 when every verdict is as expected, 1 when a property
/// fails, 2 on any error.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Output root (default: $HELESHAW_OUTPUT_ROOT, else ./output).
    #[arg(long, global = true)]
    output_root: Option<PathBuf>,
    /// Run directory name below the root (default: [output] dir, else the config stem).
    #[arg(long, global = true)]
    name: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the evolution and write snapshots, mass ledger and summary.
    Simulate { config: PathBuf },
    /// Run a verification suite.
    Verify {
        config: PathBuf,
        /// One of contraction, comparison, one_phase, congestion_free,
        /// stability, entropy, negative_controls, all.
        #[arg(long)]
        suite: Option<String>,
        /// Seed for the randomized scenario pack and perturbations.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Joint (h, tau, eps) refinement study.
    Convergence {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Solve one stationary problem u + tau A u = u0 + tau f(0).
    Stationary { config: PathBuf },
}

fn run_dir(cli: &Cli, cfg: &RunConfig, path: &Path) -> PathBuf {
    let name = cli
        .name
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "run".into());
    io::run_directory(&name, cli.output_root.as_deref())
}

fn execute(cli: &Cli) -> heleshaw::Result<(RunSummary, PathBuf)> {
    let path = match &cli.command {
        Command::Simulate { config }
        | Command::Verify { config, .. }
        | Command::Convergence { config, .. }
        | Command::Stationary { config } => config,
    };
    let cfg = io::parse_config(path)?;
    let dir = run_dir(cli, &cfg, path);
    let summary = match &cli.command {
        Command::Simulate { .. } => io::cmd_simulate(&cfg, &dir)?,
        Command::Verify { suite, seed, .. } => {
            let suite = suite.clone().unwrap_or_else(|| cfg.verify.suite.clone());
            io::cmd_verify(&cfg, &suite, *seed, &dir)?
        }
        Command::Convergence { levels, .. } => io::cmd_convergence(&cfg, *levels, &dir)?,
        Command::Stationary { .. } => io::cmd_stationary(&cfg, &dir)?,
    };
    Ok((summary, dir))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok((summary, dir)) => {
            print!("{}", io::summary_table(&summary));
            if let Some(rows) = summary.results.as_ref().and_then(|r| r.get("rows")) {
                println!("{}", serde_json::to_string_pretty(rows).unwrap_or_default());
            }
            println!("outputs: {}", dir.display());
            if summary.passed {
                println!("PASS");
                ExitCode::SUCCESS
            } else {
                println!("FAIL");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
