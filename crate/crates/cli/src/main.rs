use std::path::PathBuf;
use std::process::ExitCode;

use bivirus_cli::{commands, sweep, CliError, CliResult, RunOptions, ScenarioConfig, SweepConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bivirus", version, about = "Competing SIS epidemics on directed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML); for approx-experiment an optional grid file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for randomized starts.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Print the parsed config in canonical form and exit.
    #[arg(long, global = true)]
    echo: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Thresholds, regime, equilibria and their stability.
    Analyze,
    /// Analysis plus a trajectory from the configured start.
    Simulate,
    /// Exact Markov chain against the mean-field model.
    MarkovCompare,
    /// Equilibrium sensitivities of the surviving virus.
    Sensitivity,
    /// Proportional-healing runs and constant-rate stabilizers.
    Control,
    /// Mean-field error sweep over graphs, sizes, rates and initial conditions.
    ApproxExperiment,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    if cli.jobs == Some(0) {
        return Err(CliError::field("--jobs", "must be at least 1"));
    }
    if let Command::ApproxExperiment = cli.command {
        let cfg = match &cli.config {
            Some(p) => SweepConfig::load(p)?,
            None => SweepConfig::default(),
        };
        if cli.echo {
            print!("{}", toml::to_string(&cfg).map_err(|e| CliError::Syntax(e.to_string()))?);
            return Ok(());
        }
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        let (path, results) = sweep::run_approx_experiment(&cfg, &out, cli.jobs)?;
        println!("{} cells written to {}", results.len(), path.display());
        return Ok(());
    }

    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::field("--config", "required for this subcommand"))?;
    let cfg = ScenarioConfig::load(path)?;
    if cli.echo {
        cfg.resolve()?;
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let opts = RunOptions { out, seed: cli.seed };
    let job = || match cli.command {
        Command::Analyze => commands::analyze(&cfg, &opts),
        Command::Simulate => commands::run_scenario(&cfg, &opts),
        Command::MarkovCompare => commands::markov_compare(&cfg, &opts),
        Command::Sensitivity => commands::sensitivity(&cfg, &opts),
        Command::Control => commands::control(&cfg, &opts),
        Command::ApproxExperiment => unreachable!("handled above"),
    };
    let report = match cli.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new().num_threads(j).build()?.install(job)?,
        None => job()?,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
