//! Command-line entry point: runs experiments from flat key=value configs,
//! regenerates the exploration-rate table, and drives the full check suite.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use gridlab::config::ExperimentConfig;
use gridlab::runner::{run_experiment, RunReport};

/// Environment variable that overrides the artifact output root.
const OUT_ROOT_VAR: &str = "GRIDLAB_OUT";

#[derive(Parser)]
#[command(
    name = "lab",
    about = "Exact solvers and policy-gradient trainers for gridworld generalization studies",
    after_help = "Artifacts land under --out (or $GRIDLAB_OUT, default 'out/'), in the \
                  config's output_dir. Finished seeds leave completion markers and are \
                  skipped on rerun; reruns are byte-identical."
)]
struct Cli {
    /// Output root for all artifacts; overrides $GRIDLAB_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for seed-parallel training jobs.
    #[arg(long, global = true, default_value_t = default_workers())]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a flat key=value config file.
    Run {
        /// Path to the config (keys: experiment, env, seeds, algo, signal,
        /// trainer overrides, output_dir, ...).
        config: PathBuf,
    },
    /// Regenerate the exploration-rate table and check it cell by cell.
    ExplorationTable {
        /// Discount factor used by the exact solver.
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
    },
    /// Run the full acceptance suite (trains real agents; slow).
    Check,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn out_root(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ROOT_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn report_lines(report: &RunReport) {
    for line in &report.lines {
        println!("{line}");
    }
}

fn cmd_run(cli: &Cli, config: &PathBuf) -> Result<bool> {
    let text = std::fs::read_to_string(config)
        .with_context(|| format!("reading config {}", config.display()))?;
    let cfg = ExperimentConfig::parse(&text)
        .with_context(|| format!("parsing config {}", config.display()))?;
    let report = run_experiment(&cfg, &out_root(cli), cli.workers)
        .with_context(|| format!("running experiment '{}'", cfg.experiment.as_str()))?;
    report_lines(&report);
    Ok(report.passed)
}

fn cmd_exploration_table(cli: &Cli, gamma: f64) -> Result<bool> {
    let text = format!("experiment=exploration_table\ngamma={gamma}\n");
    let cfg = ExperimentConfig::parse(&text).context("building exploration_table config")?;
    let report = run_experiment(&cfg, &out_root(cli), cli.workers)
        .context("regenerating the table")?;
    report_lines(&report);
    Ok(report.passed)
}

fn cmd_check(cli: &Cli) -> Result<bool> {
    let root = out_root(cli);
    let mut all = true;
    for (name, outcome) in gridlab::acceptance::run_all(&root, cli.workers) {
        let (tag, pass) = match outcome {
            Ok(true) => ("pass", true),
            Ok(false) => ("FAIL", false),
            Err(e) => {
                println!("check {name}: error: {e}");
                all = false;
                continue;
            }
        };
        println!("check {name}: {tag}");
        all &= pass;
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config } => cmd_run(&cli, config),
        Command::ExplorationTable { gamma } => cmd_exploration_table(&cli, *gamma),
        Command::Check => cmd_check(&cli),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::FAILURE
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
