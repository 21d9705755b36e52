use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use nash_mtl::check;
use nash_mtl::config::ExperimentConfig;
use nash_mtl::experiment::{self, ExperimentError};
use nash_mtl::plot;

#[derive(Parser)]
#[command(name = "nash-mtl", version, about = "Multi-task gradient aggregation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides `seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (aggregator, init) cell and write trajectories plus summary.json.
    Run(RunArgs),
    /// Measure solver calls and wall time across weight update intervals.
    Bench(RunArgs),
    /// Render SVG plots from a summary.json.
    Plot {
        summary: PathBuf,
        /// Directory for the SVG files; defaults to the summary's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient and solver self-checks.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))
        .map_err(Failure::Config)?;
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn experiment_failure(e: ExperimentError) -> Failure {
    match e.exit_code() {
        1 => Failure::Config(e.into()),
        _ => Failure::Runtime(e.into()),
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            let s = experiment::run_experiment(&cfg, args.jobs).map_err(experiment_failure)?;
            println!(
                "{} cells written to {}",
                s.cells.len(),
                cfg.output_dir.join(experiment::SUMMARY_FILE).display()
            );
        }
        Command::Bench(args) => {
            let cfg = load(&args)?;
            let r = experiment::run_bench(&cfg, args.jobs).map_err(experiment_failure)?;
            println!("{:>6} {:>12} {:>10} {:>10} {:>10} {:>12}", "T", "calls", "calls/step", "ratio", "wall_s", "max_station");
            for b in &r.runs {
                println!(
                    "{:>6} {:>12} {:>10.4} {:>10.4} {:>10.3} {:>12.3e}",
                    b.weight_update_every, b.solver_calls, b.calls_per_step, b.call_ratio, b.wall_time_s, b.max_final_stationarity
                );
            }
        }
        Command::Plot { summary, out } => {
            let out = out.unwrap_or_else(|| summary.parent().map(PathBuf::from).unwrap_or_default());
            let written = plot::plot_summary(&summary, &out).map_err(|e| Failure::Runtime(e.into()))?;
            for p in written {
                println!("{}", p.display());
            }
        }
        Command::Check { seed, samples } => {
            let outcomes = check::run_checks(seed, samples.max(1));
            print!("{}", check::format_table(&outcomes));
            if outcomes.iter().any(|o| !o.passed) {
                return Err(Failure::Runtime(anyhow::anyhow!("self-checks failed")));
            }
        }
    }
    Ok(())
}

/// Prints the error chain, skipping causes already quoted by their parent.
fn report(e: &anyhow::Error) {
    let mut msg = e.to_string();
    let mut prev = msg.clone();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !prev.contains(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
        prev = c;
    }
    eprintln!("error: {msg}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            report(&e);
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            report(&e);
            ExitCode::from(2)
        }
    }
}
