use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mivabo::experiment::{run_experiment, BuiltinTask, ExperimentConfig};
use mivabo::trace::{load_trace, replay};
use mivabo::Error;

/// Mixed-variable Bayesian optimization experiments.
#[derive(Parser)]
#[command(name = "mivabo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, seed) cell of an experiment config.
    Run {
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Recompute the incumbent column of a trace and check it.
    Replay { trace: PathBuf },
    /// List the builtin tasks.
    ListTasks,
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn run(config: PathBuf, output_dir: Option<PathBuf>) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let report = run_experiment(&cfg)?;
    println!(
        "{}: {} cells written to {}",
        report.task,
        report.cells.len(),
        cfg.output_dir.display()
    );
    for m in &cfg.methods {
        let finals: Vec<f64> = report
            .final_incumbents(m.label())
            .into_iter()
            .flatten()
            .collect();
        if !finals.is_empty() {
            let mean = finals.iter().sum::<f64>() / finals.len() as f64;
            println!("  {:<16} mean final incumbent {mean:.6}", m.label());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, output_dir } => match run(config, output_dir) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Command::Replay { trace } => match load_trace(&trace) {
            Ok(records) => {
                let report = replay(&records);
                if report.is_consistent() {
                    println!("ok: {} rows consistent", report.rows);
                    ExitCode::SUCCESS
                } else {
                    for t in &report.mismatches {
                        eprintln!("incumbent mismatch at row {t}");
                    }
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::ListTasks => {
            for t in BuiltinTask::ALL {
                println!("{:<20} {}", t.name(), t.description());
            }
            ExitCode::SUCCESS
        }
    }
}
