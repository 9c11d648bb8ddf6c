use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vibcontrol::runner::{self, Overrides};

#[derive(Parser)]
#[command(name = "vibcontrol", version, about = "Config-driven vibrational state-transfer optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one or more run configs (multiple configs run concurrently).
    Run {
        configs: Vec<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse a config, resolve every default, and print the plan.
    Validate { config: PathBuf },
    /// Continue an interrupted optimization from a checkpoint file.
    Resume {
        checkpoint: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { configs, output_dir, max_iterations, seed } => {
            if configs.is_empty() {
                eprintln!("error: no config files given");
                return ExitCode::FAILURE;
            }
            if configs.len() == 1 {
                let overrides = Overrides { output_dir, max_iterations, seed };
                return report(runner::run(&configs[0], &overrides));
            }
            if output_dir.is_some() {
                eprintln!("error: --output-dir cannot be combined with multiple configs");
                return ExitCode::FAILURE;
            }
            // batch mode: independent configs, each with its own output dir
            let handles: Vec<_> = configs
                .into_iter()
                .map(|path| {
                    let overrides = Overrides { output_dir: None, max_iterations, seed };
                    std::thread::spawn(move || (path.clone(), runner::run(&path, &overrides)))
                })
                .collect();
            let mut failed = false;
            for h in handles {
                match h.join() {
                    Ok((path, Ok(summary))) => print_summary(&path.display().to_string(), &summary),
                    Ok((path, Err(e))) => {
                        eprintln!("{}: error: {e}", path.display());
                        failed = true;
                    }
                    Err(_) => {
                        eprintln!("error: worker thread panicked");
                        failed = true;
                    }
                }
            }
            if failed {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Validate { config } => match runner::validate(&config) {
            Ok(report) => {
                print!("{report}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Resume { checkpoint, output_dir, max_iterations, seed } => {
            let overrides = Overrides { output_dir, max_iterations, seed };
            report(runner::resume(&checkpoint, &overrides))
        }
    }
}

fn print_summary(source: &str, summary: &runner::RunSummary) {
    println!("{source}: F = {:.8} after {} iterations", summary.fidelity, summary.iterations);
    for s in &summary.stages {
        println!("  {s}");
    }
    println!("  artifacts: {}", summary.output_dir.display());
}

fn report(result: vibcontrol::Result<runner::RunSummary>) -> ExitCode {
    match result {
        Ok(summary) => {
            print_summary("run", &summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
