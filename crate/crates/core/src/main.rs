use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use memheat::cli::{self, CliError};
use memheat::config::TaskKind;

#[derive(Parser)]
#[command(
    name = "memheat",
    version,
    about = "Null-control experiments for heat equations with memory"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Free evolution (u = 0); writes trajectory.csv
    Simulate(RunArgs),
    /// Penalized null control for task.epsilon
    Control(RunArgs),
    /// Penalized null control over task.epsilons; writes cost_curve.csv
    Sweep(RunArgs),
    /// Runs the task named in the config
    Run(RunArgs),
    /// Validates a config and prints the geometry flags
    Check { config: PathBuf },
    /// Tabulates every summary.json under a directory
    Report { dir: PathBuf },
    /// Runs several configs concurrently, each into its own directory
    Batch { configs: Vec<PathBuf> },
}

#[derive(clap::Args)]
struct RunArgs {
    config: PathBuf,
    /// Output directory (overrides output.dir and $MEMHEAT_OUTPUT_ROOT)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(args: &RunArgs, task: Option<TaskKind>) -> Result<(), CliError> {
    let config = cli::load_config(&args.config)?;
    let out = cli::output_dir(&config, &args.config, args.out.as_deref());
    let summary = cli::run(&config, task, &out)?;
    println!(
        "{}: {:?} done in {:.2}s (coverage={}, split={}) -> {}",
        args.config.display(),
        summary.task,
        summary.wall_time_s,
        summary.geometry.coverage,
        summary.geometry.split,
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = match &args.command {
        Command::Simulate(a) => execute(a, Some(TaskKind::Simulate)),
        Command::Control(a) => execute(a, Some(TaskKind::Control)),
        Command::Sweep(a) => execute(a, Some(TaskKind::Sweep)),
        Command::Run(a) => execute(a, None),
        Command::Check { config } => cli::load_config(config)
            .and_then(|c| cli::check(&c))
            .map(|v| println!("{}", serde_json::to_string_pretty(&v).unwrap())),
        Command::Report { dir } => cli::report(dir).map(|table| print!("{table}")),
        Command::Batch { configs } => {
            let worst = std::thread::scope(|s| {
                let handles: Vec<_> = configs
                    .iter()
                    .map(|c| {
                        s.spawn(move || {
                            execute(
                                &RunArgs {
                                    config: c.clone(),
                                    out: None,
                                },
                                None,
                            )
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .zip(configs)
                    .map(|(h, c)| match h.join().expect("worker panicked") {
                        Ok(()) => 0,
                        Err(e) => {
                            eprintln!("{}: {e}", c.display());
                            e.exit_code()
                        }
                    })
                    .max()
                    .unwrap_or(0)
            });
            return ExitCode::from(worst as u8);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
