use std::io::{self, Write};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hpo_cli::bench::{run_suite, BenchOptions, Fault};
use hpo_cli::commands::{cmd_report, cmd_run, cmd_spaces, ReportArgs, RunArgs, SpacesArgs};
use hpo_cli::CliError;

/// CMA-ES hyperparameter search with parallel evaluation.
#[derive(Debug, Parser)]
#[command(name = "hpo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an optimization and write its log
    Run(RunArgs),
    /// Write trajectory, density and objective-density tables for run logs
    Report(ReportArgs),
    /// Check convergence and invariance properties of the optimizer
    Bench(BenchArgs),
    /// List the builtin search spaces
    Spaces(SpacesArgs),
}

#[derive(Debug, clap::Args)]
struct BenchArgs {
    /// Fewer seeds and generations
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<Fault>,
}

fn bench(args: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let opts = BenchOptions {
        quick: args.quick,
        seed: args.seed,
        fault: args.inject_fault,
    };
    let mut failed = 0;
    for r in run_suite(&opts) {
        writeln!(out, "{}", r.line()).map_err(|e| CliError::Io(e.to_string()))?;
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(CliError::BenchFailed(failed));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, &mut out),
        Command::Report(a) => cmd_report(a, &mut out),
        Command::Bench(a) => bench(a, &mut out),
        Command::Spaces(a) => cmd_spaces(a, &mut out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("hpo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
