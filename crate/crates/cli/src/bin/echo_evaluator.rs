//! Evaluates a builtin benchmark over the line protocol: reads one request
//! from stdin, writes one response to stdout. Fault-injection flags make it
//! hang, exit non-zero or print garbage for chosen candidate ids.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use hpo_cli::evaluator::parse_benchmark;
use hpo_core::benchmarks::Benchmark;
use hpo_core::protocol::{EvalOutcome, EvalRequest, EvalResponse};

#[derive(Debug, Parser)]
#[command(name = "echo-evaluator")]
struct Args {
    /// NAME[,noise=S][,fail_rate=R]
    #[arg(long)]
    benchmark: String,
    /// Defaults to the genotype length of the request
    #[arg(long)]
    dim: Option<usize>,
    /// Noise and failure seed, matching the builtin evaluator's run seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sleep instead of answering for these candidate ids
    #[arg(long, value_delimiter = ',')]
    hang_on: Vec<u64>,
    /// Exit with status 1 for these candidate ids
    #[arg(long, value_delimiter = ',')]
    exit_on: Vec<u64>,
    /// Print a non-protocol line for these candidate ids
    #[arg(long, value_delimiter = ',')]
    garbage_on: Vec<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut line = String::new();
    if let Err(e) = io::stdin().lock().read_line(&mut line) {
        eprintln!("echo-evaluator: reading request: {e}");
        return ExitCode::FAILURE;
    }
    let request = match EvalRequest::from_line(line.trim_end()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("echo-evaluator: {e}");
            return ExitCode::FAILURE;
        }
    };
    let id = request.candidate_id;
    if args.hang_on.contains(&id) {
        std::thread::sleep(Duration::from_secs(3600));
    }
    if args.exit_on.contains(&id) {
        return ExitCode::FAILURE;
    }
    let response = if args.garbage_on.contains(&id) {
        "this is not json".to_string()
    } else {
        let dim = args.dim.unwrap_or(request.genotype.len());
        let outcome = parse_benchmark(&args.benchmark, dim)
            .and_then(|spec| Benchmark::new(spec, args.seed).map_err(|e| e.to_string()))
            .map(|b| b.observe(&request.genotype, id));
        match outcome {
            Ok(EvalOutcome::Ok(f)) => EvalResponse::Objective(f).to_line(),
            Ok(EvalOutcome::Failed(m)) => EvalResponse::Error(m).to_line(),
            Ok(EvalOutcome::Timeout) => EvalResponse::Error("timeout".into()).to_line(),
            Err(m) => EvalResponse::Error(m).to_line(),
        }
    };
    let mut out = io::stdout().lock();
    if writeln!(out, "{response}").and_then(|_| out.flush()).is_err() {
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
