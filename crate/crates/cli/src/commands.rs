//! Subcommand bodies. Each one validates every input before touching its
//! output paths.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hpo_core::engine::{run_optimization, EngineError, FailurePolicy, OptimizerKind, RunConfig};
use hpo_core::report::{self, ReportError};
use hpo_core::runlog::{JsonlSink, LogError, RunLog};
use hpo_core::space::SearchSpace;

use crate::evaluator::{build_evaluator, load_space};
use crate::CliError;

pub const BUILTIN_SPACES: [&str; 2] = ["mnist_adam", "mnist_adadelta"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Optimizer {
    Cma,
    Random,
}

fn parse_penalty(s: &str) -> Result<FailurePolicy, String> {
    if s == "worst" {
        return Ok(FailurePolicy::WorstOfGenerationPlusMargin);
    }
    let v = s
        .strip_prefix("fixed:")
        .ok_or_else(|| format!("expected 'worst' or 'fixed:V', got '{s}'"))?;
    let v: f64 = v.parse().map_err(|_| format!("'{v}' is not a number"))?;
    if !v.is_finite() {
        return Err("penalty must be finite".into());
    }
    Ok(FailurePolicy::FixedPenalty(v))
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Space file, or builtin:TAG
    #[arg(long)]
    pub space: String,
    /// Evaluator command line, or builtin:NAME[,noise=S][,fail_rate=R]
    #[arg(long, num_args = 1.., required = true)]
    pub evaluator: Vec<String>,
    #[arg(long, value_enum, default_value_t = Optimizer::Cma)]
    pub optimizer: Optimizer,
    /// Population size (candidates per generation)
    #[arg(long, default_value_t = 30)]
    pub lambda: usize,
    /// Maximum concurrent evaluations
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[arg(long)]
    pub max_evals: usize,
    /// Wall-clock budget per evaluation, in seconds
    #[arg(long)]
    pub eval_budget_s: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run log to write (JSON lines)
    #[arg(long)]
    pub out: PathBuf,
    /// Objective for failed evaluations: worst or fixed:V
    #[arg(long, default_value = "worst", value_parser = parse_penalty)]
    pub penalty: FailurePolicy,
    /// Defaults to run-SEED
    #[arg(long)]
    pub run_id: Option<String>,
}

impl RunArgs {
    pub fn config(&self) -> RunConfig {
        let mut c = RunConfig::new(self.lambda, self.max_evals, self.seed);
        if let Some(id) = &self.run_id {
            c.run_id = id.clone();
        }
        c.optimizer = match self.optimizer {
            Optimizer::Cma => OptimizerKind::Cma,
            Optimizer::Random => OptimizerKind::RandomPrior,
        };
        c.parallelism = self.parallel;
        c.eval_budget_seconds = self.eval_budget_s;
        c.failure_policy = self.penalty;
        c
    }
}

fn engine_error(e: EngineError) -> CliError {
    match e {
        EngineError::GenerationCollapse { .. } => CliError::Collapse(e.to_string()),
        EngineError::Sink(io) => CliError::Io(io.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

pub fn cmd_run(args: &RunArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let space = load_space(&args.space)?;
    let config = args.config();
    config.validate().map_err(engine_error)?;
    let evaluator = build_evaluator(&args.evaluator, space.dim_count(), args.seed)?;

    let mut sink = JsonlSink::create(&args.out).map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    let log = run_optimization(&config, &space, evaluator, &mut sink).map_err(engine_error)?;

    let best = log.best().ok_or_else(|| CliError::Collapse("no evaluation succeeded".into()))?;
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    writeln!(stdout, "evaluations: {}", log.records.len()).map_err(io)?;
    writeln!(stdout, "best objective: {}", best.objective.unwrap_or(f64::NAN)).map_err(io)?;
    writeln!(stdout, "best candidate: {} (generation {})", best.candidate_id, best.generation).map_err(io)?;
    for (name, v) in &best.phenotype.0 {
        writeln!(stdout, "  {name} = {v}").map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run logs to analyse
    #[arg(long, num_args = 1.., required = true)]
    pub log: Vec<PathBuf>,
    /// Output directory for the CSV tables
    #[arg(long)]
    pub out: PathBuf,
    /// Early evaluations per density
    #[arg(long, default_value_t = report::DEFAULT_FIRST)]
    pub first: usize,
    /// Late evaluations per density
    #[arg(long, default_value_t = report::DEFAULT_LAST)]
    pub last: usize,
    /// Mesh points for genotype densities
    #[arg(long, default_value_t = report::DEFAULT_DENSITY_MESH)]
    pub mesh: usize,
    /// Mesh points for objective densities
    #[arg(long, default_value_t = report::DEFAULT_ERROR_MESH)]
    pub error_mesh: usize,
    #[arg(long, default_value_t = report::DEFAULT_DIVERGENCE_THRESHOLD)]
    pub divergence_threshold: f64,
}

fn read_log(path: &Path) -> Result<RunLog, CliError> {
    RunLog::read(path).map_err(|e| match e {
        LogError::Io(io) => CliError::Config(format!("cannot read log {}: {io}", path.display())),
        other => CliError::Config(format!("{}: {other}", path.display())),
    })
}

fn report_error(path: &Path, e: ReportError) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

/// File stems for the logs, made unique with a numeric suffix.
fn stems(paths: &[PathBuf]) -> Vec<String> {
    let mut seen = HashSet::new();
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let base = p.file_stem().map_or_else(|| "log".to_string(), |s| s.to_string_lossy().into_owned());
            if seen.insert(base.clone()) {
                base
            } else {
                format!("{base}-{i}")
            }
        })
        .collect()
}

pub fn cmd_report(args: &ReportArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if !(args.divergence_threshold.is_finite()) {
        return Err(CliError::Config("divergence threshold must be finite".into()));
    }
    let logs = args.log.iter().map(|p| read_log(p)).collect::<Result<Vec<_>, _>>()?;
    let names = stems(&args.log);
    let sources: Vec<String> = args.log.iter().map(|p| p.display().to_string()).collect();

    let mut files: Vec<(PathBuf, String)> = Vec::new();
    for ((log, path), stem) in logs.iter().zip(&args.log).zip(&names) {
        let source = path.display().to_string();
        let t = report::best_so_far(log).map_err(|e| report_error(path, e))?;
        files.push((args.out.join(format!("{stem}.trajectory.csv")), report::trajectory_table(&source, &t)));
        let d = report::density_report(log, args.first, args.last, args.mesh).map_err(|e| report_error(path, e))?;
        files.push((args.out.join(format!("{stem}.density.csv")), report::density_table(&source, &d)));
    }
    let errors = report::error_density(&logs, args.error_mesh, args.divergence_threshold)
        .map_err(|e| CliError::Config(e.to_string()))?;
    files.push((
        args.out.join("error_density.csv"),
        report::error_density_table(&sources, args.divergence_threshold, &errors),
    ));

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    for (path, text) in &files {
        std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        writeln!(stdout, "wrote {}", path.display()).map_err(io)?;
    }
    for (src, e) in sources.iter().zip(&errors) {
        writeln!(stdout, "{src}: divergence fraction {}", e.divergence_fraction).map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SpacesArgs {
    /// Print the space file for a builtin tag
    #[arg(long)]
    pub show: Option<String>,
}

pub fn cmd_spaces(args: &SpacesArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    if let Some(tag) = &args.show {
        let space = SearchSpace::builtin(tag).map_err(|e| CliError::Config(e.to_string()))?;
        return write!(stdout, "{}", space.to_text()).map_err(io);
    }
    for tag in BUILTIN_SPACES {
        let space = SearchSpace::builtin(tag).expect("builtin tag");
        writeln!(stdout, "builtin:{tag}\t{} dims", space.dim_count()).map_err(io)?;
        for p in space.dims() {
            let (lo, hi) = p.image();
            let int = if p.integer_round { " integer" } else { "" };
            writeln!(stdout, "  {:<24} {:<16} [{lo:e}, {hi:e}]{int}", p.name, p.kind.as_str()).map_err(io)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalties() {
        assert_eq!(parse_penalty("worst"), Ok(FailurePolicy::WorstOfGenerationPlusMargin));
        assert_eq!(parse_penalty("fixed:2.5"), Ok(FailurePolicy::FixedPenalty(2.5)));
        assert!(parse_penalty("fixed:inf").is_err());
        assert!(parse_penalty("max").is_err());
    }

    #[test]
    fn unique_stems() {
        let p = [PathBuf::from("a/run.jsonl"), PathBuf::from("b/run.jsonl"), PathBuf::from("c.jsonl")];
        assert_eq!(stems(&p), vec!["run", "run-1", "c"]);
    }
}
