//! Parsing of `--space` and `--evaluator` values.

use std::sync::Arc;

use hpo_core::benchmarks::{Benchmark, BenchmarkKind, BenchmarkSpec, NOISY_SPHERE_SIGMA};
use hpo_core::external::ExternalEvaluator;
use hpo_core::protocol::Evaluator;
use hpo_core::space::SearchSpace;

use crate::CliError;

const BUILTIN: &str = "builtin:";

/// `builtin:TAG` or a path to a space file.
pub fn load_space(arg: &str) -> Result<SearchSpace, CliError> {
    if let Some(tag) = arg.strip_prefix(BUILTIN) {
        return SearchSpace::builtin(tag).map_err(|e| CliError::Config(e.to_string()));
    }
    let text = std::fs::read_to_string(arg).map_err(|e| CliError::Config(format!("cannot read space file {arg}: {e}")))?;
    SearchSpace::parse(&text).map_err(|e| CliError::Config(format!("{arg}: {e}")))
}

/// Parses `NAME[,noise=S][,fail_rate=R]` for a `dim`-dimensional space.
/// `noisy_sphere` gets [`NOISY_SPHERE_SIGMA`] unless a noise level is given.
pub fn parse_benchmark(text: &str, dim: usize) -> Result<BenchmarkSpec, String> {
    let mut parts = text.split(',');
    let name: BenchmarkKind = parts.next().unwrap_or_default().parse().map_err(|e| format!("{e}"))?;
    let mut spec = BenchmarkSpec::new(name, dim);
    if name == BenchmarkKind::NoisySphere {
        spec.noise_sigma = NOISY_SPHERE_SIGMA;
    }
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value in benchmark options, got '{part}'"))?;
        let value: f64 = value
            .parse()
            .map_err(|_| format!("benchmark option {key}: '{value}' is not a number"))?;
        match key {
            "noise" => spec.noise_sigma = value,
            "fail_rate" => spec.fail_rate = value,
            other => return Err(format!("unknown benchmark option '{other}' (known: noise, fail_rate)")),
        }
    }
    Ok(spec)
}

/// Builds the evaluator for `--evaluator`. A single `builtin:NAME` value
/// selects an in-process benchmark seeded with `seed`; anything else is a
/// command line, each value split with shell quoting rules.
pub fn build_evaluator(args: &[String], dim: usize, seed: u64) -> Result<Arc<dyn Evaluator>, CliError> {
    if let [single] = args {
        if let Some(rest) = single.strip_prefix(BUILTIN) {
            let spec = parse_benchmark(rest, dim).map_err(CliError::Config)?;
            let bench = Benchmark::new(spec, seed).map_err(|e| CliError::Config(e.to_string()))?;
            return Ok(Arc::new(bench));
        }
    }
    let mut argv = Vec::new();
    for a in args {
        let words = shlex::split(a).ok_or_else(|| CliError::Config(format!("unbalanced quotes in evaluator '{a}'")))?;
        argv.extend(words);
    }
    let ev = ExternalEvaluator::new(argv).map_err(CliError::Config)?;
    Ok(Arc::new(ev))
}
