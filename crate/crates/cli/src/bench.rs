//! Self-check suite behind `hpo bench`: convergence on standard test
//! functions plus the optimizer's invariance properties. Printed metrics
//! depend only on the seed, never on timing.

use std::sync::Arc;

use clap::ValueEnum;
use hpo_core::benchmarks::{Benchmark, BenchmarkKind, BenchmarkSpec};
use hpo_core::cma::{sample_prior, Candidate, CmaState, StrategyParams, DEFAULT_MEAN, DEFAULT_SIGMA};
use hpo_core::engine::{run_optimization, RunConfig};
use hpo_core::runlog::NullSink;
use hpo_core::space::SearchSpace;

/// Deliberate defects for checking that the suite notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Recombination weights scaled so they no longer sum to one.
    BrokenWeights,
}

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    pub quick: bool,
    pub seed: u64,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl PropertyResult {
    pub fn line(&self) -> String {
        format!("{} {:<26} {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Sphere optimum used by the convergence check, away from the start mean.
pub fn sphere_shift(dim: usize) -> Vec<f64> {
    (0..dim).map(|i| 0.2 + 0.06 * i as f64).collect()
}

/// Rastrigin shift putting the optimum at 0.3 in every coordinate.
pub const RASTRIGIN_SHIFT: f64 = -0.2;
pub const RASTRIGIN_DIM: usize = 2;
pub const RASTRIGIN_LAMBDA: usize = 100;
pub const RASTRIGIN_EVALS: usize = 6000;

fn strategy(dim: usize, lambda: usize, fault: Option<Fault>) -> StrategyParams {
    let mut p = StrategyParams::new(dim, lambda).expect("valid defaults");
    if fault == Some(Fault::BrokenWeights) {
        p.weights.iter_mut().for_each(|w| *w *= 1.05);
    }
    p
}

fn state(dim: usize, lambda: usize, seed: u64, fault: Option<Fault>) -> CmaState {
    CmaState::with_params(strategy(dim, lambda, fault), &vec![DEFAULT_MEAN; dim], DEFAULT_SIGMA, seed)
        .expect("valid start")
}

fn generation(s: &mut CmaState, f: &dyn Fn(&[f64]) -> f64) -> Vec<(Candidate, f64)> {
    let cands = s.ask().expect("ask");
    let evals: Vec<(Candidate, f64)> = cands
        .into_iter()
        .map(|c| {
            let y = f(&c.genotype);
            (c, y)
        })
        .collect();
    s.tell(&evals).expect("tell");
    evals
}

/// Best objective after `evals` evaluations (whole generations).
pub fn minimize(mut s: CmaState, evals: usize, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let mut best = f64::INFINITY;
    while (s.eval_count() as usize) < evals {
        for (_, y) in generation(&mut s, f) {
            best = best.min(y);
        }
    }
    best
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn seeds(opts: &BenchOptions, full: u64, quick: u64) -> impl Iterator<Item = u64> {
    let n = if opts.quick { quick } else { full };
    let base = opts.seed;
    (0..n).map(move |i| base.wrapping_add(i))
}

fn check_strategy_constants(opts: &BenchOptions) -> PropertyResult {
    let cases = [(2, 6), (5, 10), (10, 10), (19, 30), (50, 100)];
    let bad: Vec<String> = cases
        .iter()
        .filter_map(|&(d, l)| strategy(d, l, opts.fault).validate().err().map(|e| format!("d={d} lambda={l}: {e}")))
        .collect();
    PropertyResult {
        name: "strategy_constants",
        passed: bad.is_empty(),
        detail: if bad.is_empty() { format!("{} settings valid", cases.len()) } else { bad.join("; ") },
    }
}

fn check_sphere(opts: &BenchOptions) -> PropertyResult {
    let dim = 10;
    let bench = Benchmark::new(BenchmarkSpec::new(BenchmarkKind::Sphere, dim).with_shift(sphere_shift(dim)), 0)
        .expect("sphere");
    let f = |x: &[f64]| bench.value(x);
    let bests: Vec<f64> = seeds(opts, 20, 5).map(|s| minimize(state(dim, 10, s, opts.fault), 5000, &f)).collect();
    let n = bests.len();
    let hits = bests.iter().filter(|b| **b < 1e-10).count();
    let need = n - n / 20;
    PropertyResult {
        name: "sphere_convergence",
        passed: hits >= need,
        detail: format!("10-D lambda=10 5000 evals: {hits}/{n} below 1e-10 (need {need}), median {:.3e}", median(bests)),
    }
}

fn check_rastrigin(opts: &BenchOptions) -> PropertyResult {
    let spec = BenchmarkSpec::new(BenchmarkKind::Rastrigin, RASTRIGIN_DIM).with_shift(vec![RASTRIGIN_SHIFT; RASTRIGIN_DIM]);
    let bench = Benchmark::new(spec, 0).expect("rastrigin");
    let f = |x: &[f64]| bench.value(x);
    let bests: Vec<f64> = seeds(opts, 20, 5)
        .map(|s| minimize(state(RASTRIGIN_DIM, RASTRIGIN_LAMBDA, s, opts.fault), RASTRIGIN_EVALS, &f))
        .collect();
    let n = bests.len();
    let hits = bests.iter().filter(|b| **b < 1e-8).count();
    let worst = bests.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let need = (3 * n).div_ceil(4);
    PropertyResult {
        name: "rastrigin_convergence",
        passed: hits >= need && worst < 2.5,
        detail: format!("2-D lambda=100 6000 evals: {hits}/{n} below 1e-8 (need {need}), worst {worst:.3e} (limit 2.5)"),
    }
}

fn check_monotone(opts: &BenchOptions) -> PropertyResult {
    let bench = Benchmark::new(BenchmarkSpec::new(BenchmarkKind::Rosenbrock, 5), 0).expect("rosenbrock");
    let f = |x: &[f64]| bench.value(x);
    let g = |x: &[f64]| bench.value(x).ln_1p();
    let gens = if opts.quick { 50 } else { 100 };
    let (mut a, mut b) = (state(5, 10, opts.seed, opts.fault), state(5, 10, opts.seed, opts.fault));
    let mut same = true;
    for _ in 0..gens {
        let ca: Vec<Candidate> = generation(&mut a, &f).into_iter().map(|(c, _)| c).collect();
        let cb: Vec<Candidate> = generation(&mut b, &g).into_iter().map(|(c, _)| c).collect();
        same &= ca == cb;
    }
    same &= a == b;
    PropertyResult {
        name: "monotone_invariance",
        passed: same,
        detail: format!("rosenbrock 5-D f vs ln(1+f), {gens} generations: {}", if same { "identical" } else { "diverged" }),
    }
}

fn check_scale(opts: &BenchOptions) -> PropertyResult {
    let bench = Benchmark::new(BenchmarkSpec::new(BenchmarkKind::Rastrigin, 4), 0).expect("rastrigin");
    let f = |x: &[f64]| bench.value(x);
    let g = |x: &[f64]| 1000.0 * bench.value(x);
    let gens = if opts.quick { 50 } else { 100 };
    let (mut a, mut b) = (state(4, 12, opts.seed, opts.fault), state(4, 12, opts.seed, opts.fault));
    let mut same = true;
    for _ in 0..gens {
        generation(&mut a, &f);
        generation(&mut b, &g);
        same &= a == b;
    }
    PropertyResult {
        name: "scale_invariance",
        passed: same,
        detail: format!("rastrigin 4-D f vs 1000f, {gens} generations: {}", if same { "identical" } else { "diverged" }),
    }
}

fn check_gen0(opts: &BenchOptions) -> PropertyResult {
    let (dim, lambda) = (19, 30);
    let mut s = state(dim, lambda, opts.seed, opts.fault);
    let cma = s.ask().expect("ask");
    let prior = sample_prior(dim, lambda, opts.seed).expect("prior");
    let same = cma.len() == prior.len() && cma.iter().zip(&prior).all(|(a, b)| a.sample() == b.sample());
    PropertyResult {
        name: "generation0_is_prior",
        passed: same,
        detail: format!("{dim}-D, {lambda} samples: {}", if same { "identical" } else { "differ" }),
    }
}

fn check_parallel(opts: &BenchOptions) -> PropertyResult {
    let space = SearchSpace::builtin("mnist_adam").expect("builtin");
    let evals = if opts.quick { 90 } else { 300 };
    let logs: Vec<String> = [1, 8]
        .iter()
        .map(|&p| {
            let mut c = RunConfig::new(30, evals, opts.seed);
            c.parallelism = p;
            let ev = Arc::new(Benchmark::new(BenchmarkSpec::new(BenchmarkKind::SurrogateDnn, 19), opts.seed).expect("surrogate"));
            run_optimization(&c, &space, ev, &mut NullSink)
                .map(|mut l| {
                    // the header records P itself; everything else must match
                    l.header.config.parallelism = 1;
                    l.to_jsonl_without_timing()
                })
                .unwrap_or_else(|e| format!("error: {e}"))
        })
        .collect();
    let same = logs[0] == logs[1] && !logs[0].starts_with("error");
    PropertyResult {
        name: "parallel_transparency",
        passed: same,
        detail: format!("surrogate_dnn {evals} evals, P=1 vs P=8: {}", if same { "identical logs" } else { "logs differ" }),
    }
}

pub fn run_suite(opts: &BenchOptions) -> Vec<PropertyResult> {
    let checks: [fn(&BenchOptions) -> PropertyResult; 7] = [
        check_strategy_constants,
        check_sphere,
        check_rastrigin,
        check_monotone,
        check_scale,
        check_gen0,
        check_parallel,
    ];
    checks.iter().map(|c| c(opts)).collect()
}
