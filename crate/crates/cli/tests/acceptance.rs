//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use hpo_cli::bench::sphere_shift;
use hpo_core::benchmarks::{Benchmark, BenchmarkKind, BenchmarkSpec, NOISY_SPHERE_SIGMA};
use hpo_core::cma::{sample_prior, Candidate, CmaState, DEFAULT_MEAN, DEFAULT_SIGMA};
use hpo_core::engine::{run_optimization, OptimizerKind, RunConfig};
use hpo_core::external::ExternalEvaluator;
use hpo_core::kde::kde_diffusion;
use hpo_core::protocol::{EvalOutcome, EvalRequest, Evaluator};
use hpo_core::report::{best_so_far, divergence_fraction};
use hpo_core::runlog::{EvalStatus, EvaluationRecord, NullSink, RunHeader, RunLog};
use hpo_core::space::SearchSpace;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
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

fn bench_eval(spec: BenchmarkSpec, seed: u64) -> Arc<dyn Evaluator> {
    Arc::new(Benchmark::new(spec, seed).unwrap())
}

/// Log text without timing fields or the header's parallelism setting.
fn comparable(mut log: RunLog) -> String {
    log.header.config.parallelism = 1;
    log.to_jsonl_without_timing()
}

fn sphere_convergence() -> Outcome {
    let dim = 10;
    let spec = BenchmarkSpec::new(BenchmarkKind::Sphere, dim).with_shift(sphere_shift(dim));
    let space = SearchSpace::unit_cube(dim);
    let start = Instant::now();
    let bests: Vec<f64> = (0..20)
        .map(|seed| {
            let config = RunConfig::new(10, 5000, seed);
            let log = run_optimization(&config, &space, bench_eval(spec.clone(), seed), &mut NullSink).unwrap();
            log.best().and_then(|r| r.objective).unwrap()
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let hits = bests.iter().filter(|b| **b < 1e-10).count();
    outcome(
        hits >= 19 && elapsed < 5.0,
        format!("{hits}/20 seeds below 1e-10 (need 19), worst {:.3e}, {elapsed:.2} s (limit 5 s)", bests.iter().copied().fold(0.0, f64::max)),
    )
}

fn run_pair(
    dim: usize,
    lambda: usize,
    seed: u64,
    gens: usize,
    f: &dyn Fn(&[f64]) -> f64,
    g: &dyn Fn(&[f64]) -> f64,
) -> (bool, bool) {
    let mut a = CmaState::new(dim, lambda, &vec![DEFAULT_MEAN; dim], DEFAULT_SIGMA, seed).unwrap();
    let mut b = a.clone();
    let (mut same_candidates, mut same_states) = (true, true);
    for _ in 0..gens {
        let ca = a.ask().unwrap();
        let cb = b.ask().unwrap();
        same_candidates &= ca == cb;
        let ea: Vec<(Candidate, f64)> = ca.iter().map(|c| (c.clone(), f(&c.genotype))).collect();
        let eb: Vec<(Candidate, f64)> = cb.iter().map(|c| (c.clone(), g(&c.genotype))).collect();
        a.tell(&ea).unwrap();
        b.tell(&eb).unwrap();
        same_states &= a == b;
    }
    (same_candidates, same_states)
}

fn monotone_invariance() -> Outcome {
    let bench = Benchmark::new(BenchmarkSpec::new(BenchmarkKind::Rosenbrock, 5), 0).unwrap();
    let f = |x: &[f64]| bench.value(x);
    let g = |x: &[f64]| bench.value(x).ln_1p();
    let seeds = [1, 2, 3, 4, 5];
    let ok = seeds.iter().filter(|&&s| run_pair(5, 10, s, 100, &f, &g).0).count();
    outcome(ok == seeds.len(), format!("rosenbrock 5-D, 100 generations: {ok}/{} seeds bit-identical", seeds.len()))
}

fn scale_invariance() -> Outcome {
    let bench = Benchmark::new(BenchmarkSpec::new(BenchmarkKind::Rosenbrock, 5), 0).unwrap();
    let f = |x: &[f64]| bench.value(x);
    let g = |x: &[f64]| 1000.0 * bench.value(x);
    let seeds = [1, 2, 3, 4, 5];
    let ok = seeds.iter().filter(|&&s| run_pair(5, 10, s, 100, &f, &g).1).count();
    outcome(ok == seeds.len(), format!("rosenbrock 5-D f vs 1000f, 100 generations: {ok}/{} state trajectories bit-identical", seeds.len()))
}

fn parallel_transparency() -> Outcome {
    let space = SearchSpace::builtin("mnist_adam").unwrap();
    let seeds = [7, 8, 9];
    let mut same = 0;
    for seed in seeds {
        let logs: Vec<String> = [1, 8]
            .iter()
            .map(|&p| {
                let mut c = RunConfig::new(30, 300, seed);
                c.parallelism = p;
                let ev = bench_eval(BenchmarkSpec::new(BenchmarkKind::SurrogateDnn, 19).with_fail_rate(0.05), seed);
                comparable(run_optimization(&c, &space, ev, &mut NullSink).unwrap())
            })
            .collect();
        same += usize::from(logs[0] == logs[1]);
    }
    outcome(same == seeds.len(), format!("surrogate_dnn lambda=30, 300 evals: {same}/{} seeds identical for P=1 and P=8", seeds.len()))
}

fn noisy_improvement() -> Outcome {
    let dim = 19;
    let shift: Vec<f64> = (0..dim).map(|i| 0.25 + 0.5 * i as f64 / (dim - 1) as f64).collect();
    let spec = BenchmarkSpec::new(BenchmarkKind::NoisySphere, dim)
        .with_noise(NOISY_SPHERE_SIGMA)
        .with_shift(shift);
    let space = SearchSpace::unit_cube(dim);
    let (mut at100, mut at1000, mut random1000) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..10 {
        for optimizer in [OptimizerKind::Cma, OptimizerKind::RandomPrior] {
            let mut c = RunConfig::new(30, 1000, seed);
            c.optimizer = optimizer;
            let log = run_optimization(&c, &space, bench_eval(spec.clone(), seed), &mut NullSink).unwrap();
            let t = best_so_far(&log).unwrap();
            match optimizer {
                OptimizerKind::Cma => {
                    at100.push(t.best_after(100).unwrap());
                    at1000.push(t.best_after(1000).unwrap());
                }
                OptimizerKind::RandomPrior => random1000.push(t.best_after(1000).unwrap()),
            }
        }
    }
    let (m100, m1000, r1000) = (median(at100), median(at1000), median(random1000));
    outcome(
        m1000 < m100 && m1000 < r1000,
        format!("median best-so-far: cma@100 {m100:.4e}, cma@1000 {m1000:.4e}, random@1000 {r1000:.4e}"),
    )
}

fn generation0_is_prior() -> Outcome {
    let mut checked = 0;
    let mut same = true;
    for (dim, lambda) in [(19, 30), (18, 30), (5, 10), (1, 4)] {
        for seed in [0, 1, 42, u64::MAX] {
            let cma = CmaState::new(dim, lambda, &vec![DEFAULT_MEAN; dim], DEFAULT_SIGMA, seed).unwrap().ask().unwrap();
            let prior = sample_prior(dim, lambda, seed).unwrap();
            same &= cma.iter().zip(&prior).all(|(a, b)| a.sample() == b.sample() && a.genotype == b.genotype);
            checked += 1;
        }
    }
    outcome(same, format!("{checked} (dim, lambda, seed) settings: pre-boundary samples bit-identical"))
}

fn table1_fidelity() -> Outcome {
    let adam = SearchSpace::builtin("mnist_adam").unwrap();
    let adadelta = SearchSpace::builtin("mnist_adadelta").unwrap();
    let value = |s: &SearchSpace, name: &str, x: f64| s.dims().iter().find(|p| p.name == name).unwrap().value(x);
    let examples: [(&SearchSpace, &str, f64, f64); 10] = [
        (&adam, "batch_size_e0", 0.0, 16.0),
        (&adam, "batch_size_e0", 1.0, 256.0),
        (&adam, "beta2", 0.0, 0.99),
        (&adam, "beta2", 1.0, 0.9999),
        (&adam, "selection_pressure_e0", 1.0, 1e98),
        (&adam, "bn_alpha", 0.0, 0.01),
        (&adam, "adaptation_end_epoch", 0.5, 120.0),
        (&adam, "filters_conv1", 0.5, 45.0),
        (&adam, "lr_e0", 0.0, 0.1),
        (&adadelta, "epsilon", 0.0, 1e-3),
    ];
    let mut failures: Vec<String> = examples
        .iter()
        .filter(|(s, n, x, want)| value(s, n, *x) != *want)
        .map(|(s, n, x, want)| format!("{n}({x}) = {} != {want}", value(s, n, *x)))
        .collect();
    let inverses = [("bn_alpha", 0.11, 0.5), ("batch_size_e0", 16.0, 0.0), ("beta2", 0.999, 0.5)];
    for (n, v, want) in inverses {
        let p = adam.dims().iter().find(|p| p.name == n).unwrap();
        let x = p.inverse(v).unwrap();
        if (x - want).abs() > 1e-12 {
            failures.push(format!("inverse {n}({v}) = {x} != {want}"));
        }
    }

    let sp = adam.dims().iter().find(|p| p.name == "selection_pressure_e0").unwrap();
    let top = sp.continuous(1.0);
    if top != 1e98 || top.log10() != 98.0 {
        failures.push(format!("double_exp10 at x=1 is {top:e}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for space in [&adam, &adadelta] {
        for p in space.dims() {
            for _ in 0..1000 {
                let x: f64 = rand::Rng::random(&mut rng);
                worst = worst.max((p.inverse(p.continuous(x)).unwrap() - x).abs());
            }
        }
    }
    if worst >= 1e-9 {
        failures.push(format!("round-trip error {worst:e}"));
    }
    let detail = if failures.is_empty() {
        format!("{} endpoint examples exact, 3 inverses exact, double_exp10(1) = 1e98, round-trip max error {worst:.2e}", examples.len())
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

fn kde_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let normal = Normal::new(0.5, 0.1).unwrap();
    let s: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
    let est = kde_diffusion(&s, 256, 0.0, 1.0).unwrap();
    let peak = est.density.iter().copied().fold(0.0, f64::max);
    let target = 1.0 / (0.1 * (2.0 * PI).sqrt());
    let peak_err = (peak - target).abs() / target;
    let integral_err = (est.integral() - 1.0).abs();

    let mut affine_err: f64 = 0.0;
    for (a, b) in [(3.0, 2.0), (-1.0, 0.5), (10.0, 7.0)] {
        let mapped: Vec<f64> = s.iter().map(|x| a + b * x).collect();
        let e = kde_diffusion(&mapped, 256, a, a + b).unwrap();
        for j in 0..est.mesh.len() {
            affine_err = affine_err.max((e.density[j] - est.density[j] / b).abs());
            affine_err = affine_err.max((e.mesh[j] - (a + b * est.mesh[j])).abs());
        }
    }

    let h = est.bandwidth();
    let norm = 1.0 / (s.len() as f64 * h * (2.0 * PI).sqrt());
    let oracle_err = est
        .mesh
        .iter()
        .zip(&est.density)
        .map(|(x, d)| {
            let direct = norm * s.iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum::<f64>();
            (direct - d).abs()
        })
        .fold(0.0, f64::max);

    outcome(
        peak_err < 0.05 && integral_err < 1e-6 && affine_err < 1e-8 && oracle_err < 1e-3,
        format!(
            "peak {peak:.4} ({:.2}% off 3.9894, limit 5%), |integral-1| {integral_err:.1e}, affine {affine_err:.1e} (limit 1e-8), brute-force oracle {oracle_err:.2e} (limit 1e-3)",
            100.0 * peak_err
        ),
    )
}

fn divergence_fraction_exact() -> Outcome {
    let space = SearchSpace::unit_cube(1);
    let mut log = RunLog::new(RunHeader::new(&RunConfig::new(10, 100, 0), &space));
    for i in 0..100u64 {
        let f = if [5, 41, 77].contains(&i) { 0.9 } else { 0.02 };
        log.records.push(EvaluationRecord {
            candidate_id: i,
            generation: i / 10,
            gen_index: (i % 10) as usize,
            genotype: vec![0.5],
            phenotype: Default::default(),
            objective: Some(f),
            status: EvalStatus::Ok,
            wall_seconds: 0.0,
            worker_slot: 0,
        });
    }
    let fraction = divergence_fraction(&log, 0.7).unwrap();
    outcome(fraction == 0.03, format!("3/100 above 0.7 -> {fraction}"))
}

/// In-process counterpart of the echo evaluator's fault-injection flags.
struct FaultyBuiltin {
    bench: Benchmark,
    fail_ids: Vec<u64>,
    hang_ids: Vec<u64>,
    hang: Duration,
}

impl Evaluator for FaultyBuiltin {
    fn evaluate(&self, request: &EvalRequest) -> EvalOutcome {
        if self.hang_ids.contains(&request.candidate_id) {
            std::thread::sleep(self.hang);
        }
        if self.fail_ids.contains(&request.candidate_id) {
            return EvalOutcome::Failed("injected".into());
        }
        self.bench.evaluate(request)
    }
}

fn ids(v: &[u64]) -> String {
    v.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

fn protocol_end_to_end() -> Outcome {
    let echo = env!("CARGO_BIN_EXE_echo-evaluator");
    let hpo = env!("CARGO_BIN_EXE_hpo");
    let dir = tempfile::tempdir().unwrap();
    let mut notes = Vec::new();
    let mut passed = true;

    // through the command line: plain run with simulated failures
    let run = |out: &str, evaluator: &[&str]| {
        let status = Command::new(hpo)
            .args(["run", "--space", "builtin:mnist_adam", "--lambda", "30", "--parallel", "8"])
            .args(["--max-evals", "120", "--seed", "7", "--out", out, "--evaluator"])
            .args(evaluator)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        RunLog::read(std::path::Path::new(out)).unwrap()
    };
    let builtin_path = dir.path().join("builtin.jsonl");
    let external_path = dir.path().join("external.jsonl");
    let builtin = run(builtin_path.to_str().unwrap(), &["builtin:surrogate_dnn,fail_rate=0.1"]);
    let external = run(
        external_path.to_str().unwrap(),
        &[&format!("{echo} --benchmark surrogate_dnn,fail_rate=0.1 --seed 7")],
    );
    let failed = builtin.records.iter().filter(|r| r.status == EvalStatus::Failed).count();
    let same_cli = builtin.to_jsonl_without_timing() == external.to_jsonl_without_timing();
    passed &= same_cli && failed > 0;
    notes.push(format!("cli run: {} records, {failed} failed, identical={same_cli}", builtin.records.len()));

    // fault injection: non-zero exit, garbage output and overruns
    let (exit_ids, garbage_ids, hang_ids) = ([3u64, 31, 62], [5u64, 40], [11u64, 47]);
    let space = SearchSpace::builtin("mnist_adam").unwrap();
    let mut config = RunConfig::new(30, 90, 11);
    config.parallelism = 8;
    config.eval_budget_seconds = Some(1.0);
    config.grace_seconds = 0.5;
    let spec = BenchmarkSpec::new(BenchmarkKind::SurrogateDnn, 19).with_fail_rate(0.05);
    let reference = FaultyBuiltin {
        bench: Benchmark::new(spec, 11).unwrap(),
        fail_ids: exit_ids.iter().chain(&garbage_ids).copied().collect(),
        hang_ids: hang_ids.to_vec(),
        hang: Duration::from_secs(5),
    };
    let in_process = run_optimization(&config, &space, Arc::new(reference), &mut NullSink).unwrap();
    let argv = vec![
        echo.to_string(),
        "--benchmark".into(),
        "surrogate_dnn,fail_rate=0.05".into(),
        "--seed".into(),
        "11".into(),
        "--exit-on".into(),
        ids(&exit_ids),
        "--garbage-on".into(),
        ids(&garbage_ids),
        "--hang-on".into(),
        ids(&hang_ids),
    ];
    let over_wire = run_optimization(&config, &space, Arc::new(ExternalEvaluator::new(argv).unwrap()), &mut NullSink).unwrap();
    let count = |log: &RunLog, s: EvalStatus| log.records.iter().filter(|r| r.status == s).count();
    let timeouts = count(&over_wire, EvalStatus::Timeout);
    let fails = count(&over_wire, EvalStatus::Failed);
    let bounded = over_wire
        .records
        .iter()
        .filter(|r| r.status == EvalStatus::Timeout)
        .all(|r| r.wall_seconds <= 1.5);
    let same_faults = in_process.to_jsonl_without_timing() == over_wire.to_jsonl_without_timing();
    passed &= same_faults && timeouts == hang_ids.len() && fails >= exit_ids.len() + garbage_ids.len() && bounded;
    notes.push(format!(
        "fault injection: {fails} failed, {timeouts} timed out (within budget+grace: {bounded}), identical={same_faults}"
    ));
    outcome(passed, notes.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("sphere convergence", sphere_convergence),
        ("monotone invariance", monotone_invariance),
        ("objective-scale invariance", scale_invariance),
        ("parallelism transparency", parallel_transparency),
        ("steady improvement under noise", noisy_improvement),
        ("generation 0 equals prior baseline", generation0_is_prior),
        ("space transform fidelity", table1_fidelity),
        ("kde correctness", kde_correctness),
        ("divergence fraction", divergence_fraction_exact),
        ("protocol end-to-end", protocol_end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
