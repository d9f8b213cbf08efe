//! Target-independent logic behind the browser bindings.

use hpo_core::benchmarks::{Benchmark, BenchmarkKind, BenchmarkSpec};
use hpo_core::cma::{Candidate, CmaState, DEFAULT_MEAN, DEFAULT_SIGMA};
use hpo_core::kde::{kde_diffusion, DensityEstimate, KdeWarning};
use hpo_core::rng;
use hpo_core::space::{ParamSpec, SearchSpace};
use rand::Rng;
use rand_distr::StandardNormal;

pub const DEMO_DIM: usize = 2;

/// 2-D benchmark with its optimum moved off the start mean.
pub fn demo_benchmark(name: &str) -> Result<Benchmark, String> {
    let kind: BenchmarkKind = name.parse().map_err(|e| format!("{e}"))?;
    let shift = match kind {
        BenchmarkKind::Sphere | BenchmarkKind::NoisySphere => vec![0.25, 0.7],
        BenchmarkKind::Rosenbrock => vec![-0.35, -0.45],
        BenchmarkKind::Rastrigin => vec![-0.2, 0.15],
        BenchmarkKind::SurrogateDnn => return Err("surrogate_dnn is 19-dimensional and cannot be drawn in 2-D".into()),
    };
    let mut spec = BenchmarkSpec::new(kind, DEMO_DIM).with_shift(shift);
    if kind == BenchmarkKind::NoisySphere {
        spec = spec.with_noise(0.01);
    }
    Benchmark::new(spec, 0).map_err(|e| e.to_string())
}

pub struct Stepper {
    pub state: CmaState,
    pub bench: Benchmark,
    pub best: f64,
    pub best_x: Vec<f64>,
}

impl Stepper {
    pub fn new(benchmark: &str, lambda: usize, seed: u64) -> Result<Self, String> {
        let bench = demo_benchmark(benchmark)?;
        let state = CmaState::new(DEMO_DIM, lambda, &[DEFAULT_MEAN; DEMO_DIM], DEFAULT_SIGMA, seed).map_err(|e| e.to_string())?;
        Ok(Self {
            state,
            bench,
            best: f64::INFINITY,
            best_x: vec![DEFAULT_MEAN; DEMO_DIM],
        })
    }

    /// Runs one generation and returns its genotypes as `x0, y0, x1, y1, …`.
    pub fn step(&mut self) -> Result<Vec<f64>, String> {
        let cands = self.state.ask().map_err(|e| e.to_string())?;
        let mut evals: Vec<(Candidate, f64)> = Vec::with_capacity(cands.len());
        for c in cands {
            let f = match self.bench.observe(&c.genotype, c.id) {
                hpo_core::protocol::EvalOutcome::Ok(f) => f,
                other => return Err(format!("evaluation failed: {other:?}")),
            };
            if f < self.best {
                self.best = f;
                self.best_x = c.genotype.clone();
            }
            evals.push((c, f));
        }
        let points = evals.iter().flat_map(|(c, _)| c.genotype.iter().copied()).collect();
        self.state.tell(&evals).map_err(|e| e.to_string())?;
        Ok(points)
    }

    /// Principal axes of the one-sigma sampling ellipse, `[ax, ay, bx, by]`.
    pub fn axes(&self) -> Vec<f64> {
        let b = self.state.eig_basis();
        let d = self.state.eig_values();
        let s = self.state.sigma();
        (0..DEMO_DIM)
            .flat_map(|k| {
                let len = s * d[k].max(0.0).sqrt();
                (0..DEMO_DIM).map(move |i| b[(i, k)] * len)
            })
            .collect()
    }
}

/// Noise-free objective on an `n × n` grid over the unit square, rows of
/// constant `y` from `y = 0` upward.
pub fn grid(benchmark: &str, n: usize) -> Result<Vec<f64>, String> {
    if n < 2 {
        return Err("grid needs at least 2 points per side".into());
    }
    let bench = demo_benchmark(benchmark)?;
    let step = 1.0 / (n - 1) as f64;
    Ok((0..n)
        .flat_map(|j| {
            let bench = &bench;
            (0..n).map(move |i| bench.value(&[i as f64 * step, j as f64 * step]))
        })
        .collect())
}

/// Two-component Gaussian mixture clipped to `[0,1]`: 60% at 0.3 (sd 0.06),
/// 40% at 0.72 (sd 0.1).
pub fn mixture_samples(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, 0);
    (0..n)
        .map(|_| {
            let (mu, sd) = if r.random::<f64>() < 0.6 { (0.3, 0.06) } else { (0.72, 0.1) };
            let z: f64 = r.sample(StandardNormal);
            (mu + sd * z).clamp(0.0, 1.0)
        })
        .collect()
}

/// Mixture density matching [`mixture_samples`] before clipping.
pub fn mixture_pdf(x: f64) -> f64 {
    let phi = |mu: f64, sd: f64| (-0.5 * ((x - mu) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
    0.6 * phi(0.3, 0.06) + 0.4 * phi(0.72, 0.1)
}

pub fn estimate(samples: &[f64], mesh_points: usize) -> Result<DensityEstimate, String> {
    if !(2..=1 << 16).contains(&mesh_points) {
        return Err(format!("mesh size {mesh_points} outside 2..=65536"));
    }
    kde_diffusion(samples, mesh_points, 0.0, 1.0).map_err(|e| e.to_string())
}

pub fn warning_text(w: Option<KdeWarning>) -> String {
    match w {
        None => String::new(),
        Some(KdeWarning::Degenerate) => "all samples equal; minimum bandwidth used".into(),
        Some(KdeWarning::SilvermanFallback) => "bandwidth equation had no root; Silverman's rule used".into(),
    }
}

fn param(tag: &str, index: usize) -> Result<ParamSpec, String> {
    let space = SearchSpace::builtin(tag).map_err(|e| e.to_string())?;
    space
        .dims()
        .get(index)
        .cloned()
        .ok_or_else(|| format!("{tag} has {} dimensions, no index {index}", space.dim_count()))
}

/// One `name<TAB>kind<TAB>lo<TAB>hi<TAB>integer` line per dimension.
pub fn describe_space(tag: &str) -> Result<Vec<String>, String> {
    let space = SearchSpace::builtin(tag).map_err(|e| e.to_string())?;
    Ok(space
        .dims()
        .iter()
        .map(|p| {
            let (lo, hi) = p.image();
            format!("{}\t{}\t{lo:e}\t{hi:e}\t{}", p.name, p.kind.as_str(), p.integer_round)
        })
        .collect())
}

pub fn value(tag: &str, index: usize, x: f64) -> Result<f64, String> {
    if !(0.0..=1.0).contains(&x) {
        return Err(format!("genotype coordinate {x} outside [0,1]"));
    }
    Ok(param(tag, index)?.value(x))
}

/// `n` evenly spaced `(x, value)` pairs, flattened.
pub fn curve(tag: &str, index: usize, n: usize) -> Result<Vec<f64>, String> {
    let p = param(tag, index)?;
    if n < 2 {
        return Err("curve needs at least 2 points".into());
    }
    Ok((0..n)
        .flat_map(|i| {
            let x = i as f64 / (n - 1) as f64;
            [x, p.value(x)]
        })
        .collect())
}
