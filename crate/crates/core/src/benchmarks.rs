//! In-process objective functions on the unit cube.
//!
//! * `sphere`, `noisy_sphere`: `Σ (x_i − s_i)²`, shift `s` defaulting to the
//!   cube center. Optimum 0 at `x = s`.
//! * `rosenbrock`: `Σ 100(z_{i+1} − z_i²)² + (1 − z_i)²` with
//!   `z = −2.048 + 4.096·(x − s)`, `s` defaulting to 0. Optimum 0 at
//!   `x = s + 3.048/4.096`. Needs `dim ≥ 2`.
//! * `rastrigin`: `10d + Σ (z_i² − 10 cos 2πz_i)` with
//!   `z = −5.12 + 10.24·(x − s)`. Optimum 0 at `x = s + 0.5`.
//! * `surrogate_dnn`: a synthetic 19-D stand-in for a validation-error
//!   surface, see [`SURROGATE_OPTIMUM`].
//!
//! Observation noise and simulated failures are drawn from a stream keyed by
//! `(seed, candidate_id)`, so a candidate's observed value does not depend on
//! evaluation order or thread scheduling.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{EvalOutcome, EvalRequest, Evaluator};
use crate::rng;

pub const SURROGATE_DIM: usize = 19;
/// Noise level used for `noisy_sphere` when none is given.
pub const NOISY_SPHERE_SIGMA: f64 = 0.05;

/// Location of the `surrogate_dnn` global minimum. Deliberately away from the
/// cube center in most coordinates.
pub const SURROGATE_OPTIMUM: [f64; SURROGATE_DIM] = [
    0.62, 0.41, 0.78, 0.55, 0.35, 0.71, 0.47, 0.30, 0.82, 0.52, 0.44, 0.73, 0.69, 0.38, 0.57, 0.64, 0.49, 0.86, 0.40,
];
/// Per-coordinate widths of the global basin.
const SURROGATE_WIDTHS: [f64; SURROGATE_DIM] = [
    0.45, 0.50, 0.35, 0.55, 0.60, 0.40, 0.50, 0.45, 0.40, 0.50, 0.55, 0.38, 0.42, 0.50, 0.45, 0.60, 0.50, 0.36, 0.48,
];
/// Value at [`SURROGATE_OPTIMUM`].
pub const SURROGATE_MIN_VALUE: f64 = 0.004;
/// Height of the plateau far from every basin.
const SURROGATE_SCALE: f64 = 0.9;
/// Decoy basins: (depth, center, isotropic width).
const SURROGATE_DECOYS: [(f64, f64, f64); 2] = [(0.35, 0.22, 0.18), (0.25, 0.80, 0.15)];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchmarkError {
    #[error("unknown benchmark '{0}' (known: sphere, rosenbrock, rastrigin, noisy_sphere, surrogate_dnn)")]
    Unknown(String),
    #[error("{name} needs dimension {expected}, got {got}")]
    Dimension { name: BenchmarkKind, expected: String, got: usize },
    #[error("invalid benchmark setting: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    Sphere,
    Rosenbrock,
    Rastrigin,
    NoisySphere,
    SurrogateDnn,
}

impl BenchmarkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkKind::Sphere => "sphere",
            BenchmarkKind::Rosenbrock => "rosenbrock",
            BenchmarkKind::Rastrigin => "rastrigin",
            BenchmarkKind::NoisySphere => "noisy_sphere",
            BenchmarkKind::SurrogateDnn => "surrogate_dnn",
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkKind {
    type Err = BenchmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "sphere" => BenchmarkKind::Sphere,
            "rosenbrock" => BenchmarkKind::Rosenbrock,
            "rastrigin" => BenchmarkKind::Rastrigin,
            "noisy_sphere" => BenchmarkKind::NoisySphere,
            "surrogate_dnn" => BenchmarkKind::SurrogateDnn,
            other => return Err(BenchmarkError::Unknown(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub name: BenchmarkKind,
    pub dim: usize,
    /// Standard deviation of additive Gaussian observation noise.
    pub noise_sigma: f64,
    pub shift: Option<Vec<f64>>,
    /// Probability that an evaluation reports failure.
    pub fail_rate: f64,
}

impl BenchmarkSpec {
    pub fn new(name: BenchmarkKind, dim: usize) -> Self {
        Self {
            name,
            dim,
            noise_sigma: 0.0,
            shift: None,
            fail_rate: 0.0,
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_shift(mut self, shift: Vec<f64>) -> Self {
        self.shift = Some(shift);
        self
    }

    pub fn with_fail_rate(mut self, rate: f64) -> Self {
        self.fail_rate = rate;
        self
    }
}

/// A benchmark bound to a noise seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    spec: BenchmarkSpec,
    shift: Vec<f64>,
    seed: u64,
}

impl Benchmark {
    pub fn new(spec: BenchmarkSpec, seed: u64) -> Result<Self, BenchmarkError> {
        let dim = spec.dim;
        if dim < 1 {
            return Err(BenchmarkError::Invalid("dimension must be at least 1".into()));
        }
        if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
            return Err(BenchmarkError::Invalid(format!("noise_sigma {} must be >= 0", spec.noise_sigma)));
        }
        if !(0.0..1.0).contains(&spec.fail_rate) {
            return Err(BenchmarkError::Invalid(format!("fail_rate {} must lie in [0,1)", spec.fail_rate)));
        }
        match spec.name {
            BenchmarkKind::SurrogateDnn if dim != SURROGATE_DIM => {
                return Err(BenchmarkError::Dimension {
                    name: spec.name,
                    expected: SURROGATE_DIM.to_string(),
                    got: dim,
                })
            }
            BenchmarkKind::Rosenbrock if dim < 2 => {
                return Err(BenchmarkError::Dimension {
                    name: spec.name,
                    expected: ">= 2".into(),
                    got: dim,
                })
            }
            _ => {}
        }
        let default_shift = match spec.name {
            BenchmarkKind::Sphere | BenchmarkKind::NoisySphere => 0.5,
            _ => 0.0,
        };
        let shift = match &spec.shift {
            Some(s) if s.len() != dim => {
                return Err(BenchmarkError::Invalid(format!("shift has {} entries for dimension {dim}", s.len())))
            }
            Some(_) if spec.name == BenchmarkKind::SurrogateDnn => {
                return Err(BenchmarkError::Invalid("surrogate_dnn has a fixed optimum and takes no shift".into()))
            }
            Some(s) => s.clone(),
            None => vec![default_shift; dim],
        };
        Ok(Self { spec, shift, seed })
    }

    pub fn spec(&self) -> &BenchmarkSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// Noise-free objective.
    pub fn value(&self, x: &[f64]) -> f64 {
        let s = &self.shift;
        match self.spec.name {
            BenchmarkKind::Sphere | BenchmarkKind::NoisySphere => {
                x.iter().zip(s).map(|(x, s)| (x - s).powi(2)).sum()
            }
            BenchmarkKind::Rosenbrock => {
                let z: Vec<f64> = x.iter().zip(s).map(|(x, s)| -2.048 + 4.096 * (x - s)).collect();
                z.windows(2)
                    .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                    .sum()
            }
            BenchmarkKind::Rastrigin => {
                let d = x.len() as f64;
                10.0 * d
                    + x.iter()
                        .zip(s)
                        .map(|(x, s)| {
                            let z = -5.12 + 10.24 * (x - s);
                            z * z - 10.0 * (2.0 * PI * z).cos()
                        })
                        .sum::<f64>()
            }
            BenchmarkKind::SurrogateDnn => surrogate_dnn(x),
        }
    }

    /// Documented minimizer and minimum (noise off).
    pub fn optimum(&self) -> (Vec<f64>, f64) {
        let s = &self.shift;
        match self.spec.name {
            BenchmarkKind::Sphere | BenchmarkKind::NoisySphere => (s.clone(), 0.0),
            BenchmarkKind::Rosenbrock => (s.iter().map(|s| s + 3.048 / 4.096).collect(), 0.0),
            BenchmarkKind::Rastrigin => (s.iter().map(|s| s + 0.5).collect(), 0.0),
            BenchmarkKind::SurrogateDnn => (SURROGATE_OPTIMUM.to_vec(), SURROGATE_MIN_VALUE),
        }
    }

    /// Observed objective for `candidate_id`, including noise and simulated
    /// failures.
    pub fn observe(&self, x: &[f64], candidate_id: u64) -> EvalOutcome {
        if x.len() != self.spec.dim {
            return EvalOutcome::Failed(format!(
                "{} expects {} coordinates, got {}",
                self.spec.name,
                self.spec.dim,
                x.len()
            ));
        }
        let mut r = rng::candidate_stream(self.seed, candidate_id);
        let u: f64 = r.random();
        if u < self.spec.fail_rate {
            return EvalOutcome::Failed("simulated evaluation failure".into());
        }
        let mut f = self.value(x);
        if self.spec.noise_sigma > 0.0 {
            let z: f64 = r.sample(StandardNormal);
            f += self.spec.noise_sigma * z;
        }
        EvalOutcome::Ok(f)
    }
}

impl Evaluator for Benchmark {
    fn evaluate(&self, request: &EvalRequest) -> EvalOutcome {
        self.observe(&request.genotype, request.candidate_id)
    }
}

pub fn make_benchmark(spec: BenchmarkSpec, seed: u64) -> Result<Benchmark, BenchmarkError> {
    Benchmark::new(spec, seed)
}

fn gaussian_bump(x: &[f64], center: impl Fn(usize) -> f64, width: impl Fn(usize) -> f64) -> f64 {
    let q: f64 = x
        .iter()
        .enumerate()
        .map(|(i, xi)| ((xi - center(i)) / width(i)).powi(2))
        .sum();
    (-0.5 * q).exp()
}

/// `v* + A·(1 − g₀(x))·(1 − Σ a_k g_k(x))` where `g₀` is the anisotropic
/// global basin and `g_k` are decoy basins with depth `a_k`, `Σ a_k < 1`.
/// The first factor vanishes only at the global center and the second stays
/// positive, so the minimum is exactly `v*` at [`SURROGATE_OPTIMUM`]; the
/// decoys create local minima near their centers.
fn surrogate_dnn(x: &[f64]) -> f64 {
    let global = gaussian_bump(x, |i| SURROGATE_OPTIMUM[i], |i| SURROGATE_WIDTHS[i]);
    let decoys: f64 = SURROGATE_DECOYS
        .iter()
        .map(|&(depth, c, w)| depth * gaussian_bump(x, |_| c, |_| w))
        .sum();
    SURROGATE_MIN_VALUE + SURROGATE_SCALE * (1.0 - global) * (1.0 - decoys)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bench(kind: BenchmarkKind, dim: usize) -> Benchmark {
        Benchmark::new(BenchmarkSpec::new(kind, dim), 1).unwrap()
    }

    #[test]
    fn documented_optima() {
        for (kind, dim) in [
            (BenchmarkKind::Sphere, 4),
            (BenchmarkKind::NoisySphere, 4),
            (BenchmarkKind::Rosenbrock, 5),
            (BenchmarkKind::Rastrigin, 5),
            (BenchmarkKind::SurrogateDnn, 19),
        ] {
            let b = bench(kind, dim);
            let (x, v) = b.optimum();
            assert!((b.value(&x) - v).abs() <= 1e-10, "{kind}: {} vs {v}", b.value(&x));
        }
    }

    #[test]
    fn sphere_center() {
        let b = Benchmark::new(BenchmarkSpec::new(BenchmarkKind::Sphere, 3).with_shift(vec![0.5; 3]), 0).unwrap();
        assert_eq!(b.value(&[0.5; 3]), 0.0);
    }

    #[test]
    fn rastrigin_closed_form_at_optimum() {
        let b = bench(BenchmarkKind::Rastrigin, 5);
        assert!(b.value(&[0.5; 5]).abs() <= 1e-12);
        // one coordinate off by a full period of the cosine: z = 1 adds exactly 1
        let mut x = [0.5; 5];
        x[2] += 1.0 / 10.24;
        assert!((b.value(&x) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn optima_are_local_minima() {
        for (kind, dim) in [
            (BenchmarkKind::Rosenbrock, 3),
            (BenchmarkKind::Rastrigin, 3),
            (BenchmarkKind::SurrogateDnn, 19),
        ] {
            let b = bench(kind, dim);
            let (x, v) = b.optimum();
            for i in 0..dim {
                for d in [-1e-3, 1e-3] {
                    let mut y = x.clone();
                    y[i] += d;
                    assert!(b.value(&y) > v, "{kind} dim {i}");
                }
            }
        }
    }

    #[test]
    fn surrogate_plateau_and_decoys() {
        let b = bench(BenchmarkKind::SurrogateDnn, 19);
        let far = b.value(&[0.0; 19]);
        assert!(far > 0.5 && far < SURROGATE_MIN_VALUE + SURROGATE_SCALE);
        let decoy = b.value(&[0.22; 19]);
        assert!(decoy > SURROGATE_MIN_VALUE && decoy < far);
    }

    #[test]
    fn noise_is_keyed_by_candidate() {
        let b = Benchmark::new(BenchmarkSpec::new(BenchmarkKind::NoisySphere, 3).with_noise(0.01), 9).unwrap();
        let x = [0.2, 0.4, 0.6];
        assert_eq!(b.observe(&x, 17), b.observe(&x, 17));
        assert_ne!(b.observe(&x, 17), b.observe(&x, 18));
        let EvalOutcome::Ok(v) = b.observe(&x, 17) else { panic!() };
        assert!((v - b.value(&x)).abs() < 0.1);
    }

    #[test]
    fn failures_follow_rate() {
        let b = Benchmark::new(BenchmarkSpec::new(BenchmarkKind::Sphere, 2).with_fail_rate(0.3), 4).unwrap();
        let failed = (0..10_000)
            .filter(|&id| matches!(b.observe(&[0.1, 0.2], id), EvalOutcome::Failed(_)))
            .count();
        assert!((2_700..3_300).contains(&failed), "{failed}");
        assert!(matches!(b.observe(&[0.1], 0), EvalOutcome::Failed(_)));
    }

    #[test]
    fn rejects_bad_specs() {
        assert_eq!("cube".parse::<BenchmarkKind>(), Err(BenchmarkError::Unknown("cube".into())));
        assert!(Benchmark::new(BenchmarkSpec::new(BenchmarkKind::SurrogateDnn, 10), 0).is_err());
        assert!(Benchmark::new(BenchmarkSpec::new(BenchmarkKind::Rosenbrock, 1), 0).is_err());
        assert!(Benchmark::new(BenchmarkSpec::new(BenchmarkKind::Sphere, 2).with_fail_rate(1.0), 0).is_err());
        assert!(Benchmark::new(BenchmarkSpec::new(BenchmarkKind::Sphere, 2).with_noise(-1.0), 0).is_err());
        assert!(Benchmark::new(BenchmarkSpec::new(BenchmarkKind::Sphere, 2).with_shift(vec![0.1]), 0).is_err());
    }
}
