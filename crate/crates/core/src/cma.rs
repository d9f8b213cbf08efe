//! (μ/μ_w, λ)-CMA-ES over the unit cube.
//!
//! The strategy samples `m + σ·B·D·z`, recombines the μ best of λ samples
//! with log-decreasing weights, and adapts the covariance with rank-one and
//! rank-μ terms and the step size with cumulative step-size adaptation.
//! Strategy constants follow the usual defaults:
//!
//! ```text
//! μ        = ⌊λ/2⌋
//! w_i      ∝ ln(μ + 1/2) − ln(i),  Σ w_i = 1
//! μ_eff    = 1 / Σ w_i²
//! c_σ      = (μ_eff + 2) / (d + μ_eff + 5)
//! d_σ      = 1 + 2·max(0, √((μ_eff − 1)/(d + 1)) − 1) + c_σ
//! c_c      = (4 + μ_eff/d) / (d + 4 + 2μ_eff/d)
//! c_1      = 2 / ((d + 1.3)² + μ_eff)
//! c_μ      = min(1 − c_1, 2(μ_eff − 2 + 1/μ_eff) / ((d + 2)² + μ_eff))
//! χ_n      = √d · (1 − 1/(4d) + 1/(21d²))
//! ```
//!
//! Candidates that leave `[0,1]^d` are redrawn up to [`MAX_RESAMPLES`] times.
//! If the last draw still violates the bounds it is clipped for evaluation,
//! while the unclipped draw enters the distribution update.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Redraws allowed for a candidate outside the unit cube before clipping.
pub const MAX_RESAMPLES: usize = 100;

/// Mean of the initial search distribution in every coordinate.
pub const DEFAULT_MEAN: f64 = 0.5;
/// Initial global step size.
pub const DEFAULT_SIGMA: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmaError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("ask called twice without an intervening tell")]
    AlreadyAsked,
    #[error("tell called without a preceding ask")]
    NotAsked,
    #[error("expected {expected} evaluations, got {got}")]
    EvaluationCount { expected: usize, got: usize },
    #[error("candidate {id} (generation {generation}) does not belong to the pending batch")]
    CandidateMismatch { id: u64, generation: u64 },
    #[error("objective for candidate {id} is not finite")]
    NonFiniteObjective { id: u64 },
}

/// Strategy constants derived from the dimension and population size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
}

impl StrategyParams {
    /// Default constants for `dim` dimensions and population size `lambda`.
    pub fn new(dim: usize, lambda: usize) -> Result<Self, CmaError> {
        if dim < 1 {
            return Err(CmaError::InvalidConfig("dimension must be at least 1".into()));
        }
        if lambda < 2 {
            return Err(CmaError::InvalidConfig(format!(
                "population size must be at least 2, got {lambda}"
            )));
        }
        let d = dim as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (d + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (d + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / d) / (d + 4.0 + 2.0 * mu_eff / d);
        let c_1 = 2.0 / ((d + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1)
            .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((d + 2.0).powi(2) + mu_eff));
        let chi_n = d.sqrt() * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d));

        let params = Self {
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks the structural invariants: normalized, positive, non-increasing
    /// weights; μ_eff consistent with them; learning rates in range.
    pub fn validate(&self) -> Result<(), CmaError> {
        let bad = |msg: String| Err(CmaError::InvalidConfig(msg));
        if self.lambda < 2 || self.mu < 1 || self.mu > self.lambda {
            return bad(format!("lambda={} mu={} out of range", self.lambda, self.mu));
        }
        if self.weights.len() != self.mu {
            return bad(format!("{} weights for mu={}", self.weights.len(), self.mu));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return bad(format!("weights sum to {sum}, not 1"));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return bad("weights must be strictly positive".into());
        }
        if self.weights.windows(2).any(|p| p[1] > p[0]) {
            return bad("weights must be non-increasing".into());
        }
        let mu_eff = 1.0 / self.weights.iter().map(|w| w * w).sum::<f64>();
        if (mu_eff - self.mu_eff).abs() > 1e-12 * mu_eff {
            return bad(format!("mu_eff {} inconsistent with weights ({mu_eff})", self.mu_eff));
        }
        if !(self.c_sigma > 0.0 && self.c_sigma < 1.0) || !(self.c_c > 0.0 && self.c_c < 1.0) {
            return bad("cumulation constants must lie in (0,1)".into());
        }
        if self.c_1 < 0.0 || self.c_mu < 0.0 || self.c_1 + self.c_mu > 1.0 {
            return bad("covariance learning rates must satisfy c_1 + c_mu <= 1".into());
        }
        if !(self.d_sigma > 0.0) || !(self.chi_n > 0.0) {
            return bad("damping and chi_n must be positive".into());
        }
        Ok(())
    }
}

/// A point handed out for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Point in `[0,1]^d` that gets evaluated.
    pub genotype: Vec<f64>,
    /// Draw order within the generation.
    pub gen_index: usize,
    /// Run-unique identifier.
    pub id: u64,
    pub generation: u64,
    /// Unclipped draw used for the distribution update. Equal to `genotype`
    /// unless the candidate had to be clipped.
    #[serde(skip)]
    sample: Vec<f64>,
}

impl Candidate {
    pub fn new(genotype: Vec<f64>, gen_index: usize, id: u64, generation: u64) -> Self {
        Self {
            sample: genotype.clone(),
            genotype,
            gen_index,
            id,
            generation,
        }
    }

    pub fn sample(&self) -> &[f64] {
        &self.sample
    }

    pub fn was_clipped(&self) -> bool {
        self.sample != self.genotype
    }
}

fn in_unit_cube(x: &DVector<f64>) -> bool {
    x.iter().all(|v| (0.0..=1.0).contains(v))
}

/// One raw draw `mean + sigma·transform·z`. `transform = None` means identity.
fn draw_raw(
    rng: &mut ChaCha8Rng,
    mean: &DVector<f64>,
    sigma: f64,
    transform: Option<&DMatrix<f64>>,
) -> DVector<f64> {
    let z = DVector::from_iterator(mean.len(), (0..mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let y = match transform {
        Some(bd) => bd * z,
        None => z,
    };
    DVector::from_iterator(mean.len(), mean.iter().zip(y.iter()).map(|(m, y)| m + sigma * y))
}

/// Draws one in-bounds (or clipped) genotype, returning `(genotype, sample)`.
fn draw_bounded(
    rng: &mut ChaCha8Rng,
    mean: &DVector<f64>,
    sigma: f64,
    transform: Option<&DMatrix<f64>>,
) -> (Vec<f64>, Vec<f64>) {
    let mut x = draw_raw(rng, mean, sigma, transform);
    for _ in 0..MAX_RESAMPLES {
        if in_unit_cube(&x) {
            return (x.as_slice().to_vec(), x.as_slice().to_vec());
        }
        x = draw_raw(rng, mean, sigma, transform);
    }
    let sample = x.as_slice().to_vec();
    if in_unit_cube(&x) {
        return (sample.clone(), sample);
    }
    let clipped = sample.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    (clipped, sample)
}

/// Full strategy state.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaState {
    dim: usize,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    eig_basis: DMatrix<f64>,
    /// Eigenvalues of `cov` (the squared axis lengths, D²).
    eig_values: DVector<f64>,
    path_sigma: DVector<f64>,
    path_cov: DVector<f64>,
    generation: u64,
    strategy: StrategyParams,
    rng: ChaCha8Rng,
    eval_count: u64,
    next_id: u64,
    last_eigen_eval: u64,
    pending: Option<Vec<Candidate>>,
}

impl CmaState {
    /// Fresh state with default strategy constants.
    pub fn new(dim: usize, lambda: usize, mean: &[f64], sigma: f64, seed: u64) -> Result<Self, CmaError> {
        let strategy = StrategyParams::new(dim, lambda)?;
        Self::with_params(strategy, mean, sigma, seed)
    }

    /// Fresh state with explicit strategy constants. The constants are used
    /// as given; call [`StrategyParams::validate`] first if they come from
    /// outside.
    pub fn with_params(strategy: StrategyParams, mean: &[f64], sigma: f64, seed: u64) -> Result<Self, CmaError> {
        let dim = mean.len();
        if dim < 1 {
            return Err(CmaError::InvalidConfig("dimension must be at least 1".into()));
        }
        if let Some((i, v)) = mean.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(CmaError::InvalidConfig(format!(
                "initial mean coordinate {i} = {v} lies outside [0,1]"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(CmaError::InvalidConfig(format!("step size must be positive, got {sigma}")));
        }
        Ok(Self {
            dim,
            mean: DVector::from_column_slice(mean),
            sigma,
            cov: DMatrix::identity(dim, dim),
            eig_basis: DMatrix::identity(dim, dim),
            eig_values: DVector::from_element(dim, 1.0),
            path_sigma: DVector::zeros(dim),
            path_cov: DVector::zeros(dim),
            generation: 0,
            strategy,
            rng: rng::stream(seed, rng::SAMPLING_STREAM),
            eval_count: 0,
            next_id: 0,
            last_eigen_eval: 0,
            pending: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn lambda(&self) -> usize {
        self.strategy.lambda
    }
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
    pub fn eig_basis(&self) -> &DMatrix<f64> {
        &self.eig_basis
    }
    pub fn eig_values(&self) -> &DVector<f64> {
        &self.eig_values
    }
    pub fn path_sigma(&self) -> &DVector<f64> {
        &self.path_sigma
    }
    pub fn path_cov(&self) -> &DVector<f64> {
        &self.path_cov
    }
    pub fn generation(&self) -> u64 {
        self.generation
    }
    pub fn eval_count(&self) -> u64 {
        self.eval_count
    }
    pub fn strategy(&self) -> &StrategyParams {
        &self.strategy
    }
    pub fn is_asked(&self) -> bool {
        self.pending.is_some()
    }

    /// Evaluations between eigendecomposition refreshes.
    fn eigen_interval(&self) -> f64 {
        1.0 / (10.0 * self.dim as f64 * (self.strategy.c_1 + self.strategy.c_mu))
    }

    fn refresh_eigen(&mut self) {
        let eig = SymmetricEigen::new(self.cov.clone());
        let max = eig.eigenvalues.max().max(f64::MIN_POSITIVE);
        let floor = max * 1e-20;
        self.eig_values = eig.eigenvalues.map(|v| v.max(floor));
        self.eig_basis = eig.eigenvectors;
        self.last_eigen_eval = self.eval_count;
    }

    /// `B·D`, mapping standard normal draws onto the current shape.
    fn sampling_transform(&self) -> DMatrix<f64> {
        let d = self.eig_values.map(f64::sqrt);
        &self.eig_basis * DMatrix::from_diagonal(&d)
    }

    /// Samples the next generation of λ candidates.
    pub fn ask(&mut self) -> Result<Vec<Candidate>, CmaError> {
        if self.pending.is_some() {
            return Err(CmaError::AlreadyAsked);
        }
        if (self.eval_count - self.last_eigen_eval) as f64 > self.eigen_interval() {
            self.refresh_eigen();
        }
        let bd = self.sampling_transform();
        let mut batch = Vec::with_capacity(self.strategy.lambda);
        for gen_index in 0..self.strategy.lambda {
            let (genotype, sample) = draw_bounded(&mut self.rng, &self.mean, self.sigma, Some(&bd));
            batch.push(Candidate {
                genotype,
                sample,
                gen_index,
                id: self.next_id,
                generation: self.generation,
            });
            self.next_id += 1;
        }
        self.pending = Some(batch.clone());
        Ok(batch)
    }

    /// Updates the distribution from the evaluated batch returned by the
    /// preceding [`ask`](Self::ask). Lower objectives are better; ties go to
    /// the lower `gen_index`.
    pub fn tell(&mut self, evaluations: &[(Candidate, f64)]) -> Result<(), CmaError> {
        let pending = self.pending.as_ref().ok_or(CmaError::NotAsked)?;
        let lambda = self.strategy.lambda;
        if evaluations.len() != lambda {
            return Err(CmaError::EvaluationCount {
                expected: lambda,
                got: evaluations.len(),
            });
        }
        let mut objectives = vec![None; lambda];
        for (cand, f) in evaluations {
            let slot = pending
                .get(cand.gen_index)
                .filter(|p| p.id == cand.id && p.generation == cand.generation)
                .ok_or(CmaError::CandidateMismatch {
                    id: cand.id,
                    generation: cand.generation,
                })?;
            if !f.is_finite() {
                return Err(CmaError::NonFiniteObjective { id: cand.id });
            }
            if objectives[slot.gen_index].replace(*f).is_some() {
                return Err(CmaError::CandidateMismatch {
                    id: cand.id,
                    generation: cand.generation,
                });
            }
        }
        let objectives: Vec<f64> = objectives.into_iter().map(|f| f.expect("all slots filled")).collect();

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| objectives[a].total_cmp(&objectives[b]).then(a.cmp(&b)));

        let samples: Vec<DVector<f64>> = pending
            .iter()
            .map(|c| DVector::from_column_slice(&c.sample))
            .collect();
        self.update(&order, &samples);
        self.pending = None;
        Ok(())
    }

    fn update(&mut self, order: &[usize], samples: &[DVector<f64>]) {
        let sp = &self.strategy;
        let n = self.dim as f64;
        let old_mean = self.mean.clone();

        let mut new_mean = DVector::zeros(self.dim);
        for (w, &idx) in sp.weights.iter().zip(order) {
            new_mean += *w * &samples[idx];
        }
        let steps: Vec<DVector<f64>> = order[..sp.mu]
            .iter()
            .map(|&idx| (&samples[idx] - &old_mean) / self.sigma)
            .collect();
        let y_w = (&new_mean - &old_mean) / self.sigma;

        // C^{-1/2} y_w from the cached factorization
        let inv_d = self.eig_values.map(|v| 1.0 / v.sqrt());
        let bt_y = self.eig_basis.transpose() * &y_w;
        let whitened = &self.eig_basis * bt_y.component_mul(&inv_d);

        self.path_sigma = (1.0 - sp.c_sigma) * &self.path_sigma
            + (sp.c_sigma * (2.0 - sp.c_sigma) * sp.mu_eff).sqrt() * whitened;

        let ps_norm = self.path_sigma.norm();
        let decay = 1.0 - (1.0 - sp.c_sigma).powf(2.0 * (self.generation as f64 + 1.0));
        let h_sigma = if ps_norm / decay.sqrt() < (1.4 + 2.0 / (n + 1.0)) * sp.chi_n {
            1.0
        } else {
            0.0
        };

        self.path_cov = (1.0 - sp.c_c) * &self.path_cov
            + h_sigma * (sp.c_c * (2.0 - sp.c_c) * sp.mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::zeros(self.dim, self.dim);
        for (w, y) in sp.weights.iter().zip(&steps) {
            rank_mu += *w * y * y.transpose();
        }
        let keep = 1.0 - sp.c_1 - sp.c_mu + (1.0 - h_sigma) * sp.c_1 * sp.c_c * (2.0 - sp.c_c);
        let mut cov = keep * &self.cov
            + sp.c_1 * &self.path_cov * self.path_cov.transpose()
            + sp.c_mu * rank_mu;
        for i in 0..self.dim {
            for j in 0..i {
                let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = avg;
                cov[(j, i)] = avg;
            }
        }
        self.cov = cov;

        self.sigma *= ((sp.c_sigma / sp.d_sigma) * (ps_norm / sp.chi_n - 1.0)).exp();
        self.mean = new_mean;
        self.generation += 1;
        self.eval_count += sp.lambda as u64;
    }

    #[cfg(test)]
    pub(crate) fn draw_raw_for_test(&mut self) -> DVector<f64> {
        let bd = self.sampling_transform();
        draw_raw(&mut self.rng, &self.mean, self.sigma, Some(&bd))
    }
}

/// Draws from the isotropic initial distribution `N(0.5·1, 0.2²·I)` with the
/// same bounds handling as [`CmaState::ask`]. Used as the random-search
/// baseline; with the same seed its first λ draws coincide with CMA-ES
/// generation 0.
#[derive(Debug, Clone)]
pub struct PriorSampler {
    mean: DVector<f64>,
    rng: ChaCha8Rng,
    next_id: u64,
    generation: u64,
}

impl PriorSampler {
    pub fn new(dim: usize, seed: u64) -> Result<Self, CmaError> {
        if dim < 1 {
            return Err(CmaError::InvalidConfig("dimension must be at least 1".into()));
        }
        Ok(Self {
            mean: DVector::from_element(dim, DEFAULT_MEAN),
            rng: rng::stream(seed, rng::SAMPLING_STREAM),
            next_id: 0,
            generation: 0,
        })
    }

    /// Next batch of `n` candidates, tagged as one generation.
    pub fn next_batch(&mut self, n: usize) -> Vec<Candidate> {
        let batch = (0..n)
            .map(|gen_index| {
                let (genotype, sample) = draw_bounded(&mut self.rng, &self.mean, DEFAULT_SIGMA, None);
                let id = self.next_id;
                self.next_id += 1;
                Candidate {
                    genotype,
                    sample,
                    gen_index,
                    id,
                    generation: self.generation,
                }
            })
            .collect();
        self.generation += 1;
        batch
    }

    #[cfg(test)]
    pub(crate) fn draw_raw_for_test(&mut self) -> DVector<f64> {
        draw_raw(&mut self.rng, &self.mean, DEFAULT_SIGMA, None)
    }
}

/// `n` independent draws from the isotropic prior.
pub fn sample_prior(dim: usize, n: usize, seed: u64) -> Result<Vec<Candidate>, CmaError> {
    if n < 1 {
        return Err(CmaError::InvalidConfig("sample count must be at least 1".into()));
    }
    Ok(PriorSampler::new(dim, seed)?.next_batch(n))
}
