//! Diffusion KDE checked against direct Gaussian-kernel sums and against
//! its own transformation behavior.

use std::f64::consts::PI;

use hpo_core::kde::{kde_diffusion, silverman_bandwidth};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn normal_samples(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(mean, sd).unwrap();
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

/// Plain Gaussian-kernel estimate `1/(n h) Σ φ((x − s_i)/h)`.
fn brute_force_kde(samples: &[f64], h: f64, at: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * PI).sqrt());
    at.iter()
        .map(|x| norm * samples.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>())
        .collect()
}

#[test]
fn matches_brute_force_kernel_sum() {
    for seed in [21, 22, 23, 24, 25, 26, 27, 28] {
        let s = normal_samples(100_000, 0.5, 0.1, seed);
        let est = kde_diffusion(&s, 256, 0.0, 1.0).unwrap();
        let direct = brute_force_kde(&s, est.bandwidth(), &est.mesh);
        let worst = est
            .density
            .iter()
            .zip(&direct)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("seed {seed}: bandwidth {} max deviation {worst:e}", est.bandwidth());
        assert!(worst < 1e-3, "seed {seed}: {worst}");
    }
}

#[test]
fn affine_equivariance() {
    let s = normal_samples(20_000, 0.4, 0.15, 4);
    let base = kde_diffusion(&s, 256, 0.0, 1.0).unwrap();
    for (a, b) in [(3.0, 2.0), (-1.0, 0.5), (10.0, 7.0)] {
        let mapped: Vec<f64> = s.iter().map(|x| a + b * x).collect();
        let est = kde_diffusion(&mapped, 256, a, a + b).unwrap();
        assert_eq!(est.sample_count, base.sample_count);
        for j in 0..base.mesh.len() {
            assert!((est.mesh[j] - (a + b * base.mesh[j])).abs() < 1e-8);
            assert!((est.density[j] - base.density[j] / b).abs() < 1e-8, "a={a} b={b} j={j}");
        }
        assert!((est.bandwidth_t - b * b * base.bandwidth_t).abs() < 1e-8 * est.bandwidth_t);
    }
}

#[test]
fn bandwidth_near_silverman() {
    for seed in 0..20 {
        let s = normal_samples(2_000, 0.0, 1.0, 100 + seed);
        let est = kde_diffusion(&s, 1024, -6.0, 6.0).unwrap();
        let hs = silverman_bandwidth(&s);
        let ratio = est.bandwidth_t / (hs * hs);
        assert!((0.1..=10.0).contains(&ratio), "seed {seed}: ratio {ratio}");
    }
}

#[test]
fn integrates_to_one() {
    for (n, mesh, seed) in [(5, 64, 1), (37, 100, 2), (1_000, 5_000, 3), (10_000, 256, 4)] {
        let s = normal_samples(n, 0.0, 1.0, seed);
        let est = kde_diffusion(&s, mesh, -5.0, 5.0).unwrap();
        assert!((est.integral() - 1.0).abs() < 1e-6);
        assert!(est.density.iter().all(|d| *d >= 0.0));
    }
}
