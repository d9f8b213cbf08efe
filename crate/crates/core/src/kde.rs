//! Kernel density estimation via diffusion.
//!
//! The samples are binned onto a power-of-two mesh, cosine-transformed,
//! smoothed by the heat kernel `exp(−π²k²t/2)` and transformed back. The
//! bandwidth `t*` solves the plug-in fixed point `t = ξ·γ^[7](t)` by bisection.
//!
//! Mesh point `j` sits at `lo + j·Δ` with `Δ = (hi − lo)/(m − 1)`. Samples
//! are linearly binned: each one splits its unit mass between the two mesh
//! points around it in proportion to proximity. The cosine basis treats mesh
//! points as cell centers, so it lives on `[lo − Δ/2, hi + Δ/2]` with
//! reflecting ends there; samples in the outer half cells go to the end
//! points.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_MESH: usize = 64;
/// Samples required for an estimate.
pub const MIN_SAMPLES: usize = 5;
/// Plug-in stages in the bandwidth functional.
const PLUGIN_STAGES: i32 = 7;
/// Upper end of the bandwidth search, in units of the squared domain length.
const T_SEARCH_MAX: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KdeError {
    #[error("need at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid domain [{lo}, {hi}]")]
    Domain { lo: f64, hi: f64 },
    #[error("no samples fall inside [{lo}, {hi}]")]
    NoSamplesInDomain { lo: f64, hi: f64 },
    #[error("samples contain non-finite values")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdeWarning {
    /// All samples coincide; the bandwidth is the mesh-spacing floor.
    Degenerate,
    /// The fixed point had no bracketed root; Silverman's rule was used.
    SilvermanFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub mesh: Vec<f64>,
    pub density: Vec<f64>,
    /// Selected squared bandwidth, in squared data units.
    pub bandwidth_t: f64,
    pub sample_count: usize,
    pub warning: Option<KdeWarning>,
}

impl DensityEstimate {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth_t.sqrt()
    }

    /// Trapezoidal integral of the density over the mesh.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.mesh, &self.density)
    }

    pub fn argmax(&self) -> f64 {
        let (i, _) = self
            .density
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        self.mesh[i]
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Mesh size actually used for a request of `requested` points.
pub fn mesh_size(requested: usize) -> usize {
    requested.max(MIN_MESH).next_power_of_two()
}

/// Cosine transform with the scaling `a_0 = Σ x_j`,
/// `a_k = 2 Σ x_j cos(πk(2j+1)/(2n))`.
pub fn dct(data: &[f64]) -> Vec<f64> {
    let n = data.len();
    let mut buf: Vec<Complex<f64>> = data
        .iter()
        .step_by(2)
        .chain(data.iter().skip(1).step_by(2).rev())
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter()
        .enumerate()
        .map(|(k, c)| {
            let w = if k == 0 {
                Complex::new(1.0, 0.0)
            } else {
                Complex::from_polar(2.0, -PI * k as f64 / (2.0 * n as f64))
            };
            (w * c).re
        })
        .collect()
}

/// Inverse of [`dct`] up to a factor `n`:
/// `x_j = Σ_k a_k cos(πk(2j+1)/(2n))`, so `idct(dct(x)) = n·x`.
pub fn idct(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let mut buf: Vec<Complex<f64>> = coeffs
        .iter()
        .enumerate()
        .map(|(k, &a)| Complex::from_polar(a, PI * k as f64 / (2.0 * n as f64)))
        .collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let mut out = vec![0.0; n];
    for m in 0..n / 2 {
        out[2 * m] = buf[m].re;
        out[2 * m + 1] = buf[n - 1 - m].re;
    }
    out
}

/// `t − ξ·γ^[ℓ](t)` for normalized bandwidth `t`.
fn fixed_point(t: f64, n: f64, k2: &[f64], a2: &[f64]) -> f64 {
    let stage = |s: i32, time: f64| -> f64 {
        2.0 * PI.powi(2 * s)
            * k2.iter()
                .zip(a2)
                .map(|(&i, &a)| i.powi(s) * a * (-i * PI * PI * time).exp())
                .sum::<f64>()
    };
    let mut f = stage(PLUGIN_STAGES, t);
    for s in (2..PLUGIN_STAGES).rev() {
        let k0 = (1..2 * s).step_by(2).map(f64::from).product::<f64>() / (2.0 * PI).sqrt();
        let c = (1.0 + 0.5f64.powf(s as f64 + 0.5)) / 3.0;
        let time = (2.0 * c * k0 / n / f).powf(2.0 / (3.0 + 2.0 * s as f64));
        f = stage(s, time);
    }
    t - (2.0 * n * PI.sqrt() * f).powf(-0.4)
}

/// Smallest root of the fixed-point equation, bracketed by growing the
/// search interval up to [`T_SEARCH_MAX`].
fn solve_bandwidth(n: f64, k2: &[f64], a2: &[f64]) -> Option<f64> {
    let g = |t: f64| fixed_point(t, n, k2, a2);
    let n_clamped = n.clamp(50.0, 1050.0);
    let mut upper = 1e-12 + 0.01 * (n_clamped - 50.0) / 1000.0;
    let lower = f64::EPSILON;
    let g_lower = g(lower);
    loop {
        let g_upper = g(upper);
        if g_lower.is_finite() && g_upper.is_finite() && g_lower.signum() != g_upper.signum() {
            return Some(bisect(&g, lower, upper, g_lower));
        }
        if upper >= T_SEARCH_MAX {
            return None;
        }
        upper = (upper * 2.0).min(T_SEARCH_MAX);
    }
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut g_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return mid;
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Silverman's rule of thumb, `1.06·σ̂·n^(−1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    1.06 * var.sqrt() * n.powf(-0.2)
}

/// Diffusion KDE of `samples` on `[lo, hi]`. `mesh_points` is rounded up to a
/// power of two no smaller than [`MIN_MESH`]; samples outside the domain are
/// ignored.
pub fn kde_diffusion(samples: &[f64], mesh_points: usize, lo: f64, hi: f64) -> Result<DensityEstimate, KdeError> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(KdeError::Domain { lo, hi });
    }
    if samples.len() < MIN_SAMPLES {
        return Err(KdeError::TooFewSamples(samples.len()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(KdeError::NonFinite);
    }
    let m = mesh_size(mesh_points);
    let dx = (hi - lo) / (m - 1) as f64;
    let span = dx * m as f64;
    let mut mesh: Vec<f64> = (0..m).map(|j| lo + j as f64 * dx).collect();
    mesh[m - 1] = hi;

    let mut counts = vec![0.0; m];
    let mut inside = Vec::with_capacity(samples.len());
    let last = (m - 1) as f64;
    for &x in samples {
        let pos = (x - lo) / dx;
        if !(-0.5..last + 0.5).contains(&pos) {
            continue;
        }
        inside.push(x);
        if pos <= 0.0 {
            counts[0] += 1.0;
        } else if pos >= last {
            counts[m - 1] += 1.0;
        } else {
            let j = pos.floor();
            let w = pos - j;
            counts[j as usize] += 1.0 - w;
            counts[j as usize + 1] += w;
        }
    }
    let n = inside.len();
    if n == 0 {
        return Err(KdeError::NoSamplesInDomain { lo, hi });
    }
    if n < MIN_SAMPLES {
        return Err(KdeError::TooFewSamples(n));
    }
    let hist: Vec<f64> = counts.iter().map(|c| c / n as f64).collect();

    let coeffs = dct(&hist);
    let k2: Vec<f64> = (1..m).map(|k| (k * k) as f64).collect();
    let a2: Vec<f64> = coeffs[1..].iter().map(|a| (a / 2.0).powi(2)).collect();

    let t_floor = 1.0 / (m * m) as f64;
    let degenerate = inside.iter().all(|&x| x == inside[0]);
    let (t_star, warning) = if degenerate {
        (t_floor, Some(KdeWarning::Degenerate))
    } else {
        match solve_bandwidth(n as f64, &k2, &a2) {
            Some(t) => (t, None),
            None => {
                let h = silverman_bandwidth(&inside) / span;
                (h * h, Some(KdeWarning::SilvermanFallback))
            }
        }
    };
    let t_star = t_star.max(t_floor);

    // linear binning already spreads each sample with variance Δ²/6
    let t_smooth = (t_star - t_floor / 6.0).max(0.0);
    let smoothed: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .map(|(k, a)| a * (-((k * k) as f64) * PI * PI * t_smooth / 2.0).exp())
        .collect();
    let mut density: Vec<f64> = idct(&smoothed).into_iter().map(|v| (v / span).max(0.0)).collect();
    let total = trapezoid(&mesh, &density);
    if total > 0.0 {
        density.iter_mut().for_each(|d| *d /= total);
    }

    Ok(DensityEstimate {
        mesh,
        density,
        bandwidth_t: t_star * span * span,
        sample_count: n,
        warning,
    })
}
