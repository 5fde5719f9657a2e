//! Deterministic reductions, least squares and RNG seeding.

use alloc::vec::Vec;
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream from `seed` and a stream label.
pub fn rng_stream(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Pairwise (tree) summation; the result only depends on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let m = xs.len();
    if m == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(xs) / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, pairwise_sum(&dev) / (m - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (0 when the fit is exact or underdetermined).
    pub slope_se: f64,
    /// Root mean square residual.
    pub rms_residual: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`. Needs at least two distinct x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let m = x.len();
    if m < 2 || y.len() != m {
        return None;
    }
    let mx = pairwise_sum(x) / m as f64;
    let my = pairwise_sum(y) / m as f64;
    let sxx: f64 = x.iter().map(|xi| (xi - mx) * (xi - mx)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let r = yi - (slope * xi + intercept);
            r * r
        })
        .sum();
    let slope_se = if m > 2 { (ssr / (m - 2) as f64 / sxx).sqrt() } else { 0.0 };
    Some(LineFit { slope, intercept, slope_se, rms_residual: (ssr / m as f64).sqrt() })
}
