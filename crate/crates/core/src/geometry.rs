//! Level sets Θ_r, ellipsoids E_{r,s} and the boxes R_{r,s}, R̃_{r,s}.

use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng as _;
use thiserror::Error;

use crate::profile::AnisotropyProfile;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetKind {
    /// `Σ|y_i - x_i|^{n+σ_i} < r`
    Theta,
    /// `Σ (y_i - x_i)² / r^{2/(n+σ_i)} < s²`
    Ellipse,
    /// `|y_i - x_i| < s^{1/(n+σ_min)} r^{1/(n+σ_i)}`
    Rect,
    /// `|y_i - x_i| < (s r)^{1/(n+σ_i)}`
    TildeRect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnisoSet {
    pub kind: SetKind,
    pub center: Vec<f64>,
    pub r: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measure {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("Monte Carlo measure needs at least one sample")]
    ZeroSamples,
    #[error("set center has dimension {got}, profile has {want}")]
    Dimension { got: usize, want: usize },
    #[error("set parameters must be positive (r = {r}, s = {s})")]
    NonPositive { r: f64, s: f64 },
}

/// Volume of the Euclidean unit ball in ℝⁿ.
pub fn unit_ball_volume(n: usize) -> f64 {
    let nf = n as f64;
    core::f64::consts::PI.powf(nf / 2.0) / libm::tgamma(nf / 2.0 + 1.0)
}

impl AnisoSet {
    pub fn theta(center: Vec<f64>, r: f64) -> Self {
        Self { kind: SetKind::Theta, center, r, s: 1.0 }
    }
    pub fn ellipse(center: Vec<f64>, r: f64, s: f64) -> Self {
        Self { kind: SetKind::Ellipse, center, r, s }
    }
    pub fn rect(center: Vec<f64>, r: f64, s: f64) -> Self {
        Self { kind: SetKind::Rect, center, r, s }
    }
    pub fn tilde_rect(center: Vec<f64>, r: f64, s: f64) -> Self {
        Self { kind: SetKind::TildeRect, center, r, s }
    }

    fn check(&self, profile: &AnisotropyProfile) -> Result<(), GeometryError> {
        if self.center.len() != profile.n() {
            return Err(GeometryError::Dimension { got: self.center.len(), want: profile.n() });
        }
        if !(self.r > 0.0 && self.s > 0.0) {
            return Err(GeometryError::NonPositive { r: self.r, s: self.s });
        }
        Ok(())
    }

    /// Evaluates the defining strict inequality at `y`.
    pub fn contains(&self, profile: &AnisotropyProfile, y: &[f64]) -> bool {
        let p = profile.orders();
        let d = y.iter().zip(&self.center).map(|(a, b)| a - b);
        match self.kind {
            SetKind::Theta => {
                let g: f64 = d.zip(p).map(|(di, pi)| di.abs().powf(*pi)).sum();
                g < self.r
            }
            SetKind::Ellipse => {
                let g: f64 = d.zip(p).map(|(di, pi)| di * di / self.r.powf(2.0 / pi)).sum();
                g < self.s * self.s
            }
            SetKind::Rect | SetKind::TildeRect => {
                let h = self.half_edges(profile);
                d.zip(h).all(|(di, hi)| di.abs() < hi)
            }
        }
    }

    /// Half-edges of the smallest centred box containing the set.
    pub fn half_edges(&self, profile: &AnisotropyProfile) -> Vec<f64> {
        let p = profile.orders();
        let pmin = profile.n() as f64 + profile.sigma_min();
        match self.kind {
            SetKind::Theta => p.iter().map(|pi| self.r.powf(1.0 / pi)).collect(),
            SetKind::Ellipse => p.iter().map(|pi| self.s * self.r.powf(1.0 / pi)).collect(),
            SetKind::Rect => p.iter().map(|pi| self.s.powf(1.0 / pmin) * self.r.powf(1.0 / pi)).collect(),
            SetKind::TildeRect => p.iter().map(|pi| (self.s * self.r).powf(1.0 / pi)).collect(),
        }
    }

    fn exact_measure(&self, profile: &AnisotropyProfile) -> f64 {
        let h = self.half_edges(profile);
        match self.kind {
            SetKind::Theta => self.r.powf(profile.theta_exponent()) * profile.theta_unit_volume(),
            SetKind::Ellipse => unit_ball_volume(profile.n()) * h.iter().product::<f64>(),
            SetKind::Rect | SetKind::TildeRect => h.iter().map(|x| 2.0 * x).product(),
        }
    }

    /// Lebesgue measure, either in closed form or by Monte Carlo in the bounding box.
    pub fn measure(&self, profile: &AnisotropyProfile, mode: MeasureMode) -> Result<Measure, GeometryError> {
        self.check(profile)?;
        match mode {
            MeasureMode::Exact => Ok(Measure { value: self.exact_measure(profile), std_error: 0.0 }),
            MeasureMode::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(GeometryError::ZeroSamples);
                }
                let h = self.half_edges(profile);
                let vol: f64 = h.iter().map(|x| 2.0 * x).product();
                let mut rng = stats::rng(seed);
                let mut y = self.center.clone();
                let mut hits = 0usize;
                for _ in 0..samples {
                    for i in 0..y.len() {
                        y[i] = self.center[i] + h[i] * (2.0 * rng.gen::<f64>() - 1.0);
                    }
                    if self.contains(profile, &y) {
                        hits += 1;
                    }
                }
                let frac = hits as f64 / samples as f64;
                Ok(Measure {
                    value: vol * frac,
                    std_error: vol * (frac * (1.0 - frac) / samples as f64).sqrt(),
                })
            }
        }
    }

    /// Uniform sample from the set by rejection from its bounding box.
    pub fn sample(&self, profile: &AnisotropyProfile, rng: &mut stats::Rng) -> Vec<f64> {
        let h = self.half_edges(profile);
        let mut y = self.center.clone();
        loop {
            for i in 0..y.len() {
                y[i] = self.center[i] + h[i] * (2.0 * rng.gen::<f64>() - 1.0);
            }
            if self.contains(profile, &y) {
                return y;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn one_dimensional_membership() {
        let p = AnisotropyProfile::new(&[1.0], 1.0, 1.0).unwrap();
        assert!(AnisoSet::theta(vec![0.0], 1.0).contains(&p, &[0.9]));
        assert!(!AnisoSet::theta(vec![0.0], 1.0).contains(&p, &[1.0]));
    }

    #[test]
    fn interval_measure() {
        let p = AnisotropyProfile::new(&[0.4], 1.0, 1.0).unwrap();
        let m = AnisoSet::theta(vec![0.0], 3.0).measure(&p, MeasureMode::Exact).unwrap();
        assert!((m.value - 2.0 * 3.0_f64.powf(1.0 / 1.4)).abs() < 1e-12);
    }

    #[test]
    fn rect_measure_is_edge_product() {
        let p = AnisotropyProfile::new(&[0.5, 1.5], 1.0, 1.0).unwrap();
        let (r, s) = (0.7, 0.3);
        let m = AnisoSet::rect(vec![0.0, 0.0], r, s).measure(&p, MeasureMode::Exact).unwrap();
        let want = 4.0 * s.powf(2.0 / 2.5) * r.powf(1.0 / 2.5 + 1.0 / 3.5);
        assert!((m.value - want).abs() < 1e-13);
    }

    #[test]
    fn zero_samples_rejected() {
        let p = AnisotropyProfile::new(&[1.0], 1.0, 1.0).unwrap();
        let e = AnisoSet::theta(vec![0.0], 1.0).measure(&p, MeasureMode::MonteCarlo { samples: 0, seed: 1 });
        assert_eq!(e, Err(GeometryError::ZeroSamples));
    }
}
