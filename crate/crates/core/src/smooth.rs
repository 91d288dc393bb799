//! Curvature-corrected moving average over camera positions.
//!
//! A kernel moving average pulls points on a curved path toward the center
//! of curvature. For a point sampled on a circle of radius `r` with chord
//! spacing `d`, the symmetric weighted average lands at radius
//! `r · Σ w_j cos(j α)` with `α = 2 asin(d / 2r)`. We estimate the curvature
//! of the averaged path, invert that relation for `r`, and push each
//! averaged point back out along the normal.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geom::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Hann,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherConfig {
    /// Curvature neighborhood half-width.
    pub k1: usize,
    /// Smoothing half-width.
    pub k2: usize,
    pub kernel: Kernel,
    /// Disables smoothing entirely (smoothed poses equal raw ones).
    #[serde(default = "default_enabled")]
    pub enabled: bool,
}

fn default_enabled() -> bool {
    true
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig { k1: 3, k2: 3, kernel: Kernel::Hann, enabled: true }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<(), SmoothError> {
        if self.k1 < 1 || self.k2 < 1 {
            return Err(SmoothError::InvalidConfig("k1 and k2 must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SmoothError {
    #[error("need at least 3 points, got {0}")]
    TooShort(usize),
    #[error("invalid smoother config: {0}")]
    InvalidConfig(String),
}

const MIN_CURVATURE: f64 = 1e-9;
const MIN_SHRINK: f64 = 0.1;

/// Normalized symmetric weights for offsets `-k..=k`.
pub fn kernel_weights(kernel: Kernel, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (-(k as i64)..=k as i64)
        .map(|j| match kernel {
            Kernel::Uniform => 1.0,
            Kernel::Hann => 0.5 * (1.0 + (std::f64::consts::PI * j as f64 / (k + 1) as f64).cos()),
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Menger curvature of three points and the circumcenter, if not degenerate.
fn menger(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
    let u = a - b;
    let v = c - b;
    let w = u.cross(&v);
    let w2 = w.norm_squared();
    let denom = u.norm() * v.norm() * (c - a).norm();
    if denom == 0.0 {
        return None;
    }
    let kappa = 2.0 * w2.sqrt() / denom;
    if !(kappa >= MIN_CURVATURE) || w2 == 0.0 {
        return None;
    }
    let center = b + (v * u.norm_squared() - u * v.norm_squared()).cross(&w) / (2.0 * w2);
    Some((kappa, center))
}

/// Radial shrink factor of the weighted average on a circle of radius `r`
/// with chord spacing `d`.
fn shrink(weights: &[f64], d: f64, r: f64) -> f64 {
    let k = (weights.len() / 2) as i64;
    let alpha = 2.0 * (d / (2.0 * r)).min(1.0).asin();
    weights.iter().zip(-k..=k).map(|(w, j)| w * (j as f64 * alpha).cos()).sum()
}

/// Plain kernel moving average with windows shrunk symmetrically at the
/// ends.
pub fn moving_average(points: &[Vector3<f64>], kernel: Kernel, k2: usize) -> Vec<Vector3<f64>> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let k = k2.min(i).min(n - 1 - i);
            let w = kernel_weights(kernel, k);
            // offsets from the center keep constant input exact
            let c = points[i];
            c + points[i - k..=i + k].iter().zip(&w).map(|(p, w)| (p - c) * *w).sum::<Vector3<f64>>()
        })
        .collect()
}

pub fn smooth_positions(points: &[Vector3<f64>], cfg: &SmootherConfig) -> Result<Vec<Vector3<f64>>, SmoothError> {
    let n = points.len();
    if n < 3 {
        return Err(SmoothError::TooShort(n));
    }
    let ma = moving_average(points, cfg.kernel, cfg.k2);
    let mut out = ma.clone();
    for i in 0..n {
        let k = cfg.k2.min(i).min(n - 1 - i);
        let kc = cfg.k1.min(i).min(n - 1 - i);
        if k == 0 || kc == 0 {
            continue;
        }
        let Some((kappa, center)) = menger(&ma[i - kc], &ma[i], &ma[i + kc]) else { continue };
        let r_ma = 1.0 / kappa;
        let window = &points[i - k..=i + k];
        let d = window.windows(2).map(|p| (p[1] - p[0]).norm()).sum::<f64>() / (2 * k) as f64;
        if d == 0.0 {
            continue;
        }
        let w = kernel_weights(cfg.kernel, k);
        // Solve r · shrink(r) = r_ma.
        let mut r = r_ma;
        let mut f = 1.0;
        for _ in 0..100 {
            f = shrink(&w, d, r);
            if f <= MIN_SHRINK {
                break;
            }
            let next = r_ma / f;
            let done = (next - r).abs() <= 1e-14 * r;
            r = next;
            if done {
                break;
            }
        }
        if !(f > MIN_SHRINK) || !r.is_finite() {
            continue;
        }
        let outward = (ma[i] - center) / r_ma;
        out[i] = ma[i] + outward * (r - r_ma);
    }
    Ok(out)
}

/// Smooths camera centers and keeps rotations. Lists shorter than three
/// poses are returned unchanged.
pub fn smooth_block_poses(poses: &[Pose], cfg: &SmootherConfig) -> Vec<Pose> {
    if !cfg.enabled || poses.len() < 3 {
        return poses.to_vec();
    }
    let centers: Vec<Vector3<f64>> = poses.iter().map(Pose::center).collect();
    let smoothed = smooth_positions(&centers, cfg).expect("length checked");
    poses.iter().zip(smoothed).map(|(p, c)| p.with_center(c)).collect()
}
