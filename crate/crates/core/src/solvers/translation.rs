//! In-plane translation and per-point depth once `R21` is known.
//!
//! Orthographic projection with `X1 = R21 X2 + t`:
//! `u1 = r11 u2 + r12 v2 + r13 z2 + tx` and `v1 = r21 u2 + r22 v2 + r23 z2 + ty`.
//! Eliminating the depths leaves one linear constraint on `(tx, ty)`; the
//! component of `t` along `(r13, r23)` trades off against a global depth
//! offset and cannot be observed.

use serde::{Deserialize, Serialize};

use crate::correspondences::PixelCorr;
use crate::error::{Error, Result};
use crate::geometry::RotMat3;

/// `r13^2 + r23^2` below this means `eta ~ 0` and depth is unobservable.
pub const MIN_DEPTH_SENSITIVITY: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslationEstimate {
    /// Minimum-norm `(tx, ty)` satisfying the constraint.
    pub t: [f64; 2],
    /// `|r23 tx - r13 ty - c|` after the solve.
    pub residual: f64,
    /// Unit direction along which `t` is not determined: `(r13, r23) / |.|`.
    pub free_direction: [f64; 2],
    /// The constraint vanished identically (`eta ~ 0`); `t` is `(0, 0)`.
    pub degenerate: bool,
}

fn residual_offsets(r: &RotMat3, c: &PixelCorr) -> (f64, f64) {
    let u = r.r(1, 1) * c.u2 + r.r(1, 2) * c.v2 - c.u1;
    let v = r.r(2, 1) * c.u2 + r.r(2, 2) * c.v2 - c.v1;
    (u, v)
}

/// Solves `r23 tx - r13 ty = -mean_i(r23 u~_i - r13 v~_i)`.
///
/// The mean (rather than the plain sum) keeps the result valid for
/// uncentered pixels; on centered data both right-hand sides vanish.
pub fn estimate_translation(r: &RotMat3, pixels: &[PixelCorr]) -> Result<TranslationEstimate> {
    if pixels.is_empty() {
        return Err(Error::InsufficientCorrespondences("translation needs pixel correspondences".into()));
    }
    let (r13, r23) = (r.r(1, 3), r.r(2, 3));
    let s = r13 * r13 + r23 * r23;
    if s <= MIN_DEPTH_SENSITIVITY {
        return Ok(TranslationEstimate {
            t: [0.0, 0.0],
            residual: 0.0,
            free_direction: [0.0, 0.0],
            degenerate: true,
        });
    }
    let rhs = -pixels
        .iter()
        .map(|c| {
            let (u, v) = residual_offsets(r, c);
            r23 * u - r13 * v
        })
        .sum::<f64>()
        / pixels.len() as f64;
    let t = [r23 * rhs / s, -r13 * rhs / s];
    let residual = (r23 * t[0] - r13 * t[1] - rhs).abs();
    let norm = s.sqrt();
    Ok(TranslationEstimate {
        t,
        residual,
        free_direction: [r13 / norm, r23 / norm],
        degenerate: false,
    })
}

/// Least-squares depth `z2` of every pixel correspondence in view 2:
/// `z2 = -(r13 (u~ + tx) + r23 (v~ + ty)) / (r13^2 + r23^2)`.
pub fn recover_depths(r: &RotMat3, t: [f64; 2], pixels: &[PixelCorr]) -> Result<Vec<f64>> {
    let (r13, r23) = (r.r(1, 3), r.r(2, 3));
    let s = r13 * r13 + r23 * r23;
    if s <= MIN_DEPTH_SENSITIVITY {
        return Err(Error::DegenerateRotation(s));
    }
    Ok(pixels
        .iter()
        .map(|c| {
            let (u, v) = residual_offsets(r, c);
            -(r13 * (u + t[0]) + r23 * (v + t[1])) / s
        })
        .collect())
}
