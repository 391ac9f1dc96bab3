//! Relative pose of two orthographic views of a textureless reflective
//! object from pixel, 3D (surface normal) and reflection correspondences,
//! with the generalized bas-relief ambiguity of per-view normal maps
//! resolved by the reflection correspondences.

pub mod autodiff;
pub mod cli;
pub mod correspondences;
pub mod error;
pub mod multiview;
pub mod fig6;
pub mod geometry;
pub mod ransac;
pub mod residuals;
pub mod seed;
pub mod solvers;
pub mod synth;

pub use error::{Error, Result};
