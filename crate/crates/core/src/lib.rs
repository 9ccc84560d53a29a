//! 6DoF object pose tracking against an online Gaussian-splat object model.
//!
//! The crate couples a differentiable software rasterizer for 3D Gaussians
//! with per-frame pose tracking, a geometric structure graph over keyframes
//! fed by pairwise pointmap matches, and quantitative evaluation. A synthetic
//! scene oracle stands in for a learned stereo matcher so every stage can be
//! exercised and validated end to end.

pub mod camera;
pub mod error;
pub mod grid;
pub mod render;
pub mod se3;

pub use camera::Camera;
pub use error::{Error, Result};
