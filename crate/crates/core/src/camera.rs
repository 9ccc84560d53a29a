//! Pinhole camera intrinsics.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Camera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64)
            || !(self.cy > 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::Config(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Project a camera-frame point with positive depth to pixel coordinates.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }

    /// Unit-depth ray direction through pixel coordinates `(x, y)`.
    #[inline]
    pub fn ray_dir(&self, x: f64, y: f64) -> Vector3<f64> {
        Vector3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    /// Camera-frame point at the given pixel and depth (z-depth convention).
    #[inline]
    pub fn unproject(&self, x: f64, y: f64, depth: f64) -> Vector3<f64> {
        self.ray_dir(x, y) * depth
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_unproject_round_trip() {
        let cam = Camera::new(100.0, 110.0, 32.0, 30.0, 64, 60).unwrap();
        let p = Vector3::new(0.3, -0.2, 2.5);
        let px = cam.project(&p);
        let back = cam.unproject(px.x, px.y, p.z);
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_intrinsics() {
        assert!(Camera::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(Camera::new(10.0, 10.0, 5.0, 1.0, 4, 4).is_err());
    }
}
