//! Differentiable forward/backward rasterizer for anisotropic 3D Gaussians.
//!
//! The forward pass projects each Gaussian to an EWA splat, composites color,
//! depth and a soft silhouette front to back, and caches enough state for an
//! exact reverse pass. The backward pass returns gradients with respect to
//! the camera pose (left-multiplicative twist, translation block first) and
//! every Gaussian parameter.

mod backward;
mod forward;

pub use backward::{render_backward, RenderGrads, UpstreamGrads};
pub use forward::{render, render_with_cache};

use nalgebra::{Matrix2, Matrix3, Quaternion, Vector2, Vector3};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::grid::{ColorImage, ScalarField};
use crate::se3::Pose;

/// Gaussians closer than this to the image plane are culled.
pub const NEAR_PLANE: f64 = 1e-3;

/// Anti-aliasing floor added to the diagonal of every 2D covariance (px^2).
pub const LOW_PASS_PX2: f64 = 0.3;

/// Splats contribute to pixels with squared Mahalanobis distance below this.
pub const CUTOFF_MAHAL_SQ: f64 = 9.0;

/// Per-pixel compositing stops once transmittance drops below this.
pub const TRANSMITTANCE_EPS: f64 = 1e-4;

pub(crate) const ALPHA_MAX: f64 = 1.0 - 1e-7;

/// One anisotropic 3D Gaussian primitive.
///
/// Scales are stored as log standard deviations and opacity pre-sigmoid, so
/// unconstrained gradient steps keep the covariance positive definite and the
/// effective opacity strictly inside (0, 1). The rotation quaternion is
/// normalized where it is consumed, with gradients through the normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    pub center: Vector3<f64>,
    pub log_scale: Vector3<f64>,
    pub rotation: Quaternion<f64>,
    pub color: Vector3<f64>,
    pub opacity: f64,
}

impl Gaussian {
    pub fn isotropic(center: Vector3<f64>, scale: f64, color: Vector3<f64>, opacity: f64) -> Self {
        Gaussian {
            center,
            log_scale: Vector3::repeat(scale.ln()),
            rotation: Quaternion::new(1.0, 0.0, 0.0, 0.0),
            color,
            opacity,
        }
    }

    /// World-frame covariance `R * diag(scale^2) * R^T`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let (r, _) = quat_to_rot_grad(&self.rotation);
        let s2 = self.log_scale.map(|v| (2.0 * v).exp());
        r * Matrix3::from_diagonal(&s2) * r.transpose()
    }

    pub fn effective_opacity(&self) -> f64 {
        sigmoid(self.opacity)
    }
}

/// Per-Gaussian parameter gradients, mirroring [`Gaussian`]'s fields.
#[derive(Clone, Debug)]
pub struct GaussianGrad {
    pub center: Vector3<f64>,
    pub log_scale: Vector3<f64>,
    pub rotation: Quaternion<f64>,
    pub color: Vector3<f64>,
    pub opacity: f64,
}

impl Default for GaussianGrad {
    fn default() -> Self {
        GaussianGrad {
            center: Vector3::zeros(),
            log_scale: Vector3::zeros(),
            rotation: Quaternion::new(0.0, 0.0, 0.0, 0.0),
            color: Vector3::zeros(),
            opacity: 0.0,
        }
    }
}

/// Output of one rasterization pass.
#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub color: ColorImage,
    /// Alpha-blended depth, un-normalized (no division by alpha).
    pub depth: ScalarField,
    /// Accumulated blend weight per pixel; the soft silhouette.
    pub alpha: ScalarField,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Smooth falloff kernel with support exactly on Mahalanobis^2 < cutoff.
///
/// The plain `exp(-q/2)` kernel truncated at the cutoff would jump by
/// `exp(-cutoff/2)` at the boundary; the cubic Hermite taper keeps the blend
/// C1 so analytic gradients agree with finite differences. Returns the weight
/// and its derivative with respect to `q`.
#[inline]
pub(crate) fn falloff(q: f64) -> (f64, f64) {
    debug_assert!((0.0..CUTOFF_MAHAL_SQ).contains(&q));
    let u = 1.0 - q / CUTOFF_MAHAL_SQ;
    let s = u * u * (3.0 - 2.0 * u);
    let ds_du = 6.0 * u * (1.0 - u);
    let e = (-0.5 * q).exp();
    (e * s, e * (-0.5 * s - ds_du / CUTOFF_MAHAL_SQ))
}

/// Rotation matrix of a (not necessarily unit) quaternion together with the
/// derivative of the matrix with respect to each raw component `(w, x, y, z)`.
pub(crate) fn quat_to_rot_grad(q: &Quaternion<f64>) -> (Matrix3<f64>, [Matrix3<f64>; 4]) {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    let s = w * w + x * x + y * y + z * z;
    debug_assert!(s > 0.0, "zero quaternion");
    let raw = Matrix3::new(
        w * w + x * x - y * y - z * z,
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        w * w - x * x + y * y - z * z,
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        w * w - x * x - y * y + z * z,
    );
    let r = raw / s;

    let draw = [
        Matrix3::new(w, -z, y, z, w, -x, -y, x, w) * 2.0,
        Matrix3::new(x, y, z, y, -x, -w, z, w, -x) * 2.0,
        Matrix3::new(-y, x, w, x, y, z, -w, z, -y) * 2.0,
        Matrix3::new(-z, -w, x, w, -z, y, x, y, z) * 2.0,
    ];
    let mut grads = [Matrix3::zeros(); 4];
    let comps = [w, x, y, z];
    for k in 0..4 {
        grads[k] = draw[k] / s - raw * (2.0 * comps[k] / (s * s));
    }
    (r, grads)
}

/// Projection of one Gaussian: 2D mean, EWA covariance (with the low-pass
/// floor), and camera-frame depth.
///
/// Fails with [`Error::BehindCamera`] when the transformed center is closer
/// than the near plane; the rasterizer skips such Gaussians.
pub fn project_gaussian(
    g: &Gaussian,
    pose: &Pose,
    cam: &Camera,
) -> Result<(Vector2<f64>, Matrix2<f64>, f64)> {
    let mu_cam = pose.transform(&g.center);
    if mu_cam.z <= NEAR_PLANE {
        return Err(Error::BehindCamera { z: mu_cam.z });
    }
    let mu2d = cam.project(&mu_cam);
    let w_rot = pose.rotation();
    let m = w_rot * g.covariance() * w_rot.transpose();
    let j = projection_jacobian(&mu_cam, cam);
    let cov = j * m * j.transpose() + Matrix2::identity() * LOW_PASS_PX2;
    Ok((mu2d, cov, mu_cam.z))
}

#[inline]
pub(crate) fn projection_jacobian(mu_cam: &Vector3<f64>, cam: &Camera) -> nalgebra::Matrix2x3<f64> {
    let (x, y, z) = (mu_cam.x, mu_cam.y, mu_cam.z);
    nalgebra::Matrix2x3::new(
        cam.fx / z,
        0.0,
        -cam.fx * x / (z * z),
        0.0,
        cam.fy / z,
        -cam.fy * y / (z * z),
    )
}

/// Culled, projected splat shared by the forward and backward passes.
#[derive(Clone, Debug)]
pub(crate) struct Splat {
    pub gauss: u32,
    pub alpha: f64,
    pub color: Vector3<f64>,
    pub mu_cam: Vector3<f64>,
    pub mu2d: Vector2<f64>,
    /// Upper triangle (a, b, c) of the 2D covariance.
    pub cov: [f64; 3],
    /// Inverse as (ia, ib, ic): q = ia dx^2 + 2 ib dx dy + ic dy^2.
    pub inv_cov: [f64; 3],
    /// Inclusive pixel bounds.
    pub x0: i32,
    pub x1: i32,
    pub y0: i32,
    pub y1: i32,
}

pub(crate) fn project_splat(
    idx: usize,
    g: &Gaussian,
    pose: &Pose,
    cam: &Camera,
) -> Option<Splat> {
    let mu_cam = pose.transform(&g.center);
    if mu_cam.z <= NEAR_PLANE {
        return None;
    }
    let mu2d = cam.project(&mu_cam);
    let w_rot = pose.rotation();
    let m = w_rot * g.covariance() * w_rot.transpose();
    let j = projection_jacobian(&mu_cam, cam);
    let cov = j * m * j.transpose() + Matrix2::identity() * LOW_PASS_PX2;
    let (a, b, c) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    let det = a * c - b * b;
    if det <= 0.0 {
        return None;
    }
    // Conservative radius from the largest eigenvalue.
    let mid = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let radius = (CUTOFF_MAHAL_SQ * (mid + disc)).sqrt();
    let x0 = (mu2d.x - radius - 0.5).ceil().max(0.0) as i32;
    let x1 = (mu2d.x + radius - 0.5).floor().min(cam.width as f64 - 1.0) as i32;
    let y0 = (mu2d.y - radius - 0.5).ceil().max(0.0) as i32;
    let y1 = (mu2d.y + radius - 0.5).floor().min(cam.height as f64 - 1.0) as i32;
    if x0 > x1 || y0 > y1 {
        return None;
    }
    let alpha = sigmoid(g.opacity).min(ALPHA_MAX);
    Some(Splat {
        gauss: idx as u32,
        alpha,
        color: g.color,
        mu_cam,
        mu2d,
        cov: [a, b, c],
        inv_cov: [c / det, -b / det, a / det],
        x0,
        x1,
        y0,
        y1,
    })
}

/// State cached by a forward pass; consumed by the paired backward pass.
pub struct ForwardCache {
    pub(crate) gaussian_count: usize,
    pub(crate) width: usize,
    pub(crate) height: usize,
    pub(crate) splats: Vec<Splat>,
    /// CSR offsets into `entries`, one run per pixel (row-major).
    pub(crate) offsets: Vec<u32>,
    pub(crate) entries: Vec<u32>,
    /// Entries actually walked per pixel before termination.
    pub(crate) n_contrib: Vec<u32>,
    /// Transmittance remaining after the last composited entry.
    pub(crate) final_t: Vec<f64>,
}

impl ForwardCache {
    pub(crate) fn matches(&self, gaussians: &[Gaussian], cam: &Camera) -> bool {
        self.gaussian_count == gaussians.len()
            && self.width == cam.width
            && self.height == cam.height
    }

    /// 3-sigma projected pixel radius per input Gaussian (0 when culled).
    pub fn projected_radii(&self, gaussian_count: usize) -> Vec<f64> {
        let mut radii = vec![0.0; gaussian_count];
        for s in &self.splats {
            let (a, b, c) = (s.cov[0], s.cov[1], s.cov[2]);
            let mid = 0.5 * (a + c);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            radii[s.gauss as usize] = (CUTOFF_MAHAL_SQ * (mid + disc)).sqrt();
        }
        radii
    }
}
