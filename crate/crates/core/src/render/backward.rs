//! Reverse-mode pass through the compositing, projection, and pose chains.

use nalgebra::{Matrix2, Matrix3, Quaternion, Vector2, Vector3, Vector6};

use super::{
    falloff, quat_to_rot_grad, projection_jacobian, ForwardCache, Gaussian, GaussianGrad,
    CUTOFF_MAHAL_SQ, TRANSMITTANCE_EPS,
};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::grid::{ColorImage, ScalarField};
use crate::se3::Pose;

/// Upstream loss gradients per output channel; `None` means all-zero.
#[derive(Default)]
pub struct UpstreamGrads<'a> {
    pub color: Option<&'a ColorImage>,
    pub depth: Option<&'a ScalarField>,
    pub alpha: Option<&'a ScalarField>,
}

/// Gradients produced by [`render_backward`].
pub struct RenderGrads {
    /// Left-multiplicative twist gradient, translation block first.
    pub pose_twist: Vector6<f64>,
    pub gaussians: Vec<GaussianGrad>,
}

/// Per-splat screen-space accumulators gathered over pixels.
#[derive(Clone, Default)]
struct SplatAccum {
    d_mu2d: Vector2<f64>,
    d_cov: [f64; 3],
    d_alpha: f64,
    d_color: Vector3<f64>,
    d_z: f64,
    touched: bool,
}

/// Exact gradients of the compositing equations with respect to the camera
/// pose twist and all Gaussian parameters.
///
/// `cache` must come from a forward pass over the same Gaussian list and
/// camera; otherwise [`Error::MissingForwardCache`] is returned.
pub fn render_backward(
    gaussians: &[Gaussian],
    pose: &Pose,
    cam: &Camera,
    cache: &ForwardCache,
    upstream: &UpstreamGrads,
) -> Result<RenderGrads> {
    if !cache.matches(gaussians, cam) {
        return Err(Error::MissingForwardCache);
    }
    if let Some(g) = upstream.color {
        if g.width() != cam.width || g.height() != cam.height {
            return Err(Error::MissingForwardCache);
        }
    }

    let (w, h) = (cam.width, cam.height);
    let mut accum = vec![SplatAccum::default(); cache.splats.len()];

    // Pixel-major reverse sweep over the cached contributor runs.
    for p in 0..w * h {
        let (ix, iy) = (p % w, p / w);
        let gc = upstream.color.map_or(Vector3::zeros(), |g| g[(ix, iy)]);
        let gd = upstream.depth.map_or(0.0, |g| g[(ix, iy)]);
        let ga = upstream.alpha.map_or(0.0, |g| g[(ix, iy)]);
        if gc == Vector3::zeros() && gd == 0.0 && ga == 0.0 {
            continue;
        }
        let (px, py) = (ix as f64 + 0.5, iy as f64 + 0.5);
        let run = &cache.entries[cache.offsets[p] as usize..cache.offsets[p + 1] as usize];
        let walked = cache.n_contrib[p] as usize;

        // Suffix sums over contributions behind the current splat.
        let mut s_color = Vector3::zeros();
        let mut s_depth = 0.0;
        let mut s_alpha = 0.0;
        let mut t_behind = cache.final_t[p];

        for &si in run[..walked].iter().rev() {
            let s = &cache.splats[si as usize];
            let (dx, dy) = (px - s.mu2d.x, py - s.mu2d.y);
            let q = s.inv_cov[0] * dx * dx + 2.0 * s.inv_cov[1] * dx * dy + s.inv_cov[2] * dy * dy;
            if q >= CUTOFF_MAHAL_SQ {
                continue;
            }
            let (wgt, dwgt_dq) = falloff(q);
            let a = s.alpha * wgt;
            if a < 1e-12 {
                continue;
            }
            // Transmittance in front of this splat.
            let t_i = t_behind / (1.0 - a);
            let at = a * t_i;

            let d_a = gc.dot(&(s.color * t_i - s_color / (1.0 - a)))
                + gd * (s.mu_cam.z * t_i - s_depth / (1.0 - a))
                + ga * (t_i - s_alpha / (1.0 - a));

            let acc = &mut accum[si as usize];
            acc.touched = true;
            acc.d_color += gc * at;
            acc.d_z += gd * at;
            acc.d_alpha += d_a * wgt;

            // Through the falloff kernel into mean and covariance.
            let d_q = d_a * s.alpha * dwgt_dq;
            let [ia, ib, ic] = s.inv_cov;
            let dq_dd1 = 2.0 * (ia * dx + ib * dy);
            let dq_dd2 = 2.0 * (ib * dx + ic * dy);
            acc.d_mu2d.x += -d_q * dq_dd1;
            acc.d_mu2d.y += -d_q * dq_dd2;
            // dq/d(a,b,c) of the covariance upper triangle.
            let [a_c, b_c, c_c] = s.cov;
            let det = a_c * c_c - b_c * b_c;
            acc.d_cov[0] += d_q * (dy * dy - q * c_c) / det;
            acc.d_cov[1] += d_q * (-2.0 * dx * dy + 2.0 * q * b_c) / det;
            acc.d_cov[2] += d_q * (dx * dx - q * a_c) / det;

            s_color += s.color * at;
            s_depth += s.mu_cam.z * at;
            s_alpha += at;
            t_behind = t_i;
        }
        debug_assert!(t_behind <= 1.0 + 1e-9);
        let _ = TRANSMITTANCE_EPS;
    }

    // Chain per-splat screen gradients into pose twist and 3D parameters.
    let w_rot = pose.rotation();
    let mut pose_twist = Vector6::zeros();
    let mut ggrads = vec![GaussianGrad::default(); gaussians.len()];

    for (si, acc) in accum.iter().enumerate() {
        if !acc.touched {
            continue;
        }
        let s = &cache.splats[si];
        let g = &gaussians[s.gauss as usize];
        let out = &mut ggrads[s.gauss as usize];

        let (r_g, dr_dq) = quat_to_rot_grad(&g.rotation);
        let s2 = Matrix3::from_diagonal(&g.log_scale.map(|v| (2.0 * v).exp()));
        let sigma_w = r_g * s2 * r_g.transpose();
        let m = w_rot * sigma_w * w_rot.transpose();
        let j = projection_jacobian(&s.mu_cam, cam);
        let (x, y, z) = (s.mu_cam.x, s.mu_cam.y, s.mu_cam.z);

        let g_cov = Matrix2::new(
            acc.d_cov[0],
            acc.d_cov[1] * 0.5,
            acc.d_cov[1] * 0.5,
            acc.d_cov[2],
        );
        let gj = 2.0 * g_cov * j * m;
        let gm = j.transpose() * g_cov * j;

        // dL/d(mu_cam): projection of the mean, the projection Jacobian's
        // dependence on the center, and the blended-depth channel.
        let (fx, fy) = (cam.fx, cam.fy);
        let z2 = z * z;
        let mut d_mu_cam = Vector3::new(
            acc.d_mu2d.x * fx / z + gj[(0, 2)] * (-fx / z2),
            acc.d_mu2d.y * fy / z + gj[(1, 2)] * (-fy / z2),
            -acc.d_mu2d.x * fx * x / z2 - acc.d_mu2d.y * fy * y / z2
                + gj[(0, 0)] * (-fx / z2)
                + gj[(1, 1)] * (-fy / z2)
                + gj[(0, 2)] * (2.0 * fx * x / (z2 * z))
                + gj[(1, 2)] * (2.0 * fy * y / (z2 * z)),
        );
        d_mu_cam.z += acc.d_z;

        // Twist: point path [I | -mu^x], plus the covariance path through the
        // rotation block, columnwise [0 | -col_k^x].
        let mut rot_g = s.mu_cam.cross(&d_mu_cam);
        let dw = 2.0 * gm * w_rot * sigma_w;
        for k in 0..3 {
            let wk: Vector3<f64> = w_rot.column(k).into();
            let dwk: Vector3<f64> = dw.column(k).into();
            rot_g += wk.cross(&dwk);
        }
        for i in 0..3 {
            pose_twist[i] += d_mu_cam[i];
            pose_twist[3 + i] += rot_g[i];
        }

        // Gaussian parameters.
        out.center += w_rot.transpose() * d_mu_cam;
        let gs = w_rot.transpose() * gm * w_rot;
        let dr = 2.0 * gs * r_g * s2;
        let mut d_quat = [0.0; 4];
        for k in 0..4 {
            d_quat[k] = dr.component_mul(&dr_dq[k]).sum();
        }
        out.rotation = Quaternion::new(
            out.rotation.w + d_quat[0],
            out.rotation.i + d_quat[1],
            out.rotation.j + d_quat[2],
            out.rotation.k + d_quat[3],
        );
        for k in 0..3 {
            let rk: Vector3<f64> = r_g.column(k).into();
            out.log_scale[k] += 2.0 * s2[(k, k)] * rk.dot(&(gs * rk));
        }
        out.color += acc.d_color;
        let sig = super::sigmoid(g.opacity);
        if sig < super::ALPHA_MAX {
            out.opacity += acc.d_alpha * sig * (1.0 - sig);
        }
    }

    Ok(RenderGrads {
        pose_twist,
        gaussians: ggrads,
    })
}
