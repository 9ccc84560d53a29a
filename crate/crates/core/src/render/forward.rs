//! Forward rasterization: cull, project, depth-sort, composite.

use nalgebra::Vector3;

use super::{
    project_splat, ForwardCache, Gaussian, RenderOutput, Splat, CUTOFF_MAHAL_SQ,
    TRANSMITTANCE_EPS,
};
use crate::camera::Camera;
use crate::grid::{ColorImage, Grid, ScalarField};
use crate::se3::Pose;

/// Render color, blended depth, and soft silhouette. Convenience wrapper that
/// discards the backward-pass cache.
pub fn render(gaussians: &[Gaussian], pose: &Pose, cam: &Camera) -> RenderOutput {
    render_with_cache(gaussians, pose, cam).0
}

pub fn render_with_cache(
    gaussians: &[Gaussian],
    pose: &Pose,
    cam: &Camera,
) -> (RenderOutput, ForwardCache) {
    let (w, h) = (cam.width, cam.height);
    let npix = w * h;

    let mut splats: Vec<Splat> = gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_splat(i, g, pose, cam))
        .collect();
    // Front-to-back by center depth; ties broken by input index so the result
    // does not depend on the order Gaussians were supplied in.
    splats.sort_by(|a, b| {
        a.mu_cam
            .z
            .partial_cmp(&b.mu_cam.z)
            .unwrap()
            .then(a.gauss.cmp(&b.gauss))
    });

    // CSR per-pixel splat lists. Filling in sorted splat order keeps every
    // per-pixel run depth-ordered.
    let mut counts = vec![0u32; npix + 1];
    for s in &splats {
        for y in s.y0..=s.y1 {
            for x in s.x0..=s.x1 {
                counts[y as usize * w + x as usize + 1] += 1;
            }
        }
    }
    for i in 0..npix {
        counts[i + 1] += counts[i];
    }
    let offsets = counts;
    let mut cursor: Vec<u32> = offsets[..npix].to_vec();
    let mut entries = vec![0u32; offsets[npix] as usize];
    for (si, s) in splats.iter().enumerate() {
        for y in s.y0..=s.y1 {
            for x in s.x0..=s.x1 {
                let p = y as usize * w + x as usize;
                entries[cursor[p] as usize] = si as u32;
                cursor[p] += 1;
            }
        }
    }

    let mut color = ColorImage::fill(w, h, Vector3::zeros());
    let mut depth = ScalarField::fill(w, h, 0.0);
    let mut alpha = ScalarField::fill(w, h, 0.0);
    let mut n_contrib = vec![0u32; npix];
    let mut final_t = vec![1.0f64; npix];

    for p in 0..npix {
        let (px, py) = ((p % w) as f64 + 0.5, (p / w) as f64 + 0.5);
        let run = &entries[offsets[p] as usize..offsets[p + 1] as usize];
        let mut t = 1.0f64;
        let mut c_acc = Vector3::zeros();
        let mut d_acc = 0.0;
        let mut a_acc = 0.0;
        let mut walked = 0u32;
        for &si in run {
            walked += 1;
            let s = &splats[si as usize];
            let (dx, dy) = (px - s.mu2d.x, py - s.mu2d.y);
            let q = s.inv_cov[0] * dx * dx + 2.0 * s.inv_cov[1] * dx * dy + s.inv_cov[2] * dy * dy;
            if q >= CUTOFF_MAHAL_SQ {
                continue;
            }
            let (wgt, _) = super::falloff(q);
            let a = s.alpha * wgt;
            if a < 1e-12 {
                continue;
            }
            c_acc += s.color * (a * t);
            d_acc += s.mu_cam.z * a * t;
            a_acc += a * t;
            t *= 1.0 - a;
            if t < TRANSMITTANCE_EPS {
                break;
            }
        }
        color[(p % w, p / w)] = c_acc;
        depth[(p % w, p / w)] = d_acc;
        alpha[(p % w, p / w)] = a_acc;
        n_contrib[p] = walked;
        final_t[p] = t;
    }

    let out = RenderOutput {
        color,
        depth,
        alpha,
    };
    let cache = ForwardCache {
        gaussian_count: gaussians.len(),
        width: w,
        height: h,
        splats,
        offsets,
        entries,
        n_contrib,
        final_t,
    };
    (out, cache)
}

impl RenderOutput {
    pub fn empty(w: usize, h: usize) -> Self {
        RenderOutput {
            color: Grid::fill(w, h, Vector3::zeros()),
            depth: Grid::fill(w, h, 0.0),
            alpha: Grid::fill(w, h, 0.0),
        }
    }

    /// Binary silhouette at the conventional 0.5 threshold.
    pub fn binary_silhouette(&self) -> crate::grid::Mask {
        self.alpha.map(|&a| a > 0.5)
    }
}
