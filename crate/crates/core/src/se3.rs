//! Rigid-body transforms on SE(3) and their tangent-space machinery.
//!
//! A [`Pose`] stores an explicit rotation matrix and translation vector and
//! acts on points as `R * x + t`. Tangent vectors ([`Twist`]) are ordered
//! translation first, rotation second. Every perturbation in this crate is
//! left-multiplicative, `T <- exp(delta) * T`, and the analytic Jacobians
//! below are written for that convention with points already expressed in
//! the camera frame.

use nalgebra::{Matrix3, Matrix3x6, SMatrix, UnitQuaternion, Vector3, Vector6};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Orthonormality tolerance re-established after composition/retraction.
pub const ROTATION_TOL: f64 = 1e-9;

/// Angles closer than this to pi make the principal log branch ill-defined.
pub const NEAR_PI_TOL: f64 = 1e-6;

const SMALL_ANGLE: f64 = 1e-5;

/// Rigid transform: `x_out = R * x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// se(3) tangent vector, translation block first.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Twist {
    pub translational: Vector3<f64>,
    pub rotational: Vector3<f64>,
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl Twist {
    pub fn new(translational: Vector3<f64>, rotational: Vector3<f64>) -> Self {
        Twist {
            translational,
            rotational,
        }
    }

    pub fn zero() -> Self {
        Twist::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Twist {
            translational: Vector3::new(v[0], v[1], v[2]),
            rotational: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.translational.x,
            self.translational.y,
            self.translational.z,
            self.rotational.x,
            self.rotational.y,
            self.rotational.z,
        )
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Build from parts; re-orthonormalizes if the rotation has drifted.
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let mut p = Pose {
            rotation,
            translation,
        };
        p.renormalize();
        p
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Pose::from_parts(rotation, Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_quaternion(&self) -> UnitQuaternion<f64> {
        let q = UnitQuaternion::from_matrix(&self.rotation);
        // Canonical sign: non-negative scalar part.
        if q.w < 0.0 {
            UnitQuaternion::new_unchecked(-q.into_inner())
        } else {
            q
        }
    }

    #[inline]
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut p = Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        };
        p.renormalize();
        p
    }

    /// Left-multiplicative retraction `exp(delta) * self`.
    pub fn retract(&self, delta: &Twist) -> Pose {
        exp_map(delta).compose(self)
    }

    /// Relative motion mapping `self`'s frame into `other`'s: `other ∘ self⁻¹`.
    pub fn relative_to(&self, other: &Pose) -> Pose {
        other.compose(&self.inverse())
    }

    /// Row-major 3x4 `[R | t]` flattening used by JSON and binary trajectories.
    pub fn to_matrix34(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }

    pub fn from_matrix34(m: &[f64; 12]) -> Result<Pose> {
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if err > 1e-6 || (rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "pose rotation block is not orthonormal (error {err:.3e})"
            )));
        }
        Ok(Pose::from_parts(rotation, translation))
    }

    fn renormalize(&mut self) {
        let e = (self.rotation.transpose() * self.rotation - Matrix3::identity())
            .abs()
            .max();
        if e > 1e-13 {
            self.rotation = orthonormalize(&self.rotation);
        }
    }

    /// Max deviation of `RᵀR` from identity; should stay below [`ROTATION_TOL`].
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity())
            .abs()
            .max()
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_matrix34().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = <[f64; 12]>::deserialize(d)?;
        Pose::from_matrix34(&m).map_err(D::Error::custom)
    }
}

/// Modified Gram-Schmidt with a determinant fix; keeps compositions on SO(3).
fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let c0 = m.column(0).normalize();
    let mut c1 = m.column(1) - c0 * m.column(1).dot(&c0);
    c1.normalize_mut();
    let c2 = c0.cross(&c1);
    Matrix3::from_columns(&[c0, c1, c2])
}

/// SE(3) exponential map.
pub fn exp_map(t: &Twist) -> Pose {
    let theta = t.rotational;
    let angle = theta.norm();
    let k = skew(&theta);
    let k2 = k * k;
    let (a, b, c) = if angle < SMALL_ANGLE {
        let a2 = angle * angle;
        (
            1.0 - a2 / 6.0,
            0.5 - a2 / 24.0,
            1.0 / 6.0 - a2 / 120.0,
        )
    } else {
        let a2 = angle * angle;
        (
            angle.sin() / angle,
            (1.0 - angle.cos()) / a2,
            (angle - angle.sin()) / (a2 * angle),
        )
    };
    let rotation = Matrix3::identity() + k * a + k2 * b;
    let v = Matrix3::identity() + k * b + k2 * c;
    Pose::from_parts(rotation, v * t.translational)
}

/// SE(3) logarithm, principal branch.
///
/// Fails with [`Error::AngleNearPi`] within [`NEAR_PI_TOL`] of a half-turn so
/// optimizers can re-seed instead of landing on an arbitrary branch.
pub fn log_map(p: &Pose) -> Result<Twist> {
    let r = p.rotation();
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let angle = cos.acos();
    if (std::f64::consts::PI - angle).abs() < NEAR_PI_TOL {
        return Err(Error::AngleNearPi(NEAR_PI_TOL));
    }
    let omega = if angle < SMALL_ANGLE {
        // R - Rᵀ ≈ 2 skew(omega) for small angles.
        Vector3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        ) * 0.5
    } else {
        Vector3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        ) * (angle / (2.0 * angle.sin()))
    };
    let k = skew(&omega);
    let k2 = k * k;
    let c = if angle < SMALL_ANGLE {
        1.0 / 12.0 + angle * angle / 720.0
    } else {
        let half = angle * 0.5;
        (1.0 - half * half.cos() / half.sin()) / (angle * angle)
    };
    let v_inv = Matrix3::identity() - k * 0.5 + k2 * c;
    Ok(Twist {
        translational: v_inv * p.translation(),
        rotational: omega,
    })
}

/// `d(exp(delta) · mu_cam) / d(delta)` at `delta = 0`: `[I | -skew(mu_cam)]`.
///
/// `mu_cam` must already be in the camera frame.
pub fn point_twist_jacobian(mu_cam: &Vector3<f64>) -> Matrix3x6<f64> {
    let mut j = Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(mu_cam)));
    j
}

/// Derivative of the rotation block under a left twist perturbation,
/// stacked per column: rows `3k..3k+3` hold `d(col_k(W)) / d(delta)`,
/// i.e. `[0 | -skew(col_k(W))]`.
pub fn rotation_twist_jacobian(rotation: &Matrix3<f64>) -> SMatrix<f64, 9, 6> {
    let mut j = SMatrix::<f64, 9, 6>::zeros();
    for k in 0..3 {
        let col: Vector3<f64> = rotation.column(k).into();
        j.fixed_view_mut::<3, 3>(3 * k, 3).copy_from(&(-skew(&col)));
    }
    j
}

/// Rotation angle between two poses, in `[0, pi]`.
pub fn geodesic_rotation_distance(a: &Pose, b: &Pose) -> f64 {
    let rel = a.rotation() * b.rotation().transpose();
    ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_twist(rng: &mut ChaCha8Rng, max_angle: f64) -> Twist {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let angle = rng.random_range(0.0..max_angle);
        Twist::new(
            Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ),
            axis * angle,
        )
    }

    pub(crate) fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
        exp_map(&random_twist(rng, PI - 0.1))
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let p = exp_map(&Twist::zero());
        assert_relative_eq!(p.rotation(), &Matrix3::identity(), epsilon = 1e-15);
        assert_relative_eq!(p.translation(), &Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn exp_quarter_turn_about_z() {
        let p = exp_map(&Twist::new(Vector3::zeros(), Vector3::new(0.0, 0.0, FRAC_PI_2)));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(p.rotation(), &expected, epsilon = 1e-12);
    }

    #[test]
    fn log_of_identity_is_zero() {
        let t = log_map(&Pose::identity()).unwrap();
        assert!(t.norm() < 1e-15);
    }

    #[test]
    fn log_of_quarter_turn() {
        let p = exp_map(&Twist::new(Vector3::zeros(), Vector3::new(0.0, 0.0, FRAC_PI_2)));
        let t = log_map(&p).unwrap();
        assert_relative_eq!(t.rotational, Vector3::new(0.0, 0.0, FRAC_PI_2), epsilon = 1e-12);
        assert!(t.translational.norm() < 1e-12);
    }

    #[test]
    fn log_exp_round_trip_1000_random_twists() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let t = random_twist(&mut rng, PI - 1e-3);
            let back = log_map(&exp_map(&t)).unwrap();
            assert!(
                (back.to_vector() - t.to_vector()).norm() < 1e-8,
                "round trip failed for {t:?}"
            );
        }
    }

    #[test]
    fn log_near_pi_is_an_error() {
        let t = Twist::new(Vector3::zeros(), Vector3::new(PI - 1e-9, 0.0, 0.0));
        assert!(matches!(log_map(&exp_map(&t)), Err(Error::AngleNearPi(_))));
    }

    #[test]
    fn compose_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = random_pose(&mut rng);
            let e = p.compose(&p.inverse());
            assert!((e.rotation() - Matrix3::identity()).abs().max() < 1e-9);
            assert!(e.translation().norm() < 1e-9);
        }
    }

    #[test]
    fn composition_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let (a, b, c) = (
                random_pose(&mut rng),
                random_pose(&mut rng),
                random_pose(&mut rng),
            );
            let lhs = a.compose(&b).compose(&c);
            let rhs = a.compose(&b.compose(&c));
            assert!((lhs.rotation() - rhs.rotation()).abs().max() < 1e-12);
            assert!((lhs.translation() - rhs.translation()).norm() < 1e-12);
        }
    }

    #[test]
    fn point_jacobian_matches_spec_blocks() {
        let j = point_twist_jacobian(&Vector3::zeros());
        assert_relative_eq!(
            j.fixed_view::<3, 3>(0, 0).into_owned(),
            Matrix3::identity(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            j.fixed_view::<3, 3>(0, 3).into_owned(),
            Matrix3::zeros(),
            epsilon = 1e-15
        );

        let j = point_twist_jacobian(&Vector3::new(1.0, 0.0, 0.0));
        let expected = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0);
        assert_relative_eq!(j.fixed_view::<3, 3>(0, 3).into_owned(), expected, epsilon = 1e-15);
    }

    #[test]
    fn point_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-6;
        for _ in 0..1000 {
            let mu = Vector3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            let j = point_twist_jacobian(&mu);
            for k in 0..6 {
                let mut dv = Vector6::zeros();
                dv[k] = h;
                let plus = exp_map(&Twist::from_vector(&dv)).transform(&mu);
                dv[k] = -h;
                let minus = exp_map(&Twist::from_vector(&dv)).transform(&mu);
                let fd = (plus - minus) / (2.0 * h);
                let analytic: Vector3<f64> = j.column(k).into();
                let scale = fd.norm().max(analytic.norm()).max(1e-9);
                assert!(
                    (fd - analytic).norm() / scale < 1e-5,
                    "col {k}: fd {fd:?} vs analytic {analytic:?}"
                );
            }
        }
    }

    #[test]
    fn rotation_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let h = 1e-6;
        for _ in 0..200 {
            let p = random_pose(&mut rng);
            let j = rotation_twist_jacobian(p.rotation());
            // Translational columns vanish.
            assert!(j.fixed_view::<9, 3>(0, 0).abs().max() == 0.0);
            for k in 0..6 {
                let mut dv = Vector6::zeros();
                dv[k] = h;
                let rp = *exp_map(&Twist::from_vector(&dv)).compose(&p).rotation();
                dv[k] = -h;
                let rm = *exp_map(&Twist::from_vector(&dv)).compose(&p).rotation();
                let fd = (rp - rm) / (2.0 * h);
                for col in 0..3 {
                    for row in 0..3 {
                        let analytic = j[(3 * col + row, k)];
                        let f = fd[(row, col)];
                        assert!(
                            (analytic - f).abs() / f.abs().max(analytic.abs()).max(1.0) < 1e-5,
                            "k={k} col={col} row={row}: {analytic} vs {f}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn geodesic_distance_basics() {
        let id = Pose::identity();
        assert_eq!(geodesic_rotation_distance(&id, &id), 0.0);
        let z90 = exp_map(&Twist::new(Vector3::zeros(), Vector3::new(0.0, 0.0, FRAC_PI_2)));
        assert_relative_eq!(geodesic_rotation_distance(&id, &z90), FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(
            geodesic_rotation_distance(&z90, &id),
            geodesic_rotation_distance(&id, &z90),
            epsilon = 1e-14
        );
    }

    #[test]
    fn geodesic_triangle_inequality_1000_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let (a, b, c) = (
                random_pose(&mut rng),
                random_pose(&mut rng),
                random_pose(&mut rng),
            );
            let ab = geodesic_rotation_distance(&a, &b);
            let bc = geodesic_rotation_distance(&b, &c);
            let ac = geodesic_rotation_distance(&a, &c);
            assert!(ac <= ab + bc + 1e-9);
        }
    }

    #[test]
    fn pose_serde_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let p = random_pose(&mut rng);
        let json = serde_json::to_string(&p).unwrap();
        let back: Pose = serde_json::from_str(&json).unwrap();
        assert!((back.rotation() - p.rotation()).abs().max() < 1e-12);
        assert!((back.translation() - p.translation()).norm() < 1e-12);
    }
}
