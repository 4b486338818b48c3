use nalgebra::{Matrix3, Point3, Rotation3, Unit, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-9;

/// Rigid transform mapping model coordinates into the camera frame (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseJson", into = "PoseJson")]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Wire format: row-major rotation and translation in mm.
#[derive(Serialize, Deserialize)]
struct PoseJson {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl TryFrom<PoseJson> for Pose {
    type Error = Error;

    fn try_from(json: PoseJson) -> Result<Self> {
        let r = Matrix3::from_row_slice(&json.rotation);
        Pose::new(r, Vector3::from(json.translation))
    }
}

impl From<Pose> for PoseJson {
    fn from(p: Pose) -> Self {
        let mut rotation = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                rotation[r * 3 + c] = p.rotation[(r, c)];
            }
        }
        PoseJson {
            rotation,
            translation: p.translation.into(),
        }
    }
}

impl Pose {
    /// Checked constructor: the rotation must be orthonormal with det = +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite entry".into()));
        }
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.iter().any(|v| v.abs() > ORTHO_TOL) {
            return Err(Error::InvalidPose("rotation is not orthonormal".into()));
        }
        if (rotation.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(Error::InvalidPose("rotation determinant is not +1".into()));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation of `angle` radians about `axis` followed by translation `t`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, t: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Pose {
            rotation: *rotation.matrix(),
            translation: t,
        }
    }

    pub(crate) fn from_quaternion(q: UnitQuaternion<f64>, t: Vector3<f64>) -> Self {
        Pose {
            rotation: *q.to_rotation_matrix().matrix(),
            translation: t,
        }
    }

    /// Uniformly distributed rotation (Shoemake) with the given translation.
    pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, t: Vector3<f64>) -> Self {
        let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let tau = std::f64::consts::TAU;
        let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
        let q = nalgebra::Quaternion::new(
            b * (tau * u3).cos(),
            a * (tau * u2).sin(),
            a * (tau * u2).cos(),
            b * (tau * u3).sin(),
        );
        Pose::from_quaternion(UnitQuaternion::from_quaternion(q), t)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Same pose with both rotation and translation expressed in a frame
    /// scaled by `factor` (only the translation changes).
    pub fn scaled(&self, factor: f64) -> Pose {
        Pose {
            rotation: self.rotation,
            translation: self.translation * factor,
        }
    }

    /// Rotation angle in radians between two poses.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Trusted constructor for rotations produced by SVD/quaternion routines.
    pub(crate) fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]`
/// (centroid alignment + SVD, determinant-corrected against reflections).
/// Returns `None` for fewer than three pairs or a degenerate SVD.
pub fn fit_rigid(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Option<Pose> {
    let n = src.len();
    if n < 3 || dst.len() != n {
        return None;
    }
    let inv = 1.0 / n as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) * inv;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) * inv;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    fit_from_covariance(h, cs, cd)
}

/// Weighted-free variant operating on an accumulated cross-covariance.
pub(crate) fn fit_from_covariance(
    h: Matrix3<f64>,
    src_centroid: Vector3<f64>,
    dst_centroid: Vector3<f64>,
) -> Option<Pose> {
    let svd = h.try_svd(true, true, f64::EPSILON, 0)?;
    let u = svd.u?;
    let v_t = svd.v_t?;
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let r = v * correction * u.transpose();
    if !r.iter().all(|x| x.is_finite()) {
        return None;
    }
    let t = dst_centroid - r * src_centroid;
    Some(Pose::from_parts(r, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn rejects_non_orthonormal() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::new(m, Vector3::zeros()).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(reflect, Vector3::zeros()).is_err());
    }

    #[test]
    fn quarter_turn_about_z() {
        let p = Pose::from_axis_angle(Vector3::z(), FRAC_PI_2, Vector3::zeros());
        let q = p.apply(&Point3::new(1.0, 0.0, 0.0));
        assert!((q - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn random_rotations_are_valid() {
        let mut rng = seed::rng(3);
        for _ in 0..100 {
            let p = Pose::random_rotation(&mut rng, Vector3::new(1.0, 2.0, 3.0));
            Pose::new(*p.rotation(), *p.translation()).unwrap();
            let back = p.compose(&p.inverse());
            assert!((back.rotation() - Matrix3::identity()).norm() < 1e-12);
            assert!(back.translation().norm() < 1e-12);
        }
    }

    #[test]
    fn json_is_row_major() {
        let p = Pose::from_axis_angle(Vector3::z(), FRAC_PI_2, Vector3::new(1.0, 2.0, 3.0));
        let v: serde_json::Value = serde_json::to_value(p).unwrap();
        let r = v["rotation"].as_array().unwrap();
        // row 0 of Rz(90°) is (0, -1, 0)
        assert!((r[1].as_f64().unwrap() + 1.0).abs() < 1e-12);
        let back: Pose = serde_json::from_value(v).unwrap();
        assert!((back.rotation() - p.rotation()).norm() < 1e-15);
    }

    #[test]
    fn rigid_fit_recovers_exact_transform() {
        let mut rng = seed::rng(11);
        let truth = Pose::random_rotation(&mut rng, Vector3::new(10.0, -5.0, 400.0));
        let src = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(30.0, 0.0, 0.0),
            Point3::new(0.0, 20.0, 5.0),
        ];
        let dst: Vec<_> = src.iter().map(|p| truth.apply(p)).collect();
        let fit = fit_rigid(&src, &dst).unwrap();
        assert!((fit.rotation() - truth.rotation()).norm() < 1e-9);
        assert!((fit.translation() - truth.translation()).norm() < 1e-9);
        assert!((fit.rotation().determinant() - 1.0).abs() < 1e-12);
    }
}
