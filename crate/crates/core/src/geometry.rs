//! 3-vector, rotation, rigid and similarity transform arithmetic.
//!
//! Rotations are unit quaternions; matrices are produced on demand. A
//! [`Sim3`] acts on points as `s * R * p + t`.

use nalgebra::{Matrix3, Matrix4, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// A point or free vector in world units (meters).
pub type Vec3 = Vector3<f64>;

/// A proper rotation in 3D.
pub type RotationSO3 = UnitQuaternion<f64>;

/// A rigid camera pose (camera-to-world).
pub type PoseSE3 = nalgebra::Isometry3<f64>;

/// Default absolute tolerance for geometric identities.
pub const GEOMETRY_TOLERANCE: f64 = 1e-9;

/// Similarity transform `p -> s * R * p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sim3 {
    pub scale: f64,
    pub rotation: RotationSO3,
    pub translation: Vec3,
}

impl Default for Sim3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Sim3 {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: RotationSO3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// # Panics
    ///
    /// Panics if `scale` is not a finite positive number.
    pub fn new(scale: f64, rotation: RotationSO3, translation: Vec3) -> Self {
        assert!(
            scale.is_finite() && scale > 0.0,
            "similarity scale must be finite and positive, got {scale}"
        );
        Self {
            scale,
            rotation,
            translation,
        }
    }

    pub fn from_scale(scale: f64) -> Self {
        Self::new(scale, RotationSO3::identity(), Vec3::zeros())
    }

    pub fn from_rigid(pose: &PoseSE3) -> Self {
        Self::new(1.0, pose.rotation, pose.translation.vector)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    /// Acts on a free vector: translation does not apply.
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.scale * (self.rotation * v)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Sim3) -> Sim3 {
        Sim3 {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Sim3 {
        let inv_rot = self.rotation.inverse();
        let inv_scale = 1.0 / self.scale;
        Sim3 {
            scale: inv_scale,
            rotation: inv_rot,
            translation: -(inv_scale * (inv_rot * self.translation)),
        }
    }

    /// The same linear part with the translation dropped.
    pub fn linear_part(&self) -> Sim3 {
        Sim3 {
            translation: Vec3::zeros(),
            ..*self
        }
    }

    /// Maps a camera pose through the transform: the camera center moves as a
    /// point and the orientation is pre-multiplied by the rotation. Scale does
    /// not enter the orientation.
    pub fn apply_pose(&self, pose: &PoseSE3) -> PoseSE3 {
        let center = self.apply(&pose.translation.vector);
        PoseSE3::from_parts(Translation3::from(center), self.rotation * pose.rotation)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        let sr: Matrix3<f64> = self.scale * self.rotation.to_rotation_matrix().into_inner();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&sr);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Geodesic interpolation: log-scale and translation linear, rotation slerp.
    pub fn interpolate(&self, other: &Sim3, t: f64) -> Sim3 {
        let log_s = (1.0 - t) * self.scale.ln() + t * other.scale.ln();
        Sim3 {
            scale: log_s.exp(),
            rotation: self.rotation.slerp(&other.rotation, t),
            translation: self.translation.lerp(&other.translation, t),
        }
    }

    pub fn approx_eq(&self, other: &Sim3, tol: f64) -> bool {
        (self.scale - other.scale).abs() <= tol
            && self.rotation.angle_to(&other.rotation) <= tol
            && (self.translation - other.translation).norm() <= tol
    }
}

pub fn apply_sim3(t: &Sim3, p: &Vec3) -> Vec3 {
    t.apply(p)
}

pub fn compose_sim3(a: &Sim3, b: &Sim3) -> Sim3 {
    a.compose(b)
}

/// The segment vector `p2 - p1`.
pub fn segment_vector(p1: &Vec3, p2: &Vec3) -> Vec3 {
    p2 - p1
}

/// Rotation about the world z axis.
pub fn rot_z(angle: f64) -> RotationSO3 {
    RotationSO3::from_axis_angle(&Vec3::z_axis(), angle)
}

/// Checks the orthonormality and handedness of a rotation matrix.
pub fn is_rotation_matrix(m: &Matrix3<f64>, tol: f64) -> bool {
    (m * m.transpose() - Matrix3::identity()).abs().max() <= tol
        && (m.determinant() - 1.0).abs() <= tol
}
