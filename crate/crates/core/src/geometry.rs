//! Geometric primitives shared by every stage of the pipeline.
//!
//! Points and directions are plain `nalgebra` types. Rotations are stored as
//! 3×3 matrices; axis-angle vectors only appear at the boundary (prediction,
//! pose-graph updates, reporting).

use nalgebra::{Matrix3, Matrix4, Unit, Vector3};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = Vector3<f64>;
pub type UnitVec3 = Unit<Vector3<f64>>;
pub type Rotation3 = nalgebra::Rotation3<f64>;

/// Skew-symmetric matrix such that `hat(a) * b == a.cross(&b)`.
pub fn hat(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula: rotation by `|w|` radians about `w / |w|`.
pub fn rotation_exp(w: &Vec3) -> Rotation3 {
    let theta2 = w.norm_squared();
    let k = hat(w);
    let (a, b) = if theta2 < 1e-12 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation3::from_matrix_unchecked(Matrix3::identity() + k * a + k * k * b)
}

/// Inverse of [`rotation_exp`], returning the rotation vector with angle in `[0, π]`.
pub fn rotation_log(r: &Rotation3) -> Vec3 {
    let m = r.matrix();
    let v = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5;
    let sin = v.norm();
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = sin.atan2(cos);
    if theta < 1e-6 {
        // First-order series; v = sinθ·axis.
        return v * (1.0 + theta * theta / 6.0);
    }
    if cos > -0.5 {
        return v * (theta / sin);
    }
    // Near π the antisymmetric part vanishes: recover the axis from the
    // symmetric part (1 - cosθ)·a·aᵀ, picking the best-conditioned column.
    let s = (m + m.transpose()) * 0.5 - Matrix3::identity() * cos;
    let mut col = 0;
    for i in 1..3 {
        if s[(i, i)] > s[(col, col)] {
            col = i;
        }
    }
    let mut axis: Vec3 = s.column(col).into();
    axis /= axis.norm();
    if axis.dot(&v) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Rotation angle in radians, in `[0, π]`.
pub fn rotation_angle(r: &Rotation3) -> f64 {
    rotation_log(r).norm()
}

/// Angle between two rotations in radians.
pub fn rotation_distance(a: &Rotation3, b: &Rotation3) -> f64 {
    rotation_angle(&(a.inverse() * b))
}

/// Rotation about the z axis by `deg` degrees.
pub fn rot_z_deg(deg: f64) -> Rotation3 {
    Rotation3::from_axis_angle(&Vec3::z_axis(), deg.to_radians())
}

/// Rotation from yaw/pitch/roll in degrees, applied as `Rz · Ry · Rx`.
pub fn rot_ypr_deg(yaw: f64, pitch: f64, roll: f64) -> Rotation3 {
    Rotation3::from_axis_angle(&Vec3::z_axis(), yaw.to_radians())
        * Rotation3::from_axis_angle(&Vec3::y_axis(), pitch.to_radians())
        * Rotation3::from_axis_angle(&Vec3::x_axis(), roll.to_radians())
}

/// Projects an arbitrary 3×3 matrix onto the nearest proper rotation.
pub fn orthonormalize(m: &Matrix3<f64>) -> Rotation3 {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    Rotation3::from_matrix_unchecked(u * d * v_t)
}

/// Checks `RᵀR = I` and `det R = +1` to within `tol` per entry.
pub fn is_rotation(m: &Matrix3<f64>, tol: f64) -> bool {
    let e = m.transpose() * m - Matrix3::identity();
    e.iter().all(|x| x.abs() <= tol) && (m.determinant() - 1.0).abs() <= tol
}

/// A proper rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Rotation3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation3::identity(), Vec3::zeros())
    }

    pub fn from_rotation(rotation: Rotation3) -> Self {
        Self::new(rotation, Vec3::zeros())
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Rotation3::identity(), translation)
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let r_inv = self.rotation.inverse();
        RigidTransform {
            rotation: r_inv,
            translation: -(r_inv * self.translation),
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Builds a transform from the top 3×4 block of a homogeneous matrix. The
    /// rotation block is re-projected onto SO(3) if it has drifted.
    pub fn from_matrix(m: &Matrix4<f64>) -> RigidTransform {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into();
        let rotation = if is_rotation(&r, 1e-12) {
            Rotation3::from_matrix_unchecked(r)
        } else {
            orthonormalize(&r)
        };
        RigidTransform::new(rotation, m.fixed_view::<3, 1>(0, 3).into())
    }

    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// Re-projects the rotation block onto SO(3).
    pub fn renormalized(&self) -> RigidTransform {
        RigidTransform::new(orthonormalize(self.rotation.matrix()), self.translation)
    }
}

/// `a ∘ b`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}
