use nalgebra::{Matrix3, Matrix4, Rotation3, Translation3, UnitQuaternion, Vector3, Vector6};

/// Rigid body transform `p ↦ R·p + t`.
///
/// Used for the LiDAR-to-camera extrinsic as well as for scan poses. The
/// rotation is stored as a unit quaternion and re-normalized after every
/// composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: renormalize(rotation),
            translation,
        }
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Builds a transform from a rotation vector (axis × angle) and a translation.
    pub fn from_rotation_vector(rotvec: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::from_scaled_axis(rotvec), translation)
    }

    /// Builds a transform from a rotation matrix. The matrix is projected onto SO(3).
    pub fn from_matrix_parts(rotation: &Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let rot = Rotation3::from_matrix(rotation);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = self.rotation.inverse();
        RigidTransform::new(inv, -(inv * self.translation))
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn to_isometry(&self) -> nalgebra::Isometry3<f64> {
        nalgebra::Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    /// Applies a local update on the left: rotation by `delta[3..6]` (rotation
    /// vector) followed by translation by `delta[0..3]`.
    pub fn perturbed_left(&self, delta: &Vector6<f64>) -> RigidTransform {
        let upd = RigidTransform::from_rotation_vector(
            Vector3::new(delta[3], delta[4], delta[5]),
            Vector3::new(delta[0], delta[1], delta[2]),
        );
        upd.compose(self)
    }

    /// Rotation angle of the relative rotation `self⁻¹·other`, in radians.
    pub fn rotation_error(&self, other: &RigidTransform) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    pub fn translation_error(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Quaternion slerp for rotation, linear interpolation for translation.
    pub fn interpolate(&self, other: &RigidTransform, s: f64) -> RigidTransform {
        let rotation = self
            .rotation
            .try_slerp(&other.rotation, s, 1e-12)
            .unwrap_or(self.rotation);
        RigidTransform::new(rotation, self.translation.lerp(&other.translation, s))
    }

    /// Translation and rotation-vector parts as `[tx, ty, tz, rx, ry, rz]`.
    pub fn to_vector(&self) -> Vector6<f64> {
        let r = self.rotation.scaled_axis();
        Vector6::new(
            self.translation.x,
            self.translation.y,
            self.translation.z,
            r.x,
            r.y,
            r.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> RigidTransform {
        RigidTransform::from_rotation_vector(Vector3::new(v[3], v[4], v[5]), Vector3::new(v[0], v[1], v[2]))
    }
}

impl std::ops::Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn apply_examples() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(RigidTransform::identity().apply(&p), p);

        let rz = RigidTransform::from_rotation(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2));
        assert_relative_eq!(rz.apply(&Vector3::x()), Vector3::y(), epsilon = 1e-12);

        let tx = RigidTransform::from_translation(Vector3::new(0.1, 0.0, 0.0));
        assert_relative_eq!(tx.apply(&p), Vector3::new(1.1, 2.0, 3.0), epsilon = 1e-12);
    }

    #[test]
    fn interpolation_midpoint() {
        let a = RigidTransform::identity();
        let b = RigidTransform::from_rotation(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2));
        let mid = a.interpolate(&b, 0.5);
        assert_relative_eq!(mid.rotation.angle(), FRAC_PI_2 / 2.0, epsilon = 1e-12);
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (prop::array::uniform3(-3.0f64..3.0), prop::array::uniform3(-10.0f64..10.0)).prop_map(|(r, t)| {
            RigidTransform::from_rotation_vector(Vector3::from(r), Vector3::from(t))
        })
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(t in arb_transform()) {
            let m = t.compose(&t.inverse()).matrix();
            prop_assert!((m - Matrix4::identity()).norm() < 1e-9);
            prop_assert!((t.rotation.into_inner().norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn apply_respects_composition(a in arb_transform(), b in arb_transform(), p in prop::array::uniform3(-5.0f64..5.0)) {
            let p = Vector3::from(p);
            let lhs = a.compose(&b).apply(&p);
            let rhs = a.apply(&b.apply(&p));
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }
    }
}
