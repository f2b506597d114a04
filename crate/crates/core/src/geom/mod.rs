//! Rigid transforms and camera projection models.

mod camera;
mod transform;

pub use camera::{Bearing, CameraFile, CameraModel, EquirectCamera, PinholeCamera, BEHIND_CAMERA_Z};
pub use transform::RigidTransform;

/// Angle between two vectors in radians, robust near 0 and π.
pub fn angle_between(a: &nalgebra::Vector3<f64>, b: &nalgebra::Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}
