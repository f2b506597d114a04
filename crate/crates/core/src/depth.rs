//! Per-pixel minimum-range depth test shared by rendering and hidden point removal.

use nalgebra::Vector3;

use crate::geom::{CameraModel, RigidTransform};

/// Marker for a pixel with no point.
pub const EMPTY: i32 = -1;

/// Projects `points` through `cam` posed at `camera_from_points` and returns,
/// for every pixel in row-major order, the index of the point with the
/// smallest camera-frame range (ties go to the lower index), or [`EMPTY`].
pub fn depth_test(points: &[Vector3<f64>], cam: &CameraModel, camera_from_points: &RigidTransform) -> Vec<i32> {
    let w = cam.width() as usize;
    let n_px = w * cam.height() as usize;
    let mut best = vec![EMPTY; n_px];
    let mut depth = vec![f64::INFINITY; n_px];
    for (i, p) in points.iter().enumerate() {
        let pc = camera_from_points.apply(p);
        let Some(px) = cam.project(&pc) else { continue };
        let Some((col, row)) = cam.pixel_of(&px) else { continue };
        let k = row as usize * w + col as usize;
        let range = pc.norm();
        // strict comparison keeps the earlier (lower) index on exact ties
        if range < depth[k] {
            depth[k] = range;
            best[k] = i as i32;
        }
    }
    best
}
