//! LiDAR field-of-view estimation and virtual-camera rendering of the
//! densified cloud into an intensity image plus a point-index map.

use std::path::Path;

use nalgebra::{Matrix3, Point2, UnitQuaternion, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cloud::{GrayImage, PointCloud};
use crate::depth::{depth_test, EMPTY};
use crate::error::{Error, Result};
use crate::geom::{angle_between, CameraModel, EquirectCamera, PinholeCamera, RigidTransform};
use crate::hull::convex_hull_vertices;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovEstimate {
    pub degrees: f64,
    /// Number of points the pairwise search ran over.
    pub candidates: usize,
    /// The cloud was degenerate and a random subsample was searched instead of the hull.
    pub fallback: bool,
}

const FALLBACK_SAMPLES: usize = 1000;

fn max_pairwise_angle(dirs: &[Vector3<f64>]) -> f64 {
    (0..dirs.len())
        .into_par_iter()
        .map(|i| {
            dirs[i + 1..]
                .iter()
                .map(|d| angle_between(&dirs[i], d))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Estimates the LiDAR field of view as the largest angle between the
/// bearings of any two convex-hull vertices of the cloud.
pub fn estimate_fov(cloud: &PointCloud) -> Result<FovEstimate> {
    let points = &cloud.points;
    let (indices, fallback) = match convex_hull_vertices(points) {
        Some(v) => (v, false),
        None => {
            if points.len() < 2 {
                return Err(Error::Argument("field-of-view estimation needs at least two points".into()));
            }
            log::warn!("degenerate cloud for convex hull; estimating FoV from a random subsample");
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let n = points.len().min(FALLBACK_SAMPLES);
            (sample(&mut rng, points.len(), n).into_vec(), true)
        }
    };
    let dirs: Vec<Vector3<f64>> = indices
        .iter()
        .filter_map(|&i| {
            let n = points[i].norm();
            (n > 1e-9).then(|| points[i] / n)
        })
        .collect();
    Ok(FovEstimate {
        degrees: max_pairwise_angle(&dirs).to_degrees(),
        candidates: dirs.len(),
        fallback,
    })
}

/// A rendering camera placed in the LiDAR frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualCamera {
    pub model: CameraModel,
    pub camera_from_lidar: RigidTransform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualCameraConfig {
    /// Below this FoV a pinhole camera is used; at or above it, equirectangular.
    pub pinhole_max_fov_deg: f64,
    pub pinhole_size: u32,
    pub equirect_width: u32,
    /// Factor applied to the FoV so hull-extreme points stay off the border.
    pub fov_margin: f64,
}

impl Default for VirtualCameraConfig {
    fn default() -> Self {
        Self {
            pinhole_max_fov_deg: 150.0,
            pinhole_size: 1024,
            equirect_width: 1920,
            fov_margin: 1.05,
        }
    }
}

/// Rotation taking `forward` to the camera's +z axis while keeping `up`
/// as close to the camera's −y axis as possible.
fn look_rotation(forward: &Vector3<f64>, up: &Vector3<f64>) -> UnitQuaternion<f64> {
    let z = forward.normalize();
    let mut x = z.cross(up);
    if x.norm() < 1e-6 {
        x = z.cross(&Vector3::x());
        if x.norm() < 1e-6 {
            x = z.cross(&Vector3::y());
        }
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let m = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    UnitQuaternion::from_matrix(&m)
}

/// Chooses the virtual camera for rendering a cloud with the given FoV.
///
/// A pinhole camera looks along the cloud's mean bearing, with its focal
/// length set so the image diagonal spans the FoV plus the margin. The
/// equirectangular camera looks along LiDAR +x with LiDAR +z up.
pub fn select_virtual_camera(fov_deg: f64, cloud: &PointCloud, cfg: &VirtualCameraConfig) -> Result<VirtualCamera> {
    if !(fov_deg > 0.0 && fov_deg <= 180.0) {
        return Err(Error::Argument(format!("field of view {fov_deg}° outside (0, 180]")));
    }
    let up = Vector3::z();
    if fov_deg < cfg.pinhole_max_fov_deg {
        let mean = cloud
            .points
            .iter()
            .filter_map(|p| {
                let n = p.norm();
                (n > 1e-9).then(|| p / n)
            })
            .fold(Vector3::zeros(), |a, b| a + b);
        let forward = if mean.norm() > 1e-9 { mean } else { Vector3::x() };
        let s = cfg.pinhole_size;
        let half_diag = (2.0f64).sqrt() * s as f64 / 2.0;
        let half_angle = (fov_deg * cfg.fov_margin / 2.0).min(89.0).to_radians();
        let f = half_diag / half_angle.tan();
        let c = s as f64 / 2.0;
        Ok(VirtualCamera {
            model: PinholeCamera::new(f, f, c, c, s, s)?.into(),
            camera_from_lidar: RigidTransform::from_rotation(look_rotation(&forward, &up)),
        })
    } else {
        Ok(VirtualCamera {
            model: EquirectCamera::new(cfg.equirect_width, cfg.equirect_width / 2)?.into(),
            camera_from_lidar: RigidTransform::from_rotation(look_rotation(&Vector3::x(), &up)),
        })
    }
}

/// Per-pixel index into the rendered cloud (`None` for empty pixels).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    pub width: u32,
    pub height: u32,
    indices: Vec<i32>,
}

impl IndexMap {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            indices: vec![EMPTY; width as usize * height as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, indices: Vec<i32>) -> Result<Self> {
        if indices.len() != width as usize * height as usize {
            return Err(Error::Argument("index map size mismatch".into()));
        }
        Ok(Self { width, height, indices })
    }

    pub fn get(&self, col: u32, row: u32) -> Option<usize> {
        if col >= self.width || row >= self.height {
            return None;
        }
        let v = self.indices[row as usize * self.width as usize + col as usize];
        (v >= 0).then_some(v as usize)
    }

    pub fn raw(&self) -> &[i32] {
        &self.indices
    }

    pub fn filled(&self) -> usize {
        self.indices.iter().filter(|&&v| v >= 0).count()
    }

    /// Nearest filled pixel within the 3×3 window around `(col, row)`, or
    /// `None`. Distances are measured from the continuous coordinate `at`.
    pub fn lookup_window(&self, cam: &CameraModel, at: &Point2<f64>) -> Option<usize> {
        let (c0, r0) = cam.pixel_of(at)?;
        let mut best: Option<(f64, usize)> = None;
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (c, r) = (c0 as i64 + dc, r0 as i64 + dr);
                if c < 0 || r < 0 {
                    continue;
                }
                let Some(idx) = self.get(c as u32, r as u32) else { continue };
                let d = (cam.pixel_center(c as u32, r as u32) - at).norm();
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, idx));
                }
            }
        }
        best.map(|(_, i)| i)
    }

    /// Binary layout: width and height as u32 LE, then one i32 LE per pixel
    /// (row-major, −1 for empty).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.indices.len());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for v in &self.indices {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Format("index map shorter than its header".into()));
        }
        let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let n = width as usize * height as usize;
        if bytes.len() != 8 + 4 * n {
            return Err(Error::Format(format!(
                "index map of {width}x{height} needs {} bytes, found {}",
                8 + 4 * n,
                bytes.len()
            )));
        }
        let indices = bytes[8..]
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { width, height, indices })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Renders each point's intensity into the virtual image; per pixel the
/// point nearest to the camera wins. No interpolation or hole filling.
pub fn render_intensity(cloud: &PointCloud, vcam: &VirtualCamera) -> (GrayImage, IndexMap) {
    let (w, h) = (vcam.model.width(), vcam.model.height());
    let indices = depth_test(&cloud.points, &vcam.model, &vcam.camera_from_lidar);
    let pixels = indices
        .iter()
        .map(|&i| if i >= 0 { cloud.intensities[i as usize] } else { 0.0 })
        .collect();
    (
        GrayImage::from_pixels(w, h, pixels).expect("size matches"),
        IndexMap::from_raw(w, h, indices).expect("size matches"),
    )
}
