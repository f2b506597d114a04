//! Procedural scenes with known ground truth.
//!
//! A scene is a set of axis-aligned boxes (one of them usually the room
//! interior) carrying a deterministic intensity texture. LiDAR scans and
//! camera images are produced by ray casting the same scene, so every
//! calibration stage can be checked against an exact reference.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Point2, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use rayon::prelude::*;

use crate::cloud::{GrayImage, PointCloud};
use crate::geom::{CameraModel, RigidTransform};

const HIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneBox {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
    /// The ray is expected to start inside the box and hit its walls.
    pub interior: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub point: Vector3<f64>,
    pub surface: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub boxes: Vec<SceneBox>,
    /// Edge length of the random-gray texture cells.
    pub cell_size: f64,
    pub seed: u64,
    /// When set, the texture varies only along this direction.
    pub stripes: Option<Vector3<f64>>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn hash01(i: i64, j: i64, k: i64, seed: u64) -> f64 {
    let h = splitmix(splitmix(splitmix(seed ^ i as u64) ^ j as u64) ^ k as u64);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

impl Scene {
    /// Room of 10 × 8 × 3.5 m around the origin (z up, origin 1.5 m above the
    /// floor) with a pillar and a few blocks of furniture.
    pub fn textured_room() -> Self {
        let b = |min: [f64; 3], max: [f64; 3]| SceneBox {
            min: Vector3::from(min),
            max: Vector3::from(max),
            interior: false,
        };
        Scene {
            boxes: vec![
                SceneBox {
                    min: Vector3::new(-5.0, -4.0, -1.5),
                    max: Vector3::new(5.0, 4.0, 2.0),
                    interior: true,
                },
                b([1.8, -0.25, -1.5], [2.2, 0.15, 2.0]),
                b([3.0, 1.2, -1.5], [4.2, 2.6, -0.6]),
                b([2.5, -3.0, -1.5], [3.5, -1.8, 0.3]),
                b([-3.5, 2.0, -1.5], [-2.0, 3.2, -0.2]),
                b([-1.0, -3.6, -1.5], [0.5, -2.8, 1.0]),
            ],
            cell_size: 0.3,
            seed: 7,
            stripes: None,
        }
    }

    /// A single textured plane `x = distance` spanning ±`half_extent`, seen
    /// from the origin. Everything else is empty.
    pub fn wall(distance: f64, half_extent: f64) -> Self {
        Scene {
            boxes: vec![SceneBox {
                min: Vector3::new(distance, -half_extent, -half_extent),
                max: Vector3::new(distance + 0.1, half_extent, half_extent),
                interior: false,
            }],
            cell_size: 0.3,
            seed: 11,
            stripes: None,
        }
    }

    pub fn with_stripes(self, direction: Vector3<f64>) -> Self {
        Scene {
            stripes: Some(direction.normalize()),
            ..self
        }
    }

    /// Applies a rigid motion to the whole scene by rotating a copy of its
    /// boxes; only axis-aligned rotations keep boxes axis-aligned, so this
    /// accepts a permutation-with-signs matrix.
    pub fn transformed_axes(&self, axes: &Matrix3<f64>) -> Self {
        let boxes = self
            .boxes
            .iter()
            .map(|b| {
                let a = axes * b.min;
                let c = axes * b.max;
                SceneBox {
                    min: a.inf(&c),
                    max: a.sup(&c),
                    interior: b.interior,
                }
            })
            .collect();
        Scene { boxes, ..self.clone() }
    }

    pub fn raycast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, b) in self.boxes.iter().enumerate() {
            let Some((tn, tf)) = slab(b, origin, dir) else { continue };
            let t = if b.interior {
                if tn <= HIT_EPS && tf > HIT_EPS {
                    tf
                } else {
                    continue;
                }
            } else if tn > HIT_EPS {
                tn
            } else {
                continue;
            };
            if best.is_none_or(|h| t < h.distance) {
                best = Some(Hit {
                    distance: t,
                    point: origin + dir * t,
                    surface: i,
                });
            }
        }
        best
    }

    /// Texture value in `[0, 1]` at a surface point: random-gray cells mixed
    /// with a smooth low-frequency pattern.
    pub fn intensity(&self, p: &Vector3<f64>, surface: usize) -> f64 {
        if let Some(a) = self.stripes {
            let s = p.dot(&a);
            let cell = hash01((s / self.cell_size).floor() as i64, 0, 0, self.seed.wrapping_add(surface as u64));
            let smooth = 0.5 + 0.5 * (2.0 * PI * s / 1.7 + 0.4).sin();
            return (0.6 * cell + 0.4 * smooth).clamp(0.0, 1.0);
        }
        let c = self.cell_size;
        let cell = hash01(
            (p.x / c).floor() as i64,
            (p.y / c).floor() as i64,
            (p.z / c).floor() as i64,
            self.seed.wrapping_add(surface as u64 * 1_000_003),
        );
        let smooth = 0.5
            + 0.25 * (2.0 * PI * p.x / 2.3 + 0.3).sin() * (2.0 * PI * p.y / 1.7 + 1.1).cos()
            + 0.25 * (2.0 * PI * (p.z + 0.5 * p.x - 0.3 * p.y) / 1.1).sin();
        (0.6 * cell + 0.4 * smooth).clamp(0.0, 1.0)
    }

    /// Whether `point` is the first surface hit when looking from `origin`.
    pub fn visible_from(&self, origin: &Vector3<f64>, point: &Vector3<f64>, tol: f64) -> bool {
        let d = point - origin;
        let range = d.norm();
        if range <= 0.0 {
            return false;
        }
        match self.raycast(origin, &(d / range)) {
            Some(h) => h.distance >= range - tol,
            None => true,
        }
    }
}

fn slab(b: &SceneBox, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, f64)> {
    let mut tn = f64::NEG_INFINITY;
    let mut tf = f64::INFINITY;
    for a in 0..3 {
        if d[a].abs() < 1e-300 {
            if o[a] < b.min[a] || o[a] > b.max[a] {
                return None;
            }
            continue;
        }
        let t1 = (b.min[a] - o[a]) / d[a];
        let t2 = (b.max[a] - o[a]) / d[a];
        tn = tn.max(t1.min(t2));
        tf = tf.min(t1.max(t2));
    }
    (tn <= tf).then_some((tn, tf))
}

/// Rotation taking a z-up, x-forward LiDAR frame to a z-forward, y-down camera frame.
pub fn lidar_to_camera_axes() -> UnitQuaternion<f64> {
    let m = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
    UnitQuaternion::from_matrix(&m)
}

/// Ground-truth extrinsic used by the fixtures: camera looking along LiDAR +x
/// with a small mounting offset and tilt.
pub fn default_extrinsic() -> RigidTransform {
    let tilt = UnitQuaternion::from_euler_angles(0.03, -0.02, 0.05);
    RigidTransform::new(tilt * lidar_to_camera_axes(), Vector3::new(0.06, -0.09, 0.12))
}

/// Returns `t` perturbed by exactly `translation` meters along a random
/// direction and `rotation_deg` degrees about a random axis (applied on the left).
pub fn perturb(t: &RigidTransform, translation: f64, rotation_deg: f64, seed: u64) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = Vector3::from(UnitSphere.sample(&mut rng));
    let axis = Vector3::from(UnitSphere.sample(&mut rng));
    let delta = RigidTransform::from_rotation_vector(axis * rotation_deg.to_radians(), dir * translation);
    delta.compose(t)
}

/// Samples `n` points by casting rays from the origin of the LiDAR frame in
/// uniformly random directions within `half_angle_deg` of +x.
pub fn sample_lidar(scene: &Scene, n: usize, half_angle_deg: f64, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cos_max = half_angle_deg.to_radians().cos();
    let mut points = Vec::with_capacity(n);
    let mut intensities = Vec::with_capacity(n);
    let origin = Vector3::zeros();
    while points.len() < n {
        // uniform on the spherical cap around +x
        let cz: f64 = rng.random_range(cos_max..=1.0);
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        let s = (1.0 - cz * cz).max(0.0).sqrt();
        let dir = Vector3::new(cz, s * phi.cos(), s * phi.sin());
        if let Some(h) = scene.raycast(&origin, &dir) {
            points.push(h.point);
            intensities.push(scene.intensity(&h.point, h.surface));
        }
    }
    PointCloud::new(points, intensities).expect("equal lengths")
}

/// Camera image rendering options.
#[derive(Debug, Clone, Copy)]
pub struct ImageStyle {
    /// Exponent of the monotone remap `v ↦ v^gamma`.
    pub gamma: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for ImageStyle {
    fn default() -> Self {
        Self {
            gamma: 0.6,
            noise: 0.02,
            seed: 3,
        }
    }
}

/// Ray-casts the scene through every pixel center of `cam` placed at
/// `camera_from_scene`.
pub fn render_camera(scene: &Scene, cam: &CameraModel, camera_from_scene: &RigidTransform, style: ImageStyle) -> GrayImage {
    let (w, h) = (cam.width(), cam.height());
    let scene_from_camera = camera_from_scene.inverse();
    let origin = scene_from_camera.translation;
    let noise = Normal::new(0.0, style.noise.max(0.0)).expect("non-negative sigma");
    let pixels: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|row| {
            let mut rng = ChaCha8Rng::seed_from_u64(style.seed);
            rng.set_stream(row as u64);
            (0..w)
                .map(|col| {
                    let px = cam.pixel_center(col, row);
                    let base = match cam.unproject(&px) {
                        Ok(b) => {
                            let dir = scene_from_camera.rotation * b.into_inner();
                            scene
                                .raycast(&origin, &dir)
                                .map_or(0.0, |hit| scene.intensity(&hit.point, hit.surface).powf(style.gamma))
                        }
                        Err(_) => 0.0,
                    };
                    let n: f64 = if style.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    (base + n).clamp(0.0, 1.0)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    GrayImage::from_pixels(w, h, pixels).expect("size matches")
}

/// A spinning multi-beam LiDAR scan sequence under constant-velocity motion.
#[derive(Debug, Clone)]
pub struct SpinningSequence {
    pub scans: Vec<PointCloud>,
    /// Ground-truth (begin, end) poses of each scan in the first scan's frame.
    pub poses: Vec<(RigidTransform, RigidTransform)>,
}

#[derive(Debug, Clone, Copy)]
pub struct SpinningConfig {
    pub rings: usize,
    pub columns: usize,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    /// Rotation vector per scan (rad).
    pub angular_velocity: Vector3<f64>,
    /// Translation per scan (m).
    pub linear_velocity: Vector3<f64>,
}

impl Default for SpinningConfig {
    fn default() -> Self {
        Self {
            rings: 32,
            columns: 512,
            min_elevation_deg: -22.5,
            max_elevation_deg: 22.5,
            // nodding: pitch plus a vertical drift
            angular_velocity: Vector3::new(0.0, 1.5f64.to_radians(), 0.4f64.to_radians()),
            linear_velocity: Vector3::new(0.01, 0.005, 0.02),
        }
    }
}

impl SpinningConfig {
    /// Sensor pose at time `tau`, measured in scans since the first scan began.
    pub fn pose_at(&self, tau: f64) -> RigidTransform {
        RigidTransform::from_rotation_vector(self.angular_velocity * tau, self.linear_velocity * tau)
    }
}

/// Simulates `n_scans` consecutive sweeps. Each point carries its normalized
/// capture time within its sweep.
pub fn spinning_sequence(scene: &Scene, n_scans: usize, cfg: &SpinningConfig) -> SpinningSequence {
    let mut scans = Vec::with_capacity(n_scans);
    let mut poses = Vec::with_capacity(n_scans);
    for k in 0..n_scans {
        let mut points = Vec::new();
        let mut intensities = Vec::new();
        let mut times = Vec::new();
        for col in 0..cfg.columns {
            let s = col as f64 / cfg.columns as f64;
            let az = 2.0 * PI * s;
            let pose = cfg.pose_at(k as f64 + s);
            for ring in 0..cfg.rings {
                let f = if cfg.rings > 1 { ring as f64 / (cfg.rings - 1) as f64 } else { 0.5 };
                let el = (cfg.min_elevation_deg + f * (cfg.max_elevation_deg - cfg.min_elevation_deg)).to_radians();
                let d = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
                let dir = pose.rotation * d;
                if let Some(h) = scene.raycast(&pose.translation, &dir) {
                    points.push(pose.inverse().apply(&h.point));
                    intensities.push(scene.intensity(&h.point, h.surface));
                    times.push(s);
                }
            }
        }
        scans.push(
            PointCloud::new(points, intensities)
                .and_then(|c| c.with_times(times))
                .expect("equal lengths"),
        );
        poses.push((cfg.pose_at(k as f64), cfg.pose_at(k as f64 + 1.0)));
    }
    SpinningSequence { scans, poses }
}

/// Synthetic matcher output: points sampled from `cloud`, each paired with
/// its ground-truth camera pixel plus Gaussian noise; a fraction of pairs is
/// replaced by uniformly random camera pixels.
pub fn synthetic_matches(
    cloud: &PointCloud,
    cam: &CameraModel,
    camera_from_lidar: &RigidTransform,
    count: usize,
    outlier_fraction: f64,
    pixel_noise: f64,
    seed: u64,
) -> Vec<(Point2<f64>, usize, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, pixel_noise.max(0.0)).expect("sigma");
    let n_out = (count as f64 * outlier_fraction).round() as usize;
    let mut out = Vec::with_capacity(count);
    let mut guard = 0;
    while out.len() < count && guard < 1000 * count.max(1) {
        guard += 1;
        let idx = rng.random_range(0..cloud.len());
        let Some(px) = cam.project(&camera_from_lidar.apply(&cloud.points[idx])) else { continue };
        if !cam.contains(&px) {
            continue;
        }
        let inlier = out.len() >= n_out;
        let px = if inlier {
            Point2::new(px.x + noise.sample(&mut rng), px.y + noise.sample(&mut rng))
        } else {
            Point2::new(
                rng.random_range(0.0..cam.width() as f64 - 1.0),
                rng.random_range(0.0..cam.height() as f64 - 1.0),
            )
        };
        if cam.contains(&px) {
            out.push((px, idx, inlier));
        }
    }
    out
}

/// A LiDAR cloud and camera image of the same scene with known extrinsic.
#[derive(Debug, Clone)]
pub struct CalibrationFixture {
    /// Equalized intensities.
    pub cloud: PointCloud,
    /// Equalized camera image.
    pub image: GrayImage,
    pub camera: CameraModel,
    pub camera_from_lidar: RigidTransform,
}

/// Samples `n_points` LiDAR returns within `half_angle_deg` of LiDAR +x and
/// renders the camera image at `camera_from_lidar`.
pub fn calibration_fixture(
    scene: &Scene,
    camera: CameraModel,
    camera_from_lidar: RigidTransform,
    n_points: usize,
    half_angle_deg: f64,
    seed: u64,
) -> CalibrationFixture {
    let cloud = sample_lidar(scene, n_points, half_angle_deg, seed).equalized();
    let image = render_camera(scene, &camera, &camera_from_lidar, ImageStyle::default()).equalized();
    CalibrationFixture {
        cloud,
        image,
        camera,
        camera_from_lidar,
    }
}
