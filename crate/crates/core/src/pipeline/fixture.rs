//! Writes a complete synthetic calibration dataset: scans, camera image,
//! intrinsics, matcher output with injected outliers, ground truth and a
//! ready-to-run configuration.

use std::path::{Path, PathBuf};

use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_json, PairInput, PipelineConfig, TransformJson};
use crate::cloud::{load_cloud, save_cloud, PointCloud};
use crate::correspondence::{CorrespondenceFile, MatchEntry, MatchSource};
use crate::error::{Error, Result};
use crate::geom::{CameraModel, EquirectCamera, PinholeCamera, RigidTransform};
use crate::synthetic::{default_extrinsic, render_camera, sample_lidar, ImageStyle, Scene};
use crate::virtual_camera::{estimate_fov, render_intensity, select_virtual_camera, VirtualCameraConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureCamera {
    Pinhole,
    Equirectangular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub camera: FixtureCamera,
    pub points: usize,
    /// The LiDAR cloud is split across this many scan files.
    pub scans: usize,
    pub matches: usize,
    pub outlier_fraction: f64,
    pub pixel_noise: f64,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            camera: FixtureCamera::Pinhole,
            points: 150_000,
            scans: 2,
            matches: 100,
            outlier_fraction: 0.4,
            pixel_noise: 1.0,
            seed: 1,
        }
    }
}

impl FixtureSpec {
    pub fn camera_model(&self) -> CameraModel {
        match self.camera {
            FixtureCamera::Pinhole => PinholeCamera::new(400.0, 400.0, 320.0, 240.0, 640, 480)
                .expect("valid intrinsics")
                .into(),
            FixtureCamera::Equirectangular => EquirectCamera::new(1024, 512).expect("2:1").into(),
        }
    }

    fn lidar_half_angle(&self) -> f64 {
        match self.camera {
            FixtureCamera::Pinhole => 70.0,
            FixtureCamera::Equirectangular => 180.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureTruth {
    #[serde(rename = "T_camera_lidar")]
    pub camera_from_lidar: TransformJson,
    pub outliers: usize,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub config_path: PathBuf,
    pub config: PipelineConfig,
    pub truth: RigidTransform,
}

/// Writes the dataset into `dir` and returns the loaded configuration.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<Fixture> {
    if spec.scans == 0 || spec.points < spec.scans {
        return Err(Error::Argument("fixture needs at least one point per scan".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let scene = Scene::textured_room();
    let cam = spec.camera_model();
    let truth = default_extrinsic();

    let cloud = sample_lidar(&scene, spec.points, spec.lidar_half_angle(), spec.seed);
    let mut scan_paths = Vec::new();
    for s in 0..spec.scans {
        let idx: Vec<usize> = (s..cloud.len()).step_by(spec.scans).collect();
        let part = PointCloud::new(
            idx.iter().map(|&i| cloud.points[i]).collect(),
            idx.iter().map(|&i| cloud.intensities[i]).collect(),
        )?;
        let name = format!("scan{s}.ply");
        save_cloud(dir.join(&name), &part)?;
        scan_paths.push(PathBuf::from(name));
    }

    render_camera(&scene, &cam, &truth, ImageStyle::default()).save_png16(dir.join("camera.png"))?;
    cam.save_json(dir.join("camera.json"))?;

    // the matcher sees the same virtual rendering the pipeline will produce
    let mut scans = Vec::new();
    for p in &scan_paths {
        scans.push(load_cloud(dir.join(p))?.0);
    }
    let dense = crate::cloud::accumulate_static(&scans)?;
    let fov = estimate_fov(&dense)?;
    let vcam = select_virtual_camera(fov.degrees, &dense, &VirtualCameraConfig::default())?;
    let (_, map) = render_intensity(&dense, &vcam);
    let matches = synthesize_matches(&scene, &dense, &cam, &truth, &vcam.model, &map, spec);
    let outliers = matches.iter().filter(|(_, inlier)| !inlier).count();
    CorrespondenceFile {
        source: MatchSource::Superglue,
        matcher_threshold: Some(0.05),
        matches: matches.into_iter().map(|(m, _)| m).collect(),
    }
    .save(dir.join("correspondences.json"))?;

    write_json(
        &dir.join("truth.json"),
        &FixtureTruth {
            camera_from_lidar: (&truth).into(),
            outliers,
        },
    )?;

    let config = PipelineConfig {
        camera: "camera.json".into(),
        pairs: vec![PairInput {
            clouds: scan_paths,
            image: "camera.png".into(),
            correspondences: Some("correspondences.json".into()),
        }],
        mode: Default::default(),
        output_dir: "out".into(),
        seed: 42,
        ransac: Default::default(),
        fine: Default::default(),
        ivox: Default::default(),
        virtual_camera: Default::default(),
        initial_transform: None,
    };
    let config_path = dir.join("config.json");
    config.save(&config_path)?;
    Ok(Fixture {
        config: PipelineConfig::load(&config_path)?,
        config_path,
        truth,
    })
}

/// Matches between filled LiDAR-image pixels and camera pixels. Inliers use
/// points the camera actually sees, projected with Gaussian noise; outliers
/// get uniformly random camera pixels.
fn synthesize_matches(
    scene: &Scene,
    cloud: &PointCloud,
    cam: &CameraModel,
    truth: &RigidTransform,
    lidar_cam: &CameraModel,
    map: &crate::virtual_camera::IndexMap,
    spec: &FixtureSpec,
) -> Vec<(MatchEntry, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5EED);
    let noise = Normal::new(0.0, spec.pixel_noise.max(0.0)).expect("sigma");
    let camera_center = truth.inverse().translation;
    let n_out = (spec.matches as f64 * spec.outlier_fraction).round() as usize;
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < spec.matches && attempts < 1000 * spec.matches {
        attempts += 1;
        let (c, r) = (rng.random_range(0..map.width), rng.random_range(0..map.height));
        let Some(idx) = map.get(c, r) else { continue };
        let p = cloud.points[idx];
        let centre = lidar_cam.pixel_center(c, r);
        let lidar_px = [centre.x + rng.random_range(-0.3..0.3), centre.y + rng.random_range(-0.3..0.3)];
        let inlier = out.len() >= n_out;
        let camera_px = if inlier {
            let Some(px) = cam.project(&truth.apply(&p)) else { continue };
            if !scene.visible_from(&camera_center, &p, 1e-6) {
                continue;
            }
            let px = px + nalgebra::Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
            px
        } else {
            Point2::new(
                rng.random_range(0.0..cam.width() as f64 - 1.0),
                rng.random_range(0.0..cam.height() as f64 - 1.0),
            )
        };
        if !cam.contains(&camera_px) || !in_bounds(cam, &camera_px) {
            continue;
        }
        out.push((
            MatchEntry {
                camera_px: [camera_px.x, camera_px.y],
                lidar_px: Some(lidar_px),
                lidar_point: None,
                confidence: if inlier { rng.random_range(0.5..1.0) } else { rng.random_range(0.05..0.6) },
            },
            inlier,
        ));
    }
    out
}

fn in_bounds(cam: &CameraModel, px: &Point2<f64>) -> bool {
    px.x >= 0.0 && px.y >= 0.0 && px.x < cam.width() as f64 && px.y < cam.height() as f64
}
