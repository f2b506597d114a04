//! End-to-end calibration pipeline. Every stage reads its inputs from and
//! writes its outputs to the output directory, so stages can run one at a
//! time or all together with identical results.

mod config;
pub mod fixture;

use std::path::{Path, PathBuf};

use nalgebra::{Point2, Quaternion, UnitQuaternion, Vector3};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::cloud::{accumulate_static, load_cloud, save_cloud, GrayImage, PointCloud};
use crate::correspondence::{import_correspondences, CorrespondenceSet};
use crate::dynamic::{integrate_dynamic, DynamicConfig};
use crate::error::{Error, Result};
use crate::geom::{CameraFile, CameraModel, RigidTransform};
use crate::init_guess::{estimate_initial_guess, ransac_rotation, RefineParams};
use crate::overlay::{render_matches, render_overlay, MatchLine};
use crate::registration::{calibrate_fine, DataPair};
use crate::virtual_camera::{estimate_fov, render_intensity, select_virtual_camera, IndexMap, VirtualCamera};

pub use config::{FineSettings, IntegrationMode, IvoxSettings, PairInput, PipelineConfig, RansacSettings, VirtualCameraSettings};

/// Serialized rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformJson {
    pub translation: [f64; 3],
    pub quaternion_xyzw: [f64; 4],
    #[serde(default = "no_matrix")]
    pub matrix_row_major_4x4: [f64; 16],
}

fn no_matrix() -> [f64; 16] {
    [0.0; 16]
}

impl From<&RigidTransform> for TransformJson {
    fn from(t: &RigidTransform) -> Self {
        let q = t.rotation.quaternion();
        let m = t.matrix();
        Self {
            translation: [t.translation.x, t.translation.y, t.translation.z],
            quaternion_xyzw: [q.i, q.j, q.k, q.w],
            matrix_row_major_4x4: std::array::from_fn(|k| m[(k / 4, k % 4)]),
        }
    }
}

impl From<&TransformJson> for RigidTransform {
    fn from(t: &TransformJson) -> Self {
        let [x, y, z, w] = t.quaternion_xyzw;
        RigidTransform::new(UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)), Vector3::from(t.translation))
    }
}

/// Final output of the fine stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    #[serde(rename = "T_camera_lidar")]
    pub camera_from_lidar: TransformJson,
    pub final_nid: f64,
    pub pairs_used: usize,
    pub outer_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualCameraFile {
    pub fov_deg: f64,
    pub fov_fallback: bool,
    pub camera: CameraFile,
    pub camera_from_lidar: TransformJson,
}

impl VirtualCameraFile {
    pub fn virtual_camera(&self) -> Result<VirtualCamera> {
        Ok(VirtualCamera {
            model: self.camera.clone().try_into()?,
            camera_from_lidar: (&self.camera_from_lidar).into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedMatch {
    pub pair: usize,
    pub camera_px: [f64; 2],
    pub lidar_point: [f64; 3],
    pub inlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitGuessFile {
    #[serde(rename = "T_camera_lidar")]
    pub camera_from_lidar: TransformJson,
    pub correspondences: usize,
    pub dropped: usize,
    pub inlier_count: usize,
    pub low_confidence: bool,
    /// Whether reprojection refinement ran (needs at least 3 pairs).
    pub refined: bool,
    pub matches: Vec<ResolvedMatch>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Sub-seed for one stochastic component.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut x = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

const RANSAC_STREAM: u64 = 1;

/// Artifact locations inside the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn pair_dir(&self, k: usize) -> PathBuf {
        self.root.join(format!("pair{k}"))
    }
    pub fn cloud(&self, k: usize) -> PathBuf {
        self.pair_dir(k).join("cloud.ply")
    }
    pub fn virtual_camera(&self, k: usize) -> PathBuf {
        self.pair_dir(k).join("virtual_camera.json")
    }
    pub fn lidar_image(&self, k: usize) -> PathBuf {
        self.pair_dir(k).join("lidar_intensity.png")
    }
    pub fn index_map(&self, k: usize) -> PathBuf {
        self.pair_dir(k).join("index_map.bin")
    }
    pub fn manual_correspondences(&self, k: usize) -> PathBuf {
        self.pair_dir(k).join("manual_correspondences.json")
    }
    pub fn overlay(&self, k: usize) -> PathBuf {
        self.pair_dir(k).join("overlay.png")
    }
    pub fn matches_overlay(&self, k: usize) -> PathBuf {
        self.pair_dir(k).join("matches.png")
    }
    pub fn init_guess(&self) -> PathBuf {
        self.root.join("init_guess.json")
    }
    pub fn calibration(&self) -> PathBuf {
        self.root.join("calibration.json")
    }
}

/// Merges the scans of one pair into a dense cloud with equalized intensities.
pub fn preprocess_scans(scans: &[PointCloud], cfg: &PipelineConfig) -> Result<PointCloud> {
    let dense = match cfg.mode {
        IntegrationMode::Static => accumulate_static(scans)?,
        IntegrationMode::Dynamic => {
            let dc = DynamicConfig {
                ivox: cfg.ivox.to_config(),
                ..DynamicConfig::default()
            };
            integrate_dynamic(scans, &dc)?.cloud
        }
    };
    Ok(dense.equalized())
}

fn load_scans(paths: &[PathBuf]) -> Result<Vec<PointCloud>> {
    paths
        .iter()
        .map(|p| {
            let (c, report) = load_cloud(p)?;
            if report.dropped > 0 {
                log::warn!("{}: dropped {} non-finite points", p.display(), report.dropped);
            }
            Ok(c)
        })
        .collect()
}

pub fn load_camera_image(path: &Path, cam: &CameraModel) -> Result<GrayImage> {
    let img = GrayImage::load_png(path)?;
    if img.width != cam.width() || img.height != cam.height() {
        return Err(Error::Argument(format!(
            "{} is {}x{} but the camera is {}x{}",
            path.display(),
            img.width,
            img.height,
            cam.width(),
            cam.height()
        )));
    }
    Ok(img.equalized())
}

pub fn stage_preprocess(cfg: &PipelineConfig) -> Result<()> {
    let layout = cfg.layout();
    for (k, pair) in cfg.pairs.iter().enumerate() {
        let scans = load_scans(&pair.clouds)?;
        let cloud = preprocess_scans(&scans, cfg)?;
        let dir = layout.pair_dir(k);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_cloud(layout.cloud(k), &cloud)?;
        log::info!("pair {k}: {} points", cloud.len());
    }
    Ok(())
}

pub fn load_dense(layout: &Layout, k: usize) -> Result<PointCloud> {
    Ok(load_cloud(layout.cloud(k))?.0)
}

pub fn stage_fov(cfg: &PipelineConfig) -> Result<Vec<VirtualCameraFile>> {
    let layout = cfg.layout();
    let mut out = Vec::new();
    for k in 0..cfg.pairs.len() {
        let cloud = load_dense(&layout, k)?;
        let fov = estimate_fov(&cloud)?;
        let vcam = select_virtual_camera(fov.degrees, &cloud, &cfg.virtual_camera.to_config())?;
        let file = VirtualCameraFile {
            fov_deg: fov.degrees,
            fov_fallback: fov.fallback,
            camera: vcam.model.into(),
            camera_from_lidar: (&vcam.camera_from_lidar).into(),
        };
        write_json(&layout.virtual_camera(k), &file)?;
        log::info!("pair {k}: estimated FoV {:.1} deg", fov.degrees);
        out.push(file);
    }
    Ok(out)
}

pub fn stage_render(cfg: &PipelineConfig) -> Result<()> {
    let layout = cfg.layout();
    for k in 0..cfg.pairs.len() {
        let cloud = load_dense(&layout, k)?;
        let vcam = read_json::<VirtualCameraFile>(&layout.virtual_camera(k))?.virtual_camera()?;
        let (img, map) = render_intensity(&cloud, &vcam);
        img.save_png16(layout.lidar_image(k))?;
        map.save(layout.index_map(k))?;
    }
    Ok(())
}

/// Correspondences of every pair, pooled, with the pair index of each entry.
pub fn load_correspondences(cfg: &PipelineConfig) -> Result<(CorrespondenceSet, Vec<usize>, usize)> {
    let layout = cfg.layout();
    let cam = cfg.camera()?;
    let mut sets = Vec::new();
    let mut owners = Vec::new();
    let mut dropped = 0;
    for (k, pair) in cfg.pairs.iter().enumerate() {
        let path = match &pair.correspondences {
            Some(p) => p.clone(),
            None => {
                let manual = layout.manual_correspondences(k);
                if !manual.exists() {
                    log::warn!("pair {k} has no correspondences");
                    continue;
                }
                manual
            }
        };
        let cloud = load_dense(&layout, k)?;
        let vcam = read_json::<VirtualCameraFile>(&layout.virtual_camera(k))?.virtual_camera()?;
        let map = IndexMap::load(layout.index_map(k))?;
        let rep = import_correspondences(&path, &cam, &vcam, &map, &cloud)?;
        dropped += rep.dropped;
        owners.extend(std::iter::repeat_n(k, rep.set.len()));
        sets.push(rep.set);
    }
    if sets.is_empty() {
        return Err(Error::Argument(
            "no correspondence file configured and no manual session found; run `serve` to annotate correspondences".into(),
        ));
    }
    Ok((CorrespondenceSet::pooled(&sets), owners, dropped))
}

/// RANSAC plus, with at least three pairs, robust refinement.
pub fn initial_guess(corr: &CorrespondenceSet, cam: &CameraModel, cfg: &PipelineConfig) -> Result<InitGuessOutcome> {
    let ransac = cfg.ransac.to_params(cam, derive_seed(cfg.seed, RANSAC_STREAM));
    if corr.len() >= 3 {
        let g = estimate_initial_guess(corr, cam, &ransac, &RefineParams::for_camera(cam))?;
        Ok(InitGuessOutcome {
            transform: g.transform,
            inliers: g.ransac.inliers,
            low_confidence: g.ransac.low_confidence,
            refined: true,
        })
    } else {
        let r = ransac_rotation(corr, cam, &ransac)?;
        Ok(InitGuessOutcome {
            transform: RigidTransform::from_rotation(r.rotation),
            inliers: r.inliers,
            low_confidence: r.low_confidence,
            refined: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitGuessOutcome {
    pub transform: RigidTransform,
    pub inliers: Vec<bool>,
    pub low_confidence: bool,
    pub refined: bool,
}

pub fn stage_init_guess(cfg: &PipelineConfig) -> Result<InitGuessFile> {
    let cam = cfg.camera()?;
    let (corr, owners, dropped) = load_correspondences(cfg)?;
    let g = initial_guess(&corr, &cam, cfg)?;
    let file = InitGuessFile {
        camera_from_lidar: (&g.transform).into(),
        correspondences: corr.len(),
        dropped,
        inlier_count: g.inliers.iter().filter(|&&b| b).count(),
        low_confidence: g.low_confidence,
        refined: g.refined,
        matches: corr
            .pairs
            .iter()
            .zip(&owners)
            .zip(&g.inliers)
            .map(|((c, &pair), &inlier)| ResolvedMatch {
                pair,
                camera_px: [c.pixel.x, c.pixel.y],
                lidar_point: [c.point.x, c.point.y, c.point.z],
                inlier,
            })
            .collect(),
    };
    write_json(&cfg.layout().init_guess(), &file)?;
    Ok(file)
}

pub fn load_pairs(cfg: &PipelineConfig, cam: &CameraModel) -> Result<Vec<DataPair>> {
    let layout = cfg.layout();
    cfg.pairs
        .iter()
        .enumerate()
        .map(|(k, p)| {
            Ok(DataPair {
                cloud: load_dense(&layout, k)?,
                image: load_camera_image(&p.image, cam)?,
            })
        })
        .collect()
}

/// Starting transform for the fine stage: the configured one, else the
/// stored initial guess.
pub fn fine_start(cfg: &PipelineConfig) -> Result<RigidTransform> {
    if let Some(t) = &cfg.initial_transform {
        return Ok(t.into());
    }
    let path = cfg.layout().init_guess();
    if !path.exists() {
        return Err(Error::Argument("no initial transform; run `init-guess` first or set `initial_transform`".into()));
    }
    Ok((&read_json::<InitGuessFile>(&path)?.camera_from_lidar).into())
}

pub fn stage_calibrate(cfg: &PipelineConfig) -> Result<CalibrationResult> {
    let cam = cfg.camera()?;
    let t0 = fine_start(cfg)?;
    let pairs = load_pairs(cfg, &cam)?;
    let r = calibrate_fine(&pairs, &cam, &t0, &cfg.fine.to_params())?;
    let result = CalibrationResult {
        camera_from_lidar: (&r.transform).into(),
        final_nid: r.nid,
        pairs_used: r.pairs_used,
        outer_iterations: r.outer_iterations,
    };
    write_json(&cfg.layout().calibration(), &result)?;
    Ok(result)
}

/// Latest available estimate: the calibration result, else the initial guess.
pub fn current_estimate(cfg: &PipelineConfig) -> Result<RigidTransform> {
    let layout = cfg.layout();
    if layout.calibration().exists() {
        return Ok((&read_json::<CalibrationResult>(&layout.calibration())?.camera_from_lidar).into());
    }
    fine_start(cfg)
}

pub fn stage_overlay(cfg: &PipelineConfig) -> Result<()> {
    let layout = cfg.layout();
    let cam = cfg.camera()?;
    let t = current_estimate(cfg)?;
    let matches = if layout.init_guess().exists() {
        read_json::<InitGuessFile>(&layout.init_guess())?.matches
    } else {
        Vec::new()
    };
    for (k, pair) in load_pairs(cfg, &cam)?.iter().enumerate() {
        render_overlay(&pair.cloud, &pair.image, &cam, &t)
            .save(layout.overlay(k))
            .map_err(Error::from)?;
        let lines: Vec<MatchLine> = matches
            .iter()
            .filter(|m| m.pair == k)
            .filter_map(|m| {
                Some(MatchLine {
                    observed: Point2::from(m.camera_px),
                    projected: cam.project(&t.apply(&Vector3::from(m.lidar_point)))?,
                    inlier: m.inlier,
                })
            })
            .collect();
        render_matches(&pair.image, &lines)
            .save(layout.matches_overlay(k))
            .map_err(Error::from)?;
    }
    Ok(())
}

/// Runs every stage in order. Errors name the failing stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<CalibrationResult> {
    cfg.validate().map_err(|e| e.in_stage("validate"))?;
    stage_preprocess(cfg).map_err(|e| e.in_stage("preprocess"))?;
    stage_fov(cfg).map_err(|e| e.in_stage("fov"))?;
    stage_render(cfg).map_err(|e| e.in_stage("render"))?;
    if cfg.initial_transform.is_none() {
        stage_init_guess(cfg).map_err(|e| e.in_stage("init-guess"))?;
    }
    let result = stage_calibrate(cfg).map_err(|e| e.in_stage("calibrate"))?;
    stage_overlay(cfg).map_err(|e| e.in_stage("overlay"))?;
    Ok(result)
}

pub fn read_init(cfg: &PipelineConfig) -> Result<InitGuessFile> {
    read_json(&cfg.layout().init_guess())
}
