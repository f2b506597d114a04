use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Layout, TransformJson};
use crate::error::{Error, Result};
use crate::geom::CameraModel;
use crate::init_guess::{default_threshold, RansacParams};
use crate::ivox::IvoxConfig;
use crate::nelder_mead::NelderMeadParams;
use crate::registration::FineParams;
use crate::virtual_camera::VirtualCameraConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IntegrationMode {
    #[default]
    Static,
    Dynamic,
}

/// One LiDAR-camera data pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairInput {
    /// Scans accumulated into the pair's dense cloud.
    pub clouds: Vec<PathBuf>,
    pub image: PathBuf,
    #[serde(default)]
    pub correspondences: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacSettings {
    pub iterations: usize,
    /// Defaults to 20 px (pinhole) or 0.02 rad (equirectangular).
    pub threshold: Option<f64>,
}

impl Default for RansacSettings {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            threshold: None,
        }
    }
}

impl RansacSettings {
    pub fn to_params(&self, cam: &CameraModel, seed: u64) -> RansacParams {
        RansacParams {
            iterations: self.iterations,
            threshold: self.threshold.unwrap_or_else(|| default_threshold(cam)),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineSettings {
    pub bins: usize,
    pub max_outer_iterations: usize,
    pub translation_tolerance: f64,
    pub rotation_tolerance_deg: f64,
    pub simplex_translation_step: f64,
    pub simplex_rotation_step: f64,
    pub max_evaluations: usize,
}

impl Default for FineSettings {
    fn default() -> Self {
        let p = FineParams::default();
        Self {
            bins: p.bins,
            max_outer_iterations: p.max_outer_iterations,
            translation_tolerance: p.translation_tolerance,
            rotation_tolerance_deg: p.rotation_tolerance_deg,
            simplex_translation_step: 0.01,
            simplex_rotation_step: 0.01,
            max_evaluations: p.nelder_mead.max_evaluations,
        }
    }
}

impl FineSettings {
    pub fn to_params(&self) -> FineParams {
        let (t, r) = (self.simplex_translation_step, self.simplex_rotation_step);
        FineParams {
            bins: self.bins,
            nelder_mead: NelderMeadParams {
                steps: vec![t, t, t, r, r, r],
                max_evaluations: self.max_evaluations,
                ..NelderMeadParams::pose()
            },
            max_outer_iterations: self.max_outer_iterations,
            translation_tolerance: self.translation_tolerance,
            rotation_tolerance_deg: self.rotation_tolerance_deg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IvoxSettings {
    pub voxel_size: f64,
    pub max_points_per_voxel: usize,
    pub min_point_distance: f64,
}

impl Default for IvoxSettings {
    fn default() -> Self {
        let c = IvoxConfig::default();
        Self {
            voxel_size: c.voxel_size,
            max_points_per_voxel: c.max_points_per_voxel,
            min_point_distance: c.min_point_distance,
        }
    }
}

impl IvoxSettings {
    pub fn to_config(&self) -> IvoxConfig {
        IvoxConfig {
            voxel_size: self.voxel_size,
            max_points_per_voxel: self.max_points_per_voxel,
            min_point_distance: self.min_point_distance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VirtualCameraSettings {
    pub pinhole_size: u32,
    pub equirect_width: u32,
}

impl Default for VirtualCameraSettings {
    fn default() -> Self {
        let c = VirtualCameraConfig::default();
        Self {
            pinhole_size: c.pinhole_size,
            equirect_width: c.equirect_width,
        }
    }
}

impl VirtualCameraSettings {
    pub fn to_config(&self) -> VirtualCameraConfig {
        VirtualCameraConfig {
            pinhole_size: self.pinhole_size,
            equirect_width: self.equirect_width,
            ..VirtualCameraConfig::default()
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Pipeline configuration. Relative paths resolve against the directory of
/// the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Camera intrinsics JSON.
    pub camera: PathBuf,
    pub pairs: Vec<PairInput>,
    #[serde(default)]
    pub mode: IntegrationMode,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ransac: RansacSettings,
    #[serde(default)]
    pub fine: FineSettings,
    #[serde(default)]
    pub ivox: IvoxSettings,
    #[serde(default)]
    pub virtual_camera: VirtualCameraSettings,
    /// Skips the initial-guess stage when set.
    #[serde(default)]
    pub initial_transform: Option<TransformJson>,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: Self = super::read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        super::write_json(path.as_ref(), self)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.camera);
        fix(&mut self.output_dir);
        for pair in &mut self.pairs {
            pair.clouds.iter_mut().for_each(fix);
            fix(&mut pair.image);
            if let Some(c) = pair.correspondences.as_mut() {
                fix(c);
            }
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.output_dir)
    }

    pub fn camera(&self) -> Result<CameraModel> {
        CameraModel::load_json(&self.camera)
    }

    /// Checks that every referenced input exists and the parameters are usable.
    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Argument("configuration lists no data pairs".into()));
        }
        let mut inputs = vec![&self.camera];
        for (k, p) in self.pairs.iter().enumerate() {
            if p.clouds.is_empty() {
                return Err(Error::Argument(format!("pair {k} lists no clouds")));
            }
            inputs.extend(p.clouds.iter());
            inputs.push(&p.image);
            inputs.extend(p.correspondences.iter());
        }
        for f in inputs {
            if !f.is_file() {
                return Err(Error::io(
                    f,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced input does not exist"),
                ));
            }
        }
        if self.ransac.iterations == 0 || self.ransac.threshold.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Argument("RANSAC needs iterations >= 1 and a positive threshold".into()));
        }
        if self.fine.bins == 0 || self.fine.simplex_translation_step <= 0.0 || self.fine.simplex_rotation_step <= 0.0 {
            return Err(Error::Argument("fine stage needs positive bins and simplex steps".into()));
        }
        if !(self.ivox.voxel_size > 0.0) || self.ivox.max_points_per_voxel == 0 {
            return Err(Error::Argument("iVox needs a positive voxel size and capacity".into()));
        }
        self.camera()?;
        Ok(())
    }
}
