//! 2D-3D correspondence sets and the JSON file format shared by external
//! matchers and the annotation service.

use std::path::Path;

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::CameraModel;
use crate::virtual_camera::{IndexMap, VirtualCamera};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MatchSource {
    #[default]
    Superglue,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchEntry {
    pub camera_px: [f64; 2],
    #[serde(default)]
    pub lidar_px: Option<[f64; 2]>,
    #[serde(default)]
    pub lidar_point: Option<[f64; 3]>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrespondenceFile {
    pub source: MatchSource,
    #[serde(default)]
    pub matcher_threshold: Option<f64>,
    pub matches: Vec<MatchEntry>,
}

impl CorrespondenceFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text).map_err(|e| Error::Format(format!("correspondence file: {e}")))?;
        for (i, m) in file.matches.iter().enumerate() {
            if m.lidar_px.is_none() && m.lidar_point.is_none() {
                return Err(Error::Format(format!("matches[{i}]: needs lidar_px or lidar_point")));
            }
            if !(0.0..=1.0).contains(&m.confidence) {
                return Err(Error::Format(format!("matches[{i}]: confidence {} outside [0, 1]", m.confidence)));
            }
            let finite = m.camera_px.iter().chain(m.lidar_px.iter().flatten()).chain(m.lidar_point.iter().flatten());
            if finite.into_iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("matches[{i}]: non-finite coordinate")));
            }
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub pixel: Point2<f64>,
    pub point: Vector3<f64>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
    pub source: MatchSource,
    pub matcher_threshold: Option<f64>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Concatenates several sets; used to pool matches from multiple data pairs.
    pub fn pooled(sets: &[CorrespondenceSet]) -> CorrespondenceSet {
        CorrespondenceSet {
            pairs: sets.iter().flat_map(|s| s.pairs.iter().copied()).collect(),
            source: sets.first().map(|s| s.source).unwrap_or_default(),
            matcher_threshold: sets.first().and_then(|s| s.matcher_threshold),
        }
    }

    pub fn to_file(&self) -> CorrespondenceFile {
        CorrespondenceFile {
            source: self.source,
            matcher_threshold: self.matcher_threshold,
            matches: self
                .pairs
                .iter()
                .map(|c| MatchEntry {
                    camera_px: [c.pixel.x, c.pixel.y],
                    lidar_px: None,
                    lidar_point: Some([c.point.x, c.point.y, c.point.z]),
                    confidence: c.confidence,
                })
                .collect(),
        }
    }
}

/// Result of resolving a correspondence file.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportReport {
    pub set: CorrespondenceSet,
    /// Matches whose LiDAR pixel had no point within its 3×3 window.
    pub dropped: usize,
}

/// Resolves a parsed correspondence file against the rendered LiDAR image.
/// Matches carrying an explicit `lidar_point` use it directly.
pub fn resolve_correspondences(
    file: &CorrespondenceFile,
    cam: &CameraModel,
    vcam: &VirtualCamera,
    index_map: &IndexMap,
    cloud: &PointCloud,
) -> Result<ImportReport> {
    let mut pairs = Vec::with_capacity(file.matches.len());
    let mut dropped = 0;
    for (i, m) in file.matches.iter().enumerate() {
        let pixel = Point2::new(m.camera_px[0], m.camera_px[1]);
        if !cam.contains(&pixel) {
            return Err(Error::Format(format!(
                "matches[{i}]: camera_px ({}, {}) outside the {}x{} image",
                pixel.x,
                pixel.y,
                cam.width(),
                cam.height()
            )));
        }
        let point = match (m.lidar_point, m.lidar_px) {
            (Some(p), _) => Some(Vector3::from(p)),
            (None, Some(px)) => index_map
                .lookup_window(&vcam.model, &Point2::new(px[0], px[1]))
                .and_then(|idx| cloud.points.get(idx).copied()),
            (None, None) => None,
        };
        match point {
            Some(point) => pairs.push(Correspondence {
                pixel,
                point,
                confidence: m.confidence,
            }),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::info!("dropped {dropped} matches without a LiDAR point");
    }
    Ok(ImportReport {
        set: CorrespondenceSet {
            pairs,
            source: file.source,
            matcher_threshold: file.matcher_threshold,
        },
        dropped,
    })
}

/// Loads and resolves a correspondence file.
pub fn import_correspondences(
    path: impl AsRef<Path>,
    cam: &CameraModel,
    vcam: &VirtualCamera,
    index_map: &IndexMap,
    cloud: &PointCloud,
) -> Result<ImportReport> {
    resolve_correspondences(&CorrespondenceFile::load(path)?, cam, vcam, index_map, cloud)
}
